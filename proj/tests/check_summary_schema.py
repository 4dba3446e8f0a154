#!/usr/bin/env python3
"""Runs each experiment briefly and validates summary.json against the schema."""
import json
import subprocess
import sys
import tempfile
from pathlib import Path

import jsonschema

RUNS = [
    ("pingpong", ["--sizes", "0,512", "--hops", "1,2"], 0),
    ("bandwidth-router", ["--size", "512"], 0),
    ("bandwidth-link", ["--sizes", "16..512:248"], 0),
    ("soak", ["--cycles", "3000", "--seed", "4"], 0),
    ("deadlock-demo", [], 4),
    ("pingpong", ["--hops", "7"], 2),
]


def main():
    sim, schema_path = sys.argv[1], sys.argv[2]
    schema = json.loads(Path(schema_path).read_text())
    jsonschema.Draft202012Validator.check_schema(schema)
    validator = jsonschema.Draft202012Validator(schema)
    failures = 0
    with tempfile.TemporaryDirectory() as tmp:
        for i, (exp, extra, want) in enumerate(RUNS):
            out = Path(tmp) / f"run{i}"
            rc = subprocess.run([sim, "-e", exp, "-o", str(out), *extra],
                                stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL).returncode
            errors = []
            if rc != want:
                errors.append(f"exit {rc}, expected {want}")
            summary = out / "summary.json"
            if not summary.exists():
                errors.append("no summary.json")
            else:
                doc = json.loads(summary.read_text())
                errors += [e.message for e in validator.iter_errors(doc)]
                if doc.get("exit_code") != rc:
                    errors.append(f"summary exit_code {doc.get('exit_code')} != {rc}")
            print(f"{'PASS' if not errors else 'FAIL'} {exp} {' '.join(extra)}")
            for e in errors:
                print(f"    {e}")
            failures += bool(errors)
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
