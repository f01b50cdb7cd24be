"""Validate every bundled config against the JSON schema, and make sure the
schema still rejects a few malformed documents."""

import json
import pathlib
import sys

import jsonschema


def main() -> int:
    schema_path, config_dir = map(pathlib.Path, sys.argv[1:3])
    schema = json.loads(schema_path.read_text())
    jsonschema.Draft202012Validator.check_schema(schema)
    validator = jsonschema.Draft202012Validator(schema)

    failures = 0
    configs = sorted(config_dir.glob("*.json"))
    for path in configs:
        errors = list(validator.iter_errors(json.loads(path.read_text())))
        for e in errors:
            print(f"{path.name}: {'/'.join(map(str, e.path))}: {e.message}")
        failures += bool(errors)

    bad = [
        {},
        {"experiment": "make_coffee"},
        {"experiment": "condition_i", "grid": {"spacing": 0.1}},
        {"experiment": "condition_i", "mesh": {"n_steps": 0}},
        {"experiment": "condition_i", "noise": {"mode_decay": 1.5}},
    ]
    for doc in bad:
        if validator.is_valid(doc):
            print(f"schema accepted a malformed config: {json.dumps(doc)}")
            failures += 1

    print(f"{len(configs)} configs checked, {failures} problems")
    return 1 if failures or not configs else 0


if __name__ == "__main__":
    sys.exit(main())
