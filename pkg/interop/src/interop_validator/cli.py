"""``interop-validate``: exit 0 when the ecosystem reader reproduces the dump
bit-for-bit, 1 on any mismatch or load failure."""

from __future__ import annotations

import argparse
import json
import sys

from .validator import LoadFailure, validate_load


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="interop-validate")
    parser.add_argument("--container", required=True, help="container file or NPY directory")
    parser.add_argument("--dump", required=True, help="JSON dump from `weight-cdr inspect --dump-json`")
    parser.add_argument("--json-out", help="write the InteropResult JSON here")
    args = parser.parse_args(argv)

    try:
        result = validate_load(args.container, args.dump)
    except LoadFailure as exc:
        print(f"load failure: {exc}", file=sys.stderr)
        return 1

    doc = result.to_json_dict()
    text = json.dumps(doc, indent=2, sort_keys=True)
    if args.json_out:
        with open(args.json_out, "w") as fh:
            fh.write(text + "\n")
    print(text)
    return 0 if result.ok else 1


if __name__ == "__main__":
    sys.exit(main())
