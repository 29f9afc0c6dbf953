#!/usr/bin/env python3
"""Test runner: load a module, apply its convert() to stdin, print the result."""
import importlib.util
import json
import sys
import traceback


def main():
    if len(sys.argv) != 2:
        print("usage: runner.py MODULE", file=sys.stderr)
        return 2
    text = sys.stdin.buffer.read().decode("utf-8")
    real_stdout = sys.stdout
    sys.stdout = sys.stderr
    try:
        spec = importlib.util.spec_from_file_location("conversion_module", sys.argv[1])
        module = importlib.util.module_from_spec(spec)
        spec.loader.exec_module(module)
    except BaseException:
        traceback.print_exc()
        return 3
    convert = getattr(module, "convert", None)
    if not callable(convert):
        print("module defines no callable convert", file=sys.stderr)
        return 5
    try:
        result = convert(text)
        if not isinstance(result, str):
            result = json.dumps(result)
    except BaseException:
        traceback.print_exc()
        return 4
    finally:
        sys.stdout = real_stdout
    sys.stdout.write(result)
    sys.stdout.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())
