#!/usr/bin/env python3
"""Regenerate the golden wire-protocol fixtures under tests/fixtures/wire/."""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

import test_wire

if __name__ == "__main__":
    test_wire.write_fixtures()
    print("wire fixtures written")
