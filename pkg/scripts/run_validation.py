#!/usr/bin/env python3
"""Run the validation profile and write reports; same as `ratiohurst validate`."""

import sys

from ratiohurst.cli import main

if __name__ == "__main__":
    sys.exit(main(["validate", *sys.argv[1:]]))
