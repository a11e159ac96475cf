#!/usr/bin/env python3
"""Run the per-VO registry agent. Prints READY <url> once bound."""

import sys

from gridmon.cli import main

if __name__ == "__main__":
    sys.exit(main(["serve", "registry", *sys.argv[1:]], standalone_mode=True))
