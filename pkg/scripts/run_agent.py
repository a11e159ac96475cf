#!/usr/bin/env python3
"""Run a node agent (producers + consumers + archivers).

Usage: run_agent.py --registry http://host:port [--listen host:port]
"""

import sys

from gridmon.cli import main

if __name__ == "__main__":
    sys.exit(main(["serve", "agent", *sys.argv[1:]], standalone_mode=True))
