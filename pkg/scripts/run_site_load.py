#!/usr/bin/env python3
"""Site publication load experiment; see gridmon.harness for the knobs.

Examples:
    run_site_load.py --sites 50 --period-ms 500 --duration 60
    run_site_load.py --config topology.ini --json
"""

import sys

from gridmon.harness import main

if __name__ == "__main__":
    sys.exit(main())
