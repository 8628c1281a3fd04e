#!/usr/bin/env python3
"""
MarginLab - Experiment entry point

Subcommands:
- run: train a run spec over its replicate seeds
- sweep: vary one hyperparameter and aggregate final errors
- compare: several methods on one shared split
- plot: SVG charts from metrics, comparison or ledger CSVs
"""

import sys
from pathlib import Path

# Add tools directory to path
sys.path.insert(0, str(Path(__file__).parent))

from marginlab.expcli import main


if __name__ == "__main__":
    sys.exit(main())
