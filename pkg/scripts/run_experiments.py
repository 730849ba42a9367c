#!/usr/bin/env python3
"""
Run HyPeR off-policy learning experiments

Usage:
    python scripts/run_experiments.py sweep --seed 0 --axis obs_prob --values 0.2,1.0 --out results/po
    python scripts/run_experiments.py sweep --config configs/synthetic_beta.env --seed 1 --out results/beta
    python scripts/run_experiments.py sweep --manifest results/po/manifest.json --out results/po_rerun
    python scripts/run_experiments.py summarize --rows results/po/rows.csv --seed 0 --out results/po
    python scripts/run_experiments.py tune --seed 0 --beta 0.3
    python scripts/run_experiments.py fixture --out data/my_fixture
"""

import sys
from pathlib import Path

# Add parent directory to path to import config, opl and evaluation
sys.path.insert(0, str(Path(__file__).parent.parent))

from evaluation.cli import main

if __name__ == "__main__":
    sys.exit(main())
