#!/usr/bin/env python3
"""
LGI randomness toolkit

Usage:
    python main.py bound --alpha 0.5 --mode joint
    python main.py certify --I 1.31 --n 100000 --delta 0.01
    python main.py repro-paper

Same commands as the ``lgi-randomness`` console script; run ``python main.py -h``
for the full list.
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent / "src"))

from lgi_randomness.cli import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())
