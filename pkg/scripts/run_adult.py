"""Train ERM and SenSeI on Adult, then evaluate and certify both.

Needs data/adult/ (see fetch_adult.py).  Extra arguments override the config.
"""
import sys
from pathlib import Path

from sensei.cli import main

CONFIG = Path(__file__).resolve().parent.parent / "configs" / "adult.cfg"

if __name__ == "__main__":
    sys.exit(main([str(CONFIG), "-v", *sys.argv[1:]]))
