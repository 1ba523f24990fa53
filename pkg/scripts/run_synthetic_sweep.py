"""Run the 2-D fair-regularization sweep and the SenSR comparison.

Extra arguments are passed to sensei-run as overrides, e.g.
``python scripts/run_synthetic_sweep.py --seed 1``.
"""
import sys
from pathlib import Path

from sensei.cli import main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

if __name__ == "__main__":
    for name in ("synthetic_sweep.cfg", "synthetic_sensr_sweep.cfg"):
        code = main([str(CONFIGS / name), *sys.argv[1:]])
        if code:
            sys.exit(code)
