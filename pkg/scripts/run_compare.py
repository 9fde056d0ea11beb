"""Paired foresee vs monolithic runs over several seeds, with medians.

    python scripts/run_compare.py --model models/bert_large_like.json --seeds 5 --out-dir results/compare
"""

import sys

from familytune.cli import main

if __name__ == "__main__":
    argv = sys.argv[1:]
    if "--seeds" not in argv:
        argv += ["--seeds", "5"]
    sys.exit(main(["compare", *argv]))
