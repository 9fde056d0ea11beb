"""One tuning run per policy on the same landscape, plus budget reports.

    python scripts/run_tuning_curve.py --model bert_large_like --seed 0 --out-dir results/curve
"""

import sys

from familytune.cli import main

if __name__ == "__main__":
    argv = sys.argv[1:]
    out = "results/curve"
    if "--out-dir" in argv:
        out = argv[argv.index("--out-dir") + 1]
        i = argv.index("--out-dir")
        argv = argv[:i] + argv[i + 2 :]
    for policy in ("foresee", "monolithic"):
        args = argv
        if policy == "monolithic" and "--foresee-p" in argv:
            # p only applies to foresee tuning
            i = argv.index("--foresee-p")
            args = argv[:i] + argv[i + 2 :]
        rc = main(["tune", *args, "--policy", policy, "--out-dir", f"{out}/{policy}"])
        if rc:
            sys.exit(rc)
        main(["report", "--state", f"{out}/{policy}/state.json", "--out-dir", f"{out}/{policy}"])
