"""Cost-model accuracy experiments: cross-subgraph heatmap and per-subgraph bars.

Trains on 256 random candidates per subgraph. For the bars, subgraph 4 (a
dense subgraph in the BERT-like fixture) keeps only 8 training samples, to
show what a shared model buys a data-starved subgraph.
"""

import argparse
import statistics
from pathlib import Path

from familytune.experiment import run_accuracy_bars, run_heatmap, write_bars_csv
from familytune.fixtures import bert_large_like


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--samples", type=int, default=256)
    ap.add_argument("--out-dir", type=Path, default=Path("results/motivation"))
    args = ap.parse_args()
    args.out_dir.mkdir(parents=True, exist_ok=True)
    model = bert_large_like()
    gaps = []
    for seed in range(args.seeds):
        hm = run_heatmap(model, args.samples, seed)
        hm.write_csv(args.out_dir / f"heatmap_seed_{seed}.csv")
        within, cross = hm.within_cross_means()
        gaps.append(within - cross)
        rows = run_accuracy_bars(model, args.samples, seed, train_caps={4: 8})
        write_bars_csv(rows, args.out_dir / f"bars_seed_{seed}.csv")
        print(f"seed {seed}: heatmap within {within:.3f} cross {cross:.3f}")
        for r in rows:
            print(f"  subgraph_{r.subgraph_id:<2d} mono {r.monolithic_acc:.3f} indiv {r.individual_acc:.3f} family {r.family_acc:.3f}")
    print(f"median within-cross gap: {statistics.median(gaps):.3f}")


if __name__ == "__main__":
    main()
