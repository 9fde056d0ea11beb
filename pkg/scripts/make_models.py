"""Write the built-in model descriptions to models/*.json."""

import argparse
from pathlib import Path

from familytune.fixtures import BUILTIN_MODELS
from familytune.graph import save_model


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=Path(__file__).resolve().parents[1] / "models", type=Path)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    for name, build in BUILTIN_MODELS.items():
        model = build()
        save_model(model, args.out / f"{name}.json")
        print(f"{name}: {len(model)} subgraphs")


if __name__ == "__main__":
    main()
