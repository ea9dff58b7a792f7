"""Write synthetic train/dev/test splits as TSV files."""

import argparse
from pathlib import Path

from formula_embed.trainer import generate_synthetic


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--task", choices=("shared-predicate", "depth-parity"), default="shared-predicate")
    ap.add_argument("--out", default="data")
    ap.add_argument("--train", type=int, default=2000)
    ap.add_argument("--dev", type=int, default=500)
    ap.add_argument("--test", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for k, (name, n) in enumerate((("train", args.train), ("dev", args.dev), ("test", args.test))):
        ds = generate_synthetic(n, seed=args.seed * 3 + k, task=args.task)
        ds.write(out / f"{name}.tsv")
        print(f"{out / (name + '.tsv')}: {len(ds)} examples, {int(ds.labels.sum())} positive")


if __name__ == "__main__":
    main()
