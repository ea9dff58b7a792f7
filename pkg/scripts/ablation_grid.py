"""Train every embedder/pooling row on a synthetic task; print a results table."""

import argparse
import time

from formula_embed.nets import ABLATION_ROWS, ModelConfig
from formula_embed.trainer import generate_synthetic, train


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--task", default="shared-predicate")
    ap.add_argument("--train", type=int, default=2000)
    ap.add_argument("--dev", type=int, default=500)
    ap.add_argument("--epochs", type=int, default=10)
    ap.add_argument("--node-dim", type=int, default=32)
    ap.add_argument("--edge-dim", type=int, default=8)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    train_set = generate_synthetic(args.train, seed=1000 + args.seed, task=args.task)
    dev_set = generate_synthetic(args.dev, seed=2000 + args.seed, task=args.task)
    print(f"{'embedder':<14}{'pooling':<12}{'k':>3}{'best dev acc':>14}{'seconds':>10}")
    for emb, pool in ABLATION_ROWS:
        config = ModelConfig(node_dim=args.node_dim, edge_dim=args.edge_dim, node_embedder=emb, pooling=pool)
        t0 = time.perf_counter()
        _, metrics = train(config, train_set, dev_set, args.epochs, seed=args.seed)
        best = max(m["dev_accuracy"] for m in metrics)
        k = str(config.rounds_k) if config.uses_rounds else "--"
        print(f"{emb.value:<14}{pool.value:<12}{k:>3}{best:>14.3f}{time.perf_counter() - t0:>10.1f}", flush=True)


if __name__ == "__main__":
    main()
