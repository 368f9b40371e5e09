"""Hyperparameter grid example: sweep learning rate and L2 on one fold.

Edit the grids and paths, then:

    python docs/examples/grid_search.py --train data/train.0.tsv \
        --test data/test.0.tsv --out runs/grid

Each cell trains a fresh model and records the test nDCG@10; the summary
table is sorted best-first.  The library is driven directly (no
subprocesses), so this also doubles as an embedding-API example.
"""

import argparse
import json
import os

from rrank import cli

LEARNING_RATES = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5)
L2_COEFFICIENTS = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--train", required=True)
    parser.add_argument("--test", required=True)
    parser.add_argument("--model", default="bper")
    parser.add_argument("--dim", type=int, default=64)
    parser.add_argument("--epochs", type=int, default=40)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--embeddings")
    parser.add_argument("--out", default="runs/grid")
    args = parser.parse_args()

    results = []
    for lr in LEARNING_RATES:
        for l2 in L2_COEFFICIENTS:
            out_dir = os.path.join(args.out, f"lr{lr:g}_l2{l2:g}")
            cfg = cli.RunConfig(
                model=args.model, train=args.train, test=args.test,
                embeddings=args.embeddings, dim=args.dim, lr=lr, l2=l2,
                epochs=args.epochs, seed=args.seed, out=out_dir)
            print(f"### lr={lr:g} l2={l2:g}")
            _, report, eval_report = cli.cmd_train(cfg)
            results.append({
                "lr": lr, "l2": l2,
                "best_val_ndcg10": report.best_val,
                "test_ndcg10": eval_report.means["ndcg"] if eval_report else None,
            })

    results.sort(key=lambda row: -(row["test_ndcg10"] or 0.0))
    summary = os.path.join(args.out, "summary.json")
    with open(summary, "w", encoding="utf-8") as fh:
        json.dump(results, fh, indent=2)
    print(f"\n{'lr':>8} {'l2':>8} {'val':>8} {'test ndcg@10':>13}")
    for row in results:
        print(f"{row['lr']:>8g} {row['l2']:>8g} "
              f"{row['best_val_ndcg10']:>8.4f} {row['test_ndcg10']:>13.3f}")
    print(f"\nwrote {summary}")


if __name__ == "__main__":
    main()
