"""Paired one-sided t-tests between two per-pair metric TSVs.

Feed it two files produced by ``rrank evaluate --per-pair``; pairs are
joined on (user, item) and a paired t-test is run per metric, with the
one-sided alternative that system A beats system B.

    python scripts/paired_ttest.py a.tsv b.tsv
"""

import argparse

from scipy import stats

METRICS = ("ndcg", "pre", "rec", "f1")


def read_per_pair(path):
    rows = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#") or not line.strip():
                continue
            user, item, *values = line.rstrip("\n").split("\t")
            rows[(user, item)] = [float(v) for v in values]
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("system_a")
    parser.add_argument("system_b")
    parser.add_argument("--level", type=float, default=0.05)
    args = parser.parse_args()

    a = read_per_pair(args.system_a)
    b = read_per_pair(args.system_b)
    shared = sorted(set(a) & set(b))
    if not shared:
        raise SystemExit("no shared (user, item) pairs between the two files")
    print(f"{len(shared)} shared pairs")
    for k, name in enumerate(METRICS):
        xs = [a[key][k] for key in shared]
        ys = [b[key][k] for key in shared]
        result = stats.ttest_rel(xs, ys, alternative="greater")
        mean_a = sum(xs) / len(xs)
        mean_b = sum(ys) / len(ys)
        verdict = "significant" if result.pvalue < args.level else "not significant"
        print(f"{name:>5}: A={100 * mean_a:.3f} B={100 * mean_b:.3f} "
              f"t={result.statistic:+.3f} p={result.pvalue:.4g} ({verdict} at {args.level})")


if __name__ == "__main__":
    main()
