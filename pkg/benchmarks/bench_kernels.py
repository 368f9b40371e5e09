"""Benchmark the compiled training kernel against the pure-Python fallback.

Runs one full epoch per backend on synthetic data of a few sizes and
prints triplets/second plus the speedup.  Both backends also run one
identical small epoch whose final parameters are compared, as a sanity
check that the benchmark is timing the same computation.

    python benchmarks/bench_kernels.py [--quick]
"""

import argparse
import time

import numpy as np

from rrank import kernels
from rrank.factors import ModelDims, init_random
from rrank.train import AdamState, _history_keys, sample_complement_matrix


def make_inputs(dims, n_trips, n_neg, seed):
    rng = np.random.default_rng(seed)
    trips = np.stack([
        rng.integers(dims.n_users, size=n_trips),
        rng.integers(dims.n_items, size=n_trips),
        rng.integers(dims.n_rationales, size=n_trips),
    ], axis=1).astype(np.int64)
    e_u = [np.unique(trips[trips[:, 0] == u, 2]) for u in range(dims.n_users)]
    e_i = [np.unique(trips[trips[:, 1] == i, 2]) for i in range(dims.n_items)]
    negs_u = sample_complement_matrix(
        rng, trips[:, 0], _history_keys(e_u, dims.n_rationales),
        dims.n_rationales, dims.n_rationales, n_neg)
    negs_i = sample_complement_matrix(
        rng, trips[:, 1], _history_keys(e_i, dims.n_rationales),
        dims.n_rationales, dims.n_rationales, n_neg)
    return trips, negs_u, negs_i


def run_epoch(backend, dims, inputs, batch_size=32):
    trips, negs_u, negs_i = inputs
    model = init_random(dims, seed=1, scale=0.01)
    adam = AdamState.init_like(model.param_blocks())
    started = time.perf_counter()
    loss, _ = kernels.run_bper_epoch(model, adam, trips, negs_u, negs_i,
                                     1e-4, 1e-3, batch_size, 0, backend=backend)
    return time.perf_counter() - started, loss, model


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--quick", action="store_true", help="smaller sizes")
    parser.add_argument("--negatives", type=int, default=3)
    args = parser.parse_args()

    configs = [
        ("small  (d=32)", ModelDims(500, 300, 800, 32), 20_000),
        ("medium (d=128)", ModelDims(2000, 1000, 3000, 128), 50_000),
        ("large  (d=768)", ModelDims(2000, 1000, 3000, 768), 50_000),
    ]
    if args.quick:
        configs = [(label, dims, n // 10) for label, dims, n in configs]

    # agreement check on a shared tiny epoch
    dims = ModelDims(60, 40, 100, 16)
    inputs = make_inputs(dims, 500, args.negatives, seed=3)
    results = {b: run_epoch(b, dims, inputs) for b in kernels.available_backends()}
    if len(results) == 2:
        blocks_py = results["python"][2].param_blocks()
        blocks_c = results["compiled"][2].param_blocks()
        worst = max(np.abs(a.astype(np.float64) - b.astype(np.float64)).max()
                    for a, b in zip(blocks_py.values(), blocks_c.values()))
        print(f"backend agreement on shared epoch: max param diff {worst:.3e}")
    else:
        print("compiled backend not built; benchmarking the fallback only")
    print()

    header = f"{'config':<16} {'triplets':>9} {'backend':>9} {'secs':>8} {'triplets/s':>11} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for label, dims, n_trips in configs:
        inputs = make_inputs(dims, n_trips, args.negatives, seed=7)
        base = None
        for backend in kernels.available_backends():
            secs, _, _ = run_epoch(backend, dims, inputs)
            rate = n_trips / secs
            speedup = "" if base is None else f"{base / secs:7.1f}x"
            if backend == "python":
                base = secs
            print(f"{label:<16} {n_trips:>9} {backend:>9} {secs:>8.2f} {rate:>11.0f} {speedup:>8}")


if __name__ == "__main__":
    main()
