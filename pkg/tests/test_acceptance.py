"""Acceptance suite: one test per exit criterion, each at its stated
tolerance and runtime budget.  A one-line verdict per criterion is printed
in the terminal summary (see conftest.record_acceptance)."""

import math
import os
import time

import numpy as np
import pytest

import planted
from conftest import random_model, record_acceptance
from rrank import corpus, factors, kernels, seminit
from rrank.evalrank import EvalPair, evaluate, ndcg_at, precision_recall_f1_at
from rrank.factors import ModelDims, init_random, load_checkpoint, save_checkpoint
from rrank.train import (
    TrainConfig,
    bper_triplet_loss_and_grads,
    fit,
    pitf_loss_and_grads,
)

GEN_KW = dict(n_records=3400, pool_size=10, p_pool=0.7, p_item=0.2)


# --------------------------------------------------------------------------
# Criterion 1: metric oracle equivalence, 1000 instances, < 1e-12, < 5 s
# --------------------------------------------------------------------------

def _brute_force(ranked, truth, p):
    truth = list(truth)
    dcg = sum(1.0 / (math.log(r + 1) / math.log(2))
              for r in range(1, min(p, len(ranked)) + 1) if ranked[r - 1] in truth)
    idcg = sum(1.0 / (math.log(r + 1) / math.log(2))
               for r in range(1, min(len(truth), p) + 1))
    hits = sum(1 for e in ranked[:p] if e in truth)
    pre, rec = hits / p, hits / len(truth)
    f1 = 0.0 if pre + rec == 0 else 2 * pre * rec / (pre + rec)
    return dcg / idcg, pre, rec, f1


def test_metric_oracle_equivalence():
    started = time.perf_counter()
    rng = np.random.default_rng(101)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(3, 51))
        ranked = rng.permutation(n).tolist()
        truth = set(rng.choice(n, size=int(rng.integers(1, min(n, 9))), replace=False).tolist())
        p = int(rng.integers(1, 11))
        expected = _brute_force(ranked, truth, p)
        got = (ndcg_at(ranked, truth, p),) + precision_recall_f1_at(ranked, truth, p)
        worst = max(worst, max(abs(a - b) for a, b in zip(got, expected)))
    elapsed = time.perf_counter() - started
    ok = worst < 1e-12 and elapsed < 5.0
    record_acceptance("metric oracle equivalence",
                      ok, f"max diff {worst:.2e}, {elapsed:.2f}s")
    assert worst < 1e-12
    assert elapsed < 5.0


# --------------------------------------------------------------------------
# Criterion 2: gradient correctness, 100 instances each, d=8, rel < 1e-5, < 30 s
# --------------------------------------------------------------------------

def _fd_worst(loss_fn, params_by_key, grads, h=1e-4):
    worst = 0.0
    for (block, row), g in grads.items():
        arr = params_by_key[block]
        g = np.atleast_1d(np.asarray(g, dtype=np.float64))
        for sub in np.ndindex(g.shape):
            idx = sub if row is None else ((row,) + sub if arr.ndim == 2 else (row,))
            old = arr[idx]
            arr[idx] = old + h
            hi = loss_fn()
            arr[idx] = old - h
            lo = loss_fn()
            arr[idx] = old
            fd = (hi - lo) / (2 * h)
            an = float(g[sub])
            denom = max(abs(fd), abs(an))
            if denom < 1e-10:
                continue
            worst = max(worst, abs(fd - an) / denom)
    return worst


def test_gradient_correctness():
    started = time.perf_counter()
    rng = np.random.default_rng(202)
    dims = ModelDims(4, 5, 12, 8)
    worst = 0.0
    for _ in range(100):
        model = random_model(rng, dims)
        u, i, e = (int(rng.integers(n)) for n in (4, 5, 12))
        negs_u = rng.integers(0, 12, size=int(rng.integers(1, 4))).tolist()
        negs_i = rng.integers(0, 12, size=int(rng.integers(1, 4))).tolist()
        l2 = float(rng.uniform(0, 0.05))
        _, grads = bper_triplet_loss_and_grads(model, u, i, e, negs_u, negs_i, l2)
        worst = max(worst, _fd_worst(
            lambda: bper_triplet_loss_and_grads(model, u, i, e, negs_u, negs_i, l2)[0],
            model.param_blocks(), grads))
    for _ in range(100):
        model = random_model(rng, dims)
        u, i, e = (int(rng.integers(n)) for n in (4, 5, 12))
        neg_items = rng.integers(0, 5, size=int(rng.integers(1, 4))).tolist()
        negs_e = rng.integers(0, 12, size=int(rng.integers(1, 4))).tolist()
        alpha = float(rng.uniform(0.1, 2.0))
        l2 = float(rng.uniform(0, 0.05))
        _, grads = pitf_loss_and_grads(model, u, i, e, neg_items, negs_e, alpha, l2)
        worst = max(worst, _fd_worst(
            lambda: pitf_loss_and_grads(model, u, i, e, neg_items, negs_e, alpha, l2)[0],
            model.param_blocks(), grads))
    elapsed = time.perf_counter() - started
    ok = worst < 1e-5 and elapsed < 30.0
    record_acceptance("gradient correctness (pairwise and tensor losses)",
                      ok, f"worst rel err {worst:.2e}, {elapsed:.1f}s")
    assert worst < 1e-5
    assert elapsed < 30.0


# --------------------------------------------------------------------------
# Criterion 3: planted-structure recovery, >= 10x random baseline, < 2 min
# --------------------------------------------------------------------------

def test_planted_structure_recovery():
    started = time.perf_counter()
    train_recs, test_recs = planted.generate(**GEN_KW)
    catalog, histories, triplets, val_pairs = planted.build_pipeline(train_recs, test_recs)
    dims = ModelDims(catalog.n_users, catalog.n_items, catalog.n_rationales, 32)

    rand_model = init_random(dims, seed=3, scale=0.01)
    rand_val = evaluate(rand_model, val_pairs, p=10, mu=0.7, mode="bper").means["ndcg"] / 100
    config = TrainConfig(learning_rate=1e-2, l2=1e-4, n_negatives=5,
                         max_epochs=60, patience=5, seed=5)
    model = init_random(dims, seed=3, scale=0.01)
    best_model, _, report = fit(model, triplets, histories, val_pairs, config)

    # uniform shift of every user-side rationale bias must not reorder any
    # ranklist
    rng = np.random.default_rng(303)
    shifted = best_model.copy()
    shifted.rat_bias_u += 1.7
    cand = np.arange(dims.n_rationales)
    invariant = True
    for _ in range(100):
        u = int(rng.integers(dims.n_users))
        i = int(rng.integers(dims.n_items))
        a = factors.rank_rationales(best_model, u, i, cand, 10, 0.7, "bper").indices()
        b = factors.rank_rationales(shifted, u, i, cand, 10, 0.7, "bper").indices()
        invariant = invariant and a == b

    elapsed = time.perf_counter() - started
    ratio = report.best_val / rand_val
    ok = ratio >= 10.0 and invariant and elapsed < 120.0
    record_acceptance(
        "planted-structure recovery",
        ok, f"trained {report.best_val:.4f} vs random {rand_val:.4f} "
            f"({ratio:.1f}x), bias-shift invariant={invariant}, {elapsed:.1f}s")
    assert ratio >= 10.0
    assert invariant
    assert elapsed < 120.0


# --------------------------------------------------------------------------
# Criterion 4: semantic warm start halves epochs to the random-init best,
# both at latent dimension 768, < 3 min
# --------------------------------------------------------------------------

def test_convergence_speedup():
    started = time.perf_counter()
    train_recs, test_recs = planted.generate(**GEN_KW)
    catalog, histories, triplets, val_pairs = planted.build_pipeline(train_recs, test_recs)
    dims = ModelDims(catalog.n_users, catalog.n_items, catalog.n_rationales, 768)
    config = TrainConfig(learning_rate=1e-3, l2=1e-4, n_negatives=3, batch_size=32,
                         max_epochs=40, patience=3, seed=5)

    large = init_random(dims, seed=3, scale=0.01)
    _, _, rep_large = fit(large, triplets, histories, val_pairs, config)

    table = seminit.EmbeddingTable(
        dim=768, vectors=planted.indicator_embeddings(dims.n_rationales, 768, noise=0.1, seed=7))
    warm = seminit.semantic_initialize(dims, table, catalog, histories)
    _, _, rep_warm = fit(warm, triplets, histories, val_pairs, config)

    target = rep_large.best_val
    warm_vals = [rep_warm.init_val] + [entry[2] for entry in rep_warm.entries]
    reached = next((k for k, v in enumerate(warm_vals) if v >= target), None)
    elapsed = time.perf_counter() - started
    ok = (reached is not None and rep_large.best_epoch >= 1
          and 2 * reached <= rep_large.best_epoch and elapsed < 180.0)
    record_acceptance(
        "convergence speedup from semantic warm start",
        ok, f"warm start reached {target:.4f} after {reached} epoch(s); "
            f"random init needed {rep_large.best_epoch}; {elapsed:.1f}s")
    assert reached is not None, "warm start never reached the random-init best"
    assert 2 * reached <= rep_large.best_epoch
    assert elapsed < 180.0


# --------------------------------------------------------------------------
# Criterion 5: determinism and bit-exact persistence
# --------------------------------------------------------------------------

def test_determinism_and_persistence(tmp_path):
    train_recs, test_recs = planted.generate(n_records=700)
    catalog, histories, triplets, val_pairs = planted.build_pipeline(train_recs, test_recs)
    dims = ModelDims(catalog.n_users, catalog.n_items, catalog.n_rationales, 16)
    config = TrainConfig(max_epochs=3, patience=3, seed=11)

    paths = []
    for run in range(2):
        model = init_random(dims, seed=4, scale=0.01)
        best, _, _ = fit(model, triplets, histories, val_pairs, config)
        path = tmp_path / f"run{run}.rrnk"
        save_checkpoint(best, path, mode="bper", mu=0.7)
        paths.append(path)
    identical = paths[0].read_bytes() == paths[1].read_bytes()

    loaded, _, _, _ = load_checkpoint(paths[0])
    roundtrip = all(np.array_equal(a, b) for a, b in zip(
        loaded.param_blocks().values(),
        load_checkpoint(paths[0])[0].param_blocks().values()))
    save_checkpoint(loaded, tmp_path / "resaved.rrnk", mode="bper", mu=0.7)
    resave_identical = (tmp_path / "resaved.rrnk").read_bytes() == paths[0].read_bytes()

    rng = np.random.default_rng(5)
    table = seminit.EmbeddingTable(
        dim=9, vectors={f"e{k}": rng.normal(size=9).astype(np.float32) for k in range(17)})
    seminit.write_embedding_file(table, tmp_path / "t.sebp")
    back = seminit.read_embedding_file(tmp_path / "t.sebp")
    seminit.write_embedding_file(back, tmp_path / "t2.sebp")
    emb_identical = (tmp_path / "t.sebp").read_bytes() == (tmp_path / "t2.sebp").read_bytes()

    ok = identical and roundtrip and resave_identical and emb_identical
    record_acceptance(
        "determinism and bit-exact persistence",
        ok, f"reruns byte-identical={identical}, checkpoint roundtrip={resave_identical}, "
            f"embedding roundtrip={emb_identical}, backend={kernels.BACKEND}")
    assert identical
    assert roundtrip and resave_identical
    assert emb_identical


# --------------------------------------------------------------------------
# Criterion 6 (extended, optional): directional replication on EXTRA Amazon
# fold 0.  Multi-hour; runs only when RRANK_EXTRA_DIR points at converted
# TSV folds.
# --------------------------------------------------------------------------

@pytest.mark.skipif("RRANK_EXTRA_DIR" not in os.environ,
                    reason="set RRANK_EXTRA_DIR to a directory of converted "
                           "train.<k>.tsv/test.<k>.tsv folds to run the "
                           "multi-hour replication")
def test_extra_directional_replication():
    data_dir = os.environ["RRANK_EXTRA_DIR"]
    embeddings = os.environ.get("RRANK_EXTRA_EMBEDDINGS")
    train_path, test_path = corpus.fold_paths(data_dir, 0)
    train_recs = corpus.load_interactions(train_path)
    test_recs = corpus.load_interactions(test_path)
    catalog, histories, triplets, val_pairs = planted.build_pipeline(train_recs, test_recs)
    test_hist = corpus.build_histories(catalog, train_recs, test_recs)
    pairs = [EvalPair(u, i, tuple(t.tolist())) for (u, i), t in test_hist.e_ui.items()]

    def ndcg_of(model, mode="bper"):
        return evaluate(model, pairs, p=10, mu=0.7, mode=mode, workers=4).means["ndcg"]

    results = {}
    dims = ModelDims(catalog.n_users, catalog.n_items, catalog.n_rationales, 64)
    results["rand"] = ndcg_of(init_random(dims, seed=0, scale=0.01))
    config = TrainConfig(learning_rate=1e-3, l2=1e-4, n_negatives=3,
                         max_epochs=120, patience=3, seed=0)
    pitf_model, _, _ = fit(init_random(dims, seed=0, scale=0.01), triplets, histories,
                           val_pairs, TrainConfig(**{**config.__dict__, "mode": "pitf"}))
    results["pitf"] = ndcg_of(pitf_model, mode="pitf")
    bper_model, _, _ = fit(init_random(dims, seed=0, scale=0.01), triplets, histories,
                           val_pairs, config)
    results["bper"] = ndcg_of(bper_model)
    if embeddings:
        table = seminit.read_embedding_file(embeddings)
        se_dims = ModelDims(catalog.n_users, catalog.n_items, catalog.n_rationales, table.dim)
        se_model = seminit.semantic_initialize(se_dims, table, catalog, histories)
        se_best, _, _ = fit(se_model, triplets, histories, val_pairs, config)
        results["se-bper"] = ndcg_of(se_best)
        assert results["se-bper"] > results["bper"]
        assert abs(results["se-bper"] - 11.833) <= 1.5
    assert results["bper"] >= results["pitf"] > 10 * results["rand"]
    assert abs(results["bper"] - 10.285) <= 1.5
    record_acceptance("EXTRA Amazon fold-0 directional replication", True, str(results))


# --------------------------------------------------------------------------
# Secondary-component interchange: the exported fixture from the embedding
# toolkit must be accepted bit-exactly by this package's reader.
# --------------------------------------------------------------------------

FIXTURE = os.path.join(os.path.dirname(__file__), "data", "embedkit_fixture.sebp")


@pytest.mark.skipif(not os.path.isfile(FIXTURE),
                    reason="embedkit fixture not present")
def test_secondary_export_reads_bit_exactly(tmp_path):
    table = seminit.read_embedding_file(FIXTURE)
    ok_shape = table.dim == 768 and len(table) == 20
    seminit.write_embedding_file(table, tmp_path / "rt.sebp")
    identical = (tmp_path / "rt.sebp").read_bytes() == open(FIXTURE, "rb").read()
    ok = ok_shape and identical
    record_acceptance("secondary embedding export interchange",
                      ok, f"dim={table.dim} records={len(table)} byte-identical={identical}")
    assert ok_shape
    assert identical
