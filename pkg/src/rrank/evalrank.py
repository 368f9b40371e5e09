"""Ranking metrics (nDCG@p, Precision@p, Recall@p, F1@p) and dataset reports.

Relevance is binary membership of a ranked rationale in the pair's
ground-truth set.  Dataset-level numbers are arithmetic means over pairs,
reported in percent.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import factors


@dataclass(frozen=True)
class EvalPair:
    """A test (user, item) pair with its ground-truth rationale indices."""

    user: int
    item: int
    truth: tuple


@dataclass
class EvalReport:
    cutoff: int
    means: dict          # metric name -> mean * 100
    pair_count: int
    unreachable_pairs: int = 0   # pairs whose truth lies entirely outside the candidate set
    per_pair: list = field(default_factory=list)

    def lines(self):
        out = [f"{name}@{self.cutoff} {value:.3f}" for name, value in self.means.items()]
        out.append(f"pairs {self.pair_count}")
        if self.unreachable_pairs:
            out.append(f"unreachable_pairs {self.unreachable_pairs}")
        return out


def ndcg_at(ranked, truth, p):
    """Normalized discounted cumulative gain at cutoff ``p``.

    DCG@p sums rel_r / log2(r+1) over the top p ranks; the ideal DCG places
    one relevant rationale per rank, capped at min(|truth|, p) terms.
    """
    if p < 1:
        raise ValueError("cutoff must be >= 1")
    truth = set(truth)
    if not truth:
        raise ValueError("ground-truth set is empty")
    dcg = 0.0
    for r, e in enumerate(ranked[:p], start=1):
        if e in truth:
            dcg += 1.0 / math.log2(r + 1)
    idcg = sum(1.0 / math.log2(r + 1) for r in range(1, min(len(truth), p) + 1))
    return dcg / idcg


def precision_recall_f1_at(ranked, truth, p):
    """Precision, recall and F1 of the top-``p`` ranking against ``truth``."""
    if p < 1:
        raise ValueError("cutoff must be >= 1")
    truth = set(truth)
    if not truth:
        raise ValueError("ground-truth set is empty")
    hits = sum(1 for e in ranked[:p] if e in truth)
    pre = hits / p
    rec = hits / len(truth)
    f1 = 0.0 if hits == 0 else 2.0 * pre * rec / (pre + rec)
    return pre, rec, f1


def pairs_from_histories(histories):
    """Turn test-time E_ui entries into EvalPairs, in insertion order."""
    return [
        EvalPair(user=u, item=i, truth=tuple(truth.tolist()))
        for (u, i), truth in histories.e_ui.items()
    ]


def evaluate(model, pairs, p, mu, mode, extras=None, candidates=None,
             workers=1, keep_per_pair=False):
    """Rank candidates for every pair and average the four metrics.

    ``candidates`` defaults to the full rationale catalog.  Pairs whose
    truth lies entirely outside the candidate set contribute zeros (they
    are counted, not skipped).  The reduction runs in pair order with
    compensated summation, so results do not depend on ``workers``.
    """
    if not pairs:
        raise ValueError("no pairs to evaluate")
    if candidates is None:
        candidates = np.arange(model.dims.n_rationales, dtype=np.int64)
    else:
        candidates = np.asarray(candidates, dtype=np.int64)
    scorer = factors.make_scorer(model, mu, mode, candidates, extras=extras)
    candidate_set = set(candidates.tolist())

    def eval_one(pair):
        try:
            scores = scorer(pair.user, pair.item)
            top = factors.top_k_indices(candidates, scores, p)
            ranked = candidates[top].tolist()
            nd = ndcg_at(ranked, pair.truth, p)
            pre, rec, f1 = precision_recall_f1_at(ranked, pair.truth, p)
        except Exception as exc:
            raise type(exc)(f"{exc} (while evaluating pair user={pair.user} "
                            f"item={pair.item})") from exc
        reachable = any(e in candidate_set for e in pair.truth)
        return nd, pre, rec, f1, reachable

    if workers > 1:
        chunks = np.array_split(np.arange(len(pairs)), workers * 4)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunk_results = list(pool.map(
                lambda idx: [eval_one(pairs[j]) for j in idx], chunks))
        results = [r for chunk in chunk_results for r in chunk]
    else:
        results = [eval_one(pair) for pair in pairs]

    unreachable = sum(1 for r in results if not r[4])
    n = len(results)
    means = {
        name: 100.0 * math.fsum(r[k] for r in results) / n
        for k, name in enumerate(("ndcg", "pre", "rec", "f1"))
    }
    report = EvalReport(cutoff=p, means=means, pair_count=n, unreachable_pairs=unreachable)
    if keep_per_pair:
        report.per_pair = [
            (pairs[j].user, pairs[j].item) + results[j][:4] for j in range(n)
        ]
    return report


def write_per_pair_tsv(report, catalog, fh):
    """Dump the per-pair breakdown as ``user item ndcg pre rec f1`` lines."""
    fh.write("# user\titem\tndcg\tpre\trec\tf1\n")
    for u, i, nd, pre, rec, f1 in report.per_pair:
        fh.write(f"{catalog.user_ids[u]}\t{catalog.item_ids[i]}"
                 f"\t{nd:.10g}\t{pre:.10g}\t{rec:.10g}\t{f1:.10g}\n")
