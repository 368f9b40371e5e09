"""Pairwise training: negative sampling, losses with analytic gradients,
sparse Adam, and the epoch loop with validation-based early stopping.

The per-triplet loss/gradient functions here are the reference
implementations (float64, one triplet at a time).  The epoch loop hands
whole presampled batches to a kernel backend (compiled extension or the
pure-Python fallback built on these reference ops); see ``kernels``.

One epoch is one shuffled pass over the expanded triplet list, drawing
``n_negatives`` fresh negatives per side per triplet.  After every epoch
the validation nDCG@10 is measured; training stops once it has not
improved for ``patience`` consecutive epochs, and the best-epoch snapshot
(the untrained model counts as epoch 0) is returned.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import evalrank, factors, kernels

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class DivergenceError(RuntimeError):
    """Training hit a non-finite loss; carries the report up to the failure."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    l2: float = 1e-4
    n_negatives: int = 3
    mu: float = 0.7
    alpha: float = 1.0
    max_epochs: int = 100
    patience: int = 3
    batch_size: int = 32
    seed: int = 0
    mode: str = "bper"

    def __post_init__(self):
        # lr/l2 of exactly 0 are allowed for diagnostics (frozen-model runs).
        if self.learning_rate < 0 or self.l2 < 0:
            raise ValueError("learning_rate and l2 must be non-negative")
        if self.n_negatives < 1:
            raise ValueError("n_negatives must be >= 1")
        if self.patience < 1 or self.max_epochs < 1 or self.batch_size < 1:
            raise ValueError("patience, max_epochs and batch_size must be >= 1")
        if not 0.0 <= self.mu <= 1.0:
            raise ValueError("mu must lie in [0, 1]")
        if self.mode not in factors.MODES:
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass
class AdamState:
    """First/second-moment accumulators shaped like the parameters."""

    m: dict
    v: dict
    t: int = 0

    @classmethod
    def init_like(cls, params):
        return cls(m={k: np.zeros_like(a) for k, a in params.items()},
                   v={k: np.zeros_like(a) for k, a in params.items()})


@dataclass
class TrainReport:
    """Per-epoch curves plus the best-epoch bookkeeping (epoch 0 = init)."""

    init_val: float
    entries: list = field(default_factory=list)   # (epoch, mean_loss, val_ndcg10, secs)
    best_epoch: int = 0
    best_val: float = 0.0

    def lines(self):
        return [f"epoch {n} loss {loss:.6f} val_ndcg10 {val:.6f} secs {secs:.3f}"
                for n, loss, val, secs in self.entries]

    def losses(self):
        return [loss for _, loss, _, _ in self.entries]

    def to_dict(self):
        return {
            "init_val_ndcg10": self.init_val,
            "epochs": [{"epoch": n, "loss": loss, "val_ndcg10": val, "secs": secs}
                       for n, loss, val, secs in self.entries],
            "best_epoch": self.best_epoch,
            "best_val_ndcg10": self.best_val,
        }


# --------------------------------------------------------------------------
# Negative sampling
# --------------------------------------------------------------------------

def sample_negatives(excluded, catalog_size, n, rng):
    """Draw ``n`` indices uniformly (with replacement) outside ``excluded``.

    Plain rejection sampling, so the draws are exactly uniform over the
    complement and deterministic under the generator state.
    """
    excluded = set(int(x) for x in excluded)
    if len(excluded) >= catalog_size:
        raise ValueError("cannot sample: excluded set covers the whole catalog")
    out = []
    while len(out) < n:
        x = int(rng.integers(0, catalog_size))
        if x not in excluded:
            out.append(x)
    return out


def _in_sorted(sorted_keys, keys):
    if len(sorted_keys) == 0:
        return np.zeros(np.shape(keys), dtype=bool)
    pos = np.minimum(np.searchsorted(sorted_keys, keys), len(sorted_keys) - 1)
    return sorted_keys[pos] == keys


def _history_keys(history_list, stride):
    """Flatten per-owner sorted index arrays to sorted owner*stride+value keys."""
    parts = [owner * stride + arr for owner, arr in enumerate(history_list) if len(arr)]
    if not parts:
        return np.empty(0, dtype=np.int64)
    return np.concatenate(parts)


def sample_complement_matrix(rng, owners, excluded_keys, stride, size, n):
    """Vectorized per-row rejection sampling against per-owner excluded sets.

    ``excluded_keys`` holds sorted ``owner * stride + value`` keys; row r of
    the result contains ``n`` uniform draws from [0, size) outside owner
    ``owners[r]``'s excluded values.
    """
    owners = np.asarray(owners, dtype=np.int64)
    draws = rng.integers(0, size, size=(len(owners), n), dtype=np.int64)
    bad = _in_sorted(excluded_keys, owners[:, None] * stride + draws)
    while bad.any():
        rows, cols = np.nonzero(bad)
        fresh = rng.integers(0, size, size=len(rows), dtype=np.int64)
        draws[rows, cols] = fresh
        bad[rows, cols] = _in_sorted(excluded_keys, owners[rows] * stride + fresh)
    return draws


# --------------------------------------------------------------------------
# Reference losses and gradients (float64, one triplet at a time)
# --------------------------------------------------------------------------

def _sigmoid(x):
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def _softplus_neg(x):
    # -ln(sigmoid(x)) = ln(1 + exp(-x)), computed stably
    return float(np.logaddexp(0.0, -x))


class _GradSet(dict):
    """Sparse gradients keyed by (block name, row index); row None = dense."""

    def add(self, block, row, value):
        key = (block, row)
        if key in self:
            self[key] = self[key] + value
        else:
            self[key] = np.array(value, dtype=np.float64) if np.ndim(value) else float(value)


def _pairwise_side(grads, loss_parts, vec_block, bias_block, owner_block, owner_row,
                   owner_vec, factor_rows, bias_rows, pos, negs, l2):
    """Shared BPR machinery for one side (user-rationale or item-rationale)."""
    o_pos = factor_rows[pos].astype(np.float64)
    r_pos = float(owner_vec @ o_pos) + float(bias_rows[pos])
    grads.add(owner_block, owner_row, 2.0 * l2 * owner_vec)
    grads.add(vec_block, pos, 2.0 * l2 * o_pos)
    grads.add(bias_block, pos, 2.0 * l2 * float(bias_rows[pos]))
    reg = float(owner_vec @ owner_vec) + float(o_pos @ o_pos) + float(bias_rows[pos]) ** 2
    for neg in negs:
        o_neg = factor_rows[neg].astype(np.float64)
        r_neg = float(owner_vec @ o_neg) + float(bias_rows[neg])
        delta = r_pos - r_neg
        loss_parts.append(_softplus_neg(delta))
        g = float(_sigmoid(delta)) - 1.0      # d(-ln sigma(delta)) / d delta
        grads.add(owner_block, owner_row, g * (o_pos - o_neg))
        grads.add(vec_block, pos, g * owner_vec)
        grads.add(vec_block, neg, -g * owner_vec)
        grads.add(bias_block, pos, g)
        grads.add(bias_block, neg, -g)
        grads.add(vec_block, neg, 2.0 * l2 * o_neg)
        grads.add(bias_block, neg, 2.0 * l2 * float(bias_rows[neg]))
        reg += float(o_neg @ o_neg) + float(bias_rows[neg]) ** 2
    loss_parts.append(l2 * reg)


def bper_triplet_loss_and_grads(model, u, i, e, negs_u, negs_i, l2):
    """Pairwise loss and exact gradients for one (u, i, e) observation.

    The loss sums -ln sigmoid(positive - negative) over both sides'
    sampled negatives, plus ``l2`` times the squared norms of every row
    the triplet touches (negatives counted per occurrence).
    """
    grads = _GradSet()
    loss_parts = []
    p_u = model.user_factors[u].astype(np.float64)
    q_i = model.item_factors[i].astype(np.float64)
    _pairwise_side(grads, loss_parts, "rat_factors_u", "rat_bias_u", "user_factors",
                   u, p_u, model.rat_factors_u, model.rat_bias_u, e, negs_u, l2)
    _pairwise_side(grads, loss_parts, "rat_factors_i", "rat_bias_i", "item_factors",
                   i, q_i, model.rat_factors_i, model.rat_bias_i, e, negs_i, l2)
    loss = sum(loss_parts)
    if not np.isfinite(loss):
        raise DivergenceError(f"non-finite loss for triplet ({u}, {i}, {e})")
    return loss, grads


def bper_plus_triplet_loss_and_grads(model, extras, u, i, e, negs_u, negs_i, l2):
    """Same pairwise loss with projection-enhanced rationale factors.

    Every rationale's factor rows are multiplied elementwise by
    projection @ semantic[e] before scoring, and the projection matrix
    receives gradient from both sides (plus its own l2 term per triplet).
    """
    w = extras.projection.astype(np.float64)
    sem = extras.semantic
    grads = _GradSet()
    loss_parts = []
    p_u = model.user_factors[u].astype(np.float64)
    q_i = model.item_factors[i].astype(np.float64)

    proj = {}

    def proj_vec(idx):
        if idx not in proj:
            proj[idx] = w @ sem[idx].astype(np.float64)
        return proj[idx]

    def side(vec_block, bias_block, owner_block, owner_row, owner_vec,
             factor_rows, bias_rows, negs):
        o_pos = factor_rows[e].astype(np.float64)
        c_pos = proj_vec(e)
        r_pos = float(owner_vec @ (o_pos * c_pos)) + float(bias_rows[e])
        grads.add(owner_block, owner_row, 2.0 * l2 * owner_vec)
        grads.add(vec_block, e, 2.0 * l2 * o_pos)
        grads.add(bias_block, e, 2.0 * l2 * float(bias_rows[e]))
        reg = float(owner_vec @ owner_vec) + float(o_pos @ o_pos) + float(bias_rows[e]) ** 2
        for neg in negs:
            o_neg = factor_rows[neg].astype(np.float64)
            c_neg = proj_vec(neg)
            r_neg = float(owner_vec @ (o_neg * c_neg)) + float(bias_rows[neg])
            delta = r_pos - r_neg
            loss_parts.append(_softplus_neg(delta))
            g = float(_sigmoid(delta)) - 1.0
            grads.add(owner_block, owner_row, g * (o_pos * c_pos - o_neg * c_neg))
            grads.add(vec_block, e, g * owner_vec * c_pos)
            grads.add(vec_block, neg, -g * owner_vec * c_neg)
            grads.add(bias_block, e, g)
            grads.add(bias_block, neg, -g)
            grads.add("projection", None,
                      np.outer(g * owner_vec * o_pos, sem[e].astype(np.float64))
                      - np.outer(g * owner_vec * o_neg, sem[neg].astype(np.float64)))
            grads.add(vec_block, neg, 2.0 * l2 * o_neg)
            grads.add(bias_block, neg, 2.0 * l2 * float(bias_rows[neg]))
            reg += float(o_neg @ o_neg) + float(bias_rows[neg]) ** 2
        loss_parts.append(l2 * reg)

    side("rat_factors_u", "rat_bias_u", "user_factors", u, p_u,
         model.rat_factors_u, model.rat_bias_u, negs_u)
    side("rat_factors_i", "rat_bias_i", "item_factors", i, q_i,
         model.rat_factors_i, model.rat_bias_i, negs_i)
    loss_parts.append(l2 * float(np.sum(w * w)))
    grads.add("projection", None, 2.0 * l2 * w)
    loss = sum(loss_parts)
    if not np.isfinite(loss):
        raise DivergenceError(f"non-finite loss for triplet ({u}, {i}, {e})")
    return loss, grads


def pitf_loss_and_grads(model, u, i, e, neg_items, negs_e, alpha, l2):
    """Tensor-factorization baseline loss for one observation.

    Item-preference term: BPR over the user-item dot product against
    sampled unobserved items.  Rationale term (weighted by ``alpha``):
    BPR over the biasless two-dot-product score against rationales
    outside the pair's observed set.  When ``alpha`` is 0 the rationale
    term (and its regularization) is dropped entirely.
    """
    grads = _GradSet()
    loss_parts = []
    p_u = model.user_factors[u].astype(np.float64)
    q_i = model.item_factors[i].astype(np.float64)

    r_ui = float(p_u @ q_i)
    grads.add("user_factors", u, 2.0 * l2 * p_u)
    grads.add("item_factors", i, 2.0 * l2 * q_i)
    reg = float(p_u @ p_u) + float(q_i @ q_i)
    for j in neg_items:
        q_j = model.item_factors[j].astype(np.float64)
        delta = r_ui - float(p_u @ q_j)
        loss_parts.append(_softplus_neg(delta))
        g = float(_sigmoid(delta)) - 1.0
        grads.add("user_factors", u, g * (q_i - q_j))
        grads.add("item_factors", i, g * p_u)
        grads.add("item_factors", j, -g * p_u)
        grads.add("item_factors", j, 2.0 * l2 * q_j)
        reg += float(q_j @ q_j)

    if alpha != 0.0:
        ou_e = model.rat_factors_u[e].astype(np.float64)
        oi_e = model.rat_factors_i[e].astype(np.float64)
        r_e = float(p_u @ ou_e) + float(q_i @ oi_e)
        grads.add("rat_factors_u", e, 2.0 * l2 * ou_e)
        grads.add("rat_factors_i", e, 2.0 * l2 * oi_e)
        reg += float(ou_e @ ou_e) + float(oi_e @ oi_e)
        for f in negs_e:
            ou_f = model.rat_factors_u[f].astype(np.float64)
            oi_f = model.rat_factors_i[f].astype(np.float64)
            delta = r_e - (float(p_u @ ou_f) + float(q_i @ oi_f))
            loss_parts.append(alpha * _softplus_neg(delta))
            g = alpha * (float(_sigmoid(delta)) - 1.0)
            grads.add("user_factors", u, g * (ou_e - ou_f))
            grads.add("item_factors", i, g * (oi_e - oi_f))
            grads.add("rat_factors_u", e, g * p_u)
            grads.add("rat_factors_u", f, -g * p_u)
            grads.add("rat_factors_i", e, g * q_i)
            grads.add("rat_factors_i", f, -g * q_i)
            grads.add("rat_factors_u", f, 2.0 * l2 * ou_f)
            grads.add("rat_factors_i", f, 2.0 * l2 * oi_f)
            reg += float(ou_f @ ou_f) + float(oi_f @ oi_f)

    loss_parts.append(l2 * reg)
    loss = sum(loss_parts)
    if not np.isfinite(loss):
        raise DivergenceError(f"non-finite loss for triplet ({u}, {i}, {e})")
    return loss, grads


def adam_step(params, grads, state, lr):
    """One Adam application of a summed sparse gradient set.

    Standard update (beta1 0.9, beta2 0.999, eps 1e-8, bias correction);
    only rows present in ``grads`` are touched.  Moments and parameters
    are updated through float64 intermediates and written back in the
    arrays' storage dtype.
    """
    state.t += 1
    bc1 = 1.0 - ADAM_BETA1 ** state.t
    bc2 = 1.0 - ADAM_BETA2 ** state.t
    for (block, row), g in grads.items():
        param = params[block]
        m = state.m[block]
        v = state.v[block]
        if param.shape != m.shape:
            raise ValueError(f"moment shape mismatch for block {block!r}")
        sel = slice(None) if row is None else row
        g64 = np.asarray(g, dtype=np.float64)
        if np.asarray(param[sel]).shape != g64.shape:
            raise ValueError(f"gradient shape mismatch for block {block!r} row {row}")
        m64 = m[sel].astype(np.float64) * ADAM_BETA1 + (1.0 - ADAM_BETA1) * g64
        v64 = v[sel].astype(np.float64) * ADAM_BETA2 + (1.0 - ADAM_BETA2) * g64 * g64
        m[sel] = m64
        v[sel] = v64
        step = lr * (m64 / bc1) / (np.sqrt(v64 / bc2) + ADAM_EPS)
        param[sel] = param[sel].astype(np.float64) - step
    return params, state


# --------------------------------------------------------------------------
# Epoch loop
# --------------------------------------------------------------------------

def _pair_structures(triplets, n_items, n_rationales):
    """Per-row pair ids plus sorted pair_id*stride+rationale exclusion keys."""
    ui = triplets[:, 0] * np.int64(n_items) + triplets[:, 1]
    _, pair_id = np.unique(ui, return_inverse=True)
    pair_keys = np.unique(pair_id * np.int64(n_rationales) + triplets[:, 2])
    return pair_id.astype(np.int64), pair_keys


def _check_complements(counts, size, what):
    worst = max(counts) if len(counts) else 0
    if worst >= size:
        raise ValueError(f"a {what} history covers the whole catalog; "
                         "negative sampling is impossible")


def _validation_ndcg(model, extras, val_pairs, config):
    report = evalrank.evaluate(model, val_pairs, p=10, mu=config.mu,
                               mode=config.mode, extras=extras)
    return report.means["ndcg"] / 100.0


def fit(model, triplets, histories, val_pairs, config, extras=None, progress=None):
    """Train in place and return (best model, best extras, report).

    ``triplets`` is the expanded (T, 3) int64 observation array.  Fully
    deterministic for a given (seed, config) under the single-writer
    schedule; per-epoch random streams derive from (seed, worker=0, epoch).
    Raises ``DivergenceError`` (carrying the partial report) on a
    non-finite epoch loss.
    """
    if config.mode == "bper_plus" and extras is None:
        raise ValueError("bper_plus training needs BperPlusExtras")
    triplets = np.ascontiguousarray(triplets, dtype=np.int64)
    if triplets.shape[0] == 0:
        raise ValueError("no training triplets")
    if not val_pairs:
        raise ValueError("validation set is empty")
    dims = model.dims
    n = config.n_negatives

    if config.mode == "pitf":
        iu_keys = np.unique(triplets[:, 0] * np.int64(dims.n_items) + triplets[:, 1])
        pair_id, pair_keys = _pair_structures(triplets, dims.n_items, dims.n_rationales)
        _check_complements(np.bincount(iu_keys // dims.n_items), dims.n_items, "user item")
        _check_complements(np.bincount(pair_keys // dims.n_rationales),
                           dims.n_rationales, "per-pair rationale")
    else:
        user_keys = _history_keys(histories.e_u, dims.n_rationales)
        item_keys = _history_keys(histories.e_i, dims.n_rationales)
        _check_complements([len(h) for h in histories.e_u], dims.n_rationales, "user")
        _check_complements([len(h) for h in histories.e_i], dims.n_rationales, "item")

    params = model.param_blocks()
    if extras is not None:
        params = dict(params, projection=extras.projection)
    adam = AdamState.init_like(params)

    best_model = model.copy()
    best_extras = extras.copy() if extras is not None else None
    init_val = _validation_ndcg(model, extras, val_pairs, config)
    report = TrainReport(init_val=init_val, best_epoch=0, best_val=init_val)
    if progress:
        progress(f"epoch 0 loss nan val_ndcg10 {init_val:.6f} secs 0.000")

    bad_epochs = 0
    for epoch in range(1, config.max_epochs + 1):
        started = time.perf_counter()
        rng = np.random.default_rng([config.seed, 0, epoch])
        order = rng.permutation(triplets.shape[0])
        trip = np.ascontiguousarray(triplets[order])

        try:
            if config.mode == "pitf":
                neg_items = sample_complement_matrix(
                    rng, trip[:, 0], iu_keys, dims.n_items, dims.n_items, n)
                negs_e = sample_complement_matrix(
                    rng, pair_id[order], pair_keys, dims.n_rationales, dims.n_rationales, n)
                loss_sum, adam.t = kernels.run_pitf_epoch(
                    model, adam, trip, neg_items, negs_e,
                    config.alpha, config.l2, config.learning_rate,
                    config.batch_size, adam.t)
            else:
                negs_u = sample_complement_matrix(
                    rng, trip[:, 0], user_keys, dims.n_rationales, dims.n_rationales, n)
                negs_i = sample_complement_matrix(
                    rng, trip[:, 1], item_keys, dims.n_rationales, dims.n_rationales, n)
                if config.mode == "bper":
                    loss_sum, adam.t = kernels.run_bper_epoch(
                        model, adam, trip, negs_u, negs_i,
                        config.l2, config.learning_rate, config.batch_size, adam.t)
                else:
                    loss_sum, adam.t = kernels.run_bper_plus_epoch(
                        model, extras, adam, trip, negs_u, negs_i,
                        config.l2, config.learning_rate, config.batch_size, adam.t)
        except DivergenceError as exc:
            raise DivergenceError(f"{exc} (epoch {epoch})", report=report) from None

        mean_loss = loss_sum / triplets.shape[0]
        if not np.isfinite(mean_loss):
            raise DivergenceError(f"non-finite loss at epoch {epoch}", report=report)
        val = _validation_ndcg(model, extras, val_pairs, config)
        secs = time.perf_counter() - started
        report.entries.append((epoch, mean_loss, val, secs))
        if progress:
            progress(f"epoch {epoch} loss {mean_loss:.6f} val_ndcg10 {val:.6f} secs {secs:.3f}")

        if val > report.best_val:
            report.best_val = val
            report.best_epoch = epoch
            best_model = model.copy()
            best_extras = extras.copy() if extras is not None else None
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= config.patience:
                break

    return best_model, best_extras, report
