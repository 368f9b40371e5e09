"""Model parameters and every scoring rule used at train and inference time.

Two coupled factorizations share the latent dimension d: user preference
over rationales (user_factors x rat_factors_u + rat_bias_u) and item
appropriateness for rationales (item_factors x rat_factors_i + rat_bias_i).
Inference fuses the two sides with a convex weight ``mu``.  The projection
variant ("bper_plus") multiplies each rationale factor elementwise with a
learned linear projection of that rationale's static semantic vector.

Parameters are stored in 32-bit floats; dot products accumulate in 64-bit.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

MODES = ("bper", "bper_plus", "pitf")
_MODE_CODES = {name: code for code, name in enumerate(MODES)}

CHECKPOINT_MAGIC = b"RRNK"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    """Checkpoint format violation; message includes the byte offset."""


@dataclass(frozen=True)
class ModelDims:
    n_users: int
    n_items: int
    n_rationales: int
    d: int

    def __post_init__(self):
        for name in ("n_users", "n_items", "n_rationales", "d"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class FactorModel:
    """All learnable parameters.

    Shapes: user_factors (n_users, d), item_factors (n_items, d),
    rat_factors_u / rat_factors_i (n_rationales, d), rat_bias_u /
    rat_bias_i (n_rationales,).
    """

    dims: ModelDims
    user_factors: np.ndarray
    item_factors: np.ndarray
    rat_factors_u: np.ndarray
    rat_factors_i: np.ndarray
    rat_bias_u: np.ndarray
    rat_bias_i: np.ndarray

    def param_blocks(self):
        return {
            "user_factors": self.user_factors,
            "item_factors": self.item_factors,
            "rat_factors_u": self.rat_factors_u,
            "rat_factors_i": self.rat_factors_i,
            "rat_bias_u": self.rat_bias_u,
            "rat_bias_i": self.rat_bias_i,
        }

    def copy(self):
        return FactorModel(self.dims, *(v.copy() for v in self.param_blocks().values()))


@dataclass
class BperPlusExtras:
    """Learned projection plus the frozen semantic matrix.

    ``projection`` is d x d_sem and trainable; ``semantic`` is
    n_rationales x d_sem and stays fixed for the lifetime of training.
    """

    projection: np.ndarray
    semantic: np.ndarray

    @property
    def d_sem(self):
        return self.projection.shape[1]

    def copy(self):
        return BperPlusExtras(self.projection.copy(), self.semantic.copy())


@dataclass
class RankList:
    """(rationale index, score) pairs, strictly sorted by score desc, index asc."""

    entries: list

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def indices(self):
        return [e for e, _ in self.entries]


def init_random(dims, seed, scale=0.01, dtype=np.float32):
    """Factors i.i.d. uniform in [-scale, +scale]; biases start at zero."""
    if scale <= 0:
        raise ValueError("scale must be positive")
    rng = np.random.default_rng(seed)

    def draw(n):
        return rng.uniform(-scale, scale, size=(n, dims.d)).astype(dtype)

    return FactorModel(
        dims=dims,
        user_factors=draw(dims.n_users),
        item_factors=draw(dims.n_items),
        rat_factors_u=draw(dims.n_rationales),
        rat_factors_i=draw(dims.n_rationales),
        rat_bias_u=np.zeros(dims.n_rationales, dtype=dtype),
        rat_bias_i=np.zeros(dims.n_rationales, dtype=dtype),
    )


def init_zeros(dims, dtype=np.float32):
    shape = (dims.n_rationales, dims.d)
    return FactorModel(
        dims=dims,
        user_factors=np.zeros((dims.n_users, dims.d), dtype=dtype),
        item_factors=np.zeros((dims.n_items, dims.d), dtype=dtype),
        rat_factors_u=np.zeros(shape, dtype=dtype),
        rat_factors_i=np.zeros(shape, dtype=dtype),
        rat_bias_u=np.zeros(dims.n_rationales, dtype=dtype),
        rat_bias_i=np.zeros(dims.n_rationales, dtype=dtype),
    )


def _check_index(value, bound, what):
    if not 0 <= value < bound:
        raise IndexError(f"{what} index {value} out of range [0, {bound})")


def _dot64(a, b):
    return float(np.dot(a.astype(np.float64), b.astype(np.float64)))


def score_ue(model, u, e):
    """User u's estimated preference for rationale e."""
    _check_index(u, model.dims.n_users, "user")
    _check_index(e, model.dims.n_rationales, "rationale")
    return _dot64(model.user_factors[u], model.rat_factors_u[e]) + float(model.rat_bias_u[e])


def score_ie(model, i, e):
    """Item i's estimated appropriateness for rationale e."""
    _check_index(i, model.dims.n_items, "item")
    _check_index(e, model.dims.n_rationales, "rationale")
    return _dot64(model.item_factors[i], model.rat_factors_i[e]) + float(model.rat_bias_i[e])


def score_uie(model, u, i, e, mu):
    """Fused (u, i) preference: mu * user side + (1 - mu) * item side."""
    if not 0.0 <= mu <= 1.0:
        raise ValueError(f"mu must lie in [0, 1], got {mu}")
    return mu * score_ue(model, u, e) + (1.0 - mu) * score_ie(model, i, e)


def score_pitf(model, u, i, e):
    """Pairwise-interaction score: both dot products, no biases."""
    _check_index(u, model.dims.n_users, "user")
    _check_index(i, model.dims.n_items, "item")
    _check_index(e, model.dims.n_rationales, "rationale")
    return (_dot64(model.user_factors[u], model.rat_factors_u[e])
            + _dot64(model.item_factors[i], model.rat_factors_i[e]))


def enhanced_rationale_factors(model, extras, e):
    """Elementwise products of rationale factors with the projected semantics.

    Computes projection @ semantic[e] and returns that vector multiplied
    into the user-side and item-side factor rows of rationale ``e``.
    """
    _check_index(e, model.dims.n_rationales, "rationale")
    s_e = extras.semantic[e].astype(np.float64)
    w = extras.projection.astype(np.float64)
    if w.shape[1] != s_e.shape[0]:
        raise ValueError(
            f"projection is {w.shape[0]}x{w.shape[1]} but semantic vector has dim {s_e.shape[0]}")
    if w.shape[0] != model.dims.d:
        raise ValueError(f"projection output dim {w.shape[0]} != latent dim {model.dims.d}")
    proj = w @ s_e
    return (model.rat_factors_u[e].astype(np.float64) * proj,
            model.rat_factors_i[e].astype(np.float64) * proj)


def make_scorer(model, mu, mode, candidates, extras=None):
    """Build a vectorized (u, i) -> scores-over-candidates function.

    All inference paths (single ranklists, validation monitoring, full
    evaluation) go through this one routine, so printed and evaluated
    scores are always consistent.  Candidate blocks are cast to float64
    once, up front.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    if mode != "pitf" and not 0.0 <= mu <= 1.0:
        raise ValueError(f"mu must lie in [0, 1], got {mu}")
    ou = model.rat_factors_u[candidates].astype(np.float64)
    oi = model.rat_factors_i[candidates].astype(np.float64)
    if mode == "bper_plus":
        if extras is None:
            raise ValueError("bper_plus scoring needs BperPlusExtras")
        proj = extras.semantic[candidates].astype(np.float64) @ extras.projection.astype(np.float64).T
        ou = ou * proj
        oi = oi * proj
    bu = model.rat_bias_u[candidates].astype(np.float64)
    bi = model.rat_bias_i[candidates].astype(np.float64)
    p = model.user_factors
    q = model.item_factors

    if mode == "pitf":
        def scorer(u, i):
            _check_index(u, model.dims.n_users, "user")
            _check_index(i, model.dims.n_items, "item")
            return ou @ p[u].astype(np.float64) + oi @ q[i].astype(np.float64)
    else:
        def scorer(u, i):
            _check_index(u, model.dims.n_users, "user")
            _check_index(i, model.dims.n_items, "item")
            user_side = ou @ p[u].astype(np.float64) + bu
            item_side = oi @ q[i].astype(np.float64) + bi
            return mu * user_side + (1.0 - mu) * item_side
    return scorer


def top_k_indices(candidates, scores, k):
    """Positions of the top-k scores; ties broken by ascending rationale index."""
    order = np.lexsort((candidates, -scores))
    return order[: min(k, len(candidates))]


def rank_rationales(model, u, i, candidates, k, mu, mode, extras=None):
    """Rank ``candidates`` for the (u, i) pair and keep the best ``k``."""
    candidates = np.asarray(candidates, dtype=np.int64)
    if candidates.size == 0:
        raise ValueError("candidate set is empty")
    if k < 1:
        raise ValueError("k must be >= 1")
    scorer = make_scorer(model, mu, mode, candidates, extras=extras)
    scores = scorer(u, i)
    top = top_k_indices(candidates, scores, k)
    return RankList([(int(candidates[j]), float(scores[j])) for j in top])


# --------------------------------------------------------------------------
# Checkpoint format: magic RRNK, version u32 LE, dims 4 x u64 LE, mode byte,
# mu f64 LE, then row-major f32 LE blocks in order user_factors,
# item_factors, rat_factors_u, rat_factors_i, rat_bias_u, rat_bias_i.
# bper_plus checkpoints append d_sem u32 LE, projection, semantic.
# --------------------------------------------------------------------------

def save_checkpoint(model, path, mode="bper", mu=0.7, extras=None):
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "bper_plus" and extras is None:
        raise ValueError("bper_plus checkpoints need BperPlusExtras")
    d = model.dims
    out = [
        struct.pack("<4sI", CHECKPOINT_MAGIC, CHECKPOINT_VERSION),
        struct.pack("<4Q", d.n_users, d.n_items, d.n_rationales, d.d),
        struct.pack("<Bd", _MODE_CODES[mode], mu),
    ]
    for block in model.param_blocks().values():
        out.append(np.ascontiguousarray(block, dtype="<f4").tobytes())
    if mode == "bper_plus":
        out.append(struct.pack("<I", extras.d_sem))
        out.append(np.ascontiguousarray(extras.projection, dtype="<f4").tobytes())
        out.append(np.ascontiguousarray(extras.semantic, dtype="<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(out))


class _Reader:
    def __init__(self, data):
        self.data = data
        self.offset = 0

    def take(self, n, what):
        if self.offset + n > len(self.data):
            raise CheckpointError(
                f"truncated checkpoint: needed {n} bytes for {what} at byte {self.offset}, "
                f"file has {len(self.data)}")
        chunk = self.data[self.offset:self.offset + n]
        self.offset += n
        return chunk

    def array(self, shape, what):
        n = int(np.prod(shape)) * 4
        arr = np.frombuffer(self.take(n, what), dtype="<f4").reshape(shape)
        return arr.copy()


def load_checkpoint(path):
    """Read a checkpoint; returns (model, extras-or-None, mode, mu)."""
    with open(path, "rb") as fh:
        rd = _Reader(fh.read())
    magic, version = struct.unpack("<4sI", rd.take(8, "header"))
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError(f"bad magic {magic!r} at byte 0, expected {CHECKPOINT_MAGIC!r}")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported version {version} at byte 4")
    n_users, n_items, n_rationales, d = struct.unpack("<4Q", rd.take(32, "dims"))
    dims = ModelDims(n_users, n_items, n_rationales, d)
    mode_code, mu = struct.unpack("<Bd", rd.take(9, "mode/mu"))
    if mode_code >= len(MODES):
        raise CheckpointError(f"unknown mode byte {mode_code} at byte 40")
    mode = MODES[mode_code]
    model = FactorModel(
        dims=dims,
        user_factors=rd.array((n_users, d), "user_factors"),
        item_factors=rd.array((n_items, d), "item_factors"),
        rat_factors_u=rd.array((n_rationales, d), "rat_factors_u"),
        rat_factors_i=rd.array((n_rationales, d), "rat_factors_i"),
        rat_bias_u=rd.array((n_rationales,), "rat_bias_u"),
        rat_bias_i=rd.array((n_rationales,), "rat_bias_i"),
    )
    extras = None
    if mode == "bper_plus":
        (d_sem,) = struct.unpack("<I", rd.take(4, "d_sem"))
        extras = BperPlusExtras(
            projection=rd.array((d, d_sem), "projection"),
            semantic=rd.array((n_rationales, d_sem), "semantic"),
        )
    if rd.offset != len(rd.data):
        raise CheckpointError(f"{len(rd.data) - rd.offset} trailing bytes at byte {rd.offset}")
    return model, extras, mode, mu
