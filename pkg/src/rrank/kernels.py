"""Kernel backend selection for the training inner loop.

The per-triplet gradient/Adam loop dominates training time, so it exists
twice: a compiled extension (``rrank._kernels``, Cython) and a pure-Python
fallback that composes the reference ops from ``train``.  The backend is
chosen once at import: the compiled extension when it built, else the
fallback.  Set ``RRANK_KERNEL=python`` or ``RRANK_KERNEL=compiled`` to
force one (the benchmark and the cross-backend tests do).

Both backends consume identical presampled negative arrays and run the
same math in float64, so they agree to rounding error; each backend is
individually bit-deterministic under a fixed seed.
"""

from __future__ import annotations

import os

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

_forced = os.environ.get("RRANK_KERNEL")
if _forced not in (None, "", "compiled", "python"):
    raise RuntimeError(f"RRANK_KERNEL must be 'compiled' or 'python', got {_forced!r}")
if _forced == "compiled" and _compiled is None:
    raise RuntimeError("RRANK_KERNEL=compiled but the extension is not built")

BACKEND = "python" if _forced == "python" or _compiled is None else "compiled"


def available_backends():
    return ("python", "compiled") if _compiled is not None else ("python",)


def _pick(backend):
    name = backend or BACKEND
    if name == "compiled" and _compiled is None:
        raise RuntimeError("compiled kernel backend is not available")
    return name


def run_bper_epoch(model, adam, trips, negs_u, negs_i, l2, lr, batch_size, t0,
                   backend=None):
    if _pick(backend) == "python":
        return _kernels_py.run_bper_epoch(model, adam, trips, negs_u, negs_i,
                                          l2, lr, batch_size)
    m, v = adam.m, adam.v
    return _compiled.run_bper_epoch(
        model.user_factors, model.item_factors,
        model.rat_factors_u, model.rat_factors_i,
        model.rat_bias_u, model.rat_bias_i,
        m["user_factors"], v["user_factors"], m["item_factors"], v["item_factors"],
        m["rat_factors_u"], v["rat_factors_u"], m["rat_factors_i"], v["rat_factors_i"],
        m["rat_bias_u"], v["rat_bias_u"], m["rat_bias_i"], v["rat_bias_i"],
        trips, negs_u, negs_i, l2, lr, batch_size, t0)


def run_bper_plus_epoch(model, extras, adam, trips, negs_u, negs_i, l2, lr,
                        batch_size, t0, backend=None):
    if _pick(backend) == "python":
        return _kernels_py.run_bper_plus_epoch(model, extras, adam, trips, negs_u,
                                               negs_i, l2, lr, batch_size)
    m, v = adam.m, adam.v
    return _compiled.run_bper_plus_epoch(
        model.user_factors, model.item_factors,
        model.rat_factors_u, model.rat_factors_i,
        model.rat_bias_u, model.rat_bias_i,
        extras.projection, extras.semantic,
        m["user_factors"], v["user_factors"], m["item_factors"], v["item_factors"],
        m["rat_factors_u"], v["rat_factors_u"], m["rat_factors_i"], v["rat_factors_i"],
        m["rat_bias_u"], v["rat_bias_u"], m["rat_bias_i"], v["rat_bias_i"],
        m["projection"], v["projection"],
        trips, negs_u, negs_i, l2, lr, batch_size, t0)


def run_pitf_epoch(model, adam, trips, neg_items, negs_e, alpha, l2, lr,
                   batch_size, t0, backend=None):
    if _pick(backend) == "python":
        return _kernels_py.run_pitf_epoch(model, adam, trips, neg_items, negs_e,
                                          alpha, l2, lr, batch_size)
    m, v = adam.m, adam.v
    return _compiled.run_pitf_epoch(
        model.user_factors, model.item_factors,
        model.rat_factors_u, model.rat_factors_i,
        m["user_factors"], v["user_factors"], m["item_factors"], v["item_factors"],
        m["rat_factors_u"], v["rat_factors_u"], m["rat_factors_i"], v["rat_factors_i"],
        trips, neg_items, negs_e, alpha, l2, lr, batch_size, t0)
