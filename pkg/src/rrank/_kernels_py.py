"""Pure-Python kernel backend: batches composed from the reference ops.

Slower than the compiled extension by a couple of orders of magnitude but
algorithmically identical; it is the import-time fallback and the ground
truth the extension is tested against.
"""

from __future__ import annotations


def _run(loss_and_grads, params, adam, n_rows, batch_size, lr):
    from .train import _GradSet, adam_step

    loss_sum = 0.0
    for start in range(0, n_rows, batch_size):
        grads = _GradSet()
        for row in range(start, min(start + batch_size, n_rows)):
            loss, g = loss_and_grads(row)
            loss_sum += loss
            for (block, idx), value in g.items():
                grads.add(block, idx, value)
        adam_step(params, grads, adam, lr)
    return loss_sum, adam.t


def run_bper_epoch(model, adam, trips, negs_u, negs_i, l2, lr, batch_size):
    from .train import bper_triplet_loss_and_grads

    def one(row):
        u, i, e = trips[row]
        return bper_triplet_loss_and_grads(model, u, i, e, negs_u[row], negs_i[row], l2)

    return _run(one, model.param_blocks(), adam, trips.shape[0], batch_size, lr)


def run_bper_plus_epoch(model, extras, adam, trips, negs_u, negs_i, l2, lr, batch_size):
    from .train import bper_plus_triplet_loss_and_grads

    def one(row):
        u, i, e = trips[row]
        return bper_plus_triplet_loss_and_grads(
            model, extras, u, i, e, negs_u[row], negs_i[row], l2)

    params = dict(model.param_blocks(), projection=extras.projection)
    return _run(one, params, adam, trips.shape[0], batch_size, lr)


def run_pitf_epoch(model, adam, trips, neg_items, negs_e, alpha, l2, lr, batch_size):
    from .train import pitf_loss_and_grads

    def one(row):
        u, i, e = trips[row]
        return pitf_loss_and_grads(model, u, i, e, neg_items[row], negs_e[row], alpha, l2)

    return _run(one, model.param_blocks(), adam, trips.shape[0], batch_size, lr)
