"""Cross-backend agreement: the compiled inner loop against both the
pure-Python batch fallback and the raw per-triplet reference ops."""

import numpy as np
import pytest

from rrank import kernels
from rrank.factors import BperPlusExtras, ModelDims, init_random
from rrank.train import AdamState, _history_keys, sample_complement_matrix

needs_compiled = pytest.mark.skipif(
    "compiled" not in kernels.available_backends(),
    reason="compiled extension not built")

DIMS = ModelDims(n_users=14, n_items=11, n_rationales=25, d=7)


def epoch_inputs(seed, n_neg=3, n_trips=120):
    rng = np.random.default_rng(seed)
    trips = np.stack([
        rng.integers(DIMS.n_users, size=n_trips),
        rng.integers(DIMS.n_items, size=n_trips),
        rng.integers(DIMS.n_rationales, size=n_trips),
    ], axis=1).astype(np.int64)
    e_u = [np.unique(trips[trips[:, 0] == u, 2]) for u in range(DIMS.n_users)]
    e_i = [np.unique(trips[trips[:, 1] == i, 2]) for i in range(DIMS.n_items)]
    negs_u = sample_complement_matrix(
        rng, trips[:, 0], _history_keys(e_u, DIMS.n_rationales),
        DIMS.n_rationales, DIMS.n_rationales, n_neg)
    negs_i = sample_complement_matrix(
        rng, trips[:, 1], _history_keys(e_i, DIMS.n_rationales),
        DIMS.n_rationales, DIMS.n_rationales, n_neg)
    return trips, negs_u, negs_i


def fresh_state(seed, extras=False):
    model = init_random(DIMS, seed=seed, scale=0.1)
    rng = np.random.default_rng(seed + 1)
    ex = None
    params = model.param_blocks()
    if extras:
        ex = BperPlusExtras(
            rng.normal(scale=0.3, size=(DIMS.d, 5)).astype(np.float32),
            rng.normal(size=(DIMS.n_rationales, 5)).astype(np.float32))
        params = dict(params, projection=ex.projection)
    return model, ex, AdamState.init_like(params)


def assert_models_close(a, b, rtol=1e-6, atol=1e-7):
    for (name, x), y in zip(a.param_blocks().items(), b.param_blocks().values()):
        np.testing.assert_allclose(x, y, rtol=rtol, atol=atol, err_msg=name)


@needs_compiled
class TestBackendAgreement:
    def test_bper_epoch(self):
        trips, negs_u, negs_i = epoch_inputs(seed=0)
        m_py, _, a_py = fresh_state(1)
        m_c, _, a_c = fresh_state(1)
        loss_py, t_py = kernels.run_bper_epoch(
            m_py, a_py, trips, negs_u, negs_i, 1e-3, 1e-2, 16, 0, backend="python")
        loss_c, t_c = kernels.run_bper_epoch(
            m_c, a_c, trips, negs_u, negs_i, 1e-3, 1e-2, 16, 0, backend="compiled")
        assert t_py == t_c
        assert loss_c == pytest.approx(loss_py, rel=1e-10)
        assert_models_close(m_py, m_c)

    def test_bper_plus_epoch(self):
        trips, negs_u, negs_i = epoch_inputs(seed=2)
        m_py, e_py, a_py = fresh_state(3, extras=True)
        m_c, e_c, a_c = fresh_state(3, extras=True)
        loss_py, _ = kernels.run_bper_plus_epoch(
            m_py, e_py, a_py, trips, negs_u, negs_i, 1e-3, 1e-2, 16, 0, backend="python")
        loss_c, _ = kernels.run_bper_plus_epoch(
            m_c, e_c, a_c, trips, negs_u, negs_i, 1e-3, 1e-2, 16, 0, backend="compiled")
        assert loss_c == pytest.approx(loss_py, rel=1e-10)
        assert_models_close(m_py, m_c)
        np.testing.assert_allclose(e_py.projection, e_c.projection, rtol=1e-6, atol=1e-7)
        np.testing.assert_array_equal(e_py.semantic, e_c.semantic)

    def test_pitf_epoch(self):
        rng = np.random.default_rng(4)
        trips, _, _ = epoch_inputs(seed=4)
        iu_keys = np.unique(trips[:, 0] * np.int64(DIMS.n_items) + trips[:, 1])
        ui = trips[:, 0] * np.int64(DIMS.n_items) + trips[:, 1]
        _, pair_id = np.unique(ui, return_inverse=True)
        pair_keys = np.unique(pair_id * np.int64(DIMS.n_rationales) + trips[:, 2])
        neg_items = sample_complement_matrix(
            rng, trips[:, 0], iu_keys, DIMS.n_items, DIMS.n_items, 2)
        negs_e = sample_complement_matrix(
            rng, pair_id.astype(np.int64), pair_keys,
            DIMS.n_rationales, DIMS.n_rationales, 3)
        m_py, _, a_py = fresh_state(5)
        m_c, _, a_c = fresh_state(5)
        loss_py, _ = kernels.run_pitf_epoch(
            m_py, a_py, trips, neg_items, negs_e, 0.7, 1e-3, 1e-2, 16, 0, backend="python")
        loss_c, _ = kernels.run_pitf_epoch(
            m_c, a_c, trips, neg_items, negs_e, 0.7, 1e-3, 1e-2, 16, 0, backend="compiled")
        assert loss_c == pytest.approx(loss_py, rel=1e-10)
        assert_models_close(m_py, m_c)

    def test_epoch_loss_matches_sum_of_reference_losses(self):
        # the kernel's loss must equal the plain sum of per-triplet reference
        # losses computed on the pre-epoch parameters, batch by batch
        from rrank.train import bper_triplet_loss_and_grads

        trips, negs_u, negs_i = epoch_inputs(seed=6, n_trips=24)
        m_ref, _, _ = fresh_state(7)
        expected = 0.0
        # batch_size >= n_trips: a single Adam application at the end, so the
        # whole epoch sees the initial parameters
        for row in range(trips.shape[0]):
            u, i, e = trips[row]
            expected += bper_triplet_loss_and_grads(
                m_ref, u, i, e, negs_u[row], negs_i[row], 1e-3)[0]
        m_c, _, a_c = fresh_state(7)
        loss_c, _ = kernels.run_bper_epoch(
            m_c, a_c, trips, negs_u, negs_i, 1e-3, 1e-2, 1000, 0, backend="compiled")
        assert loss_c == pytest.approx(expected, rel=1e-12)


class TestBackendSelection:
    def test_default_backend_is_valid(self):
        assert kernels.BACKEND in kernels.available_backends()

    def test_python_backend_always_available(self):
        trips, negs_u, negs_i = epoch_inputs(seed=8, n_trips=4)
        model, _, adam = fresh_state(9)
        kernels.run_bper_epoch(model, adam, trips, negs_u, negs_i,
                               1e-3, 1e-2, 4, 0, backend="python")

    def test_requesting_missing_compiled_backend_raises(self):
        if "compiled" in kernels.available_backends():
            pytest.skip("compiled backend is built in this environment")
        with pytest.raises(RuntimeError):
            kernels._pick("compiled")


@needs_compiled
def test_compiled_epoch_is_deterministic():
    trips, negs_u, negs_i = epoch_inputs(seed=10)
    results = []
    for _ in range(2):
        model, _, adam = fresh_state(11)
        loss, _ = kernels.run_bper_epoch(
            model, adam, trips, negs_u, negs_i, 1e-3, 1e-2, 8, 0, backend="compiled")
        results.append((loss, model))
    assert results[0][0] == results[1][0]
    for a, b in zip(results[0][1].param_blocks().values(),
                    results[1][1].param_blocks().values()):
        assert np.array_equal(a, b)
