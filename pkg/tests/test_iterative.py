import numpy as np
import pytest

from jadce.core import RealizedSystem
from jadce.datagen import gen_dataset
from jadce.iterative import (
    IterativeConfig,
    fista_gs_solve,
    fista_t_next,
    ista_gs_solve,
    lipschitz_constant,
    objective_group_lasso,
    objective_group_mcp,
    pgm_solve,
    power_iteration,
    solve_batch,
    trace_batch,
)
from jadce.prox import ProxDomainError


@pytest.fixture(scope="module")
def dataset():
    from jadce.datagen import SceneConfig

    cfg = SceneConfig(n_devices=30, n_antennas=2, pilot_len=15, active_prob=0.15, snr_db=40.0,
                      pilot_kind="gaussian", seed=2)
    return gen_dataset(cfg, 8, 1)


def test_power_iteration_matches_eigvalsh(rng):
    a = rng.standard_normal((8, 8))
    m = a @ a.T
    assert power_iteration(m) == pytest.approx(np.linalg.eigvalsh(m)[-1], rel=1e-9)
    with pytest.raises(ValueError):
        power_iteration(a + np.triu(np.ones((8, 8)), 1))


def test_lipschitz_is_squared_spectral_norm(rng):
    s = rng.standard_normal((5, 9))
    assert lipschitz_constant(s) == pytest.approx(np.linalg.norm(s, 2) ** 2, rel=1e-9)


def test_defaults_resolve():
    gamma, eta = IterativeConfig(lam=0.5).resolve(4.0)
    assert gamma == 0.25 and eta == pytest.approx(2.0)
    with pytest.raises(ProxDomainError):
        IterativeConfig(lam=1.0, gamma=1.0, eta=1.0).resolve(1.0)


def test_traces_start_at_zero(dataset):
    sys = dataset.systems[0]
    cfg = IterativeConfig(max_iters=5, trace=True)
    for solve in (pgm_solve, ista_gs_solve, fista_gs_solve):
        tr = solve(sys, cfg)
        assert len(tr) == 6
        np.testing.assert_array_equal(tr[0], 0.0)


def test_orthonormal_one_step_is_prox():
    # S = I: one ISTA step from zero is the group soft threshold of Y
    y = np.array([[3.0, 4.0], [0.1, 0.0]])
    sys = RealizedSystem.from_arrays(np.eye(2), y, y)
    x = ista_gs_solve(sys, IterativeConfig(lam=1.0, max_iters=1))[0]
    np.testing.assert_allclose(x, [[2.4, 3.2], [0.0, 0.0]])


def test_ista_objective_monotone(dataset):
    for sys in dataset.systems:
        tr = ista_gs_solve(sys, IterativeConfig(lam=0.05, max_iters=60, trace=True))
        vals = [objective_group_lasso(sys, x, 0.05) for x in tr]
        assert all(b <= a + 1e-10 for a, b in zip(vals, vals[1:]))


def test_pgm_objective_monotone(dataset):
    sys = dataset.systems[0]
    cfg = IterativeConfig(lam=0.05, max_iters=40, trace=True)
    gamma, eta = cfg.resolve(lipschitz_constant(sys.s_tilde))
    vals = [objective_group_mcp(sys, x, 0.05, eta) for x in pgm_solve(sys, cfg)]
    assert all(b <= a + 1e-10 for a, b in zip(vals, vals[1:]))


def test_fista_without_momentum_equals_ista(dataset):
    sys = dataset.systems[1]
    cfg = IterativeConfig(lam=0.05, max_iters=20)
    np.testing.assert_allclose(fista_gs_solve(sys, cfg, momentum=False)[0], ista_gs_solve(sys, cfg)[0])


def test_fista_sequence():
    assert fista_t_next(1.0) == pytest.approx((1 + np.sqrt(5)) / 2)


@pytest.mark.parametrize("method", ["PGM", "ISTA_GS", "FISTA_GS"])
def test_batch_matches_single(dataset, method):
    cfg = IterativeConfig(lam=0.05, max_iters=15)
    solve = {"PGM": pgm_solve, "ISTA_GS": ista_gs_solve, "FISTA_GS": fista_gs_solve}[method]
    xb = solve_batch(method, dataset.s_tilde, dataset.y_stack(), cfg)
    for i, sys in enumerate(dataset.systems):
        np.testing.assert_allclose(xb[:, i], solve(sys, cfg)[0], atol=1e-12)


def test_trace_batch_indices(dataset):
    idx, its = trace_batch("ISTA_GS", dataset.s_tilde, dataset.y_stack(), IterativeConfig(max_iters=100))
    assert idx[:3] == [0, 1, 2] and idx[-1] == 100
    assert all(k < 64 or k % 4 == 0 or k == 100 for k in idx)
    assert len(idx) == len(its)


def test_unknown_method(dataset):
    with pytest.raises(ValueError):
        solve_batch("ADMM", dataset.s_tilde, dataset.y_stack(), IterativeConfig())
