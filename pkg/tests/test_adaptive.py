import numpy as np
import pytest

from jadce.adaptive import (
    DEFAULT_GRIDS,
    AdaptiveContext,
    HyperParams,
    SolverError,
    evaluate,
    grid_search,
    layer_parameters,
    lpgm_at_forward,
    lpgm_at_run,
    pseudo_inverse,
)
from jadce.datagen import ConfigError, SceneConfig, gen_dataset
from jadce.dictionary import solve_symmetric_dictionary


@pytest.fixture(scope="module")
def setup():
    cfg = SceneConfig(n_devices=20, n_antennas=2, pilot_len=10, active_prob=0.15, snr_db=40.0,
                      pilot_kind="gaussian", seed=8)
    ds = gen_dataset(cfg, 12, 1)
    _, sym = solve_symmetric_dictionary(ds.s_tilde, steps=100)
    return ds, AdaptiveContext.build(ds.s_tilde, sym, K=6)


def test_hyperparams_positive():
    with pytest.raises(ValueError):
        HyperParams(0.0, 1e-3, 1.0)


def test_pseudo_inverse(rng):
    s = rng.standard_normal((4, 9))
    p = pseudo_inverse(s)
    np.testing.assert_allclose(s @ p, np.eye(4), atol=1e-9)
    with pytest.raises(SolverError):
        pseudo_inverse(np.ones((3, 5)))
    with pytest.raises(SolverError):
        pseudo_inverse(rng.standard_normal((5, 3)))


def test_context_checks_generalized_inverse(setup):
    ds, ctx = setup
    with pytest.raises(SolverError):
        AdaptiveContext(ds.s_tilde, np.zeros_like(ds.s_tilde.T), ctx.dictionary)


def test_layer_parameters_by_hand():
    x = np.zeros((4, 2))
    x[1] = [1.0, 0.0]
    x[3] = [0.0, 2.0]
    resid = np.array([[3.0, 4.0], [0.0, 0.0], [1.0, 0.0], [0.0, 0.0]])
    hp = HyperParams(0.1, 0.01, 2.0)
    theta, beta, eta, r = layer_parameters(x, resid, hp, 1)
    assert float(theta) == pytest.approx(0.6)
    assert float(r) == 2 and float(beta) == pytest.approx(0.02)
    assert float(eta) == pytest.approx(1 / (2.0 * 2 * 0.6))
    _, beta0, _, _ = layer_parameters(x, resid, hp, 0)
    assert float(beta0) == 0.0


def test_eta_clipped_to_domain():
    x = np.zeros((2, 1))
    resid = np.array([[1.0], [0.0]])
    theta, _, eta, r = layer_parameters(x, resid, HyperParams(0.5, 1e-3, 0.01), 0)
    assert r == 1
    assert 2 * theta * eta == pytest.approx(1.0)


def test_zero_residual_gives_identity():
    x = np.ones((2, 1))
    theta, _, eta, _ = layer_parameters(x, np.zeros((2, 1)), HyperParams(0.5, 1e-3, 1.0), 2)
    assert float(theta) == 0.0 and float(eta) == 0.0


def test_noiseless_fixed_point(setup):
    ds, ctx = setup
    sys = ds.systems[0]
    y = ctx.s_tilde @ sys.x_star_tilde
    # S X* - Y = 0 at the truth, so every subsequent layer keeps X*
    x, its, sched = lpgm_at_run(ctx.s_tilde, ctx.s_tilde_pinv, ctx.dictionary.b, y,
                                HyperParams(0.1, 1e-3, 5.0), 3, trace=True)
    assert len(its) == 4 and len(sched) == 3
    assert sched[0][0] > 0


def test_batch_matches_single(setup):
    ds, ctx = setup
    hp = HyperParams(0.05, 1e-3, 5.0)
    xb = lpgm_at_run(ctx.s_tilde, ctx.s_tilde_pinv, ctx.dictionary.b, ds.y_stack(), hp, ctx.K)[0]
    for i, sys in enumerate(ds.systems):
        np.testing.assert_allclose(xb[:, i], lpgm_at_forward(sys, ctx, hp), atol=1e-12)


def test_forward_beats_zero_estimate(setup):
    ds, ctx = setup
    assert evaluate(ctx, HyperParams(0.05, 1e-3, 5.0), ds.x_stack(), ds.y_stack()) < -3.0


def test_grid_search_picks_recorded_minimum(setup):
    ds, ctx = setup
    grids = {"c_theta": (0.1, 0.02), "c_beta": (1e-3,), "c_eta": (2.0, 10.0)}
    results = []
    best, val = grid_search(ds, ctx, grids, results)
    assert len(results) == 4
    assert val == min(v for _, v in results)
    assert [h.c_theta for h, _ in results] == [0.02, 0.02, 0.1, 0.1]
    assert evaluate(ctx, best, ds.x_stack(), ds.y_stack()) == val


def test_grid_search_ties_go_first():
    grids = {"c_theta": (0.1, 0.2), "c_beta": (1e-3,), "c_eta": (1.0,)}

    class Flat:
        def x_stack(self):
            return np.ones((2, 1, 1))

        def y_stack(self):
            return np.zeros((1, 1, 1))

    class Ctx:
        s_tilde = np.ones((1, 2))
        s_tilde_pinv = np.full((2, 1), 0.5)
        K = 2

        class dictionary:
            b = np.full((2, 1), 0.5)

    best, _ = grid_search(Flat(), Ctx(), grids)
    assert best.c_theta == 0.1


def test_grid_search_rejects_empty_grid(setup):
    ds, ctx = setup
    with pytest.raises(ConfigError):
        grid_search(ds, ctx, {"c_theta": (), "c_beta": (1e-3,), "c_eta": (1.0,)})


def test_default_grid_size():
    assert np.prod([len(v) for v in DEFAULT_GRIDS.values()]) == 125
