import math

import numpy as np
import pytest

from jadce.core import lift_dictionary
from jadce.datagen import (
    ConfigError,
    SceneConfig,
    gen_dataset,
    gen_instance,
    gen_pilot,
    snr_noise_sigma,
    zadoff_chu_matrix,
    zadoff_chu_root,
)


def test_config_validation():
    with pytest.raises(ConfigError):
        SceneConfig(n_devices=10, pilot_len=10)
    with pytest.raises(ConfigError):
        SceneConfig(active_prob=1.0)
    with pytest.raises(ConfigError):
        SceneConfig(pilot_kind="walsh")


@pytest.mark.parametrize("kind", ["gaussian", "binary", "zadoff_chu"])
def test_pilots_have_unit_columns(kind):
    p = gen_pilot(kind, 12, 30, seed=1)
    assert p.shape == (12, 30)
    np.testing.assert_allclose(np.linalg.norm(p, axis=0), 1.0, atol=1e-12)


def test_binary_pilot_entries():
    p = gen_pilot("binary", 8, 20, seed=2) * math.sqrt(8)
    assert set(np.unique(np.round(p.real, 12))) <= {-1.0, 1.0}
    np.testing.assert_array_equal(p.imag, 0.0)


def test_zadoff_chu_constant_amplitude_zero_autocorrelation():
    p = 13
    z = zadoff_chu_root(3, p)
    np.testing.assert_allclose(np.abs(z), 1.0, atol=1e-12)
    for shift in range(1, p):
        assert abs(np.vdot(z, np.roll(z, shift))) < 1e-9


def test_zadoff_chu_matrix_is_full_rank():
    s = zadoff_chu_matrix(50, 100)
    assert s.shape == (50, 100)
    sv = np.linalg.svd(lift_dictionary(s), compute_uv=False)
    assert sv[-1] > 1e-3 * sv[0]
    # first column is the first root with no shift, truncated
    np.testing.assert_allclose(s[:, 0], zadoff_chu_root(1, 53)[:50], atol=1e-12)
    np.testing.assert_allclose(s[:, 1], np.roll(zadoff_chu_root(1, 53), -1)[:50], atol=1e-12)


def test_zadoff_chu_too_many_columns():
    with pytest.raises(ConfigError):
        zadoff_chu_matrix(3, 100)


def test_noise_sigma():
    assert snr_noise_sigma(0.0, 4, 2, 10.0) == 0.0
    assert snr_noise_sigma(8.0, 4, 2, 400.0) == 0.0
    assert snr_noise_sigma(8.0, 4, 2, 0.0) == pytest.approx(1.0)


def test_dataset_is_deterministic(small_cfg):
    a = gen_dataset(small_cfg, 5, 11)
    b = gen_dataset(small_cfg, 5, 11)
    np.testing.assert_array_equal(a.y_stack(), b.y_stack())
    np.testing.assert_array_equal(a.x_stack(), b.x_stack())


def test_different_master_seeds_differ(small_cfg):
    a = gen_dataset(small_cfg, 3, 11)
    b = gen_dataset(small_cfg, 3, 12)
    assert not np.array_equal(a.y_stack()[:, 0], b.y_stack()[:, 0])
    np.testing.assert_array_equal(a.pilot, b.pilot)


def test_samples_do_not_depend_on_count(small_cfg):
    a = gen_dataset(small_cfg, 3, 11)
    b = gen_dataset(small_cfg, 7, 11)
    np.testing.assert_array_equal(a.y_stack(), b.y_stack()[:, :3])


def test_lift_consistency(small_cfg):
    ds = gen_dataset(small_cfg, 4, 1)
    for sys in ds.systems:
        z = sys.y_tilde - sys.s_tilde @ sys.x_star_tilde
        assert np.linalg.norm(z) == pytest.approx(sys.noise_frobenius, rel=1e-9, abs=1e-12)


def test_realized_snr(small_cfg):
    cfg = small_cfg.with_(snr_db=20.0, active_prob=0.5)
    ds = gen_dataset(cfg, 200, 3)
    sig = sum(np.sum((s.s_tilde @ s.x_star_tilde) ** 2) for s in ds.systems)
    noise = sum(s.noise_frobenius**2 for s in ds.systems)
    assert 10 * np.log10(sig / noise) == pytest.approx(20.0, abs=0.3)


def test_active_fraction():
    cfg = SceneConfig(n_devices=100, n_antennas=1, pilot_len=10, active_prob=0.1, pilot_kind="gaussian")
    ds = gen_dataset(cfg, 100, 9)
    frac = np.mean(np.concatenate(ds.activities))
    assert abs(frac - 0.1) < 0.01


def test_inactive_devices_have_zero_rows(small_cfg):
    ds = gen_dataset(small_cfg, 3, 2)
    n = small_cfg.n_devices
    for sys, act in zip(ds.systems, ds.activities):
        x = sys.x_star_tilde
        dev = np.sqrt(np.sum(x[:n] ** 2, 1) + np.sum(x[n:] ** 2, 1))
        np.testing.assert_array_equal(dev > 0, act)


def test_forced_inactive_instance(small_cfg):
    pilot = gen_pilot(small_cfg.pilot_kind, small_cfg.pilot_len, small_cfg.n_devices, 0)
    sys, act = gen_instance(pilot, small_cfg, 0, force_inactive=True)
    assert not act.any()
    np.testing.assert_array_equal(sys.x_star_tilde, 0.0)


def test_subset_keeps_metadata(small_cfg):
    ds = gen_dataset(small_cfg, 6, 4)
    sub = ds.subset([1, 3])
    assert sub.count == 2
    np.testing.assert_array_equal(sub.y_stack()[:, 1], ds.y_stack()[:, 3])
    assert sub.config == ds.config
