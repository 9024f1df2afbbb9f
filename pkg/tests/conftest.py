import numpy as np
import pytest

from jadce.datagen import SceneConfig


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_cfg():
    return SceneConfig(n_devices=24, n_antennas=3, pilot_len=12, active_prob=0.2, snr_db=30.0,
                       pilot_kind="gaussian", seed=5)
