"""Scene generation: pilots, Rayleigh channels, Bernoulli activity, noise.

Every random draw comes from a Philox stream keyed by
``(master_seed, sample_index, stream)`` so samples can be produced in any
order, or in parallel, and still be bit-identical.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .core import RealizedSystem, lift_dictionary, lift_signal

GAUSSIAN = "gaussian"
BINARY = "binary"
ZADOFF_CHU = "zadoff_chu"
PILOT_KINDS = (GAUSSIAN, BINARY, ZADOFF_CHU)

SNR_CAP_DB = 300.0

# stream ids of the counter-based generator
_ACTIVITY, _CHANNEL, _NOISE, _PILOT = 0, 1, 2, 3


class ConfigError(ValueError):
    """Invalid scene or experiment configuration."""


@dataclass(frozen=True)
class SceneConfig:
    n_devices: int = 250
    n_antennas: int = 6
    pilot_len: int = 125
    active_prob: float = 0.1
    snr_db: float = 40.0
    pilot_kind: str = ZADOFF_CHU
    seed: int = 0

    def __post_init__(self):
        if self.pilot_len < 1 or self.n_devices < 1 or self.n_antennas < 1:
            raise ConfigError("dimensions must be positive")
        if not self.pilot_len < self.n_devices:
            raise ConfigError(f"pilot_len ({self.pilot_len}) must be smaller than n_devices ({self.n_devices})")
        if not 0.0 < self.active_prob < 1.0:
            raise ConfigError(f"active_prob must lie in (0, 1), got {self.active_prob}")
        if self.pilot_kind not in PILOT_KINDS:
            raise ConfigError(f"unknown pilot kind {self.pilot_kind!r}")

    def with_(self, **changes) -> "SceneConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Dataset:
    systems: list
    config: SceneConfig
    pilot: np.ndarray
    master_seed: int
    activities: list = field(default_factory=list, repr=False)

    @property
    def count(self) -> int:
        return len(self.systems)

    def __len__(self):
        return len(self.systems)

    @property
    def s_tilde(self) -> np.ndarray:
        return self.systems[0].s_tilde

    def x_stack(self) -> np.ndarray:
        """Ground truths as a ``(2N, count, M)`` stack."""
        return np.stack([s.x_star_tilde for s in self.systems], axis=1)

    def y_stack(self) -> np.ndarray:
        return np.stack([s.y_tilde for s in self.systems], axis=1)

    def subset(self, idx) -> "Dataset":
        acts = [self.activities[i] for i in idx] if self.activities else []
        return Dataset([self.systems[i] for i in idx], self.config, self.pilot, self.master_seed, acts)


def _rng(master_seed: int, index: int, stream: int) -> np.random.Generator:
    ss = np.random.SeedSequence([int(master_seed) & (2**64 - 1), int(index), int(stream)])
    return np.random.Generator(np.random.Philox(ss))


def _is_prime(n: int) -> bool:
    return n >= 2 and all(n % q for q in range(2, int(math.isqrt(n)) + 1))


def _smallest_prime_at_least(n: int) -> int:
    p = max(n, 2)
    while not _is_prime(p):
        p += 1
    return p


def zadoff_chu_root(u: int, length: int) -> np.ndarray:
    """Root sequence ``exp(-j pi u n (n + 1) / P)`` for ``n = 0..P-1``."""
    n = np.arange(length)
    return np.exp(-1j * np.pi * u * n * (n + 1) / length)


def zadoff_chu_matrix(L: int, N: int) -> np.ndarray:
    """Unnormalized ZC pilots: columns enumerate (root, cyclic shift) pairs.

    The prime length ``P`` is the smallest prime ``>= L`` and every shifted
    root is truncated to its first ``L`` symbols. (Cyclically extending a
    shorter prime-length root would repeat rows and make ``S`` rank deficient.)
    """
    if L < 3:
        raise ConfigError(f"Zadoff-Chu pilots need L >= 3, got {L}")
    P = _smallest_prime_at_least(L)
    if N > (P - 1) * P:
        raise ConfigError(f"only {(P - 1) * P} distinct Zadoff-Chu columns at L={L}, need {N}")
    cols = []
    idx = np.arange(L)
    for u in range(1, P):
        root = zadoff_chu_root(u, P)
        for shift in range(P):
            cols.append(root[(idx + shift) % P])
            if len(cols) == N:
                return np.stack(cols, axis=1)
    raise AssertionError("unreachable")


def gen_pilot(kind: str, L: int, N: int, seed: int) -> np.ndarray:
    """Complex ``L x N`` pilot matrix with unit-norm columns."""
    if L < 1 or N < 1:
        raise ConfigError("pilot dimensions must be positive")
    rng = _rng(seed, 0, _PILOT)
    if kind == GAUSSIAN:
        s = (rng.standard_normal((L, N)) + 1j * rng.standard_normal((L, N))) / math.sqrt(2)
    elif kind == BINARY:
        s = rng.choice([-1.0, 1.0], size=(L, N)).astype(complex)
    elif kind == ZADOFF_CHU:
        s = zadoff_chu_matrix(L, N)
    else:
        raise ConfigError(f"unknown pilot kind {kind!r}")
    return s / np.linalg.norm(s, axis=0)


def snr_noise_sigma(s_x_frob_sq: float, L: int, M: int, snr_db: float) -> float:
    """Per-entry complex noise std so that ``||SX||^2 / E||Z||^2`` equals the SNR."""
    if s_x_frob_sq < 0:
        raise ValueError("signal energy must be nonnegative")
    if s_x_frob_sq == 0 or snr_db >= SNR_CAP_DB:
        return 0.0
    return math.sqrt(s_x_frob_sq / (L * M * 10.0 ** (snr_db / 10.0)))


def gen_instance(pilot: np.ndarray, cfg: SceneConfig, per_sample_seed, *, s_tilde=None,
                 force_inactive: bool = False):
    """Draw one scene; returns ``(RealizedSystem, activity)``.

    ``per_sample_seed`` is either an int or a ``(master_seed, index)`` pair.
    """
    L, N = pilot.shape
    M = cfg.n_antennas
    if (L, N) != (cfg.pilot_len, cfg.n_devices):
        raise ConfigError(f"pilot shape {pilot.shape} does not match config ({cfg.pilot_len}, {cfg.n_devices})")
    master, index = per_sample_seed if isinstance(per_sample_seed, tuple) else (per_sample_seed, 0)
    active = _rng(master, index, _ACTIVITY).random(N) < cfg.active_prob
    if force_inactive:
        active[:] = False
    rng_h = _rng(master, index, _CHANNEL)
    h = (rng_h.standard_normal((N, M)) + 1j * rng_h.standard_normal((N, M))) / math.sqrt(2)
    x = h * active[:, None]
    sx = pilot @ x
    sigma = snr_noise_sigma(float(np.sum(np.abs(sx) ** 2)), L, M, cfg.snr_db)
    rng_z = _rng(master, index, _NOISE)
    z = sigma * (rng_z.standard_normal((L, M)) + 1j * rng_z.standard_normal((L, M))) / math.sqrt(2)
    if s_tilde is None:
        s_tilde = lift_dictionary(pilot)
    x_t = lift_signal(x)
    z_t = lift_signal(z)
    y_t = s_tilde @ x_t + z_t
    system = RealizedSystem(s_tilde, y_t, x_t, float(np.linalg.norm(z_t)), (L, N, M))
    return system, active


def gen_dataset(cfg: SceneConfig, count: int, master_seed: int | None = None, pilot=None) -> Dataset:
    """Generate ``count`` scenes sharing one pilot matrix.

    The pilot is drawn from ``cfg.seed`` so that train/validation/test sets of
    one configuration share it; ``master_seed`` (default ``cfg.seed``) keys the
    per-sample draws.
    """
    if count < 1:
        raise ConfigError("count must be at least 1")
    if master_seed is None:
        master_seed = cfg.seed
    if pilot is None:
        pilot = gen_pilot(cfg.pilot_kind, cfg.pilot_len, cfg.n_devices, cfg.seed)
    s_tilde = lift_dictionary(pilot)
    systems, acts = [], []
    for i in range(count):
        sys_, act = gen_instance(pilot, cfg, (master_seed, i), s_tilde=s_tilde)
        systems.append(sys_)
        acts.append(act)
    return Dataset(systems, cfg, pilot, int(master_seed), acts)
