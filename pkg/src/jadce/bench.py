"""Experiment sweeps: NMSE and per-sample runtime of every method along one axis."""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .adaptive import AdaptiveContext, HyperParams, lpgm_at_run
from .datagen import ConfigError, Dataset, SceneConfig, gen_dataset
from .io import dataset_fingerprint
from .iterative import IterativeConfig, lipschitz_constant, solve_batch, trace_batch
from .metrics import nmse_db_stack
from .unfolded import VARIANTS, UnfoldedNetwork, forward_batch

ITERATIVE = ("PGM", "ISTA_GS", "FISTA_GS")
LPGM_AT = "LPGM_AT"
METHODS = ITERATIVE + tuple(VARIANTS) + (LPGM_AT,)
AXES = ("layers", "active_ratio", "pilot_len", "snr_db", "mismatch")
CSV_HEADER = ("method", "axis", "axis_value", "nmse_db", "runtime_ms_per_sample", "seed", "fingerprint")

# which SceneConfig field a scalar axis overrides
_AXIS_FIELD = {"active_ratio": "active_prob", "pilot_len": "pilot_len", "snr_db": "snr_db"}
_MISMATCH_KEYS = {"snr_db": float, "active_prob": float, "active_ratio": float}


@dataclass
class SweepSpec:
    axis: str
    values: list
    methods: list
    iters_for_iterative: int = 50
    layers_for_nets: int = 16
    test_count: int = 500
    test_seed: int = 303
    lam: float = 0.1

    def __post_init__(self):
        if self.axis not in AXES:
            raise ConfigError(f"unknown sweep axis {self.axis!r}; expected one of {AXES}")
        if not self.values or not self.methods:
            raise ConfigError("a sweep needs at least one value and one method")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown methods {bad}")


@dataclass
class ResultRow:
    method: str
    axis: str
    axis_value: object
    nmse_db: float
    runtime_ms_per_sample: float
    seed: int
    fingerprint: str

    def as_tuple(self):
        return (self.method, self.axis, self.axis_value, self.nmse_db, self.runtime_ms_per_sample,
                self.seed, self.fingerprint)


@dataclass
class Artifacts:
    """Trained networks and tuned LPGM-AT state.

    ``nets`` and ``adaptive`` are keyed by method tag; an entry may also be
    keyed by ``(method, axis_value)`` for sweeps (such as ``pilot_len``)
    where each value needs its own artifact.  ``sources`` maps a key to the
    file it was loaded from, for error messages.
    """

    nets: dict = field(default_factory=dict)
    adaptive: dict = field(default_factory=dict)
    sources: dict = field(default_factory=dict)

    def net(self, method, value=None) -> UnfoldedNetwork:
        return self._get(self.nets, method, value)

    def lpgm_at(self, value=None) -> tuple[AdaptiveContext, HyperParams]:
        return self._get(self.adaptive, LPGM_AT, value)

    def _get(self, table, method, value):
        for key in ((method, value), method):
            if key in table:
                return table[key]
        where = self.sources.get(method, f"artifact for {method}")
        raise ConfigError(f"missing artifact: {where} (needed by {method})")


def parse_mismatch(value) -> dict:
    """``"snr_db=15"`` -> ``{"snr_db": 15.0}``; ``"base"`` -> ``{}``."""
    if isinstance(value, dict):
        return dict(value)
    text = str(value).strip()
    if text == "base":
        return {}
    out = {}
    for part in text.split(","):
        if "=" not in part:
            raise ConfigError(f"mismatch value {value!r} must look like key=value")
        key, raw = (t.strip() for t in part.split("=", 1))
        if key not in _MISMATCH_KEYS:
            raise ConfigError(f"mismatch key {key!r} not supported")
        out["active_prob" if key == "active_ratio" else key] = _MISMATCH_KEYS[key](raw)
    return out


def test_config(spec: SweepSpec, base: SceneConfig, value) -> SceneConfig:
    if spec.axis == "layers":
        return base
    if spec.axis == "mismatch":
        return base.with_(**parse_mismatch(value))
    cast = int if spec.axis == "pilot_len" else float
    return base.with_(**{_AXIS_FIELD[spec.axis]: cast(value)})


def _timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


def _eval_method(method, spec: SweepSpec, value, test: Dataset, artifacts: Artifacts):
    """``(x_hat, seconds)`` for one method on one test set."""
    s_tilde = test.s_tilde
    y = test.y_stack()
    key = value if spec.axis in ("pilot_len",) else None
    if method in ITERATIVE:
        iters = int(value) if spec.axis == "layers" else spec.iters_for_iterative
        cfg = IterativeConfig(lam=spec.lam, max_iters=iters)
        c = lipschitz_constant(s_tilde)
        return _timed(lambda: solve_batch(method, s_tilde, y, cfg, c))
    if method == LPGM_AT:
        ctx, hp = artifacts.lpgm_at(key)
        _check_shape(ctx.s_tilde, s_tilde, method, value)
        K = int(value) if spec.axis == "layers" else ctx.K
        return _timed(lambda: lpgm_at_run(ctx.s_tilde, ctx.s_tilde_pinv, ctx.dictionary.b, y, hp, K)[0])
    net = artifacts.net(method, key)
    if net.dictionary is not None:
        _check_shape(net.dictionary.b.T, s_tilde, method, value)
    if spec.axis == "layers":
        k = int(value)
        if k > net.K:
            raise ConfigError(f"{method} has {net.K} layers, sweep asks for {k}")
        net = net.with_layers(net.layers[:k])
    return _timed(lambda: forward_batch(net, s_tilde, y))


def _check_shape(a, s_tilde, method, value):
    if a.shape != s_tilde.shape:
        raise ConfigError(f"missing artifact: no {method} artifact matches the system size at value {value}")


def _sort_key(row: ResultRow):
    v = row.axis_value
    return (row.method, (0, float(v), "") if isinstance(v, (int, float)) else (1, 0.0, str(v)))


def run_sweep(spec: SweepSpec, base_cfg: SceneConfig, artifacts: Artifacts | None = None,
              test_sets: dict | None = None) -> list[ResultRow]:
    """Evaluate every ``(method, value)`` pair; rows sorted by ``(method, axis_value)``.

    Test sets are generated once per distinct scene (``test_sets`` caches them
    across calls) and shared by all methods.
    """
    artifacts = artifacts or Artifacts()
    cache = {} if test_sets is None else test_sets
    rows = []
    for value in spec.values:
        cfg = test_config(spec, base_cfg, value)
        if cfg not in cache:
            cache[cfg] = gen_dataset(cfg, spec.test_count, spec.test_seed)
        test = cache[cfg]
        fp = dataset_fingerprint(test)
        x_star = test.x_stack()
        for method in spec.methods:
            x_hat, secs = _eval_method(method, spec, value, test, artifacts)
            rows.append(ResultRow(method, spec.axis, value, nmse_db_stack(x_hat, x_star),
                                  1e3 * secs / test.count, spec.test_seed, fp))
    rows.sort(key=_sort_key)
    return rows


def layer_curve(method, test: Dataset, artifacts: Artifacts, iters: int = 16, lam: float = 0.1) -> list[float]:
    """NMSE after each layer/iteration ``1..K`` on one test set."""
    s_tilde, y, x_star = test.s_tilde, test.y_stack(), test.x_stack()
    if method in ITERATIVE:
        idx, its = trace_batch(method, s_tilde, y, IterativeConfig(lam=lam, max_iters=iters))
        return [nmse_db_stack(x, x_star) for k, x in zip(idx, its) if k >= 1]
    if method == LPGM_AT:
        ctx, hp = artifacts.lpgm_at()
        its = lpgm_at_run(ctx.s_tilde, ctx.s_tilde_pinv, ctx.dictionary.b, y, hp, ctx.K, trace=True)[1]
    else:
        its = forward_batch(artifacts.net(method), s_tilde, y, trace=True)[1]
    return [nmse_db_stack(x, x_star) for x in its[1:]]


def first_crossing(curve, level: float) -> int | None:
    """1-based layer index at which ``curve`` first drops to ``level`` or below."""
    for k, v in enumerate(curve, start=1):
        if v <= level:
            return k
    return None


def write_csv(path, rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow([r.method, r.axis, r.axis_value, repr(float(r.nmse_db)),
                        f"{r.runtime_ms_per_sample:.6g}", r.seed, r.fingerprint])
    return path
