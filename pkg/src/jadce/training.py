"""Layer-wise supervised training of unfolded networks.

Gradients are computed by a hand-written reverse pass through the unrolled
recurrence (including the two-step dependence introduced by momentum).
Parameters are optimized with Adam and clamped back into the feasible region
after every step.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .core import apply_left
from .metrics import nmse_db_stack
from .prox import ProxDomainError, rows_prox_backward
from .unfolded import (
    ALISTA_GS,
    ALPGM_MM,
    LayerParams,
    UnfoldedNetwork,
    forward_arrays,
    initial_layers,
    is_soft,
    uses_momentum,
)

log = logging.getLogger(__name__)

GAMMA_MIN = 1e-6
THETA_MIN = 1e-8
ETA_MIN = 1e-8


class TrainConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    alpha0: float = 1e-3
    batch_size: int = 64
    stage_iters: int = 400
    optimizer: str = "adam"
    clamp_margin: float = 1e-3
    seed: int = 0
    eval_every: int = 50
    adam_betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8

    @property
    def alpha1(self) -> float:
        return 0.2 * self.alpha0

    @property
    def alpha2(self) -> float:
        return 0.02 * self.alpha0

    def __post_init__(self):
        if self.optimizer not in ("adam", "sgd"):
            raise TrainConfigError(f"unknown optimizer {self.optimizer!r}")
        if not 0.0 < self.clamp_margin < 1.0:
            raise TrainConfigError("clamp_margin must lie in (0, 1)")
        if self.batch_size < 1 or self.stage_iters < 0:
            raise TrainConfigError("batch_size must be positive and stage_iters nonnegative")


@dataclass
class GradRecord:
    d_gamma: float = 0.0
    d_theta: float = 0.0
    d_eta: float = 0.0
    d_beta: float = 0.0

    def as_array(self):
        return np.array([self.d_gamma, self.d_theta, self.d_eta, self.d_beta])


@dataclass
class TrainLogRow:
    stage: int
    phase: str
    iter: int
    train_loss: float
    val_nmse_db: float


def clamp(p: LayerParams, margin: float = 1e-3, soft: bool = False) -> LayerParams:
    """Project parameters back into the region where the MCP prox is defined."""
    gamma = max(p.gamma, GAMMA_MIN)
    theta = max(p.theta, THETA_MIN)
    beta = max(p.beta, 0.0)
    if soft:
        return LayerParams(gamma, theta, 0.0, beta)
    eta = min(max(p.eta, ETA_MIN), (1.0 - margin) / (2.0 * theta))
    return LayerParams(gamma, theta, eta, beta)


def _stacks(batch):
    """Accept ``(x_star_stack, y_stack)`` or a sequence of systems / pairs."""
    if isinstance(batch, tuple) and len(batch) == 2 and isinstance(batch[0], np.ndarray) and batch[0].ndim == 3:
        return batch
    xs, ys = [], []
    for item in batch:
        if hasattr(item, "x_star_tilde"):
            xs.append(item.x_star_tilde)
            ys.append(item.y_tilde)
        else:
            xs.append(item[0])
            ys.append(item[1])
    return np.stack(xs, axis=1), np.stack(ys, axis=1)


def loss(net: UnfoldedNetwork, s_tilde, batch) -> float:
    """Sum over the batch of ``||X^K - X*||_F^2``."""
    x_star, y = _stacks(batch)
    x, _, _ = forward_arrays(net.variant, net.layers, net.weight(s_tilde), s_tilde, y)
    d = x - x_star
    return float(np.sum(d * d))


def _loss_and_grads(variant, layers, w, s_tilde, x_star, y):
    """Loss and per-layer gradient array of shape ``(K, 4)``."""
    K = len(layers)
    grads = np.zeros((K, 4))
    if K == 0:
        d = -x_star
        return float(np.sum(d * d)), grads
    soft = is_soft(variant)
    mom = uses_momentum(variant)
    x, iterates, caches = forward_arrays(variant, layers, w, s_tilde, y, keep_cache=True)
    d = x - x_star
    value = float(np.sum(d * d))
    gx = [None] * (K + 1)
    gx[K] = 2.0 * d
    wt = w.T
    st = s_tilde.T
    for k in range(K - 1, -1, -1):
        p = layers[k]
        v, pc, grad_term, diff = caches[k]
        g_out = gx[k + 1]
        gv, d_theta, d_eta = rows_prox_backward(v, pc, g_out, p.theta, 0.0 if soft else p.eta)
        grads[k, 0] = float(np.sum(gv * grad_term))
        grads[k, 1] = d_theta
        grads[k, 2] = 0.0 if soft else d_eta
        back = gv - p.gamma * apply_left(st, apply_left(wt, gv))
        if mom and k >= 1:
            grads[k, 3] = float(np.sum(gv * diff))
            back = back + p.beta * gv
            prev = -p.beta * gv
            gx[k - 1] = prev if gx[k - 1] is None else gx[k - 1] + prev
        gx[k] = back if gx[k] is None else gx[k] + back
    return value, grads


def backward(net: UnfoldedNetwork, s_tilde, batch) -> list[GradRecord]:
    """Exact gradient of :func:`loss` w.r.t. every layer's parameters."""
    if not is_soft(net.variant):
        for p in net.layers:
            if 2.0 * p.theta * p.eta >= 1.0:
                raise ProxDomainError("backward undefined for hard-threshold layers (2*theta*eta = 1)")
    x_star, y = _stacks(batch)
    _, g = _loss_and_grads(net.variant, net.layers, net.weight(s_tilde), s_tilde, x_star, y)
    return [GradRecord(*row) for row in g]


def trainable_mask(variant: str, K: int) -> np.ndarray:
    """Boolean ``(K, 4)`` mask over (gamma, theta, eta, beta)."""
    m = np.zeros((K, 4), dtype=bool)
    m[:, 0] = True
    m[:, 1] = True
    m[:, 2] = not is_soft(variant)
    if uses_momentum(variant):
        m[1:, 3] = True
    return m


class _Adam:
    def __init__(self, shape, lr, betas, eps, sgd=False):
        self.lr, self.b1, self.b2, self.eps, self.sgd = lr, betas[0], betas[1], eps, sgd
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    def step(self, g):
        if self.sgd:
            return -self.lr * g
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * g
        self.v = self.b2 * self.v + (1 - self.b2) * g * g
        mhat = self.m / (1 - self.b1**self.t)
        vhat = self.v / (1 - self.b2**self.t)
        return -self.lr * mhat / (np.sqrt(vhat) + self.eps)


def _to_array(layers):
    return np.array([p.as_tuple() for p in layers], dtype=float)


def _to_layers(arr, margin, soft):
    return [clamp(LayerParams(*map(float, row)), margin, soft) for row in arr]


def train_layerwise(variant, dataset, val_set, K, cfg: TrainConfig, dictionary=None,
                    history: list | None = None, init_layers=None) -> UnfoldedNetwork:
    """Train a ``K``-layer network stage by stage.

    Stage ``k`` first fits layer ``k - 1`` alone at ``alpha0`` and then all
    ``k`` layers at ``alpha1`` and ``alpha2``. The best validation checkpoint
    of each stage is kept; the final ``K``-layer network is never worse on the
    validation set than the initialization.
    """
    if dataset is None or len(dataset) == 0:
        raise TrainConfigError("training set is empty")
    s_tilde = dataset.s_tilde
    x_tr, y_tr = dataset.x_stack(), dataset.y_stack()
    x_va, y_va = val_set.x_stack(), val_set.y_stack()
    soft = is_soft(variant)
    layers0 = list(init_layers) if init_layers is not None else initial_layers(K, variant)
    layers0 = [clamp(p, cfg.clamp_margin, soft) for p in layers0]
    probe = UnfoldedNetwork(variant, layers0, dictionary)
    w = probe.weight(s_tilde)
    mask = trainable_mask(variant, K)
    params = _to_array(layers0)
    rng = np.random.default_rng(cfg.seed)
    T = x_tr.shape[1]
    bs = min(cfg.batch_size, T)
    order = rng.permutation(T)
    cursor = 0

    def next_batch():
        nonlocal order, cursor
        if cursor + bs > T:
            order = rng.permutation(T)
            cursor = 0
        idx = np.sort(order[cursor:cursor + bs])
        cursor += bs
        return x_tr[:, idx], y_tr[:, idx]

    def val_nmse(arr, depth):
        lay = _to_layers(arr[:depth], cfg.clamp_margin, soft)
        x, _, _ = forward_arrays(variant, lay, w, s_tilde, y_va)
        return nmse_db_stack(x, x_va)

    t0 = time.perf_counter()
    for stage in range(1, K + 1):
        best_arr = params.copy()
        best_val = val_nmse(params, stage)
        phases = (("new", cfg.alpha0, stage - 1), ("joint1", cfg.alpha1, 0), ("joint2", cfg.alpha2, 0))
        for phase, lr, first in phases:
            active = mask[:stage].copy()
            active[:first] = False
            opt = _Adam(params[:stage].shape, lr, cfg.adam_betas, cfg.adam_eps, cfg.optimizer == "sgd")
            for it in range(1, cfg.stage_iters + 1):
                xb, yb = next_batch()
                lay = _to_layers(params[:stage], cfg.clamp_margin, soft)
                value, g = _loss_and_grads(variant, lay, w, s_tilde, xb, yb)
                g = np.where(active, g, 0.0)
                params[:stage] += np.where(active, opt.step(g), 0.0)
                params[:stage] = _to_array(_to_layers(params[:stage], cfg.clamp_margin, soft))
                if it % cfg.eval_every == 0 or it == cfg.stage_iters:
                    v = val_nmse(params, stage)
                    if history is not None:
                        history.append(TrainLogRow(stage, phase, it, value, v))
                    if v < best_val:
                        best_val, best_arr = v, params.copy()
        params = best_arr
        log.info("%s stage %d/%d val NMSE %.2f dB (%.1fs)", variant, stage, K, best_val,
                 time.perf_counter() - t0)

    init_arr = _to_array(layers0)
    if val_nmse(init_arr, K) < val_nmse(params, K):
        params = init_arr
    return UnfoldedNetwork(variant, _to_layers(params, cfg.clamp_margin, soft), dictionary)
