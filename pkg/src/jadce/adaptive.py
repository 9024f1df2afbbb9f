"""LPGM-AT: a self-tuning ALPGM-MM whose per-layer parameters are closed-form
functions of the current iterate and the observation.

    theta_k = c_theta * || S^+ (S X^k - Y) ||_{2,1}
    beta_k  = c_beta * r_k                     (k >= 1)
    eta_k   = 1 / (c_eta * r_k * theta_k)      clipped into [1e-8, 1 / (2 theta_k)]
    gamma_k = 1

where ``r_k`` is the number of nonzero rows of ``X^k`` (floored at 1).
Only the three scalars ``c_theta, c_beta, c_eta`` are tuned, by grid search.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import asdict, dataclass

import numpy as np

from .core import DEFAULT_SUPPORT_TOL, apply_left
from .datagen import ConfigError
from .dictionary import AnalyticDictionary
from .metrics import nmse_from_sums
from .prox import HARD_LIMIT_RTOL

log = logging.getLogger(__name__)

ETA_FLOOR = 1e-8
THETA_IDENTITY = 1e-12
EVAL_CHUNK = 250

DEFAULT_GRIDS = {
    "c_theta": (0.01, 0.02, 0.05, 0.1, 0.2),
    "c_beta": (1e-4, 3e-4, 1e-3, 3e-3, 1e-2),
    "c_eta": (1.0, 2.0, 5.0, 10.0, 20.0),
}


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class HyperParams:
    c_theta: float
    c_beta: float
    c_eta: float

    def __post_init__(self):
        if not (self.c_theta > 0 and self.c_beta > 0 and self.c_eta > 0):
            raise ValueError(f"hyperparameters must be strictly positive: {self}")

    def to_dict(self):
        return asdict(self)


@dataclass
class AdaptiveContext:
    s_tilde: np.ndarray
    s_tilde_pinv: np.ndarray
    dictionary: AnalyticDictionary
    K: int = 16

    def __post_init__(self):
        resid = self.s_tilde @ self.s_tilde_pinv @ self.s_tilde - self.s_tilde
        if np.linalg.norm(resid) >= 1e-6:
            raise SolverError("s_tilde_pinv is not a generalized inverse of s_tilde")

    @classmethod
    def build(cls, s_tilde, dictionary, K=16):
        return cls(s_tilde, pseudo_inverse(s_tilde), dictionary, K)


def pseudo_inverse(s_tilde) -> np.ndarray:
    """Ridge-stabilized right inverse ``S^T (S S^T + ridge I)^-1``."""
    s = np.asarray(s_tilde, dtype=float)
    if s.shape[0] > s.shape[1]:
        raise SolverError("pseudo_inverse expects a wide (or square) matrix")
    gram = s @ s.T
    ev = np.linalg.eigvalsh(gram)
    if ev[0] <= 1e-12 * ev[-1]:
        raise SolverError(f"matrix is numerically rank deficient (eigenvalue ratio {ev[0] / ev[-1]:.3g})")
    ridge = 1e-12 * np.trace(gram) / s.shape[0]
    return np.linalg.solve(gram + ridge * np.eye(s.shape[0]), s).T


def _shrink_per_sample(r, theta, eta):
    """Scalar MCP prox on magnitudes ``r`` of shape (rows, batch) with per-sample params."""
    ident = theta < THETA_IDENTITY
    hard = np.abs(2.0 * theta * eta - 1.0) <= HARD_LIMIT_RTOL
    denom = np.where(hard | ident, 1.0, 1.0 - 2.0 * theta * eta)
    out = np.where(r > theta, (r - theta) / denom, 0.0)
    knee = np.where(eta > 0, 1.0 / (2.0 * np.where(eta > 0, eta, 1.0)), np.inf)
    out = np.where(r > knee, r, out)
    out = np.where(hard, np.where(r > theta, r, 0.0), out)
    return np.where(ident, r, out)


def _row_norms(a):
    # einsum is several times faster than sum(axis=-1) for the short last axis
    if a.ndim == 2:
        return np.sqrt(np.einsum("rm,rm->r", a, a))
    return np.sqrt(np.einsum("rbm,rbm->rb", a, a))


def layer_parameters(x, resid_proj, hp: HyperParams, k: int, x_norms=None):
    """``(theta, beta, eta, r)`` per sample for layer ``k``.

    ``resid_proj`` is ``S^+ (S X^k - Y)``; ``x`` is ``X^k``. Both are stacks
    ``(rows, batch, M)`` (or single matrices). ``x_norms`` may pass the row
    norms of ``x`` when they are already known.
    """
    theta = hp.c_theta * np.sum(_row_norms(resid_proj), axis=0)
    if x_norms is None:
        x_norms = _row_norms(x)
    counts = np.count_nonzero(x_norms > DEFAULT_SUPPORT_TOL, axis=0)
    r = np.maximum(counts, 1).astype(float)
    beta = hp.c_beta * r if k >= 1 else np.zeros_like(r)
    safe_theta = np.where(theta < THETA_IDENTITY, 1.0, theta)
    eta = 1.0 / (hp.c_eta * r * safe_theta)
    eta = np.clip(eta, ETA_FLOOR, 1.0 / (2.0 * safe_theta))
    eta = np.where(theta < THETA_IDENTITY, 0.0, eta)
    return theta, beta, eta, r


def _stacked(pinv, b):
    return np.vstack([pinv, b])


def lpgm_at_run(s_tilde, pinv, b, y, hp: HyperParams, K: int, trace: bool = False, y_proj=None):
    """Run LPGM-AT on a ``(2L, M)`` observation or a ``(2L, batch, M)`` stack.

    Returns ``(x_final, iterates, schedule)``; ``schedule`` is a list of
    ``(theta, beta, eta)`` per layer (arrays over the batch). ``y_proj`` may
    carry ``[S^+; B] Y`` precomputed (it is all layer 0 needs, since
    ``X^0 = 0``), which lets a grid search share it across hyperparameters.
    """
    single = y.ndim == 2
    if single:
        y = y[:, None, :]
        if y_proj is not None:
            y_proj = y_proj[:, None, :]
    n2 = s_tilde.shape[1]
    stacked = _stacked(pinv, b)
    x = np.zeros((n2,) + y.shape[1:])
    x_prev = x
    x_norms = np.zeros((n2, y.shape[1]))
    iterates = [x] if trace else None
    schedule = [] if trace else None
    for k in range(K):
        if k == 0:
            both = -(apply_left(stacked, y) if y_proj is None else y_proj)
        else:
            resid = apply_left(s_tilde, x)
            resid -= y
            both = apply_left(stacked, resid)
        proj, grad = both[:n2], both[n2:]
        theta, beta, eta, _ = layer_parameters(x, proj, hp, k, x_norms)
        v = x - grad
        if k >= 1:
            v += beta[:, None] * (x - x_prev)
        norms = _row_norms(v)
        new = _shrink_per_sample(norms, theta[None, :], eta[None, :])
        scale = np.divide(new, norms, out=np.zeros_like(norms), where=norms > 0)
        v *= scale[..., None]
        x_prev, x = x, v
        # |v * new/|v|| equals new up to one rounding; reuse it for the row count
        x_norms = new
        if trace:
            iterates.append(x)
            schedule.append((theta, beta, eta))
    if single:
        x = x[:, 0]
        if trace:
            iterates = [it[:, 0] for it in iterates]
            schedule = [tuple(float(a[0]) for a in s) for s in schedule]
    return x, iterates, schedule


def lpgm_at_forward(sys, ctx: AdaptiveContext, hp: HyperParams, trace: bool = False):
    """``X^K`` for one system; with ``trace`` also iterates and (theta, beta, eta) per layer."""
    x, iterates, schedule = lpgm_at_run(ctx.s_tilde, ctx.s_tilde_pinv, ctx.dictionary.b,
                                        sys.y_tilde, hp, ctx.K, trace=trace)
    return (x, iterates, schedule) if trace else x


def evaluate(ctx: AdaptiveContext, hp: HyperParams, x_stack, y_stack, chunk: int = EVAL_CHUNK,
             y_proj=None) -> float:
    """Ratio-of-sums NMSE (dB) of LPGM-AT over a stack.

    Samples are processed in chunks of ``chunk`` (the forward pass is
    per-sample, so chunking only changes memory traffic, not the result).
    """
    err = ref = 0.0
    for start in range(0, y_stack.shape[1], chunk):
        sl = slice(start, start + chunk)
        x, _, _ = lpgm_at_run(ctx.s_tilde, ctx.s_tilde_pinv, ctx.dictionary.b, y_stack[:, sl], hp, ctx.K,
                              y_proj=None if y_proj is None else y_proj[:, sl])
        d = x - x_stack[:, sl]
        err += float(np.einsum("rbm,rbm->", d, d))
        ref += float(np.einsum("rbm,rbm->", x_stack[:, sl], x_stack[:, sl]))
    return nmse_from_sums(err, ref)


def grid_search(train_set, ctx: AdaptiveContext, grids: dict | None = None, results: list | None = None):
    """Exhaustive search; returns ``(best HyperParams, its NMSE in dB)``.

    Ties go to the lexicographically smallest ``(c_theta, c_beta, c_eta)``.
    """
    grids = dict(DEFAULT_GRIDS if grids is None else grids)
    for key in ("c_theta", "c_beta", "c_eta"):
        if not grids.get(key):
            raise ConfigError(f"grid for {key} is empty")
    x_stack, y_stack = train_set.x_stack(), train_set.y_stack()
    y_proj = apply_left(_stacked(ctx.s_tilde_pinv, ctx.dictionary.b), y_stack)
    best, best_val = None, np.inf
    for triple in itertools.product(*(sorted(grids[k]) for k in ("c_theta", "c_beta", "c_eta"))):
        hp = HyperParams(*triple)
        val = evaluate(ctx, hp, x_stack, y_stack, y_proj=y_proj)
        if results is not None:
            results.append((hp, val))
        log.debug("grid %s -> %.3f dB", triple, val)
        if val < best_val:
            best, best_val = hp, val
    return best, best_val
