"""Classical baselines: PGM with the group MCP prox, ISTA-GS and FISTA-GS."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import RealizedSystem, apply_left
from .prox import ProxDomainError, ProxParams, group_soft_threshold, mcp_penalty, prox_matrix

DENSE_TRACE_LEN = 64
THIN_EVERY = 4


class SolverError(ValueError):
    pass


@dataclass
class IterativeConfig:
    lam: float = 0.1
    max_iters: int = 50
    gamma: float | None = None  # PGM step; None -> 1/C
    eta: float | None = None  # PGM concavity; None -> 1/(4 lam gamma)
    trace: bool = False

    def resolve(self, c: float) -> tuple[float, float]:
        """Concrete ``(gamma, eta)`` for a system whose Lipschitz constant is ``c``."""
        gamma = self.gamma if self.gamma is not None else 1.0 / c
        eta = self.eta if self.eta is not None else 1.0 / (4.0 * self.lam * gamma)
        if self.lam <= 0 or gamma <= 0 or eta <= 0:
            raise ProxDomainError("lambda, gamma and eta must be positive")
        if 2.0 * self.lam * gamma * eta > 1.0 + 1e-12:
            raise ProxDomainError(f"2*lambda*gamma*eta = {2 * self.lam * gamma * eta:.4g} exceeds 1")
        return gamma, eta


def power_iteration(m, iters: int = 1000, tol: float = 1e-12, seed: int = 0) -> float:
    """Largest eigenvalue of a symmetric PSD matrix."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise SolverError("power iteration needs a square matrix")
    scale = max(np.max(np.abs(m)), 1e-300)
    if np.max(np.abs(m - m.T)) > 1e-10 * scale:
        raise SolverError("power iteration needs a symmetric matrix")
    v = np.random.default_rng(seed).standard_normal(m.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = m @ v
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        new = float(v @ w)
        v = w / nw
        if abs(new - lam) <= tol * abs(new):
            return new
        lam = new
    return float(v @ m @ v)


def lipschitz_constant(s_tilde) -> float:
    """``C``: largest eigenvalue of ``S^T S`` (computed on the smaller Gram)."""
    s_tilde = np.asarray(s_tilde, dtype=float)
    small = s_tilde @ s_tilde.T if s_tilde.shape[0] <= s_tilde.shape[1] else s_tilde.T @ s_tilde
    return power_iteration(small)


def objective_group_mcp(sys: RealizedSystem, x_tilde, lam: float, eta: float) -> float:
    if not eta > 0:
        raise ProxDomainError("eta must be positive")
    r = sys.y_tilde - sys.s_tilde @ x_tilde
    norms = np.linalg.norm(x_tilde, axis=1)
    return float(0.5 * np.sum(r * r) + lam * np.sum(mcp_penalty(norms, eta)))


def objective_group_lasso(sys: RealizedSystem, x_tilde, lam: float) -> float:
    r = sys.y_tilde - sys.s_tilde @ x_tilde
    return float(0.5 * np.sum(r * r) + lam * np.sum(np.linalg.norm(x_tilde, axis=1)))


class _Trace:
    """Dense for the first 64 iterates, then every 4th (the last is always kept)."""

    def __init__(self, enabled: bool):
        self.enabled = enabled
        self.iterates: list[np.ndarray] = []
        self.indices: list[int] = []

    def add(self, k: int, x: np.ndarray, last: bool = False):
        if not self.enabled:
            return
        if k < DENSE_TRACE_LEN or k % THIN_EVERY == 0 or last:
            self.iterates.append(x.copy())
            self.indices.append(k)


def pgm_run(s_tilde, y, lam, gamma, eta, iters, trace=False):
    """PGM on a single ``(2L, M)`` observation or a ``(2L, batch, M)`` stack."""
    p = ProxParams(lam * gamma, eta)
    st = s_tilde.T
    x = np.zeros((s_tilde.shape[1],) + y.shape[1:])
    tr = _Trace(trace)
    tr.add(0, x)
    for k in range(iters):
        x = prox_matrix(x + gamma * apply_left(st, y - apply_left(s_tilde, x)), p)
        tr.add(k + 1, x, last=k + 1 == iters)
    return x, tr


def ista_run(s_tilde, y, lam, c, iters, trace=False, momentum=True, fista=False):
    st = s_tilde.T
    x = np.zeros((s_tilde.shape[1],) + y.shape[1:])
    z = x
    t = 1.0
    tr = _Trace(trace)
    tr.add(0, x)
    for k in range(iters):
        x_new = group_soft_threshold(z + apply_left(st, y - apply_left(s_tilde, z)) / c, lam / c)
        if fista:
            t_new = fista_t_next(t)
            weight = (t - 1.0) / t_new if momentum else 0.0
            z = x_new + weight * (x_new - x)
            t = t_new
        else:
            z = x_new
        x = x_new
        tr.add(k + 1, x, last=k + 1 == iters)
    return x, tr


def fista_t_next(t: float) -> float:
    return (1.0 + math.sqrt(1.0 + 4.0 * t * t)) / 2.0


def pgm_solve(sys: RealizedSystem, cfg: IterativeConfig) -> list[np.ndarray]:
    """Iterate trace ``[X^0 = 0, X^1, ...]`` of PGM (only ``[X^K]`` without ``cfg.trace``)."""
    gamma, eta = cfg.resolve(lipschitz_constant(sys.s_tilde))
    x, tr = pgm_run(sys.s_tilde, sys.y_tilde, cfg.lam, gamma, eta, cfg.max_iters, trace=True)
    return tr.iterates if cfg.trace else [x]


def ista_gs_solve(sys: RealizedSystem, cfg: IterativeConfig) -> list[np.ndarray]:
    c = lipschitz_constant(sys.s_tilde)
    x, tr = ista_run(sys.s_tilde, sys.y_tilde, cfg.lam, c, cfg.max_iters, trace=True)
    return tr.iterates if cfg.trace else [x]


def fista_gs_solve(sys: RealizedSystem, cfg: IterativeConfig, momentum: bool = True) -> list[np.ndarray]:
    """FISTA-GS trace; ``momentum=False`` zeroes the extrapolation weight."""
    c = lipschitz_constant(sys.s_tilde)
    x, tr = ista_run(sys.s_tilde, sys.y_tilde, cfg.lam, c, cfg.max_iters, trace=True,
                     momentum=momentum, fista=True)
    return tr.iterates if cfg.trace else [x]


def solve_batch(method: str, s_tilde, y_stack, cfg: IterativeConfig, c: float | None = None):
    """Final iterate of a baseline for a ``(2L, batch, M)`` stack of observations."""
    if c is None:
        c = lipschitz_constant(s_tilde)
    if method == "PGM":
        gamma, eta = cfg.resolve(c)
        return pgm_run(s_tilde, y_stack, cfg.lam, gamma, eta, cfg.max_iters)[0]
    if method == "ISTA_GS":
        return ista_run(s_tilde, y_stack, cfg.lam, c, cfg.max_iters)[0]
    if method == "FISTA_GS":
        return ista_run(s_tilde, y_stack, cfg.lam, c, cfg.max_iters, fista=True)[0]
    raise SolverError(f"unknown iterative method {method!r}")


def trace_batch(method: str, s_tilde, y_stack, cfg: IterativeConfig, c: float | None = None):
    """All iterates (thinned after 64) for a stack; returns ``(indices, iterates)``."""
    if c is None:
        c = lipschitz_constant(s_tilde)
    if method == "PGM":
        gamma, eta = cfg.resolve(c)
        tr = pgm_run(s_tilde, y_stack, cfg.lam, gamma, eta, cfg.max_iters, trace=True)[1]
    elif method in ("ISTA_GS", "FISTA_GS"):
        tr = ista_run(s_tilde, y_stack, cfg.lam, c, cfg.max_iters, trace=True, fista=method == "FISTA_GS")[1]
    else:
        raise SolverError(f"unknown iterative method {method!r}")
    return tr.indices, tr.iterates
