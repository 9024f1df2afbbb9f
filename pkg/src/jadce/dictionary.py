"""Analytic weight matrices ``B`` that replace ``S^T`` in the gradient step.

Two constructions:

* ``plain``: minimize ``||B S||_F^2`` subject to ``B[i] . S[:, i] = 1`` by
  projected gradient descent.
* ``symmetric``: alternate between a projected gradient step on
  ``||D^T D - I||_F^2 + tau ||D - G S||_F^2`` (unit-norm columns of ``D``) and a
  least-squares update of ``G``; then ``B = (G^T G S)^T`` so that ``B S`` is
  symmetric positive semidefinite.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .core import norm_2_1

log = logging.getLogger(__name__)

PLAIN = "plain"
SYMMETRIC = "symmetric"

DEFAULT_TAU = 1.0
DEFAULT_STEPS = 2000
DEFAULT_LR = 1e-2
G_RIDGE = 1e-10


class DictionaryError(ValueError):
    pass


@dataclass
class AnalyticDictionary:
    b: np.ndarray
    source: str
    final_objective: float
    max_constraint_residual: float
    objective_history: list = field(default_factory=list, repr=False)
    tau: float | None = None
    steps: int = 0
    lr: float = DEFAULT_LR

    def metadata(self) -> dict:
        return {
            "source": self.source,
            "tau": self.tau,
            "steps": self.steps,
            "lr": self.lr,
            "initial_objective": self.objective_history[0] if self.objective_history else None,
            "final_objective": self.final_objective,
            "max_constraint_residual": self.max_constraint_residual,
            "mu_b": b_norm_2_1(self.b),
        }


@dataclass
class SymmetricFactors:
    g: np.ndarray
    d: np.ndarray
    tau: float


def mutual_coherence(d: np.ndarray) -> float:
    """Largest absolute off-diagonal entry of ``D^T D``."""
    d = np.asarray(d, dtype=float)
    if d.ndim != 2 or d.shape[1] < 2:
        raise DictionaryError("mutual coherence needs at least two columns")
    gram = d.T @ d
    np.fill_diagonal(gram, 0.0)
    return float(np.max(np.abs(gram)))


def b_norm_2_1(b: np.ndarray) -> float:
    return norm_2_1(b)


def normalize_columns(s: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(s, axis=0)
    if np.any(norms == 0):
        raise DictionaryError("cannot normalize a zero column")
    return s / norms


def project_rows(b: np.ndarray, s_tilde: np.ndarray) -> np.ndarray:
    """Project each row ``b_i`` onto the hyperplane ``b_i . s_i = 1``."""
    col_sq = np.sum(s_tilde * s_tilde, axis=0)
    inner = np.einsum("ij,ji->i", b, s_tilde)
    return b + ((1.0 - inner) / col_sq)[:, None] * s_tilde.T


def _plain_objective(b, s_tilde):
    return float(np.sum((b @ s_tilde) ** 2))


def plain_initializer(s_tilde: np.ndarray) -> np.ndarray:
    """Right generalized inverse with rows rescaled onto the constraint."""
    gram = s_tilde @ s_tilde.T
    b0 = np.linalg.solve(gram, s_tilde).T
    diag = np.einsum("ij,ji->i", b0, s_tilde)
    if np.any(np.abs(diag) < 1e-14):
        # a column orthogonal to the row space: fall back to the hyperplane projection
        return project_rows(b0, s_tilde)
    return b0 / diag[:, None]


def solve_plain_dictionary(s_tilde, steps: int = DEFAULT_STEPS, lr: float = DEFAULT_LR) -> AnalyticDictionary:
    s_tilde = np.asarray(s_tilde, dtype=float)
    if np.any(np.linalg.norm(s_tilde, axis=0) == 0):
        raise DictionaryError("dictionary has a zero column; the row projection is undefined")
    b = plain_initializer(s_tilde)
    obj = _plain_objective(b, s_tilde)
    history = [obj]
    sst = s_tilde @ s_tilde.T
    step = lr
    for _ in range(steps):
        trial = project_rows(b - step * 2.0 * (b @ sst), s_tilde)
        trial_obj = _plain_objective(trial, s_tilde)
        if trial_obj > obj:
            step *= 0.5
            history.append(obj)
            continue
        b, obj = trial, trial_obj
        history.append(obj)
    residual = float(np.max(np.abs(np.einsum("ij,ji->i", b, s_tilde) - 1.0)))
    return AnalyticDictionary(b, PLAIN, obj, residual, history, None, steps, lr)


def _sym_objective(d, g, s_tilde, tau):
    gram = d.T @ d
    np.fill_diagonal(gram, gram.diagonal() - 1.0)
    return float(np.sum(gram**2) + tau * np.sum((d - g @ s_tilde) ** 2))


def _update_g(d, s_tilde, ridge=G_RIDGE):
    sst = s_tilde @ s_tilde.T
    return np.linalg.solve(sst + ridge * np.eye(sst.shape[0]), s_tilde @ d.T).T


def _check_full_row_rank(s_tilde):
    sv = np.linalg.svd(s_tilde, compute_uv=False)
    if s_tilde.shape[0] > s_tilde.shape[1] or sv[-1] <= 1e-10 * sv[0]:
        raise DictionaryError(
            f"dictionary must be wide with full row rank (smallest singular value {sv[-1]:.3g})"
        )


def solve_symmetric_dictionary(
    s_tilde,
    tau: float = DEFAULT_TAU,
    steps: int = DEFAULT_STEPS,
    lr: float = DEFAULT_LR,
    polish_iters: int = 5000,
    polish_tol: float = 1e-13,
):
    """Return ``(SymmetricFactors, AnalyticDictionary)``.

    After the alternating descent, ``D`` is pulled onto the row space of ``S``
    by alternating projections (``D <- normalize(D P)``) so that ``D = G S``
    holds to round-off; this makes ``diag(B S) = 1`` exact rather than only
    approximate.  The objective measures average rather than maximal
    coherence, so the descent can raise ``mutual_coherence(D)`` slightly; when
    it ends above the (polished) initializer, the initializer is returned.
    """
    s_tilde = np.asarray(s_tilde, dtype=float)
    if tau <= 0:
        raise DictionaryError("tau must be positive")
    _check_full_row_rank(s_tilde)
    d = d0 = normalize_columns(s_tilde)
    g = np.eye(s_tilde.shape[0])
    obj = _sym_objective(d, g, s_tilde, tau)
    history = [obj]
    step = lr
    for _ in range(steps):
        gram = d.T @ d
        np.fill_diagonal(gram, gram.diagonal() - 1.0)
        grad = 4.0 * d @ gram + 2.0 * tau * (d - g @ s_tilde)
        d_new = normalize_columns(d - step * grad)
        trial = _sym_objective(d_new, g, s_tilde, tau)
        if trial > obj:
            step *= 0.5
            history.append(obj)
            continue
        d = d_new
        g = _update_g(d, s_tilde)
        obj = _sym_objective(d, g, s_tilde, tau)
        history.append(obj)

    d, g = _polish(d, s_tilde, polish_iters, polish_tol)
    d_init, g_init = _polish(d0, s_tilde, polish_iters, polish_tol)
    if mutual_coherence(d) > mutual_coherence(d_init):
        log.debug("symmetric dictionary: descent raised coherence, keeping the initializer")
        d, g = d_init, g_init
    b = (g.T @ g @ s_tilde).T
    bs = b @ s_tilde
    residual = float(np.max(np.abs(np.diag(bs) - 1.0)))
    final = _sym_objective(d, g, s_tilde, tau)
    log.debug("symmetric dictionary: objective %.6g -> %.6g, residual %.3g", history[0], final, residual)
    return SymmetricFactors(g, d, tau), AnalyticDictionary(b, SYMMETRIC, final, residual, history, tau, steps, lr)


def _polish(d, s_tilde, iters, tol):
    # orthogonal projector onto the row space of S (acts on the right of D)
    q, _ = np.linalg.qr(s_tilde.T)
    for _ in range(iters):
        dp = (d @ q) @ q.T
        norms = np.linalg.norm(dp, axis=0)
        d = dp / norms
        if np.max(np.abs(norms - 1.0)) < tol:
            break
    # exact least squares on the row space, no ridge needed here
    g = np.linalg.lstsq(s_tilde.T, d.T, rcond=None)[0].T
    return g @ s_tilde, g


def symmetric_gram(b: np.ndarray, s_tilde: np.ndarray) -> np.ndarray:
    return b @ s_tilde
