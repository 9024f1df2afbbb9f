"""Dense matrix helpers: complex-to-real lifting and row-group norms.

Real matrices are plain ``float64`` ndarrays, complex ones ``complex128``.
Batched stacks used by the solvers keep rows first, ``(rows, batch, cols)``,
so that one GEMM on ``(rows, batch * cols)`` serves the whole batch.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_SUPPORT_TOL = 1e-10


class ShapeError(ValueError):
    """Raised when an array has an incompatible shape."""


@dataclass(frozen=True)
class RealizedSystem:
    """One real-lifted scene: ``y_tilde = s_tilde @ x_star_tilde + z_tilde``."""

    s_tilde: np.ndarray
    y_tilde: np.ndarray
    x_star_tilde: np.ndarray
    noise_frobenius: float
    dims: tuple[int, int, int]

    def __post_init__(self):
        L, N, M = self.dims
        if self.s_tilde.shape != (2 * L, 2 * N):
            raise ShapeError(f"s_tilde shape {self.s_tilde.shape} != {(2 * L, 2 * N)}")
        if self.y_tilde.shape != (2 * L, M):
            raise ShapeError(f"y_tilde shape {self.y_tilde.shape} != {(2 * L, M)}")
        if self.x_star_tilde.shape != (2 * N, M):
            raise ShapeError(f"x_star_tilde shape {self.x_star_tilde.shape} != {(2 * N, M)}")
        if self.noise_frobenius < 0:
            raise ValueError("noise_frobenius must be nonnegative")

    @classmethod
    def from_arrays(cls, s_tilde, y_tilde, x_star_tilde, noise_frobenius=None):
        """Build a system from real arrays, inferring dims (and noise if omitted)."""
        s_tilde = np.asarray(s_tilde, dtype=float)
        y_tilde = np.asarray(y_tilde, dtype=float)
        x_star_tilde = np.asarray(x_star_tilde, dtype=float)
        if s_tilde.shape[0] % 2 or s_tilde.shape[1] % 2:
            raise ShapeError("lifted dictionary must have even dimensions")
        if noise_frobenius is None:
            noise_frobenius = float(np.linalg.norm(y_tilde - s_tilde @ x_star_tilde))
        dims = (s_tilde.shape[0] // 2, s_tilde.shape[1] // 2, y_tilde.shape[1])
        return cls(s_tilde, y_tilde, x_star_tilde, float(noise_frobenius), dims)


def lift_dictionary(s: np.ndarray) -> np.ndarray:
    """Return ``[[Re S, -Im S], [Im S, Re S]]``."""
    s = np.atleast_2d(np.asarray(s, dtype=complex))
    re, im = s.real, s.imag
    return np.block([[re, -im], [im, re]])


def lift_signal(x: np.ndarray) -> np.ndarray:
    """Stack ``Re X`` above ``Im X``."""
    x = np.asarray(x, dtype=complex)
    if x.ndim == 1:
        x = x[:, None]
    return np.concatenate([x.real, x.imag], axis=0)


def unlift_signal(x_tilde: np.ndarray) -> np.ndarray:
    """Inverse of :func:`lift_signal`."""
    x_tilde = np.asarray(x_tilde, dtype=float)
    if x_tilde.shape[0] % 2:
        raise ShapeError(f"cannot unlift {x_tilde.shape[0]} rows: row count must be even")
    n = x_tilde.shape[0] // 2
    return x_tilde[:n] + 1j * x_tilde[n:]


def row_group_norms(x: np.ndarray) -> np.ndarray:
    """Euclidean norm of every row (over all trailing axes)."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return np.abs(x)
    return np.sqrt(np.sum(x.reshape(x.shape[0], -1) ** 2, axis=1))


def norm_2_1(x: np.ndarray) -> float:
    """Sum of row norms."""
    return float(np.sum(row_group_norms(x)))


def row_support(x: np.ndarray, tol: float = DEFAULT_SUPPORT_TOL) -> set[int]:
    """Indices of rows whose norm exceeds ``tol``."""
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    return {int(i) for i in np.flatnonzero(row_group_norms(x) > tol)}


def stack_rows(mats) -> np.ndarray:
    """Stack a list of ``(rows, cols)`` matrices into ``(rows, batch, cols)``."""
    return np.stack([np.asarray(m, dtype=float) for m in mats], axis=1)


def apply_left(a: np.ndarray, x: np.ndarray) -> np.ndarray:
    """``a @ x`` for a 2-D ``x`` or a ``(rows, batch, cols)`` stack."""
    if x.ndim == 2:
        return a @ x
    r, b, m = x.shape
    return (a @ x.reshape(r, b * m)).reshape(a.shape[0], b, m)


def batch_row_norms(x: np.ndarray) -> np.ndarray:
    """Row norms of a stack, shape ``(rows, batch)``; 2-D input gives ``(rows,)``."""
    return np.sqrt(np.sum(x * x, axis=-1))
