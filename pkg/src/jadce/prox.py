"""Minimax concave penalty (MCP) and its proximal operators.

For threshold ``theta`` and concavity ``eta`` with ``2 * theta * eta < 1`` the
scalar prox is

    0                                   |x| <= theta
    (x - theta sign x) / (1 - 2 theta eta)   theta < |x| <= 1 / (2 eta)
    x                                   |x| > 1 / (2 eta)

At ``2 * theta * eta == 1`` the middle branch vanishes and the operator is a
hard threshold at ``theta``. ``eta == 0`` gives soft thresholding and
``theta == 0`` the identity.

The row (group) operator shrinks the Euclidean norm of a row with the scalar
map and keeps its direction.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# relative slack when deciding that 2 * theta * eta sits exactly on the limit
HARD_LIMIT_RTOL = 1e-12


class ProxDomainError(ValueError):
    """Parameters outside the region where the prox is well defined."""


@dataclass(frozen=True)
class ProxParams:
    theta: float
    eta: float

    def __post_init__(self):
        check_params(self.theta, self.eta)

    @property
    def is_hard(self) -> bool:
        return is_hard_limit(self.theta, self.eta)


@dataclass(frozen=True)
class ProxGrad:
    d_input: float
    d_theta: float
    d_eta: float


def check_params(theta: float, eta: float) -> None:
    if not (np.isfinite(theta) and np.isfinite(eta)):
        raise ProxDomainError(f"non-finite prox parameters theta={theta}, eta={eta}")
    if theta < 0 or eta < 0:
        raise ProxDomainError(f"theta and eta must be nonnegative, got {theta}, {eta}")
    if 2.0 * theta * eta > 1.0 + HARD_LIMIT_RTOL:
        raise ProxDomainError(
            f"2*theta*eta = {2 * theta * eta:.6g} > 1: the MCP prox has no well-defined minimum"
        )


def is_hard_limit(theta: float, eta: float) -> bool:
    return theta > 0 and abs(2.0 * theta * eta - 1.0) <= HARD_LIMIT_RTOL


def mcp_penalty(z, eta: float):
    """g_eta(z): ``|z| - eta z^2`` up to ``1/(2 eta)``, constant ``1/(4 eta)`` beyond."""
    if not eta > 0:
        raise ProxDomainError(f"eta must be positive, got {eta}")
    a = np.abs(z)
    out = np.where(a <= 1.0 / (2.0 * eta), a - eta * a * a, 1.0 / (4.0 * eta))
    return float(out) if np.ndim(out) == 0 else out


def shrink_magnitude(r, theta: float, eta: float):
    """Apply the scalar prox to nonnegative magnitudes ``r`` (no validation)."""
    r = np.asarray(r, dtype=float)
    if theta <= 0.0:
        return r.copy()
    if is_hard_limit(theta, eta):
        return np.where(r > theta, r, 0.0)
    out = np.where(r > theta, (r - theta) / (1.0 - 2.0 * theta * eta), 0.0)
    if eta > 0.0:
        out = np.where(r > 1.0 / (2.0 * eta), r, out)
    return out


def prox_scalar(x, p: ProxParams):
    """Scalar MCP prox; accepts scalars or arrays (applied elementwise)."""
    x = np.asarray(x, dtype=float)
    out = np.sign(x) * shrink_magnitude(np.abs(x), p.theta, p.eta)
    return float(out) if out.ndim == 0 else out


def _rows_prox(x: np.ndarray, shrink) -> np.ndarray:
    # rows along axis 0, the group is the last axis; any middle axes are batch
    norms = np.sqrt(np.sum(x * x, axis=-1, keepdims=True))
    new = shrink(norms)
    scale = np.divide(new, norms, out=np.zeros_like(norms), where=norms > 0)
    return x * scale


def prox_row(row, p: ProxParams) -> np.ndarray:
    """Multivariate prox of one row: shrink its norm, keep its direction."""
    row = np.asarray(row, dtype=float)
    return _rows_prox(row[None, :], lambda r: shrink_magnitude(r, p.theta, p.eta))[0]


def prox_matrix(x, p: ProxParams) -> np.ndarray:
    """Row-wise prox of a matrix (or of a ``(rows, batch, cols)`` stack)."""
    x = np.asarray(x, dtype=float)
    if p.theta <= 0.0:
        return x.copy()
    return _rows_prox(x, lambda r: shrink_magnitude(r, p.theta, p.eta))


def group_soft_threshold(x, theta: float) -> np.ndarray:
    """Multidimensional shrinkage: row -> max(0, |row| - theta) row / |row|."""
    if theta < 0:
        raise ProxDomainError(f"theta must be nonnegative, got {theta}")
    x = np.asarray(x, dtype=float)
    if theta == 0:
        return x.copy()
    return _rows_prox(x, lambda r: np.maximum(r - theta, 0.0))


def magnitude_partials(r, theta: float, eta: float):
    """Partials of the magnitude map w.r.t. (r, theta, eta), elementwise.

    Branch choice at the breakpoints: ``r == theta`` takes the middle branch and
    ``r == 1/(2 eta)`` the identity branch. ``eta == 0`` means soft threshold.
    """
    r = np.asarray(r, dtype=float)
    denom = 1.0 - 2.0 * theta * eta
    middle = r >= theta
    if eta > 0.0:
        ident = r >= 1.0 / (2.0 * eta)
        middle = middle & ~ident
    else:
        ident = np.zeros(r.shape, dtype=bool)
    d_r = np.where(ident, 1.0, np.where(middle, 1.0 / denom, 0.0))
    d_theta = np.where(middle, (2.0 * eta * r - 1.0) / denom**2, 0.0)
    d_eta = np.where(middle, 2.0 * theta * (r - theta) / denom**2, 0.0)
    return d_r, d_theta, d_eta


def prox_scalar_grad(x: float, p: ProxParams) -> ProxGrad:
    """Exact one-sided partials of the scalar prox (strictly inside 2 theta eta < 1)."""
    if 2.0 * p.theta * p.eta >= 1.0:
        raise ProxDomainError("gradient undefined at the hard-threshold limit 2*theta*eta = 1")
    a = abs(float(x))
    d_r, d_theta, d_eta = magnitude_partials(a, p.theta, p.eta)
    sgn = float(np.sign(x))
    return ProxGrad(float(d_r), sgn * float(d_theta), sgn * float(d_eta))


def rows_prox_forward(v: np.ndarray, theta: float, eta: float, soft: bool = False):
    """Row prox on a stack, also returning what the backward pass needs."""
    norms = np.sqrt(np.sum(v * v, axis=-1))
    if soft:
        new = np.maximum(norms - theta, 0.0)
    else:
        new = shrink_magnitude(norms, theta, eta)
    scale = np.divide(new, norms, out=np.zeros_like(norms), where=norms > 0)
    return v * scale[..., None], (norms, new, scale)


def rows_prox_backward(v: np.ndarray, cache, grad_out: np.ndarray, theta: float, eta: float):
    """Vector-Jacobian product of the row prox.

    Returns ``(grad_v, d_theta, d_eta)`` where the parameter partials are summed
    over every row of the stack.
    """
    norms, new, scale = cache
    d_r, d_th, d_et = magnitude_partials(norms, theta, eta)
    nz = norms > 0
    safe = np.where(nz, norms, 1.0)
    # <v, g> / |v| per row
    proj = np.where(nz, np.sum(v * grad_out, axis=-1) / safe, 0.0)
    coef = np.where(nz, (d_r - scale) / safe, 0.0)
    grad_v = scale[..., None] * grad_out + (coef * proj)[..., None] * v
    # a zero row maps to zero for every parameter value
    d_theta = float(np.sum(np.where(nz, d_th * proj, 0.0)))
    d_eta = float(np.sum(np.where(nz, d_et * proj, 0.0)))
    return grad_v, d_theta, d_eta
