"""Closed-form constants of the ALPGM-MM convergence guarantee and a
"certified" forward pass whose parameters follow the guarantee's schedules.

The certified pass uses the per-instance threshold

    theta_k = phi * ||X^k - X*||_{2,1} + mu_B * eps

(the guarantee takes a supremum over the signal class, which is not
computable), ``gamma_k = 1``, no momentum up to layer ``K0`` and ``beta_hat``
afterwards, ``eta_k = 1 / (4 theta_k)`` before ``K0`` and the hard-threshold
limit ``eta_k = 1 / (2 theta_k)`` from ``K0`` on.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import RealizedSystem, norm_2_1, row_group_norms, row_support
from .dictionary import b_norm_2_1, mutual_coherence
from .prox import shrink_magnitude

BOUND_RTOL = 1e-9


class TheoremInapplicable(ValueError):
    """The coherence condition ``(2s - 1) phi < 1`` fails."""


class ConstantUndefined(ValueError):
    """``4 beta_hat - (beta_hat + phi s - phi)^2 <= 0``: C0 is undefined."""


class CertificationRefused(ValueError):
    """The instance is outside the class the guarantee is stated for."""


@dataclass(frozen=True)
class SignalClass:
    mu_lo: float
    mu_hi: float
    s: int
    eps: float = 0.0

    def __post_init__(self):
        if not 0 < self.mu_lo <= self.mu_hi:
            raise ValueError("need 0 < mu_lo <= mu_hi")
        if self.s < 1:
            raise ValueError("s must be at least 1")
        if self.eps < 0:
            raise ValueError("eps must be nonnegative")


@dataclass(frozen=True)
class TheoremConstants:
    phi: float
    c_phis: float
    mu_b: float
    beta_hat: float
    c0: float
    k0: int
    eps_max: float

    def to_dict(self):
        return asdict(self)

    def error_bound(self, k: int, s: int, eps: float) -> float:
        """``C0 c^k + (1 + s) mu_B eps / (1 - c)``."""
        return self.c0 * self.c_phis**k + (1 + s) * self.mu_b * eps / (1.0 - self.c_phis)


def beta_hat(c_phis: float, s: int) -> float:
    return (1.0 - math.sqrt(1.0 - c_phis)) ** 2 / (2.0 * s)


def compute_constants(d, b, cls: SignalClass) -> TheoremConstants:
    """Evaluate every constant from the coherence of ``d`` and ``||b||_{2,1}``.

    ``phi == 0`` is handled as the degenerate limit: ``beta_hat = 0``,
    ``C0 = s mu_hi``, ``K0 = 1`` and the third noise term vanishes.
    """
    phi = mutual_coherence(d)
    s = cls.s
    c = (2 * s - 1) * phi
    if c >= 1.0:
        raise TheoremInapplicable(f"(2s-1)*phi = {c:.4g} >= 1 (s={s}, phi={phi:.4g})")
    mu_b = b_norm_2_1(b)
    if mu_b <= 0:
        raise ValueError("B must be nonzero")
    eps_a = cls.mu_lo / (3.0 * mu_b)
    eps_b = cls.mu_lo * (1.0 - c) / (6.0 * mu_b * (1 + s))
    if phi == 0.0:
        c0 = s * cls.mu_hi
        return TheoremConstants(0.0, 0.0, mu_b, 0.0, c0, 1, min(eps_a, eps_b, 0.0))
    bh = beta_hat(c, s)
    disc = 4.0 * bh - (bh + phi * s - phi) ** 2
    if disc <= 0:
        raise ConstantUndefined(f"4*beta_hat - (beta_hat + phi*s - phi)^2 = {disc:.4g} <= 0")
    c0 = max(s * cls.mu_hi, 8.0 * cls.mu_hi * s * math.sqrt(s) * (1.0 + bh) / (c * math.sqrt(disc)))
    k0 = math.ceil((math.log(cls.mu_lo) - math.log(6.0 * c0)) / math.log(c)) + 1
    eps_c = math.sqrt(s) * cls.mu_hi * (1.0 - c) * c**k0 / ((1 + s + math.sqrt(s)) * mu_b)
    return TheoremConstants(phi, c, mu_b, bh, c0, k0, min(eps_a, eps_b, eps_c))


def oracle_theta(x_k, x_star, tc: TheoremConstants, eps: float) -> float:
    return tc.phi * norm_2_1(np.asarray(x_k) - np.asarray(x_star)) + tc.mu_b * eps


@dataclass
class CertifiedTrace:
    iterates: list
    thetas: list
    etas: list
    betas: list
    supports: list
    errors: list


def _check_instance(sys: RealizedSystem, tc: TheoremConstants, cls: SignalClass):
    if cls.eps > tc.eps_max * (1 + 1e-12):
        raise CertificationRefused(f"class noise bound {cls.eps:.3g} exceeds eps_max {tc.eps_max:.3g}")
    if sys.noise_frobenius > cls.eps * (1 + 1e-9) + 1e-300:
        raise CertificationRefused(
            f"instance noise {sys.noise_frobenius:.3g} exceeds the class bound {cls.eps:.3g}")
    norms = row_group_norms(sys.x_star_tilde)
    supp = norms > 0
    if int(np.sum(supp)) > cls.s:
        raise CertificationRefused(f"true support has {int(np.sum(supp))} rows > s = {cls.s}")
    on = norms[supp]
    if on.size and (np.min(on) < cls.mu_lo * (1 - 1e-12) or np.max(on) > cls.mu_hi * (1 + 1e-12)):
        raise CertificationRefused("row norms on the support fall outside [mu_lo, mu_hi]")


def schedule(k: int, theta: float, tc: TheoremConstants) -> tuple[float, float]:
    """``(eta_k, beta_k)`` of the certified schedule for layer ``k``."""
    beta = 0.0 if k <= tc.k0 else tc.beta_hat
    if theta <= 0.0:
        return 0.0, beta
    eta = 1.0 / (4.0 * theta) if k <= tc.k0 - 1 else 1.0 / (2.0 * theta)
    return eta, beta


def certified_run(sys: RealizedSystem, b, tc: TheoremConstants, cls: SignalClass, K: int) -> CertifiedTrace:
    _check_instance(sys, tc, cls)
    s_t, y, x_star = sys.s_tilde, sys.y_tilde, sys.x_star_tilde
    x = np.zeros_like(x_star)
    x_prev = x
    out = CertifiedTrace([x], [], [], [], [row_support(x)], [float(np.linalg.norm(x - x_star))])
    for k in range(K):
        theta = oracle_theta(x, x_star, tc, cls.eps)
        eta, beta = schedule(k, theta, tc)
        v = x + b @ (y - s_t @ x)
        if k >= 1:
            v = v + beta * (x - x_prev)
        norms = np.linalg.norm(v, axis=1)
        new = shrink_magnitude(norms, theta, eta)
        scale = np.divide(new, norms, out=np.zeros_like(norms), where=norms > 0)
        x_prev, x = x, v * scale[:, None]
        out.iterates.append(x)
        out.thetas.append(theta)
        out.etas.append(eta)
        out.betas.append(beta)
        out.supports.append(row_support(x))
        out.errors.append(float(np.linalg.norm(x - x_star)))
    return out


@dataclass
class TraceReport:
    containment: list
    bound_ok: list
    slope: float | None
    errors: list = field(default_factory=list)
    bounds: list = field(default_factory=list)

    @property
    def all_contained(self) -> bool:
        return all(self.containment)

    @property
    def all_bounded(self) -> bool:
        return all(self.bound_ok)

    def first_violation(self, kind: str = "containment") -> int | None:
        flags = self.containment if kind == "containment" else self.bound_ok
        for k, ok in enumerate(flags):
            if not ok:
                return k
        return None

    def to_dict(self):
        return {
            "containment": self.containment,
            "bound_ok": self.bound_ok,
            "slope": self.slope,
            "slope_defined": self.slope is not None,
            "errors": self.errors,
            "bounds": self.bounds,
        }


def check_trace(trace, x_star, tc: TheoremConstants, cls: SignalClass) -> TraceReport:
    """Check support containment and the error bound at every layer.

    ``slope`` is the least-squares slope of ``log ||X^k - X*||_F`` over the
    layers whose error still exceeds ten times the noise floor (``None`` when
    fewer than two such layers exist).
    """
    iterates = trace.iterates if isinstance(trace, CertifiedTrace) else list(trace)
    if not iterates:
        raise ValueError("empty trace")
    x_star = np.asarray(x_star)
    true_supp = row_support(x_star)
    floor = (1 + cls.s) * tc.mu_b * cls.eps / (1.0 - tc.c_phis)
    containment, bound_ok, errors, bounds = [], [], [], []
    for k, x in enumerate(iterates):
        err = float(np.linalg.norm(x - x_star))
        bound = tc.error_bound(k, cls.s, cls.eps)
        containment.append(row_support(x) <= true_supp)
        bound_ok.append(err <= bound * (1 + BOUND_RTOL))
        errors.append(err)
        bounds.append(bound)
    scale = max(float(np.linalg.norm(x_star)), 1e-300)
    ks = [k for k, e in enumerate(errors) if e > max(10.0 * floor, 1e-12 * scale)]
    slope = None
    if len(ks) >= 2:
        slope = float(np.polyfit(ks, np.log([errors[k] for k in ks]), 1)[0])
    return TraceReport(containment, bound_ok, slope, errors, bounds)


def theorem_instance(s_tilde, cls: SignalClass, rng: np.random.Generator, M: int,
                     support_size: int | None = None, noise_fro: float | None = None) -> RealizedSystem:
    """Random member of the signal class: ``s`` nonzero rows with norms in ``[mu_lo, mu_hi]``.

    ``noise_fro`` defaults to ``cls.eps`` (the largest admissible noise).
    """
    n2 = s_tilde.shape[1]
    size = cls.s if support_size is None else support_size
    x = np.zeros((n2, M))
    rows = rng.choice(n2, size=size, replace=False)
    for i in rows:
        d = rng.standard_normal(M)
        x[i] = d / np.linalg.norm(d) * rng.uniform(cls.mu_lo, cls.mu_hi)
    z = rng.standard_normal((s_tilde.shape[0], M))
    target = cls.eps if noise_fro is None else noise_fro
    z = z / np.linalg.norm(z) * target if target > 0 else np.zeros_like(z)
    return RealizedSystem.from_arrays(s_tilde, s_tilde @ x + z, x, float(np.linalg.norm(z)))


def low_coherence_pilot(L: int, N: int) -> np.ndarray:
    """Identity followed by ``N - L`` unit-modulus DFT columns (coherence ``1/sqrt(L)``)."""
    if not L < N <= 2 * L:
        raise ValueError("need L < N <= 2L")
    f = np.fft.fft(np.eye(L)) / math.sqrt(L)
    return np.concatenate([np.eye(L, dtype=complex), f[:, : N - L]], axis=1)


def certify(s_tilde, d, b, cls_template: SignalClass, instances: int, M: int, rng,
            extra_layers: int = 20, eps_fraction: float = 1.0):
    """Constants plus ``(reports, traces)`` for ``instances`` random class members.

    The class noise bound is set to ``eps_fraction * eps_max``.
    """
    tc = compute_constants(d, b, cls_template)
    cls = SignalClass(cls_template.mu_lo, cls_template.mu_hi, cls_template.s, eps_fraction * tc.eps_max)
    K = tc.k0 + extra_layers
    reports, traces = [], []
    for _ in range(instances):
        sys = theorem_instance(s_tilde, cls, rng, M)
        tr = certified_run(sys, b, tc, cls, K)
        reports.append(check_trace(tr, sys.x_star_tilde, tc, cls))
        traces.append((sys, tr))
    return tc, cls, reports, traces


def theory_report(pilot_len: int = 32, n_devices: int = 40, n_antennas: int = 4, s: int = 3,
                  mu_lo: float = 1.0, mu_hi: float = 1.0, eps_fraction: float = 1.0,
                  instances: int = 100, extra_layers: int = 20, tau: float = 1.0,
                  steps: int = 2000, seed: int = 0) -> dict:
    """Certification report (JSON-ready) on the low-coherence pilot.

    The symmetric dictionary is optimized for the lifted pilot and the
    coherence is taken from its effective ``D = G S``.
    """
    from .core import lift_dictionary
    from .dictionary import solve_symmetric_dictionary

    s_tilde = lift_dictionary(low_coherence_pilot(pilot_len, n_devices))
    factors, dic = solve_symmetric_dictionary(s_tilde, tau, steps)
    rng = np.random.default_rng(seed)
    tc, cls, reports, _ = certify(s_tilde, factors.d, dic.b, SignalClass(mu_lo, mu_hi, s), instances,
                                  n_antennas, rng, extra_layers, eps_fraction)
    slopes = [r.slope for r in reports if r.slope is not None]
    return {
        "constants": tc.to_dict(),
        "signal_class": asdict(cls),
        "layers": tc.k0 + extra_layers,
        "theta_rule": "per-instance oracle: phi*||X^k - X*||_{2,1} + mu_B*eps",
        "instance_meta": {"pilot_len": pilot_len, "n_devices": n_devices, "n_antennas": n_antennas,
                          "seed": seed, "lifted_shape": list(s_tilde.shape)},
        "instances": [
            {"containment": r.containment, "bound_ok": r.bound_ok, "slope": r.slope} for r in reports
        ],
        "summary": {
            "instances": len(reports),
            "containment_all": all(r.all_contained for r in reports),
            "bound_all": all(r.all_bounded for r in reports),
            "containment_count": sum(r.all_contained for r in reports),
            "bound_count": sum(r.all_bounded for r in reports),
            "mean_slope": float(np.mean(slopes)) if slopes else None,
            "log_contraction": math.log(tc.c_phis) if tc.c_phis > 0 else None,
        },
    }
