"""Forward passes of the unfolded networks.

Layer ``k`` computes

    V = X^k + gamma_k W (Y - S X^k) [+ beta_k (X^k - X^{k-1}) for k >= 1, ALPGM_MM]
    X^{k+1} = prox(V)

with ``W = B`` (analytic dictionary) or ``W = S^T`` for STEP_LPGM. The prox is
the row-wise MCP operator, except for ALISTA_GS which uses group soft
thresholding.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .core import RealizedSystem, apply_left
from .dictionary import SYMMETRIC, AnalyticDictionary
from .prox import check_params, rows_prox_forward

ALPGM = "ALPGM"
ALPGM_MM = "ALPGM_MM"
ALISTA_GS = "ALISTA_GS"
STEP_LPGM = "STEP_LPGM"
VARIANTS = (ALPGM, ALPGM_MM, ALISTA_GS, STEP_LPGM)

DEFAULT_LAYERS = 16


@dataclass(frozen=True)
class LayerParams:
    gamma: float
    theta: float
    eta: float
    beta: float = 0.0

    def validate(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.beta < 0:
            raise ValueError(f"beta must be nonnegative, got {self.beta}")
        check_params(self.theta, self.eta)
        return self

    def as_tuple(self):
        return (self.gamma, self.theta, self.eta, self.beta)


@dataclass
class UnfoldedNetwork:
    variant: str
    layers: list
    dictionary: AnalyticDictionary | None = None
    dictionary_ref: str | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if not self.layers:
            raise ValueError("a network needs at least one layer")
        if self.variant != STEP_LPGM and self.dictionary is None:
            raise ValueError(f"{self.variant} needs an analytic dictionary")
        if self.variant == ALPGM_MM and self.dictionary.source != SYMMETRIC:
            raise ValueError("ALPGM_MM requires the symmetric dictionary")
        for p in self.layers:
            p.validate()

    @property
    def K(self) -> int:
        return len(self.layers)

    def weight(self, s_tilde: np.ndarray) -> np.ndarray:
        return s_tilde.T if self.variant == STEP_LPGM else self.dictionary.b

    def with_layers(self, layers) -> "UnfoldedNetwork":
        return replace(self, layers=list(layers))

    def to_record(self) -> dict:
        return {
            "variant": self.variant,
            "K": self.K,
            "layers": [asdict(p) for p in self.layers],
            "dictionary": self.dictionary_ref,
        }

    @classmethod
    def from_record(cls, rec: dict, dictionary: AnalyticDictionary | None) -> "UnfoldedNetwork":
        layers = [LayerParams(**p) for p in rec["layers"]]
        if len(layers) != rec.get("K", len(layers)):
            raise ValueError("layer count does not match K")
        return cls(rec["variant"], layers, dictionary, rec.get("dictionary"))


def uses_momentum(variant: str) -> bool:
    return variant == ALPGM_MM


def is_soft(variant: str) -> bool:
    return variant == ALISTA_GS


def forward_arrays(variant, layers, w, s_tilde, y, trace=False, keep_cache=False):
    """Run the recurrence on a ``(2L, M)`` observation or a ``(2L, batch, M)`` stack.

    Returns ``(x_final, iterates, caches)``; ``iterates`` holds ``X^0..X^K``
    when ``trace`` (or ``keep_cache``) is set, ``caches`` the per-layer
    pre-activation data needed by the backward pass.
    """
    x = np.zeros((s_tilde.shape[1],) + y.shape[1:])
    x_prev = x
    keep = trace or keep_cache
    iterates = [x] if keep else None
    caches = [] if keep_cache else None
    soft = is_soft(variant)
    mom = uses_momentum(variant)
    for k, p in enumerate(layers):
        resid = y - apply_left(s_tilde, x)
        grad_term = apply_left(w, resid)
        v = x + p.gamma * grad_term
        diff = None
        if mom and k >= 1:
            diff = x - x_prev
            v = v + p.beta * diff
        x_new, pc = rows_prox_forward(v, p.theta, 0.0 if soft else p.eta, soft=soft)
        if keep_cache:
            caches.append((v, pc, grad_term, diff))
        x_prev, x = x, x_new
        if keep:
            iterates.append(x)
    return x, iterates, caches


def forward(net: UnfoldedNetwork, sys: RealizedSystem, trace: bool = False):
    """Final iterate ``X^K``; with ``trace`` also the list ``[X^0, ..., X^K]``."""
    x, iterates, _ = forward_arrays(net.variant, net.layers, net.weight(sys.s_tilde),
                                    sys.s_tilde, sys.y_tilde, trace=trace)
    return (x, iterates) if trace else x


def forward_batch(net: UnfoldedNetwork, s_tilde, y_stack, trace: bool = False):
    x, iterates, _ = forward_arrays(net.variant, net.layers, net.weight(s_tilde), s_tilde,
                                    y_stack, trace=trace)
    return (x, iterates) if trace else x


def initial_layers(K: int, variant: str = ALPGM, gamma: float = 1.0, theta: float = 0.1) -> list:
    """PGM operating point: gamma=1, theta=lambda*gamma, eta=1/(4 theta), beta=0."""
    eta = 0.0 if variant == ALISTA_GS else 1.0 / (4.0 * theta)
    return [LayerParams(gamma, theta, eta, 0.0) for _ in range(K)]
