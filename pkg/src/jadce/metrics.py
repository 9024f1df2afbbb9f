"""Recovery metrics: NMSE in dB and device-level detection errors."""
from __future__ import annotations

import numpy as np

NMSE_FLOOR_DB = -150.0


class MetricError(ValueError):
    pass


def _sq(a):
    a = np.asarray(a, dtype=float)
    return float(np.sum(a * a))


def nmse_db(estimates, truths, per_sample: bool = False) -> float:
    """``10 log10(sum ||X_hat - X*||^2 / sum ||X*||^2)``, floored at -150 dB.

    ``estimates``/``truths`` are equal-length sequences of matrices or two
    ``(rows, batch, cols)`` stacks. ``per_sample`` averages per-sample ratios
    instead of taking the ratio of sums.
    """
    if isinstance(estimates, np.ndarray) and estimates.ndim == 3:
        est = np.moveaxis(estimates, 1, 0)
        tru = np.moveaxis(np.asarray(truths), 1, 0)
    else:
        est, tru = list(estimates), list(truths)
    if len(est) != len(tru) or len(est) == 0:
        raise MetricError("estimates and truths must be nonempty and of equal length")
    if per_sample:
        ratios = []
        for e, t in zip(est, tru):
            den = _sq(t)
            if den > 0:
                ratios.append(_sq(np.asarray(e) - t) / den)
        if not ratios:
            raise MetricError("NMSE undefined: every ground truth is zero")
        ratio = float(np.mean(ratios))
    else:
        err = sum(_sq(np.asarray(e) - t) for e, t in zip(est, tru))
        den = sum(_sq(t) for t in tru)
        if den == 0:
            raise MetricError("NMSE undefined: every ground truth is zero")
        ratio = err / den
    if ratio <= 0:
        return NMSE_FLOOR_DB
    return max(10.0 * np.log10(ratio), NMSE_FLOOR_DB)


def nmse_from_sums(err: float, ref: float) -> float:
    """``10 log10(err / ref)`` floored at -150 dB."""
    if ref == 0:
        raise MetricError("NMSE undefined: every ground truth is zero")
    ratio = err / ref
    if ratio <= 0:
        return NMSE_FLOOR_DB
    return max(10.0 * np.log10(ratio), NMSE_FLOOR_DB)


def nmse_db_stack(x_hat: np.ndarray, x_star: np.ndarray) -> float:
    """Ratio-of-sums NMSE for two equally shaped stacks (fast path)."""
    d = x_hat - x_star
    return nmse_from_sums(float(np.sum(d * d)), float(np.sum(x_star * x_star)))


def device_norms(x_hat_tilde: np.ndarray) -> np.ndarray:
    """Combined norm of the real/imaginary row pair of each device."""
    x = np.asarray(x_hat_tilde, dtype=float)
    n = x.shape[0] // 2
    sq = np.sum(x * x, axis=-1)
    return np.sqrt(sq[:n] + sq[n:])


def largest_gap_threshold(norms: np.ndarray) -> float:
    """Midpoint of the largest gap between consecutive sorted norms."""
    v = np.sort(np.asarray(norms, dtype=float))
    if v.size < 2:
        return 0.0
    gaps = np.diff(v)
    i = int(np.argmax(gaps))
    return float(0.5 * (v[i] + v[i + 1]))


def activity_metrics(x_hat_tilde, true_activity, threshold: float | None = None):
    """``(missed, false_alarm)`` counts; ``threshold=None`` uses the largest gap."""
    norms = device_norms(x_hat_tilde)
    if threshold is None:
        threshold = largest_gap_threshold(norms)
    if threshold < 0:
        raise MetricError("threshold must be nonnegative")
    declared = norms > threshold
    truth = np.asarray(true_activity, dtype=bool)
    missed = int(np.sum(truth & ~declared))
    false_alarm = int(np.sum(~truth & declared))
    return missed, false_alarm
