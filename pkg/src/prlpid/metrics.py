"""Tracking-quality metrics on sampled error sequences.

ISE and IAE are Riemann sums scaled by the sample time over half-open index
intervals ``[k_lo, k_hi)``, so adjacent intervals add up exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NOT_SETTLED = None


@dataclass(frozen=True)
class IntervalMetrics:
    k_lo: int
    k_hi: int
    ise: float
    iae: float


def interval_metrics(errors, k_lo, k_hi, ts) -> IntervalMetrics:
    e = np.asarray(errors, dtype=float)
    if not 0 <= k_lo < k_hi <= e.size:
        raise ValueError(f"interval [{k_lo}, {k_hi}) is empty or outside a trace of {e.size} steps")
    seg = e[k_lo:k_hi]
    return IntervalMetrics(int(k_lo), int(k_hi), float(np.sum(seg * seg) * ts), float(np.sum(np.abs(seg)) * ts))


def compute_metrics(errors, intervals, ts):
    """Per-interval ISE/IAE for the error sequence ``errors``."""
    return [interval_metrics(errors, lo, hi, ts) for lo, hi in intervals]


def overshoot(y, setpoint, y0=0.0):
    """Fractional overshoot past ``setpoint``, measured in the direction of the step."""
    y = np.asarray(y, dtype=float)
    if setpoint == 0:
        return 0.0
    direction = 1.0 if setpoint >= y0 else -1.0
    peak = np.max(direction * y) if y.size else direction * setpoint
    return float(max(0.0, peak - direction * setpoint) / abs(setpoint))


def settling_time(errors, setpoint, ts, band=0.02):
    """First time after which ``|e|`` stays inside ``band * |setpoint|``; None if never."""
    e = np.abs(np.asarray(errors, dtype=float))
    tol = band * abs(setpoint) if setpoint != 0 else band
    outside = np.flatnonzero(~(e < tol))
    if outside.size == 0:
        return 0.0
    last = int(outside[-1])
    if last == e.size - 1:
        return NOT_SETTLED
    return (last + 1) * ts


def steady_state_error(errors, window):
    """Mean absolute error over the last ``window`` samples."""
    e = np.asarray(errors, dtype=float)
    if window < 1 or e.size == 0:
        raise ValueError("steady-state error needs a nonempty trace and window >= 1")
    return float(np.mean(np.abs(e[-window:])))
