"""Discrete PID law in gain / integral-time / derivative-time form.

    u(k) = kp * (e(k) + S(k) / tau_i + tau_d * (e(k) - e(k-1)) / dt)

with ``S(k)`` the running sum of ``e * dt`` *including* the current sample.
The derivative acts on the error, so setpoint steps produce a derivative kick.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .exceptions import ControllerFault


@dataclass(frozen=True)
class PidGains:
    kp: float
    tau_i: float
    tau_d: float

    def __post_init__(self):
        if self.kp < 0:
            raise ValueError("kp must be nonnegative")
        if not self.tau_i > 0:
            raise ValueError("tau_i must be positive")
        if self.tau_d < 0:
            raise ValueError("tau_d must be nonnegative")


@dataclass(frozen=True)
class PidState:
    integral_sum: float = 0.0
    prev_error: float = 0.0


@dataclass(frozen=True)
class SaturationLimits:
    u_min: float = -10.0
    u_max: float = 10.0

    def __post_init__(self):
        if not self.u_min < self.u_max:
            raise ValueError("u_min must be below u_max")


@dataclass(frozen=True)
class CouplingCoeffs:
    c_rp: float = 0.0
    c_ry: float = 0.0
    c_pr: float = 0.0
    c_py: float = 0.0
    c_yr: float = 0.0
    c_yp: float = 0.0

    def clamped(self, bound):
        return CouplingCoeffs(*(min(max(v, -bound), bound) for v in self.as_tuple()))

    def as_tuple(self):
        return (self.c_rp, self.c_ry, self.c_pr, self.c_py, self.c_yr, self.c_yp)


def pid_step(gains: PidGains, e, state: PidState, dt, anti_windup_limits=None):
    """One PID evaluation. Returns ``(u, new_state)``.

    ``anti_windup_limits`` (optional :class:`SaturationLimits`) stops the
    integral from accumulating while the unclamped output is beyond them.
    """
    if not math.isfinite(e):
        raise ControllerFault(f"non-finite error {e!r}")
    integral = state.integral_sum + e * dt
    u = gains.kp * (e + integral / gains.tau_i + gains.tau_d * (e - state.prev_error) / dt)
    if anti_windup_limits is not None and not (
        anti_windup_limits.u_min <= u <= anti_windup_limits.u_max
    ):
        integral = state.integral_sum
    return u, PidState(integral, e)


def saturate(u, limits: SaturationLimits):
    return min(max(u, limits.u_min), limits.u_max)


def coupled_errors(refs, measured, c: CouplingCoeffs):
    phi_ref, theta_ref, psi_ref = refs
    phi, theta, psi = measured
    return (
        (phi_ref - phi) + c.c_rp * theta + c.c_ry * psi,
        (theta_ref - theta) + c.c_pr * phi + c.c_py * psi,
        (psi_ref - psi) + c.c_yr * phi + c.c_yp * theta,
    )


def cross_axis_control(gains, c: CouplingCoeffs, refs, measured, states, dt):
    """Per-axis PID on the cross-coupled errors. Returns ``(u_roll, u_pitch, u_yaw, states)``."""
    errors = coupled_errors(refs, measured, c)
    outputs = []
    new_states = []
    for g, e, s in zip(gains, errors, states):
        u, s2 = pid_step(g, e, s, dt)
        outputs.append(u)
        new_states.append(s2)
    return outputs[0], outputs[1], outputs[2], tuple(new_states)
