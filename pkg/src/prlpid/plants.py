"""Discrete-time plant simulators.

Every benchmark system is wrapped in a :class:`PlantModel` and advanced with
:func:`step_plant`, so the reward forecaster can reuse the exact stepping
function of the plant as its model prior.

Conventions
-----------
* ``y(k)`` is measured from the state *before* ``u(k)`` is applied.
* Linear plants are discretized with an exact zero-order hold.
* The two-tank and quadrotor plants use fixed-step RK4 over one sample.
* The time-varying first-order plant uses forward Euler.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg, signal

from .exceptions import SimulationDiverged

MAX_LTI_ORDER = 4


class PlantKind(str, enum.Enum):
    LTI_ZOH = "lti_zoh"
    TIME_VARYING = "time_varying_first_order"
    TWO_TANK = "two_tank"
    QUADROTOR = "quadrotor"


@dataclass(frozen=True, eq=False)
class LtiParams:
    numerator: tuple
    denominator: tuple
    a_cont: np.ndarray
    b_cont: np.ndarray
    c: np.ndarray
    d: float
    a_disc: np.ndarray
    b_disc: np.ndarray


@dataclass(frozen=True)
class TimeVaryingParams:
    """Pole trajectory ``a(t) = offset + amplitude * (sin(2*pi*freq*t) + 1)``."""

    offset: float = 0.5
    amplitude: float = 0.25
    freq: float = 0.1


@dataclass(frozen=True)
class Disturbance:
    k: int
    kind: str  # "pulse" | "step"
    magnitude: float

    def __post_init__(self):
        if self.kind not in ("pulse", "step"):
            raise ValueError(f"unknown disturbance kind {self.kind!r}")


@dataclass(frozen=True)
class TwoTankParams:
    area1: float = 1.0
    area2: float = 1.0
    k1: float = 0.5
    k2: float = 0.5
    noise_std: float = 0.01
    disturbance_schedule: tuple = ()
    substeps: int = 1

    def __post_init__(self):
        if self.area1 <= 0 or self.area2 <= 0:
            raise ValueError("tank areas must be positive")
        if self.k1 < 0 or self.k2 < 0:
            raise ValueError("valve coefficients must be nonnegative")
        if self.noise_std < 0:
            raise ValueError("noise_std must be nonnegative")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")


@dataclass(frozen=True)
class QuadrotorParams:
    ix: float = 0.4
    iy: float = 0.4
    iz: float = 0.8
    substeps: int = 1

    def __post_init__(self):
        if min(self.ix, self.iy, self.iz) <= 0:
            raise ValueError("moments of inertia must be positive")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")


@dataclass(frozen=True, eq=False)
class PlantModel:
    kind: PlantKind
    state_dim: int
    input_dim: int
    output_dim: int
    ts: float
    params: object = field(repr=False)

    def __post_init__(self):
        if not self.ts > 0:
            raise ValueError("sampling period must be positive")
        if min(self.state_dim, self.input_dim, self.output_dim) < 1:
            raise ValueError("plant dimensions must be >= 1")

    def nominal(self) -> PlantModel:
        """Copy with process noise and disturbances stripped (the forecast prior)."""
        if self.kind is PlantKind.TWO_TANK:
            return replace(self, params=replace(self.params, noise_std=0.0, disturbance_schedule=()))
        return self


def zoh_discretize(a, b, ts):
    """Exact zero-order-hold discretization via the block matrix exponential."""
    n, m = b.shape
    block = np.zeros((n + m, n + m))
    block[:n, :n] = a
    block[:n, n:] = b
    phi = linalg.expm(block * ts)
    return phi[:n, :n], phi[:n, n:]


def make_lti_plant(numerator, denominator, ts) -> PlantModel:
    """Build a SISO plant from transfer-function coefficients (descending powers of s)."""
    num = np.trim_zeros(np.atleast_1d(np.asarray(numerator, dtype=float)), "f")
    den = np.atleast_1d(np.asarray(denominator, dtype=float))
    if den.size == 0 or den[0] == 0.0:
        raise ValueError("leading denominator coefficient must be nonzero")
    if num.size == 0:
        num = np.zeros(1)
    order = den.size - 1
    if num.size - 1 > order:
        raise ValueError("improper transfer function: numerator degree exceeds denominator degree")
    if order > MAX_LTI_ORDER:
        raise ValueError(f"transfer function order {order} exceeds {MAX_LTI_ORDER}")
    if order < 1:
        raise ValueError("static gains are not plants; denominator degree must be >= 1")
    a, b, c, d = signal.tf2ss(num, den)
    a_disc, b_disc = zoh_discretize(a, b, ts)
    params = LtiParams(
        numerator=tuple(float(v) for v in num),
        denominator=tuple(float(v) for v in den),
        a_cont=a,
        b_cont=b,
        c=np.asarray(c, dtype=float).reshape(1, -1),
        d=float(np.asarray(d).ravel()[0]),
        a_disc=a_disc,
        b_disc=b_disc,
    )
    return PlantModel(PlantKind.LTI_ZOH, order, 1, 1, float(ts), params)


def make_time_varying_plant(ts, params: TimeVaryingParams | None = None) -> PlantModel:
    return PlantModel(PlantKind.TIME_VARYING, 1, 1, 1, float(ts), params or TimeVaryingParams())


def make_two_tank_plant(ts, params: TwoTankParams | None = None) -> PlantModel:
    return PlantModel(PlantKind.TWO_TANK, 2, 1, 1, float(ts), params or TwoTankParams())


def make_quadrotor_plant(ts, params: QuadrotorParams | None = None) -> PlantModel:
    # state: (phi, theta, psi, phi_dot, theta_dot, psi_dot)
    return PlantModel(PlantKind.QUADROTOR, 6, 3, 3, float(ts), params or QuadrotorParams())


def time_varying_pole(t, params: TimeVaryingParams | None = None) -> float:
    p = params or TimeVaryingParams()
    return p.offset + p.amplitude * (math.sin(2.0 * math.pi * p.freq * t) + 1.0)


def apply_disturbance(schedule, k, u_nominal):
    """Add every disturbance active at step ``k`` to the nominal input."""
    u = u_nominal
    for dist in schedule:
        if (dist.kind == "pulse" and k == dist.k) or (dist.kind == "step" and k >= dist.k):
            u = u + dist.magnitude
    return u


def two_tank_derivative(h, q_in, p: TwoTankParams):
    flow12 = p.k1 * math.sqrt(max(h[0] - h[1], 0.0))
    flow_out = p.k2 * math.sqrt(max(h[1], 0.0))
    return np.array([(q_in - flow12) / p.area1, (flow12 - flow_out) / p.area2])


def quadrotor_derivative(x, torque, p: QuadrotorParams):
    rp, rq, rr = x[3], x[4], x[5]
    return np.array([
        rp,
        rq,
        rr,
        (p.iy - p.iz) / p.ix * rq * rr + torque[0] / p.ix,
        (p.iz - p.ix) / p.iy * rp * rr + torque[1] / p.iy,
        (p.ix - p.iy) / p.iz * rp * rq + torque[2] / p.iz,
    ])


def rk4(f, x, h, substeps=1):
    """Integrate the autonomous field ``f`` over ``h`` with ``substeps`` RK4 steps."""
    dt = h / substeps
    for _ in range(substeps):
        k1 = f(x)
        k2 = f(x + 0.5 * dt * k1)
        k3 = f(x + 0.5 * dt * k2)
        k4 = f(x + dt * k3)
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return x


def measure(model: PlantModel, state, rng=None) -> np.ndarray:
    """Measured output of ``state``; two-tank adds sensor noise when ``rng`` is given."""
    kind = model.kind
    if kind is PlantKind.LTI_ZOH:
        return model.params.c @ state
    if kind is PlantKind.TIME_VARYING:
        return state[:1].copy()
    if kind is PlantKind.TWO_TANK:
        y = state[1:2].copy()
        if rng is not None and model.params.noise_std > 0:
            y = y + rng.normal(0.0, model.params.noise_std, size=1)
        return y
    return state[:3].copy()


def step_plant(model: PlantModel, state, u, k, rng=None):
    """Advance one sample. Returns ``(next_state, y)`` with ``y`` measured pre-step.

    ``rng`` drives the two-tank actuator noise; pass ``None`` for a noiseless step.
    """
    state = np.asarray(state, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if state.shape != (model.state_dim,) or u.shape != (model.input_dim,):
        raise ValueError(
            f"expected state ({model.state_dim},) and input ({model.input_dim},), "
            f"got {state.shape} and {u.shape}"
        )
    if not (np.isfinite(state).all() and np.isfinite(u).all()):
        raise SimulationDiverged(k)

    y = measure(model, state)
    kind = model.kind
    p = model.params
    if kind is PlantKind.LTI_ZOH:
        x_next = p.a_disc @ state + p.b_disc @ u
    elif kind is PlantKind.TIME_VARYING:
        a = time_varying_pole(k * model.ts, p)
        x_next = state + model.ts * (a * state + u)
    elif kind is PlantKind.TWO_TANK:
        q_in = apply_disturbance(p.disturbance_schedule, k, float(u[0]))
        if rng is not None and p.noise_std > 0:
            q_in += rng.normal(0.0, p.noise_std)
        x_next = rk4(lambda h: two_tank_derivative(h, q_in, p), state, model.ts, p.substeps)
        x_next = np.maximum(x_next, 0.0)
    else:
        x_next = rk4(lambda x: quadrotor_derivative(x, u, p), state, model.ts, p.substeps)

    if not np.isfinite(x_next).all():
        raise SimulationDiverged(k)
    return x_next, y
