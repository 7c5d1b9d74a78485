"""Hierarchical tracking reward and the N-step model-based reward forecast.

The single-step reward on a pair of consecutive errors ``(e_k, e_next)`` is::

    V = e^2 / 2
    r = -relu(V_next - V_k) - alpha * min(V_k, clip_hi) - beta * min(|e_k|, clip_hi) + bonus(e_k)

where ``bonus(e) = bonus_scale / (|e| + bonus_offset)`` inside ``|e| < bonus_threshold``.

The forecast freezes the current PID gains and setpoint, rolls the nominal
plant model forward ``N`` samples from copies of the plant and controller
state, and averages the ``N`` single-step rewards along that prediction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import SimulationDiverged
from .pid import CouplingCoeffs, PidGains, PidState, SaturationLimits, cross_axis_control, pid_step, saturate
from .plants import PlantModel, measure, step_plant


@dataclass(frozen=True)
class RewardConfig:
    alpha: float = 0.5
    beta: float = 0.5
    clip_hi: float = 1.0
    bonus_threshold: float = 0.05
    bonus_scale: float = 0.1
    bonus_offset: float = 0.05

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be nonnegative")
        if not self.clip_hi > 0:
            raise ValueError("clip_hi must be positive")
        if not self.bonus_threshold > 0:
            raise ValueError("bonus_threshold must be positive")

    @property
    def max_reward(self):
        return self.bonus_scale / self.bonus_offset


@dataclass(frozen=True)
class ForecastConfig:
    horizon_n: int = 3
    enabled: bool = True

    def __post_init__(self):
        if self.horizon_n < 1:
            raise ValueError("horizon_n must be >= 1")


def steady_state_bonus(e, cfg: RewardConfig) -> float:
    mag = abs(e)
    if mag < cfg.bonus_threshold:
        return cfg.bonus_scale / (mag + cfg.bonus_offset)
    return 0.0


def hierarchical_reward(e_k, e_next, cfg: RewardConfig) -> float:
    v_k = 0.5 * e_k * e_k
    dv = 0.5 * e_next * e_next - v_k
    return (
        -max(dv, 0.0)
        - cfg.alpha * min(v_k, cfg.clip_hi)
        - cfg.beta * min(abs(e_k), cfg.clip_hi)
        + steady_state_bonus(e_k, cfg)
    )


def forecast_rollout(
    model: PlantModel,
    plant_state,
    pid: PidGains,
    pid_state: PidState,
    setpoint,
    k,
    fcfg: ForecastConfig,
    rcfg: RewardConfig,
    limits: SaturationLimits | None = None,
    e_now=None,
    control_sign=1.0,
):
    """Predicted rewards along the frozen-gain rollout.

    ``pid_state`` is the controller memory *before* ``u(k)`` is computed, so
    the first predicted input reproduces the one the real loop applies.
    ``e_now`` overrides the error at step ``k`` (e.g. a noisy measurement);
    ``control_sign=-1`` makes the controller reverse-acting.
    Returns ``(rewards, diverged)``; a divergence truncates the list.
    """
    nominal = model.nominal()
    x = np.array(plant_state, dtype=float)
    e = float(setpoint - measure(nominal, x)[0]) if e_now is None else float(e_now)
    state = pid_state
    rewards = []
    for i in range(fcfg.horizon_n):
        u, state = pid_step(pid, e, state, model.ts)
        u = control_sign * u
        if limits is not None:
            u = saturate(u, limits)
        try:
            x, _ = step_plant(nominal, x, [u], k + i)
        except SimulationDiverged:
            return rewards, True
        e_next = float(setpoint - measure(nominal, x)[0])
        if not math.isfinite(e_next):
            return rewards, True
        rewards.append(hierarchical_reward(e, e_next, rcfg))
        e = e_next
    return rewards, False


def forecast_reward(model, plant_state, pid, pid_state, setpoint, k, fcfg, rcfg,
                    limits=None, e_now=None, divergence_penalty=-10.0, control_sign=1.0) -> float:
    """Mean predicted reward over the forecast horizon (side-effect free)."""
    rewards, _ = forecast_rollout(model, plant_state, pid, pid_state, setpoint, k, fcfg, rcfg,
                                  limits, e_now, control_sign)
    if not rewards:
        return divergence_penalty
    return sum(rewards) / len(rewards)


def axis_mean_reward(errors, next_errors, cfg: RewardConfig) -> float:
    return sum(hierarchical_reward(a, b, cfg) for a, b in zip(errors, next_errors)) / len(errors)


def forecast_rollout_coupled(
    model: PlantModel,
    plant_state,
    gains,
    coupling: CouplingCoeffs,
    pid_states,
    refs,
    k,
    fcfg: ForecastConfig,
    rcfg: RewardConfig,
    limits: SaturationLimits | None = None,
):
    """Quadrotor analogue of :func:`forecast_rollout`; per-step rewards are axis means.

    Rewards use the plain tracking errors; the coupling only shapes the control.
    """
    x = np.array(plant_state, dtype=float)
    y = measure(model, x)
    e = [r - v for r, v in zip(refs, y)]
    states = tuple(pid_states)
    rewards = []
    for i in range(fcfg.horizon_n):
        *u, states = cross_axis_control(gains, coupling, refs, y, states, model.ts)
        if limits is not None:
            u = [saturate(v, limits) for v in u]
        try:
            x, _ = step_plant(model, x, u, k + i)
        except SimulationDiverged:
            return rewards, True
        y = measure(model, x)
        e_next = [r - v for r, v in zip(refs, y)]
        rewards.append(axis_mean_reward(e, e_next, rcfg))
        e = e_next
    return rewards, False
