"""Agent/plant loop: observation -> smoothed action -> PID gains -> plant step -> reward.

One ``step`` call runs, in order: smoothing of the raw action, gain mapping,
the PID law on the current error, saturation, the optional reward forecast
(computed from the pre-step plant and controller state), and finally the
true plant step with noise and disturbances.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import SimulationDiverged
from .pid import (
    CouplingCoeffs,
    PidGains,
    PidState,
    SaturationLimits,
    cross_axis_control,
    pid_step,
    saturate,
)
from .plants import PlantKind, PlantModel, measure, step_plant
from .reward import (
    ForecastConfig,
    RewardConfig,
    axis_mean_reward,
    forecast_rollout,
    forecast_rollout_coupled,
    hierarchical_reward,
)
from .smoothing import ActionHistory, smooth

AXES = ("roll", "pitch", "yaw")


@dataclass(frozen=True)
class GainBounds:
    kp_range: tuple = (0.0, 10.0)
    tau_i_range: tuple = (0.1, 100.0)
    tau_d_range: tuple = (0.0, 5.0)
    coupling_range: tuple = (-1.0, 1.0)

    def __post_init__(self):
        for name in ("kp_range", "tau_i_range", "tau_d_range", "coupling_range"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ValueError(f"{name}: min must be below max")
        if self.tau_i_range[0] <= 0:
            raise ValueError("tau_i_range lower bound must be positive")
        if self.kp_range[0] < 0 or self.tau_d_range[0] < 0:
            raise ValueError("kp and tau_d bounds must be nonnegative")


@dataclass(frozen=True)
class SetpointPolicy:
    """``fixed``: constant ``value``; ``random``: uniform in ``[lo, hi]`` drawn at reset
    (and every ``resample_every`` steps if nonzero); ``schedule``: ``((k, value), ...)``
    with the last entry whose ``k`` has been reached in force."""

    kind: str = "fixed"
    value: float = 1.0
    lo: float = 0.0
    hi: float = 2.0
    schedule: tuple = ()
    resample_every: int = 0

    def __post_init__(self):
        if self.kind not in ("fixed", "random", "schedule"):
            raise ValueError(f"unknown setpoint policy {self.kind!r}")
        if self.kind == "random" and not self.lo <= self.hi:
            raise ValueError("random setpoint range needs lo <= hi")
        if self.kind == "schedule" and not self.schedule:
            raise ValueError("schedule setpoint policy needs at least one entry")


@dataclass(frozen=True)
class EpisodeConfig:
    length: int = 300
    setpoint: SetpointPolicy = field(default_factory=SetpointPolicy)
    initial_state: tuple | None = None
    noise: bool = True
    disturbances: bool = True
    divergence_bound: float = 200.0

    def __post_init__(self):
        if self.length < 1:
            raise ValueError("episode length must be >= 1")


def _unit_interval(a):
    return 0.5 * (math.tanh(a) + 1.0)


def _affine(a, rng):
    lo, hi = rng
    return min(max(lo + _unit_interval(a) * (hi - lo), lo), hi)


def _log_affine(a, rng):
    lo, hi = rng
    val = math.exp(math.log(lo) + _unit_interval(a) * (math.log(hi) - math.log(lo)))
    return min(max(val, lo), hi)


def map_action_to_gains(a_raw, bounds: GainBounds) -> PidGains:
    """tanh-squash each component onto its bound interval; tau_i on a log scale."""
    return PidGains(
        kp=_affine(float(a_raw[0]), bounds.kp_range),
        tau_i=_log_affine(float(a_raw[1]), bounds.tau_i_range),
        tau_d=_affine(float(a_raw[2]), bounds.tau_d_range),
    )


def map_action_to_coupling(a_raw, bounds: GainBounds) -> CouplingCoeffs:
    return CouplingCoeffs(*(_affine(float(v), bounds.coupling_range) for v in a_raw))


class SetpointGenerator:
    def __init__(self, policy: SetpointPolicy, n_axes=1):
        self.policy = policy
        self.n_axes = n_axes
        self.current = None

    def reset(self, rng):
        self.rng = rng
        self.current = self._draw()
        return self.current

    def _draw(self):
        p = self.policy
        if p.kind == "random":
            vals = self.rng.uniform(p.lo, p.hi, size=self.n_axes)
            return tuple(float(v) for v in vals)
        if p.kind == "fixed":
            v = p.value
            return tuple(float(x) for x in v) if isinstance(v, (tuple, list)) else (float(v),) * self.n_axes
        return self._scheduled(0)

    def _scheduled(self, k):
        value = self.policy.schedule[0][1]
        for k_i, v in self.policy.schedule:
            if k >= k_i:
                value = v
        return tuple(float(x) for x in value) if isinstance(value, (tuple, list)) else (float(value),) * self.n_axes

    def at(self, k):
        p = self.policy
        if p.kind == "schedule":
            self.current = self._scheduled(k)
        elif p.kind == "random" and p.resample_every and k > 0 and k % p.resample_every == 0:
            self.current = self._draw()
        return self.current


class _BaseEnv:
    obs_dim: int
    act_dim: int

    def __init__(self, model: PlantModel, episode: EpisodeConfig, reward_cfg: RewardConfig,
                 forecast_cfg: ForecastConfig, smoothing: ActionHistory, bounds: GainBounds,
                 limits: SaturationLimits, obs_scale=None, obs_clip=10.0,
                 divergence_penalty=-10.0, anti_windup=False, control_sign=1.0):
        self.base_model = model
        self.episode = episode
        self.reward_cfg = reward_cfg
        self.forecast_cfg = forecast_cfg
        self.smoothing = smoothing
        self.bounds = bounds
        self.limits = limits
        self.obs_scale = np.ones(self.obs_dim) if obs_scale is None else np.resize(
            np.asarray(obs_scale, dtype=float), self.obs_dim)
        self.obs_clip = obs_clip
        self.divergence_penalty = divergence_penalty
        self.anti_windup = anti_windup
        if control_sign not in (1.0, -1.0):
            raise ValueError("control_sign must be +1 or -1")
        self.control_sign = float(control_sign)
        model = model if episode.disturbances else _strip_disturbances(model)
        self.model = model
        self.noise_rng = None

    def _initial_state(self):
        if self.episode.initial_state is None:
            return np.zeros(self.model.state_dim)
        x0 = np.asarray(self.episode.initial_state, dtype=float)
        if x0.shape != (self.model.state_dim,):
            raise ValueError(f"initial_state must have {self.model.state_dim} entries")
        return x0.copy()

    def _normalize(self, raw):
        return np.clip(raw / self.obs_scale, -self.obs_clip, self.obs_clip)


def _strip_disturbances(model: PlantModel) -> PlantModel:
    if model.kind is PlantKind.TWO_TANK:
        return replace(model, params=replace(model.params, disturbance_schedule=()))
    return model


class PidEnv(_BaseEnv):
    """SISO loop. Observation ``(setpoint, y, e, e_rate)``; action ``(kp, tau_i, tau_d)`` raw."""

    obs_dim = 4
    act_dim = 3

    def reset(self, rng):
        self.noise_rng = rng if self.episode.noise else None
        self.setpoints = SetpointGenerator(self.episode.setpoint)
        self.setpoint = self.setpoints.reset(rng)[0]
        self.k = 0
        self.x = self._initial_state()
        self.pid_state = PidState()
        self.history = self.smoothing.cleared()
        self.y = float(measure(self.model, self.x, self.noise_rng)[0])
        self.e = self.setpoint - self.y
        self.done = False
        return self._observation(0.0)

    def _observation(self, e_rate):
        raw = np.array([self.setpoint, self.y, self.e, e_rate])
        return self._normalize(raw)

    def control(self, a_raw):
        """Smoothing, gain mapping and the PID law for the current step.

        Returns ``(u, gains, pid_state_before)`` and commits the new controller
        memory and smoothing history.
        """
        a_exec, self.history = smooth(self.history, a_raw)
        gains = map_action_to_gains(a_exec, self.bounds)
        before = self.pid_state
        aw = self.limits if self.anti_windup else None
        u_raw, self.pid_state = pid_step(gains, self.e, before, self.model.ts, aw)
        return saturate(self.control_sign * u_raw, self.limits), gains, before

    def step(self, a_raw):
        if self.done:
            raise RuntimeError("episode finished; call reset()")
        k, x, sp, e, y = self.k, self.x, self.setpoint, self.e, self.y
        u, gains, pid_before = self.control(a_raw)

        r_pred = float("nan")
        forecast_diverged = False
        if self.forecast_cfg.enabled:
            rewards, forecast_diverged = forecast_rollout(
                self.model, x, gains, pid_before, sp, k, self.forecast_cfg, self.reward_cfg,
                self.limits, e_now=e, control_sign=self.control_sign,
            )
            r_pred = sum(rewards) / len(rewards) if rewards else self.divergence_penalty

        diverged = False
        try:
            self.x, _ = step_plant(self.model, x, [u], k, self.noise_rng)
            self.y = float(measure(self.model, self.x, self.noise_rng)[0])
            diverged = not math.isfinite(self.y) or abs(self.y) > self.episode.divergence_bound
        except SimulationDiverged:
            diverged = True

        self.k = k + 1
        info = {
            "k": k, "t": k * self.model.ts, "setpoint": sp, "y": y, "e": e,
            "u": u, "gains": gains, "abs_error": abs(e), "diverged": diverged,
            "forecast_diverged": forecast_diverged, "reward_forecast": r_pred,
        }
        if diverged:
            self.done = True
            info["reward_single"] = self.divergence_penalty
            return self._observation(0.0), self.divergence_penalty, True, info

        r_single = hierarchical_reward(e, sp - self.y, self.reward_cfg)
        info["reward_single"] = r_single
        self.setpoint = self.setpoints.at(self.k)[0]
        self.e = self.setpoint - self.y
        e_rate = (self.e - e) / self.model.ts
        reward = r_pred if self.forecast_cfg.enabled else r_single
        self.done = self.k >= self.episode.length
        return self._observation(e_rate), reward, self.done, info


class QuadrotorEnv(_BaseEnv):
    """Joint three-axis attitude loop with cross-axis coupled PID.

    Observation: per-axis ``(setpoint, y, e, e_rate)`` stacked roll, pitch, yaw.
    Action: ``(kp, tau_i, tau_d)`` per axis, then the six coupling coefficients
    ``(c_rp, c_ry, c_pr, c_py, c_yr, c_yp)``.
    """

    obs_dim = 12
    act_dim = 15

    def reset(self, rng):
        self.noise_rng = rng if self.episode.noise else None
        self.setpoints = SetpointGenerator(self.episode.setpoint, n_axes=3)
        self.refs = self.setpoints.reset(rng)
        self.k = 0
        self.x = self._initial_state()
        self.pid_states = (PidState(), PidState(), PidState())
        self.history = self.smoothing.cleared()
        self.y = tuple(float(v) for v in measure(self.model, self.x))
        self.e = tuple(r - v for r, v in zip(self.refs, self.y))
        self.done = False
        return self._observation((0.0, 0.0, 0.0))

    def _observation(self, e_rate):
        raw = np.array([v for i in range(3) for v in (self.refs[i], self.y[i], self.e[i], e_rate[i])])
        return self._normalize(raw)

    def control(self, a_raw):
        a_exec, self.history = smooth(self.history, a_raw)
        gains = tuple(map_action_to_gains(a_exec[3 * i:3 * i + 3], self.bounds) for i in range(3))
        coupling = map_action_to_coupling(a_exec[9:15], self.bounds)
        before = self.pid_states
        *u, self.pid_states = cross_axis_control(gains, coupling, self.refs, self.y, before,
                                                 self.model.ts)
        return [saturate(v, self.limits) for v in u], gains, coupling, before

    def step(self, a_raw):
        if self.done:
            raise RuntimeError("episode finished; call reset()")
        k, x, refs, e, y = self.k, self.x, self.refs, self.e, self.y
        u, gains, coupling, before = self.control(a_raw)

        r_pred = float("nan")
        forecast_diverged = False
        if self.forecast_cfg.enabled:
            rewards, forecast_diverged = forecast_rollout_coupled(
                self.model, x, gains, coupling, before, refs, k, self.forecast_cfg,
                self.reward_cfg, self.limits,
            )
            r_pred = sum(rewards) / len(rewards) if rewards else self.divergence_penalty

        diverged = False
        try:
            self.x, _ = step_plant(self.model, x, u, k, self.noise_rng)
            self.y = tuple(float(v) for v in measure(self.model, self.x))
            diverged = any(not math.isfinite(v) or abs(v) > self.episode.divergence_bound
                           for v in self.y)
        except SimulationDiverged:
            diverged = True

        self.k = k + 1
        info = {
            "k": k, "t": k * self.model.ts, "setpoint": refs, "y": y, "e": e, "u": tuple(u),
            "gains": gains, "coupling": coupling, "abs_error": sum(abs(v) for v in e) / 3.0,
            "diverged": diverged, "forecast_diverged": forecast_diverged,
            "reward_forecast": r_pred,
        }
        if diverged:
            self.done = True
            info["reward_single"] = self.divergence_penalty
            return self._observation((0.0, 0.0, 0.0)), self.divergence_penalty, True, info

        next_err = tuple(r - v for r, v in zip(refs, self.y))
        r_single = axis_mean_reward(e, next_err, self.reward_cfg)
        info["reward_single"] = r_single
        self.refs = self.setpoints.at(self.k)
        self.e = tuple(r - v for r, v in zip(self.refs, self.y))
        e_rate = tuple((a - b) / self.model.ts for a, b in zip(self.e, e))
        reward = r_pred if self.forecast_cfg.enabled else r_single
        self.done = self.k >= self.episode.length
        return self._observation(e_rate), reward, self.done, info


def reset_episode(env, rng):
    return env.reset(rng)


def env_step(env, a_raw):
    return env.step(a_raw)
