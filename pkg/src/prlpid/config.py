"""Experiment configuration records, JSON round-tripping and scenario presets.

A config file is the JSON rendering of :class:`ExperimentConfig`; every
section is optional and falls back to the scenario preset. Example::

    {"scenario": "eq16_first_order",
     "seed": 3,
     "forecast": {"horizon_n": 3, "enabled": true},
     "smoothing": {"strategy": "era", "alpha": 0.3},
     "ppo": {"total_steps": 100000}}
"""
from __future__ import annotations

import dataclasses
import enum
import json
import math
import typing
from dataclasses import dataclass, field, replace
from pathlib import Path

from .envloop import EpisodeConfig, GainBounds, PidEnv, QuadrotorEnv, SetpointPolicy
from .exceptions import ConfigError
from .pid import SaturationLimits
from .plants import (
    Disturbance,
    PlantKind,
    QuadrotorParams,
    TimeVaryingParams,
    TwoTankParams,
    make_lti_plant,
    make_quadrotor_plant,
    make_time_varying_plant,
    make_two_tank_plant,
)
from .ppo import PpoConfig
from .reward import ForecastConfig, RewardConfig
from .smoothing import ActionHistory

# Table 2 sampling intervals and the post-disturbance window of the two-tank run.
TWO_TANK_INTERVALS = ((0, 200), (200, 400), (400, 600), (600, 800))
POST_DISTURBANCE_INTERVAL = (100, 800)


@dataclass(frozen=True)
class PlantSpec:
    """``kind`` plus kind-specific keyword parameters.

    ``lti_zoh`` takes ``numerator``/``denominator``; the others take the
    fields of their parameter record (two-tank disturbances as
    ``[[k, "pulse"|"step", magnitude], ...]``).
    """

    kind: str = "lti_zoh"
    params: dict = field(default_factory=lambda: {"numerator": (1.0,), "denominator": (1.0, -1.0)})


@dataclass(frozen=True)
class SmoothingConfig:
    strategy: str = "era"
    window: int = 5
    alpha: float | None = None

    def history(self) -> ActionHistory:
        return ActionHistory(self.strategy, self.window, self.alpha)


@dataclass(frozen=True)
class EnvOptions:
    obs_scale: tuple = (1.0, 1.0, 1.0, 10.0)
    obs_clip: float = 10.0
    divergence_penalty: float = -10.0
    anti_windup: bool = False
    control_sign: float = 1.0  # -1 for a reverse-acting loop (negative plant gain)


@dataclass(frozen=True)
class EvaluationConfig:
    setpoints: tuple = (1.0,)
    length: int = 300
    intervals: tuple = ((0, 300),)
    final_window: int = 50
    disturbances: bool = True
    noise: bool = False
    settle_band: float = 0.02


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str = "eq16_first_order"
    ts: float = 0.1
    plant: PlantSpec = field(default_factory=PlantSpec)
    reward: RewardConfig = field(default_factory=RewardConfig)
    forecast: ForecastConfig = field(default_factory=ForecastConfig)
    smoothing: SmoothingConfig = field(default_factory=SmoothingConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    bounds: GainBounds = field(default_factory=GainBounds)
    limits: SaturationLimits = field(default_factory=SaturationLimits)
    episode: EpisodeConfig = field(default_factory=EpisodeConfig)
    env: EnvOptions = field(default_factory=EnvOptions)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    seed: int = 0
    output_dir: str | None = None
    fixed_gains: tuple | None = None
    checkpoint: str | None = None

    @property
    def is_mimo(self):
        return self.plant.kind == PlantKind.QUADROTOR.value


# ---------------------------------------------------------------- serialization


def to_dict(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: to_dict(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, (tuple, list)):
        return [to_dict(v) for v in obj]
    if isinstance(obj, dict):
        return {k: to_dict(v) for k, v in obj.items()}
    return obj


def _tuplify(v):
    if isinstance(v, list):
        return tuple(_tuplify(x) for x in v)
    if isinstance(v, dict):
        return {k: _tuplify(x) for k, x in v.items()}
    return v


def from_dict(cls, data):
    """Build dataclass ``cls`` from a (possibly partial) mapping, recursing into sections."""
    return merge(cls(), data) if data is not None else cls()


def merge(base, data):
    """Return ``base`` with the entries of ``data`` applied (nested dataclasses merge)."""
    if not isinstance(data, dict):
        raise ConfigError(f"{type(base).__name__} section must be a mapping, got {data!r}")
    hints = typing.get_type_hints(type(base))
    names = {f.name for f in dataclasses.fields(base)}
    changes = {}
    for key, value in data.items():
        if key not in names:
            raise ConfigError(f"unknown field {key!r} in {type(base).__name__}")
        current = getattr(base, key)
        hint = hints.get(key)
        if dataclasses.is_dataclass(current) and isinstance(value, dict):
            changes[key] = merge(current, value)
        elif isinstance(hint, type) and dataclasses.is_dataclass(hint):
            changes[key] = from_dict(hint, value)
        else:
            changes[key] = _tuplify(value)
    try:
        return replace(base, **changes)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {type(base).__name__}: {exc}") from exc


def dumps(cfg: ExperimentConfig) -> str:
    return json.dumps(to_dict(cfg), indent=2, sort_keys=True) + "\n"


def loads(text) -> ExperimentConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return config_from_mapping(data)


def config_from_mapping(data) -> ExperimentConfig:
    """Preset named by ``data["scenario"]`` (default eq16) overlaid with ``data``."""
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    base = scenario_config(data.get("scenario", "eq16_first_order"))
    if "plant" in data and "params" in data["plant"] and data["plant"].get("kind", base.plant.kind) != base.plant.kind:
        base = replace(base, plant=PlantSpec(data["plant"]["kind"], {}))
    cfg = merge(base, data)
    validate(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return loads(text)


def save_config(cfg: ExperimentConfig, path):
    Path(path).write_text(dumps(cfg), encoding="utf-8", newline="\n")


# ---------------------------------------------------------------- construction


def build_plant(spec: PlantSpec, ts):
    p = dict(spec.params)
    try:
        kind = PlantKind(spec.kind)
        if kind is PlantKind.LTI_ZOH:
            return make_lti_plant(p.pop("numerator"), p.pop("denominator"), ts) if not p.keys() - {
                "numerator", "denominator"} else _reject(p, kind)
        if kind is PlantKind.TIME_VARYING:
            return make_time_varying_plant(ts, TimeVaryingParams(**p))
        if kind is PlantKind.TWO_TANK:
            sched = tuple(
                d if isinstance(d, Disturbance) else Disturbance(int(d[0]), str(d[1]), float(d[2]))
                for d in p.pop("disturbance_schedule", ())
            )
            return make_two_tank_plant(ts, TwoTankParams(disturbance_schedule=sched, **p))
        return make_quadrotor_plant(ts, QuadrotorParams(**p))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid plant {spec.kind!r}: {exc}") from exc


def _reject(params, kind):
    raise ConfigError(f"unexpected parameters {sorted(params)} for {kind.value}")


def validate(cfg: ExperimentConfig):
    if not cfg.ts > 0:
        raise ConfigError("ts must be positive")
    build_plant(cfg.plant, cfg.ts)
    try:
        cfg.smoothing.history()
    except ValueError as exc:
        raise ConfigError(f"invalid smoothing: {exc}") from exc
    ev = cfg.evaluation
    if ev.length < 1 or not ev.setpoints:
        raise ConfigError("evaluation needs a positive length and at least one setpoint")
    for lo, hi in ev.intervals:
        if not 0 <= lo < hi <= ev.length:
            raise ConfigError(f"metric interval ({lo}, {hi}) outside evaluation length {ev.length}")
    if not 1 <= ev.final_window <= ev.length:
        raise ConfigError("final_window must lie in [1, evaluation.length]")
    if cfg.fixed_gains is not None and len(cfg.fixed_gains) != 3:
        raise ConfigError("fixed_gains must be (kp, tau_i, tau_d)")
    return cfg


def build_env(cfg: ExperimentConfig, episode: EpisodeConfig | None = None):
    """Environment for ``cfg``; ``episode`` overrides the training episode settings."""
    model = build_plant(cfg.plant, cfg.ts)
    env_cls = QuadrotorEnv if cfg.is_mimo else PidEnv
    return env_cls(
        model,
        episode or cfg.episode,
        cfg.reward,
        cfg.forecast,
        cfg.smoothing.history(),
        cfg.bounds,
        cfg.limits,
        obs_scale=cfg.env.obs_scale,
        obs_clip=cfg.env.obs_clip,
        divergence_penalty=cfg.env.divergence_penalty,
        anti_windup=cfg.env.anti_windup,
        control_sign=cfg.env.control_sign,
    )


def build_quadrotor_env(cfg: ExperimentConfig):
    if not cfg.is_mimo:
        raise ConfigError("build_quadrotor_env needs a quadrotor plant")
    return build_env(cfg)


def evaluation_episode(cfg: ExperimentConfig, setpoint) -> EpisodeConfig:
    ev = cfg.evaluation
    return replace(
        cfg.episode,
        length=ev.length,
        setpoint=SetpointPolicy("fixed", value=setpoint),
        noise=ev.noise,
        disturbances=ev.disturbances,
    )


# ---------------------------------------------------------------- presets

# Narrower than the GainBounds defaults on tau_d: the default (0, 5) s puts the
# untrained policy's midpoint deep in saturated derivative chatter.
SISO_BOUNDS = GainBounds(tau_d_range=(0.0, 0.5))
QUAD_BOUNDS = GainBounds(tau_d_range=(0.0, 1.0))

EQ17_NUMERATOR = (0.2679 * 41.667, -0.2679)
EQ17_DENOMINATOR = (279.03, -2.9781, 1.0)


def _siso_first_order(name, pole):
    return ExperimentConfig(
        scenario=name,
        plant=PlantSpec("lti_zoh", {"numerator": (1.0,), "denominator": (1.0, -pole)}),
        bounds=SISO_BOUNDS,
        episode=EpisodeConfig(length=300, setpoint=SetpointPolicy("random", lo=0.0, hi=2.0)),
        evaluation=EvaluationConfig(setpoints=(1.0,), length=300, intervals=((0, 300),)),
    )


def _scenarios():
    two_tank_sched = ((100, "pulse", -0.5), (300, "pulse", 0.5), (500, "step", 0.3))
    return {
        "eq16_first_order": _siso_first_order("eq16_first_order", 1.0),
        "eq18_pole_1p5": _siso_first_order("eq18_pole_1p5", 1.5),
        "eq17_second_order": ExperimentConfig(
            scenario="eq17_second_order",
            plant=PlantSpec("lti_zoh", {"numerator": EQ17_NUMERATOR, "denominator": EQ17_DENOMINATOR}),
            bounds=SISO_BOUNDS,
            env=EnvOptions(control_sign=-1.0),
            episode=EpisodeConfig(length=600, setpoint=SetpointPolicy("random", lo=0.0, hi=2.0)),
            evaluation=EvaluationConfig(setpoints=(1.0,), length=600, intervals=((0, 600),),
                                        final_window=100),
        ),
        "eq22_time_varying": ExperimentConfig(
            scenario="eq22_time_varying",
            plant=PlantSpec("time_varying_first_order", {}),
            bounds=SISO_BOUNDS,
            episode=EpisodeConfig(length=300, setpoint=SetpointPolicy("random", lo=0.0, hi=2.0)),
            evaluation=EvaluationConfig(setpoints=(-0.3, 1.0, 2.5), length=300,
                                        intervals=((0, 300),)),
        ),
        "eq24_two_tank": ExperimentConfig(
            scenario="eq24_two_tank",
            plant=PlantSpec("two_tank", {"disturbance_schedule": two_tank_sched}),
            bounds=SISO_BOUNDS,
            episode=EpisodeConfig(length=800, setpoint=SetpointPolicy("random", lo=0.5, hi=1.5)),
            evaluation=EvaluationConfig(
                setpoints=(1.0,), length=800,
                intervals=TWO_TANK_INTERVALS + (POST_DISTURBANCE_INTERVAL,),
                final_window=100,
            ),
        ),
        "eq25_quadrotor": ExperimentConfig(
            scenario="eq25_quadrotor",
            plant=PlantSpec("quadrotor", {}),
            bounds=QUAD_BOUNDS,
            limits=SaturationLimits(-5.0, 5.0),
            env=EnvOptions(obs_scale=(1.0, 1.0, 1.0, 10.0) * 3),
            episode=EpisodeConfig(length=300, setpoint=SetpointPolicy("random", lo=-0.5, hi=0.5),
                                  divergence_bound=100.0),
            evaluation=EvaluationConfig(setpoints=((0.2, -0.2, 0.4),), length=300,
                                        intervals=((0, 300),)),
        ),
    }


SCENARIO_ALIASES = {"first_order_unstable": "eq16_first_order"}


def scenario_names():
    return sorted(_scenarios())


def scenario_config(name) -> ExperimentConfig:
    name = SCENARIO_ALIASES.get(name, name)
    presets = _scenarios()
    if name not in presets:
        raise ConfigError(f"unknown scenario {name!r}; choose from {', '.join(sorted(presets))}")
    return presets[name]


def is_finite_number(v):
    return isinstance(v, (int, float)) and math.isfinite(v)
