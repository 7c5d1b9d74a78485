"""Experiment runner: train or load a policy, run deterministic evaluations, write artifacts.

Artifacts in ``output_dir``:

* ``config.json``        the resolved :class:`~prlpid.config.ExperimentConfig`
* ``training_log.csv``   one row per PPO iteration
* ``checkpoint.json``    final network and optimizer state
* ``trace_<i>.csv``      evaluation trace for setpoint ``i`` (``trace_<i>_<axis>.csv`` on the quadrotor)
* ``report.json``        the :class:`RunReport`
"""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, build_env, dumps, evaluation_episode, validate
from .envloop import GainBounds
from .exceptions import ConfigError, NetworkFault
from .metrics import compute_metrics, overshoot, settling_time, steady_state_error
from .neuralnet import ActorCriticParams, forward, init_params, load_checkpoint, save_checkpoint
from .ppo import TRAINING_LOG_COLUMNS, train
from .reward import ForecastConfig

AXES = ("roll", "pitch", "yaw")
RAW_ACTION_LIMIT = 30.0


@dataclass(frozen=True)
class TraceRow:
    k: int
    t: float
    setpoint: float
    y: float
    e: float
    u: float
    kp: float
    tau_i: float
    tau_d: float
    reward_single: float
    reward_forecast: float


TRACE_COLUMNS = tuple(f.name for f in fields(TraceRow))


def write_trace_csv(path, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for row in rows:
            writer.writerow([repr(getattr(row, c)) for c in TRACE_COLUMNS])


def read_trace_csv(path):
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = tuple(next(reader))
            if header != TRACE_COLUMNS:
                raise ConfigError(f"{path}: header {header} does not match trace columns")
            return [TraceRow(int(r[0]), *(float(v) for v in r[1:])) for r in reader]
    except (OSError, StopIteration, ValueError, IndexError) as exc:
        raise ConfigError(f"cannot read trace {path}: {exc}") from exc


def write_training_log(path, log_rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRAINING_LOG_COLUMNS)
        for row in log_rows:
            writer.writerow([repr(row[c]) for c in TRAINING_LOG_COLUMNS])


# ---------------------------------------------------------------- policies


def _inverse_unit(u):
    a = np.arctanh(np.clip(2.0 * u - 1.0, -1.0, 1.0)) if -1.0 < 2.0 * u - 1.0 < 1.0 else math.copysign(
        RAW_ACTION_LIMIT, 2.0 * u - 1.0)
    return float(np.clip(a, -RAW_ACTION_LIMIT, RAW_ACTION_LIMIT))


def gains_to_action(kp, tau_i, tau_d, bounds: GainBounds):
    """Raw action that the gain mapping sends (within rounding) to the given gains."""
    def lin(v, rng):
        lo, hi = rng
        if not lo <= v <= hi:
            raise ConfigError(f"fixed gain {v} outside bounds {rng}")
        return _inverse_unit((v - lo) / (hi - lo))

    lo, hi = bounds.tau_i_range
    if not lo <= tau_i <= hi:
        raise ConfigError(f"fixed tau_i {tau_i} outside bounds {bounds.tau_i_range}")
    u_i = (math.log(tau_i) - math.log(lo)) / (math.log(hi) - math.log(lo))
    return np.array([lin(kp, bounds.kp_range), _inverse_unit(u_i), lin(tau_d, bounds.tau_d_range)])


class MeanPolicy:
    """Deterministic policy: the Gaussian mean of the actor."""

    def __init__(self, params: ActorCriticParams):
        self.params = params

    def __call__(self, obs):
        return forward(self.params, obs, critic=False)[0]


class ConstantPolicy:
    def __init__(self, action):
        self.action = np.asarray(action, dtype=float)

    def __call__(self, obs):
        return self.action


def fixed_gain_policy(cfg: ExperimentConfig):
    a = gains_to_action(*cfg.fixed_gains, cfg.bounds)
    if cfg.is_mimo:
        a = np.concatenate([a, a, a, np.zeros(6)])
    return ConstantPolicy(a)


# ---------------------------------------------------------------- evaluation


@dataclass
class EvaluationResult:
    setpoint: object
    axis: str | None
    rows: list
    diverged: bool
    diverged_at: int | None
    trace_path: str | None = None
    metrics: list = field(default_factory=list)
    overshoot: float | None = None
    settling_time: float | None = None
    steady_state_error: float | None = None

    def summary(self):
        d = {k: getattr(self, k) for k in (
            "setpoint", "axis", "diverged", "diverged_at", "trace_path", "overshoot",
            "settling_time", "steady_state_error")}
        d["metrics"] = [asdict(m) for m in self.metrics]
        return d


def _rollout(env, policy, rng, steps):
    """Run one episode; returns ``(per_axis_rows, diverged_at)``."""
    obs = env.reset(rng)
    n_axes = 3 if env.act_dim > 3 else 1
    rows = [[] for _ in range(n_axes)]
    diverged_at = None
    for _ in range(steps):
        obs, _, done, info = env.step(policy(obs))
        for i in range(n_axes):
            pick = (lambda v: v[i]) if n_axes > 1 else (lambda v: v)
            g = pick(info["gains"])
            rows[i].append(TraceRow(
                info["k"], info["t"], float(pick(info["setpoint"])), float(pick(info["y"])),
                float(pick(info["e"])), float(pick(info["u"])), g.kp, g.tau_i, g.tau_d,
                float(info["reward_single"]), float(info["reward_forecast"]),
            ))
        if info["diverged"]:
            diverged_at = info["k"]
            break
        if done:
            break
    return rows, diverged_at


def _score(result: EvaluationResult, cfg: ExperimentConfig):
    ev = cfg.evaluation
    e = [r.e for r in result.rows]
    y = [r.y for r in result.rows]
    sp = result.rows[0].setpoint if result.rows else 0.0
    if not result.diverged:
        result.metrics = compute_metrics(e, ev.intervals, cfg.ts)
        result.steady_state_error = steady_state_error(e, ev.final_window)
        result.overshoot = overshoot(y, sp, y0=result.rows[0].y)
        result.settling_time = settling_time(e, sp, cfg.ts, ev.settle_band)
    return result


def evaluate(cfg: ExperimentConfig, policy, setpoint, steps=None, rng=None):
    """Deterministic evaluation episode(s) for one setpoint; one result per axis."""
    episode = evaluation_episode(cfg, setpoint)
    if steps is not None:
        episode = replace(episode, length=int(steps))
    env = build_env(cfg, episode)
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    per_axis, diverged_at = _rollout(env, policy, rng, episode.length)
    names = AXES if len(per_axis) > 1 else (None,)
    out = []
    for axis, rows in zip(names, per_axis):
        res = EvaluationResult(setpoint, axis, rows, diverged_at is not None, diverged_at)
        out.append(_score(res, cfg) if steps is None else _score_step(res, cfg))
    return out


def _score_step(result, cfg):
    if result.diverged or not result.rows:
        return result
    e = [r.e for r in result.rows]
    sp = result.rows[0].setpoint
    result.overshoot = overshoot([r.y for r in result.rows], sp, y0=result.rows[0].y)
    result.settling_time = settling_time(e, sp, cfg.ts, cfg.evaluation.settle_band)
    result.steady_state_error = steady_state_error(e, min(cfg.evaluation.final_window, len(e)))
    return result


def _check_dims(params: ActorCriticParams, cfg: ExperimentConfig):
    env = build_env(cfg)
    if params.in_dim != env.obs_dim or params.act_dim != env.act_dim:
        raise NetworkFault(
            f"checkpoint dims ({params.in_dim}, {params.act_dim}) do not match the "
            f"{cfg.plant.kind} environment ({env.obs_dim}, {env.act_dim})"
        )


def step_response_eval(policy_checkpoint, cfg: ExperimentConfig, setpoint, steps):
    """Mean-action step response from a checkpoint path or parameter set.

    Returns the evaluation results (one per axis) carrying the trace,
    overshoot, settling time (None when it never settles) and steady-state error.
    """
    params = policy_checkpoint
    if not isinstance(params, ActorCriticParams):
        params, _, _ = load_checkpoint(policy_checkpoint)
    _check_dims(params, cfg)
    return evaluate(cfg, MeanPolicy(params), setpoint, steps=steps)


# ---------------------------------------------------------------- reports


@dataclass
class RunReport:
    scenario: str
    label: str
    seed: int
    config: dict
    evaluations: list
    diverged: bool
    training: dict
    wall_clock_s: float
    paths: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "scenario": self.scenario, "label": self.label, "seed": self.seed,
            "diverged": self.diverged, "wall_clock_s": self.wall_clock_s,
            "training": self.training, "paths": self.paths,
            "evaluations": [ev.summary() for ev in self.evaluations],
            "config": self.config,
        }

    def to_json(self):
        return json.dumps(_jsonable(self.to_dict()), indent=2, allow_nan=True) + "\n"

    def metric(self, k_lo, k_hi, name="iae", eval_index=0):
        for m in self.evaluations[eval_index].metrics:
            if (m.k_lo, m.k_hi) == (k_lo, k_hi):
                return getattr(m, name)
        raise KeyError(f"no interval ({k_lo}, {k_hi}) in report")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


# ---------------------------------------------------------------- runs


def obtain_policy(cfg: ExperimentConfig, out_dir: Path | None = None):
    """Train, load or build the policy named by ``cfg``. Returns ``(policy, training_summary)``."""
    if cfg.fixed_gains is not None:
        return fixed_gain_policy(cfg), {"mode": "fixed_gains", "gains": list(cfg.fixed_gains)}
    if cfg.checkpoint is not None:
        try:
            params, _, _ = load_checkpoint(cfg.checkpoint)
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"cannot load checkpoint {cfg.checkpoint}: {exc}") from exc
        _check_dims(params, cfg)
        return MeanPolicy(params), {"mode": "checkpoint", "checkpoint": cfg.checkpoint}

    init_rng, train_rng = np.random.default_rng(cfg.seed).spawn(2)
    probe = build_env(cfg)
    params = init_params(probe.obs_dim, probe.act_dim, init_rng)
    params, log_rows, opt = train(lambda: build_env(cfg), params, cfg.ppo, train_rng,
                                  checkpoint_dir=out_dir, seed=cfg.seed, return_optimizer=True)
    summary = {"mode": "trained", "iterations": len(log_rows),
               "env_steps": log_rows[-1]["env_steps"] if log_rows else 0}
    if out_dir is not None:
        write_training_log(out_dir / "training_log.csv", log_rows)
        save_checkpoint(out_dir / "checkpoint.json", params, opt, cfg.seed,
                        meta={"scenario": cfg.scenario, "env_steps": summary["env_steps"]})
        summary["log_path"] = str(out_dir / "training_log.csv")
        summary["checkpoint_path"] = str(out_dir / "checkpoint.json")
    summary["log"] = log_rows
    return MeanPolicy(params), summary


def run_experiment(cfg: ExperimentConfig, label="run") -> RunReport:
    """Train (or load / fix gains), then evaluate every configured setpoint."""
    validate(cfg)
    t0 = time.perf_counter()
    out_dir = Path(cfg.output_dir) if cfg.output_dir else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "config.json").write_text(dumps(cfg), encoding="utf-8", newline="\n")

    policy, training = obtain_policy(cfg, out_dir)
    log_rows = training.pop("log", [])
    if log_rows:
        training["final_mean_abs_error"] = log_rows[-1]["mean_abs_error"]

    evaluations = []
    eval_rng = np.random.default_rng([cfg.seed, 1])
    for i, sp in enumerate(cfg.evaluation.setpoints):
        for res in evaluate(cfg, policy, sp, rng=eval_rng):
            if out_dir is not None:
                suffix = f"_{res.axis}" if res.axis else ""
                path = out_dir / f"trace_{i}{suffix}.csv"
                write_trace_csv(path, res.rows)
                res.trace_path = str(path)
            evaluations.append(res)

    report = RunReport(
        scenario=cfg.scenario, label=label, seed=cfg.seed, config=json.loads(dumps(cfg)),
        evaluations=evaluations, diverged=any(ev.diverged for ev in evaluations),
        training=training, wall_clock_s=time.perf_counter() - t0,
    )
    if out_dir is not None:
        report.paths = {"report": str(out_dir / "report.json"), "config": str(out_dir / "config.json")}
        (out_dir / "report.json").write_text(report.to_json(), encoding="utf-8", newline="\n")
    return report


ABLATION_VARIANTS = ("ppo", "ppo_rf", "ppo_as", "ppo_rf_as")


def ablation_configs(cfg: ExperimentConfig):
    """The forecast x smoothing grid. Every variant keeps the base seed."""
    smoothing = cfg.smoothing if cfg.smoothing.strategy != "none" else replace(cfg.smoothing, strategy="era")
    off = replace(cfg.smoothing, strategy="none", alpha=None)
    out = {}
    for name in ABLATION_VARIANTS:
        rf = "rf" in name
        sm = smoothing if name.endswith("as") else off
        sub = replace(
            cfg,
            forecast=ForecastConfig(cfg.forecast.horizon_n, enabled=rf),
            smoothing=sm,
            output_dir=str(Path(cfg.output_dir) / name) if cfg.output_dir else None,
        )
        out[name] = sub
    return out


def ablate(cfg: ExperimentConfig):
    return {name: run_experiment(sub, label=name) for name, sub in ablation_configs(cfg).items()}
