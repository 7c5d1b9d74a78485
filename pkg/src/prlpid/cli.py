"""Command-line entry point: ``prlpid {train,eval,ablate,metrics,dump-config}``.

Settings resolve as scenario preset < ``--config`` file < command-line flags.
Any config field can be set with ``--set section.field=VALUE`` (VALUE is
parsed as JSON, falling back to a plain string).

Exit codes: 0 success, 2 configuration error, 3 divergence during evaluation.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace

from .config import config_from_mapping, dumps, scenario_names, to_dict
from .exceptions import ConfigError, NetworkFault
from .experiment import ablate, read_trace_csv, run_experiment
from .metrics import compute_metrics, overshoot, settling_time, steady_state_error

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _assign(tree, dotted, value):
    keys = dotted.split(".")
    node = tree
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigError(f"--set {dotted}: {key!r} is not a section")
    node[keys[-1]] = value


def _common(p):
    p.add_argument("--scenario", help="preset name: " + ", ".join(scenario_names()))
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--output-dir")
    p.add_argument("--total-steps", type=int, help="PPO environment-step budget")
    p.add_argument("--forecast-n", type=int, help="reward forecast horizon N")
    p.add_argument("--no-forecast", action="store_true", help="use single-step rewards")
    p.add_argument("--smoothing", choices=("none", "sma", "lwma", "era"))
    p.add_argument("--smoothing-alpha", type=float)
    p.add_argument("--smoothing-window", type=int)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config field, e.g. ppo.lr=0.001")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="prlpid", description="PPO-tuned adaptive PID experiments")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("train", help="train a policy, then evaluate it")
    _common(p)

    p = sub.add_parser("eval", help="evaluate a checkpoint or fixed gains without training")
    _common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--fixed-gains", type=float, nargs=3, metavar=("KP", "TAU_I", "TAU_D"))

    p = sub.add_parser("ablate", help="forecast x smoothing grid (ppo, ppo_rf, ppo_as, ppo_rf_as)")
    _common(p)

    p = sub.add_parser("dump-config", help="print the resolved config as JSON")
    _common(p)

    p = sub.add_parser("metrics", help="recompute ISE/IAE from a trace CSV")
    p.add_argument("trace")
    p.add_argument("--interval", action="append", default=[], metavar="LO:HI",
                   help="half-open step interval; repeatable (default: whole trace)")
    p.add_argument("--ts", type=float, help="sample time (default: from the t column)")
    p.add_argument("--final-window", type=int, default=50)
    return parser


def resolve_config(args):
    data = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config root must be a mapping")
    if args.scenario:
        data["scenario"] = args.scenario
    flags = {
        "seed": args.seed,
        "output_dir": args.output_dir,
        "ppo.total_steps": args.total_steps,
        "forecast.horizon_n": args.forecast_n,
        "forecast.enabled": False if args.no_forecast else None,
        "smoothing.strategy": args.smoothing,
        "smoothing.alpha": args.smoothing_alpha,
        "smoothing.window": args.smoothing_window,
        "checkpoint": getattr(args, "checkpoint", None),
        "fixed_gains": getattr(args, "fixed_gains", None),
    }
    for key, value in flags.items():
        if value is not None:
            _assign(data, key, value)
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        _assign(data, key, _parse_value(value))
    return config_from_mapping(data)


def _report_line(report):
    parts = [f"[{report.label}] diverged={report.diverged}"]
    for ev in report.evaluations:
        tag = f"sp={ev.setpoint}" + (f" {ev.axis}" if ev.axis else "")
        if ev.diverged:
            parts.append(f"{tag}: diverged at k={ev.diverged_at}")
        else:
            iae = ", ".join(f"[{m.k_lo},{m.k_hi}) IAE={m.iae:.4g} ISE={m.ise:.4g}" for m in ev.metrics)
            parts.append(f"{tag}: sse={ev.steady_state_error:.3g} {iae}")
    return "\n  ".join(parts)


def _metrics_verb(args):
    rows = read_trace_csv(args.trace)
    if not rows:
        raise ConfigError(f"{args.trace} has no rows")
    ts = args.ts if args.ts is not None else (rows[1].t - rows[0].t if len(rows) > 1 else None)
    if ts is None or not ts > 0:
        raise ConfigError("cannot infer the sample time; pass --ts")
    intervals = []
    for spec in args.interval or [f"0:{len(rows)}"]:
        lo, sep, hi = spec.partition(":")
        try:
            intervals.append((int(lo), int(hi)))
        except ValueError as exc:
            raise ConfigError(f"bad interval {spec!r}; expected LO:HI") from exc
    e = [r.e for r in rows]
    try:
        metrics = compute_metrics(e, intervals, ts)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    sp = rows[0].setpoint
    out = {
        "trace": args.trace,
        "ts": ts,
        "metrics": [to_dict(m) for m in metrics],
        "overshoot": overshoot([r.y for r in rows], sp, y0=rows[0].y),
        "settling_time": settling_time(e, sp, ts),
        "steady_state_error": steady_state_error(e, min(args.final_window, len(e))),
    }
    print(json.dumps(out, indent=2))
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.verb == "metrics":
            return _metrics_verb(args)
        cfg = resolve_config(args)
        if args.verb == "dump-config":
            sys.stdout.write(dumps(cfg))
            return EXIT_OK
        if args.verb == "eval":
            if cfg.checkpoint is None and cfg.fixed_gains is None:
                raise ConfigError("eval needs --checkpoint or --fixed-gains")
            reports = [run_experiment(cfg, label="eval")]
        elif args.verb == "train":
            reports = [run_experiment(replace(cfg, checkpoint=None, fixed_gains=None), label="train")]
        else:
            reports = list(ablate(replace(cfg, checkpoint=None, fixed_gains=None)).values())
    except (ConfigError, NetworkFault) as exc:
        print(f"prlpid: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for report in reports:
        print(_report_line(report))
    if any(r.diverged for r in reports):
        print("prlpid: evaluation diverged", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
