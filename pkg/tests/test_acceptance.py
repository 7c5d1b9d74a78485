"""Acceptance criteria, one test per criterion.

Each test records a ``PASS``/``FAIL`` verdict line, printed in the terminal
summary. Training criteria (3 to 6) run full 100k-step budgets and take
several minutes in total on one core.
"""
import subprocess
import sys
import time
from dataclasses import replace
from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from oracles import finite_difference_errors, scalar_loss_parts, small_network
from prlpid.config import POST_DISTURBANCE_INTERVAL, scenario_config
from prlpid.experiment import run_experiment
from prlpid.reward import ForecastConfig

TESTS = Path(__file__).parent
SEEDS = range(5)
BUDGET = 100_000


def verdict(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} | {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def run_pytest(node_ids):
    t0 = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", *node_ids],
                          cwd=TESTS.parent, capture_output=True, text=True)
    return proc.returncode, time.perf_counter() - t0, proc.stdout.strip().splitlines()[-1]


UNIT_ORACLES = [
    "tests/test_plants.py::test_first_order_unstable_zoh",
    "tests/test_plants.py::test_zoh_exact_against_analytic_trajectory",
    "tests/test_pid.py::test_single_step_hand_value",
    "tests/test_pid.py::test_two_step_hand_trace",
    "tests/test_smoothing.py::test_sma_mean",
    "tests/test_smoothing.py::test_lwma_hand_value",
    "tests/test_smoothing.py::test_era_recursion",
    "tests/test_smoothing.py::test_era_step_response_closed_form",
    "tests/test_reward.py::test_hand_evaluations",
    "tests/test_reward.py::test_bonus",
    "tests/test_ppo.py::test_gae_matches_brute_force",
    "tests/test_ppo.py::test_gae_two_step_hand_value",
    "tests/test_ppo.py::test_clipped_loss_branches",
    "tests/test_reward.py::test_three_step_forecast_matches_oracle",
    "tests/test_reward.py::test_forecast_oracle_equivalence",
]

PROPERTY_SUITES = [
    "tests/test_reward.py::test_forecast_is_pure",
    "tests/test_reward.py::test_forecast_ignores_disturbances_and_noise",
    "tests/test_envloop.py::test_forecast_does_not_change_trajectory",
    "tests/test_smoothing.py::test_convex_hull",
    "tests/test_smoothing.py::test_constant_fixed_point",
    "tests/test_ppo.py::test_episode_boundary_isolation",
    "tests/test_ppo.py::test_clip_gradient_zero_when_binding",
    "tests/test_envloop.py::test_gains_respect_bounds",
    "tests/test_envloop.py::test_coupling_respects_bounds",
    "tests/test_pid.py::test_saturation_idempotent",
    "tests/test_pid.py::test_linearity_without_derivative",
    "tests/test_metrics.py::test_interval_additivity",
    "tests/test_metrics.py::test_sign_symmetry",
    "tests/test_plants.py::test_two_tank_levels_nonnegative",
    "tests/test_plants.py::test_stepping_is_deterministic",
    "tests/test_ppo.py::test_training_is_seeded",
    "tests/test_experiment.py::test_traces_are_byte_identical",
]


def test_criterion_1_unit_oracles():
    code, elapsed, tail = run_pytest(UNIT_ORACLES)
    ok = code == 0 and elapsed < 10.0
    assert verdict(1, ok, f"unit-oracle suite {tail!r} in {elapsed:.1f} s (limit 10 s)")


def test_criterion_2_gradient_checks():
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(5):
        rng = np.random.default_rng(100 + seed)
        p = small_network(rng, hidden=64)
        x = rng.normal(size=(3, 4))
        errs = finite_difference_errors(p, x, *scalar_loss_parts(rng, 3, 3), h=1e-5)
        worst = max(worst, max(errs.values()))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-5 and elapsed < 30.0
    assert verdict(2, ok, f"64-64 network, 5 instances, worst group rel. error {worst:.2e} (limit 1e-5), "
                          f"{elapsed:.1f} s (limit 30 s)")


def final_window_max_error(report):
    ev = report.evaluations[0]
    if ev.diverged:
        return np.inf
    window = report.config["evaluation"]["final_window"]
    return float(np.max(np.abs([r.e for r in ev.rows[-window:]])))


@lru_cache(maxsize=None)
def eq16_run(seed, forecast):
    cfg = scenario_config("eq16_first_order")
    cfg = replace(
        cfg,
        seed=seed,
        forecast=ForecastConfig(3, enabled=forecast),
        smoothing=replace(cfg.smoothing, strategy="era"),
        ppo=replace(cfg.ppo, total_steps=BUDGET),
    )
    return run_experiment(cfg, label=f"eq16_rf{int(forecast)}_s{seed}")


@pytest.mark.slow
def test_criterion_3_unstable_first_order_training():
    errs = [final_window_max_error(eq16_run(s, True)) for s in SEEDS]
    good = sum(e < 0.05 for e in errs)
    detail = ", ".join(f"{e:.4f}" for e in errs)
    assert verdict(3, good >= 4, f"eq16 N=3+ERA {BUDGET} steps: {good}/5 seeds with max |e| < 0.05 "
                                 f"over final 5 s (need 4); per seed [{detail}]")


@pytest.mark.slow
def test_criterion_4_forecast_ablation():
    with_rf = [eq16_run(s, True).evaluations[0] for s in SEEDS]
    without = [eq16_run(s, False).evaluations[0] for s in SEEDS]
    sse = lambda ev: np.inf if ev.diverged else ev.steady_state_error
    a, b = np.mean([sse(e) for e in with_rf]), np.mean([sse(e) for e in without])
    assert verdict(4, a <= b, f"mean final-window |e|: N=3 {a:.4g} vs no forecast {b:.4g}")


def two_tank_iae(seed, variant):
    cfg = scenario_config("eq24_two_tank")
    rf, smooth = "rf" in variant, variant.endswith("as")
    cfg = replace(
        cfg,
        seed=seed,
        forecast=ForecastConfig(cfg.forecast.horizon_n, enabled=rf),
        smoothing=replace(cfg.smoothing, strategy="era" if smooth else "none", alpha=None),
        ppo=replace(cfg.ppo, total_steps=BUDGET),
    )
    report = run_experiment(cfg, label=variant)
    return np.inf if report.diverged else report.metric(*POST_DISTURBANCE_INTERVAL)


@pytest.mark.slow
def test_criterion_5_two_tank_ablation():
    pairs = [(two_tank_iae(s, "ppo"), two_tank_iae(s, "ppo_rf_as")) for s in SEEDS]
    wins = sum(full <= plain for plain, full in pairs)
    detail = ", ".join(f"s{s}: {p:.3f}/{f:.3f}" for s, (p, f) in zip(SEEDS, pairs))
    lo, hi = POST_DISTURBANCE_INTERVAL
    assert verdict(5, wins >= 4, f"two-tank IAE k in [{lo},{hi}) PPO+RF+AS <= PPO on {wins}/5 seeds "
                                 f"(need 4); plain/full [{detail}]")


@pytest.mark.slow
def test_criterion_6_time_varying_generalization():
    cfg = scenario_config("eq22_time_varying")
    stable, rows = 0, []
    for s in SEEDS:
        report = run_experiment(replace(cfg, seed=s, ppo=replace(cfg.ppo, total_steps=BUDGET)))
        stable += not report.diverged
        rows.append("s{}: ".format(s) + " ".join(
            f"{ev.setpoint:+.1f}->{'div' if ev.diverged else format(ev.steady_state_error, '.3g')}"
            for ev in report.evaluations))
    assert verdict(6, stable >= 4, f"eq22 setpoints (-0.3, 1.0, 2.5): {stable}/5 seeds without divergence "
                                   f"(need 4); steady-state |e| [{'; '.join(rows)}]")


def test_criterion_7_property_suites():
    code, elapsed, tail = run_pytest(PROPERTY_SUITES)
    assert verdict(7, code == 0, f"{len(PROPERTY_SUITES)} invariant suites: {tail!r}")
