"""scikit-learn style wrapper around training and evaluation.

``fit`` trains a gain-scheduling policy for a scenario; ``predict`` maps
observations ``(setpoint, y, e, e_rate)`` to PID gains ``(kp, tau_i, tau_d)``.
"""
from __future__ import annotations

from dataclasses import replace

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .config import build_env, scenario_config
from .envloop import SetpointPolicy, map_action_to_gains
from .experiment import MeanPolicy, evaluate, obtain_policy
from .neuralnet import forward
from .ppo import PpoConfig
from .reward import ForecastConfig
from .smoothing import Strategy


class PRLPIDTuner(BaseEstimator):
    """PPO-tuned adaptive PID for a single-loop scenario preset.

    Parameters
    ----------
    scenario : str
        Preset name (``eq16_first_order``, ``eq24_two_tank``, ...).
    total_steps : int
        Environment steps of PPO training.
    horizon_n : int or None
        Reward forecast horizon; ``None`` trains on single-step rewards.
    smoothing : {"none", "sma", "lwma", "era"}
    seed : int
    """

    def __init__(self, scenario="eq16_first_order", total_steps=100_000, horizon_n=3,
                 smoothing="era", seed=0):
        self.scenario = scenario
        self.total_steps = total_steps
        self.horizon_n = horizon_n
        self.smoothing = smoothing
        self.seed = seed

    def _config(self, setpoints=None):
        cfg = scenario_config(self.scenario)
        if cfg.is_mimo:
            raise ValueError("PRLPIDTuner handles single-loop scenarios only")
        Strategy(self.smoothing)
        forecast = ForecastConfig(self.horizon_n or 1, enabled=self.horizon_n is not None)
        cfg = replace(
            cfg,
            seed=int(self.seed),
            forecast=forecast,
            smoothing=replace(cfg.smoothing, strategy=self.smoothing, alpha=None),
            ppo=replace(cfg.ppo, total_steps=int(self.total_steps)),
        )
        if setpoints is not None:
            lo, hi = float(np.min(setpoints)), float(np.max(setpoints))
            sp = SetpointPolicy("fixed", value=lo) if lo == hi else SetpointPolicy("random", lo=lo, hi=hi)
            cfg = replace(cfg, episode=replace(cfg.episode, setpoint=sp))
        return cfg

    def fit(self, X=None, y=None):
        """Train. ``X`` (optional) holds training setpoints; their range becomes the sampling range."""
        setpoints = None
        if X is not None:
            setpoints = check_array(X, ensure_2d=False, dtype=np.float64).ravel()
        cfg = self._config(setpoints)
        policy, summary = obtain_policy(cfg)
        self.config_ = cfg
        self.params_ = policy.params
        self.training_log_ = summary.get("log", [])
        self.n_features_in_ = build_env(cfg).obs_dim
        return self

    def predict(self, X):
        """Gains ``(kp, tau_i, tau_d)`` for each raw observation row ``(setpoint, y, e, e_rate)``."""
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        env = build_env(self.config_)
        mean = forward(self.params_, env._normalize(X), critic=False)[0]
        out = np.empty((X.shape[0], 3))
        for i, a in enumerate(mean):
            g = map_action_to_gains(a, self.config_.bounds)
            out[i] = (g.kp, g.tau_i, g.tau_d)
        return out

    def score(self, X=None, y=None):
        """Negative mean steady-state |e| over evaluation setpoints (``X`` overrides them)."""
        check_is_fitted(self, "params_")
        setpoints = self.config_.evaluation.setpoints
        if X is not None:
            setpoints = tuple(check_array(X, ensure_2d=False, dtype=np.float64).ravel())
        policy = MeanPolicy(self.params_)
        errs = []
        for sp in setpoints:
            res = evaluate(self.config_, policy, float(sp))[0]
            errs.append(np.inf if res.diverged else res.steady_state_error)
        return -float(np.mean(errs))
