"""PPO-tuned adaptive PID control with reward forecasting and action smoothing."""
from .config import ExperimentConfig, build_env, load_config, scenario_config, scenario_names
from .estimator import PRLPIDTuner
from .envloop import EpisodeConfig, GainBounds, PidEnv, QuadrotorEnv, SetpointPolicy
from .exceptions import ConfigError, ControllerFault, NetworkFault, SimulationDiverged
from .experiment import RunReport, ablate, run_experiment, step_response_eval
from .metrics import compute_metrics
from .pid import PidGains, PidState, SaturationLimits, pid_step
from .plants import make_lti_plant, make_quadrotor_plant, make_time_varying_plant, make_two_tank_plant
from .ppo import PpoConfig, train
from .reward import ForecastConfig, RewardConfig, forecast_reward, hierarchical_reward
from .smoothing import ActionHistory, smooth

__version__ = "0.1.0"

__all__ = [
    "ActionHistory", "ConfigError", "ControllerFault", "EpisodeConfig", "ExperimentConfig",
    "ForecastConfig", "GainBounds", "NetworkFault", "PRLPIDTuner", "PidEnv", "PidGains", "PidState", "PpoConfig",
    "QuadrotorEnv", "RewardConfig", "RunReport", "SaturationLimits", "SetpointPolicy",
    "SimulationDiverged", "ablate", "build_env", "compute_metrics", "forecast_reward", "hierarchical_reward",
    "load_config", "make_lti_plant", "make_quadrotor_plant", "make_time_varying_plant",
    "make_two_tank_plant", "pid_step", "run_experiment", "scenario_config", "scenario_names",
    "smooth", "step_response_eval", "train",
]
