"""Exception types raised across the package."""


class ConfigError(ValueError):
    """An experiment or component configuration is invalid."""


class SimulationDiverged(FloatingPointError):
    """A plant state or input became non-finite."""

    def __init__(self, step, message="simulation diverged"):
        super().__init__(f"{message} at step {step}")
        self.step = step


class ControllerFault(ValueError):
    """The PID law was fed a non-finite error."""


class NetworkFault(ValueError):
    """Bad input or shape handed to the actor-critic network."""
