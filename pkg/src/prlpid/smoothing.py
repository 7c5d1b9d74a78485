"""Action smoothing filters applied to the agent's raw action before gain mapping.

All three filters are convex combinations of past raw actions:

* ``sma``  -- mean of the last ``window`` raw actions.
* ``lwma`` -- weights ``w_k = alpha + (1 - alpha) * (k + 1) / window`` on the
  action ``k`` steps back, normalized. The weight *grows* with age ``k``.
* ``era``  -- ``alpha * a_raw + (1 - alpha) * previous_smoothed``.

Before ``window`` samples exist, SMA and LWMA average whatever is available.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np


class Strategy(str, enum.Enum):
    NONE = "none"
    SMA = "sma"
    LWMA = "lwma"
    ERA = "era"


DEFAULT_ALPHA = {Strategy.NONE: 0.0, Strategy.SMA: 0.0, Strategy.LWMA: 0.2, Strategy.ERA: 0.3}


@dataclass(frozen=True, eq=False)
class ActionHistory:
    strategy: Strategy = Strategy.NONE
    window: int = 5
    alpha: float | None = None
    buffer: tuple = ()  # newest first
    era_state: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        if self.alpha is None:
            object.__setattr__(self, "alpha", DEFAULT_ALPHA[self.strategy])
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.strategy is Strategy.ERA and not 0.0 < self.alpha <= 1.0:
            raise ValueError("ERA alpha must lie in (0, 1]")
        if self.strategy is Strategy.LWMA and not 0.0 <= self.alpha < 1.0:
            raise ValueError("LWMA alpha must lie in [0, 1)")

    def cleared(self) -> ActionHistory:
        return replace(self, buffer=(), era_state=None)


def lwma_weights(count, window, alpha):
    k = np.arange(count)
    return alpha + (1.0 - alpha) * (k + 1) / window


def smooth(history: ActionHistory, a_raw):
    """Return ``(a_executed, new_history)``."""
    a_raw = np.asarray(a_raw, dtype=float)
    strategy = history.strategy
    if strategy is Strategy.NONE:
        return a_raw, history
    if strategy is Strategy.ERA:
        if history.era_state is None:
            out = a_raw.copy()
        else:
            out = history.alpha * a_raw + (1.0 - history.alpha) * history.era_state
        return out, replace(history, era_state=out)

    buffer = (a_raw,) + history.buffer[: history.window - 1]
    stacked = np.stack(buffer)
    if strategy is Strategy.SMA:
        out = stacked.mean(axis=0)
    else:
        w = lwma_weights(len(buffer), history.window, history.alpha)
        out = w @ stacked / w.sum()
    return out, replace(history, buffer=buffer)
