"""Actor-critic MLP with hand-written backward pass and Adam.

Two separate stacks read the same flat observation::

    actor:  obs -> Linear(64) -> tanh -> Linear(64) -> tanh -> Linear(act_dim)  = mean
    critic: obs -> Linear(64) -> tanh -> Linear(64) -> tanh -> Linear(1)        = value

The Gaussian policy uses a state-independent ``log_std`` vector. Weights are
stored ``(fan_in, fan_out)`` so batched inputs multiply as ``x @ w + b``.
Everything is float64.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .exceptions import NetworkFault

HIDDEN = 64
LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
LOG_2PI = math.log(2.0 * math.pi)
CHECKPOINT_FORMAT = "prlpid-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(eq=False)
class ActorCriticParams:
    actor_w1: np.ndarray
    actor_b1: np.ndarray
    actor_w2: np.ndarray
    actor_b2: np.ndarray
    actor_w3: np.ndarray
    actor_b3: np.ndarray
    critic_w1: np.ndarray
    critic_b1: np.ndarray
    critic_w2: np.ndarray
    critic_b2: np.ndarray
    critic_w3: np.ndarray
    critic_b3: np.ndarray
    log_std: np.ndarray

    @property
    def in_dim(self):
        return self.actor_w1.shape[0]

    @property
    def act_dim(self):
        return self.actor_w3.shape[1]

    def names(self):
        return [f.name for f in fields(self)]

    def arrays(self):
        return {name: getattr(self, name) for name in self.names()}

    def copy(self):
        return ActorCriticParams(**{k: v.copy() for k, v in self.arrays().items()})

    def zeros_like(self):
        return ActorCriticParams(**{k: np.zeros_like(v) for k, v in self.arrays().items()})

    def n_params(self):
        return sum(v.size for v in self.arrays().values())

    def flat(self):
        return np.concatenate([v.ravel() for v in self.arrays().values()])


# Gradients share the parameter layout.
GradientBuffer = ActorCriticParams


def param_count(in_dim, act_dim, hidden=HIDDEN):
    actor = (in_dim * hidden + hidden) + (hidden * hidden + hidden) + (hidden * act_dim + act_dim)
    critic = (in_dim * hidden + hidden) + (hidden * hidden + hidden) + (hidden + 1)
    return actor + critic + act_dim


def orthogonal(shape, gain, rng):
    rows, cols = shape
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


def init_params(in_dim, act_dim, rng, hidden=HIDDEN) -> ActorCriticParams:
    if in_dim < 1 or act_dim < 1:
        raise ValueError("network dimensions must be >= 1")
    g = math.sqrt(2.0)
    return ActorCriticParams(
        actor_w1=orthogonal((in_dim, hidden), g, rng),
        actor_b1=np.zeros(hidden),
        actor_w2=orthogonal((hidden, hidden), g, rng),
        actor_b2=np.zeros(hidden),
        actor_w3=orthogonal((hidden, act_dim), 0.01, rng),
        actor_b3=np.zeros(act_dim),
        critic_w1=orthogonal((in_dim, hidden), g, rng),
        critic_b1=np.zeros(hidden),
        critic_w2=orthogonal((hidden, hidden), g, rng),
        critic_b2=np.zeros(hidden),
        critic_w3=orthogonal((hidden, 1), 1.0, rng),
        critic_b3=np.zeros(1),
        log_std=np.full(act_dim, math.log(0.5)),
    )


@dataclass(eq=False)
class ForwardCache:
    x: np.ndarray
    actor_h1: np.ndarray
    actor_h2: np.ndarray
    critic_h1: np.ndarray
    critic_h2: np.ndarray
    batched: bool
    log_std_active: np.ndarray = field(default=None)


def forward(params: ActorCriticParams, state, critic=True):
    """Evaluate both heads. Accepts one observation or a ``(n, in_dim)`` batch.

    Returns ``(mean, log_std, value, cache)``. ``critic=False`` skips the value
    stack and returns ``value=None`` (cheap action selection).
    """
    x = np.asarray(state, dtype=float)
    batched = x.ndim == 2
    if x.shape[-1] != params.in_dim or x.ndim not in (1, 2):
        raise NetworkFault(f"observation shape {x.shape} does not match in_dim {params.in_dim}")
    if not np.isfinite(x).all():
        raise NetworkFault("non-finite observation")
    ah1 = np.tanh(x @ params.actor_w1 + params.actor_b1)
    ah2 = np.tanh(ah1 @ params.actor_w2 + params.actor_b2)
    mean = ah2 @ params.actor_w3 + params.actor_b3
    raw = params.log_std
    log_std = np.clip(raw, LOG_STD_MIN, LOG_STD_MAX)
    active = (raw >= LOG_STD_MIN) & (raw <= LOG_STD_MAX)
    value = ch1 = ch2 = None
    if critic:
        ch1 = np.tanh(x @ params.critic_w1 + params.critic_b1)
        ch2 = np.tanh(ch1 @ params.critic_w2 + params.critic_b2)
        value = (ch2 @ params.critic_w3 + params.critic_b3)[..., 0]
        if not batched:
            value = float(value)
    return mean, log_std, value, ForwardCache(x, ah1, ah2, ch1, ch2, batched, active)


def log_prob(mean, log_std, a):
    """Diagonal Gaussian log density, summed over the last axis."""
    z = (a - mean) * np.exp(-log_std)
    return np.sum(-0.5 * z * z - log_std - 0.5 * LOG_2PI, axis=-1)


def entropy(log_std):
    return float(np.sum(log_std + 0.5 * (LOG_2PI + 1.0)))


def sample_action(mean, log_std, rng):
    a = mean + np.exp(log_std) * rng.standard_normal(np.shape(mean))
    return a, float(log_prob(mean, log_std, a))


def _stack_backward(x, h1, h2, w2, w3, d_out):
    dw3 = h2.T @ d_out
    db3 = d_out.sum(axis=0)
    dz2 = (d_out @ w3.T) * (1.0 - h2 * h2)
    dw2 = h1.T @ dz2
    db2 = dz2.sum(axis=0)
    dz1 = (dz2 @ w2.T) * (1.0 - h1 * h1)
    dw1 = x.T @ dz1
    db1 = dz1.sum(axis=0)
    return dw1, db1, dw2, db2, dw3, db3


def backward(params: ActorCriticParams, cache: ForwardCache, d_mean, d_log_std, d_value):
    """Reverse-mode gradients for a scalar loss ``L``.

    ``d_mean`` and ``d_value`` are ``dL/dmean`` and ``dL/dvalue`` with the same
    leading shape as the forward input; ``d_log_std`` is ``dL/dlog_std``
    already summed over the batch (it is one shared vector).
    """
    x = cache.x
    d_mean = np.asarray(d_mean, dtype=float)
    d_value = np.asarray(d_value, dtype=float)
    if not cache.batched:
        x = x[None, :]
        d_mean = d_mean.reshape(1, -1)
        d_value = d_value.reshape(1)
        ah1, ah2 = cache.actor_h1[None, :], cache.actor_h2[None, :]
        ch1 = None if cache.critic_h1 is None else cache.critic_h1[None, :]
        ch2 = None if cache.critic_h2 is None else cache.critic_h2[None, :]
    else:
        ah1, ah2, ch1, ch2 = cache.actor_h1, cache.actor_h2, cache.critic_h1, cache.critic_h2
    n = x.shape[0]
    if d_mean.shape != (n, params.act_dim) or d_value.shape != (n,):
        raise NetworkFault(
            f"upstream shapes {d_mean.shape}/{d_value.shape} do not match batch {n}"
        )
    if ch1 is None:
        raise NetworkFault("backward needs a forward cache that includes the critic")

    a_grads = _stack_backward(x, ah1, ah2, params.actor_w2, params.actor_w3, d_mean)
    c_grads = _stack_backward(x, ch1, ch2, params.critic_w2, params.critic_w3, d_value[:, None])
    d_ls = np.asarray(d_log_std, dtype=float).reshape(params.act_dim) * cache.log_std_active
    return GradientBuffer(*a_grads, *c_grads, d_ls)


@dataclass(eq=False)
class AdamState:
    m: ActorCriticParams
    v: ActorCriticParams
    step: int = 0
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_adam(params: ActorCriticParams, lr=3e-4, beta1=0.9, beta2=0.999, eps=1e-8) -> AdamState:
    return AdamState(params.zeros_like(), params.zeros_like(), 0, lr, beta1, beta2, eps)


def adam_update(params: ActorCriticParams, grads: GradientBuffer, opt: AdamState):
    """Bias-corrected Adam step. Returns new ``(params, opt)``; inputs are not mutated."""
    if not opt.lr > 0:
        raise ValueError("Adam step size must be positive")
    t = opt.step + 1
    c1 = 1.0 - opt.beta1 ** t
    c2 = 1.0 - opt.beta2 ** t
    new_p, new_m, new_v = {}, {}, {}
    for name, p in params.arrays().items():
        g = getattr(grads, name)
        m = opt.beta1 * getattr(opt.m, name) + (1.0 - opt.beta1) * g
        v = opt.beta2 * getattr(opt.v, name) + (1.0 - opt.beta2) * g * g
        new_p[name] = p - opt.lr * (m / c1) / (np.sqrt(v / c2) + opt.eps)
        new_m[name] = m
        new_v[name] = v
    new_p["log_std"] = np.clip(new_p["log_std"], LOG_STD_MIN, LOG_STD_MAX)
    opt2 = AdamState(ActorCriticParams(**new_m), ActorCriticParams(**new_v), t,
                     opt.lr, opt.beta1, opt.beta2, opt.eps)
    return ActorCriticParams(**new_p), opt2


def grad_norm(grads: GradientBuffer):
    return math.sqrt(sum(float(np.sum(g * g)) for g in grads.arrays().values()))


def clip_grad_norm(grads: GradientBuffer, max_norm):
    norm = grad_norm(grads)
    if max_norm is None or norm <= max_norm or norm == 0.0:
        return grads, norm
    scale = max_norm / norm
    return GradientBuffer(**{k: v * scale for k, v in grads.arrays().items()}), norm


def params_to_dict(params: ActorCriticParams):
    return {k: v.tolist() for k, v in params.arrays().items()}


def params_from_dict(data) -> ActorCriticParams:
    return ActorCriticParams(**{f.name: np.array(data[f.name], dtype=float)
                                for f in fields(ActorCriticParams)})


def save_checkpoint(path, params: ActorCriticParams, opt: AdamState | None = None, seed=None,
                    meta=None):
    """Write a JSON checkpoint. Floats are written with ``repr`` and round-trip exactly."""
    record = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "in_dim": params.in_dim,
        "act_dim": params.act_dim,
        "seed": seed,
        "params": params_to_dict(params),
        "optimizer": None,
        "meta": meta or {},
    }
    if opt is not None:
        record["optimizer"] = {
            "step": opt.step, "lr": opt.lr, "beta1": opt.beta1, "beta2": opt.beta2,
            "eps": opt.eps, "m": params_to_dict(opt.m), "v": params_to_dict(opt.v),
        }
    Path(path).write_text(json.dumps(record), encoding="utf-8")


def load_checkpoint(path):
    """Return ``(params, opt_or_None, record)``."""
    record = json.loads(Path(path).read_text(encoding="utf-8"))
    if record.get("format") != CHECKPOINT_FORMAT:
        raise NetworkFault(f"{path} is not a {CHECKPOINT_FORMAT} file")
    if record.get("version") != CHECKPOINT_VERSION:
        raise NetworkFault(f"unsupported checkpoint version {record.get('version')}")
    params = params_from_dict(record["params"])
    opt = None
    o = record.get("optimizer")
    if o:
        opt = AdamState(params_from_dict(o["m"]), params_from_dict(o["v"]), o["step"],
                        o["lr"], o["beta1"], o["beta2"], o["eps"])
    return params, opt, record
