"""PPO with a clipped surrogate, GAE advantages and minibatch epochs."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .neuralnet import (
    ActorCriticParams,
    AdamState,
    adam_update,
    backward,
    clip_grad_norm,
    entropy,
    forward,
    init_adam,
    log_prob,
    sample_action,
    save_checkpoint,
)

log = logging.getLogger(__name__)

TRAINING_LOG_COLUMNS = (
    "iteration",
    "env_steps",
    "mean_episode_return",
    "mean_abs_error",
    "policy_loss",
    "value_loss",
    "clip_fraction",
    "approx_kl",
)


@dataclass(frozen=True)
class PpoConfig:
    gamma: float = 0.99
    lam: float = 0.95
    clip_eps: float = 0.2
    epochs: int = 10
    batch_size: int = 256
    rollout_length: int = 2048
    total_steps: int = 500_000
    entropy_coef: float = 0.0
    value_coef: float = 0.5
    max_grad_norm: float = 0.5
    lr: float = 3e-4
    normalize_rewards: bool = True
    reward_clip: float = 10.0
    checkpoint_every: int = 0

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lam must lie in [0, 1]")
        if not self.clip_eps > 0:
            raise ValueError("clip_eps must be positive")
        if self.epochs < 1 or self.batch_size < 1 or self.rollout_length < 1:
            raise ValueError("epochs, batch_size and rollout_length must be >= 1")
        if self.total_steps < 0:
            raise ValueError("total_steps must be nonnegative")


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: np.ndarray
    logp_old: float
    reward: float
    value: float
    done: bool


@dataclass(eq=False)
class RolloutBuffer:
    states: np.ndarray
    actions: np.ndarray
    logp_old: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    dones: np.ndarray
    bootstrap_value: float = 0.0
    advantages: np.ndarray | None = field(default=None)
    returns: np.ndarray | None = field(default=None)

    @classmethod
    def from_transitions(cls, transitions, bootstrap_value=0.0):
        if not transitions:
            raise ValueError("empty rollout")
        return cls(
            states=np.array([t.state for t in transitions], dtype=float),
            actions=np.array([t.action for t in transitions], dtype=float),
            logp_old=np.array([t.logp_old for t in transitions], dtype=float),
            rewards=np.array([t.reward for t in transitions], dtype=float),
            values=np.array([t.value for t in transitions], dtype=float),
            dones=np.array([t.done for t in transitions], dtype=bool),
            bootstrap_value=float(bootstrap_value),
        )

    def __len__(self):
        return len(self.rewards)

    def compute_advantages(self, gamma, lam):
        self.advantages, self.returns = compute_gae(
            self.rewards, self.values, self.dones, self.bootstrap_value, gamma, lam
        )
        return self


def compute_gae(rewards, values, dones, bootstrap_value, gamma, lam):
    """Backward GAE recursion. ``dones[k]`` cuts bootstrapping from step ``k`` onward."""
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=bool)
    n = len(rewards)
    if n == 0:
        raise ValueError("compute_gae needs at least one transition")
    if len(values) != n or len(dones) != n:
        raise ValueError("rewards, values and dones must have equal length")
    adv = np.zeros(n)
    next_value = float(bootstrap_value)
    running = 0.0
    for k in range(n - 1, -1, -1):
        live = 0.0 if dones[k] else 1.0
        delta = rewards[k] + gamma * next_value * live - values[k]
        running = delta + gamma * lam * live * running
        adv[k] = running
        next_value = values[k]
    return adv, adv + values


def normalize_advantages(adv):
    adv = np.asarray(adv, dtype=float)
    if adv.size < 2:
        return adv - adv.mean()
    return (adv - adv.mean()) / (adv.std() + 1e-8)


def clipped_policy_loss(logp_new, logp_old, advantages, clip_eps):
    """Negative mean clipped surrogate and its gradient w.r.t. ``logp_new``."""
    logp_new = np.asarray(logp_new, dtype=float)
    adv = np.asarray(advantages, dtype=float)
    ratio = np.exp(logp_new - np.asarray(logp_old, dtype=float))
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * adv
    objective = np.minimum(unclipped, clipped)
    # The clipped branch carries no gradient wherever it is selected and the clip binds.
    binding = ((adv > 0) & (ratio > 1.0 + clip_eps)) | ((adv < 0) & (ratio < 1.0 - clip_eps))
    n = len(objective)
    grad = np.where(binding, 0.0, -unclipped / n)
    return -float(objective.mean()), grad


def value_loss(values_pred, targets):
    diff = np.asarray(values_pred, dtype=float) - np.asarray(targets, dtype=float)
    return float(np.mean(0.5 * diff * diff)), diff / len(diff)


def minibatch_gradients(params: ActorCriticParams, states, actions, logp_old, advantages,
                        returns, cfg: PpoConfig):
    """Loss pieces and raw gradients for one minibatch (``None`` gradients for a non-finite loss)."""
    mean, log_std, value, cache = forward(params, states)
    logp_new = log_prob(mean, log_std, actions)
    pi_loss, d_logp = clipped_policy_loss(logp_new, logp_old, advantages, cfg.clip_eps)
    v_loss, d_v = value_loss(value, returns)
    ent = entropy(log_std)
    total = pi_loss + cfg.value_coef * v_loss - cfg.entropy_coef * ent
    if not math.isfinite(total):
        return None, {"loss": total}

    inv_var = np.exp(-2.0 * log_std)
    diff = actions - mean
    d_mean = d_logp[:, None] * diff * inv_var
    d_log_std = (d_logp[:, None] * (diff * diff * inv_var - 1.0)).sum(axis=0)
    d_log_std = d_log_std - cfg.entropy_coef
    grads = backward(params, cache, d_mean, d_log_std, cfg.value_coef * d_v)

    log_ratio = logp_new - logp_old
    ratio = np.exp(log_ratio)
    stats = {
        "loss": total,
        "policy_loss": pi_loss,
        "value_loss": v_loss,
        "entropy": ent,
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > cfg.clip_eps)),
        "approx_kl": float(np.mean((ratio - 1.0) - log_ratio)),
    }
    return grads, stats


def ppo_update(buffer: RolloutBuffer, params: ActorCriticParams, opt: AdamState, cfg: PpoConfig,
               rng=None):
    """Run ``cfg.epochs`` passes of shuffled minibatch updates over ``buffer``.

    Returns ``(params, opt, stats)``. A non-finite loss stops the update and
    returns the parameters from before the offending minibatch with
    ``stats["aborted"]`` set.
    """
    if buffer.advantages is None:
        raise ValueError("compute advantages before calling ppo_update")
    rng = rng if rng is not None else np.random.default_rng(0)
    n = len(buffer)
    adv = normalize_advantages(buffer.advantages)
    totals = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0,
              "clip_fraction": 0.0, "approx_kl": 0.0}
    count = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            grads, stats = minibatch_gradients(
                params, buffer.states[idx], buffer.actions[idx], buffer.logp_old[idx],
                adv[idx], buffer.returns[idx], cfg,
            )
            if not math.isfinite(stats["loss"]):
                out = {k: v / max(count, 1) for k, v in totals.items()}
                out.update(aborted=True, diagnostic=f"non-finite loss {stats['loss']!r}",
                           minibatches=count)
                return params, opt, out
            grads, _ = clip_grad_norm(grads, cfg.max_grad_norm)
            params, opt = adam_update(params, grads, opt)
            for k in totals:
                totals[k] += stats[k]
            count += 1
    out = {k: v / count for k, v in totals.items()}
    out.update(aborted=False, diagnostic="", minibatches=count)
    return params, opt, out


class ReturnScaler:
    """Divides rewards by the running std of the discounted return.

    Keeps value targets O(1) whatever the raw reward magnitude, so the critic
    gradient cannot swamp the policy gradient under global norm clipping.
    """

    def __init__(self, gamma, clip=10.0):
        self.gamma = gamma
        self.clip = clip
        self.ret = 0.0
        self.count = 0
        self.mean = 0.0
        self.m2 = 0.0

    def __call__(self, reward, done):
        self.ret = self.ret * self.gamma + reward
        self.count += 1
        delta = self.ret - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (self.ret - self.mean)
        if done:
            self.ret = 0.0
        var = self.m2 / self.count if self.count > 1 else 1.0
        scaled = reward / math.sqrt(var + 1e-8)
        return min(max(scaled, -self.clip), self.clip)


def collect_rollout(env, params, obs, n_steps, act_rng, env_rng, episode_state, scaler=None):
    """Step ``env`` ``n_steps`` times under the stochastic policy.

    ``episode_state`` is a dict carrying the running episode return across
    calls; ``scaler`` optionally rescales the stored rewards (episode returns
    stay raw). Returns ``(buffer, next_obs, completed_returns, abs_errors)``.
    """
    transitions = []
    completed = []
    abs_errors = []
    done = False
    for _ in range(n_steps):
        mean, log_std, value, _ = forward(params, obs)
        a, logp = sample_action(mean, log_std, act_rng)
        next_obs, reward, done, info = env.step(a)
        stored = reward if scaler is None else scaler(reward, done)
        transitions.append(Transition(obs, a, logp, stored, value, done))
        abs_errors.append(info["abs_error"])
        episode_state["return"] += reward
        if done:
            completed.append(episode_state["return"])
            episode_state["return"] = 0.0
            obs = env.reset(env_rng)
        else:
            obs = next_obs
    bootstrap = 0.0 if done else forward(params, obs)[2]
    return RolloutBuffer.from_transitions(transitions, bootstrap), obs, completed, abs_errors


def train(env_factory, params: ActorCriticParams, cfg: PpoConfig, rng, checkpoint_dir=None,
          seed=None, return_optimizer=False):
    """Alternate rollout collection and PPO updates until ``total_steps`` env steps.

    ``rng`` is split into independent streams for the environment, action
    sampling and minibatch shuffling, so a fixed seed reproduces the run
    exactly. Returns ``(params, training_log)`` with one dict per iteration,
    plus the final Adam state when ``return_optimizer`` is set.
    """
    training_log = []
    opt = init_adam(params, lr=cfg.lr)
    if cfg.total_steps == 0:
        return (params, training_log, opt) if return_optimizer else (params, training_log)
    env = env_factory()
    env_rng, act_rng, shuffle_rng = rng.spawn(3)
    obs = env.reset(env_rng)
    episode_state = {"return": 0.0}
    scaler = ReturnScaler(cfg.gamma, cfg.reward_clip) if cfg.normalize_rewards else None
    steps = 0
    iteration = 0
    while steps < cfg.total_steps:
        n = min(cfg.rollout_length, cfg.total_steps - steps)
        buffer, obs, completed, abs_errors = collect_rollout(
            env, params, obs, n, act_rng, env_rng, episode_state, scaler
        )
        steps += n
        iteration += 1
        buffer.compute_advantages(cfg.gamma, cfg.lam)
        params, opt, stats = ppo_update(buffer, params, opt, cfg, shuffle_rng)
        if stats["aborted"]:
            log.warning("iteration %d: update aborted (%s)", iteration, stats["diagnostic"])
        row = {
            "iteration": iteration,
            "env_steps": steps,
            "mean_episode_return": float(np.mean(completed)) if completed else float("nan"),
            "mean_abs_error": float(np.mean(abs_errors)),
            "policy_loss": stats["policy_loss"],
            "value_loss": stats["value_loss"],
            "clip_fraction": stats["clip_fraction"],
            "approx_kl": stats["approx_kl"],
        }
        training_log.append(row)
        log.info("iter %d steps %d return %.3f |e| %.4f", iteration, steps,
                 row["mean_episode_return"], row["mean_abs_error"])
        if checkpoint_dir is not None and cfg.checkpoint_every and iteration % cfg.checkpoint_every == 0:
            path = Path(checkpoint_dir) / f"checkpoint_{iteration:05d}.json"
            save_checkpoint(path, params, opt, seed, meta={"ppo": asdict(cfg), "env_steps": steps})
    if return_optimizer:
        return params, training_log, opt
    return params, training_log
