"""Independent reference computations shared by the unit and acceptance tests."""
import numpy as np

from prlpid.neuralnet import ActorCriticParams, backward, forward


def gae_brute_force(rewards, values, dones, bootstrap, gamma, lam):
    """Direct double sum of discounted TD residuals, cut at episode ends."""
    n = len(rewards)
    nxt = list(values[1:]) + [bootstrap]
    delta = [rewards[k] + gamma * nxt[k] * (0.0 if dones[k] else 1.0) - values[k] for k in range(n)]
    adv = np.zeros(n)
    for k in range(n):
        total, weight = 0.0, 1.0
        for j in range(k, n):
            total += weight * delta[j]
            if dones[j]:
                break
            weight *= gamma * lam
        adv[k] = total
    return adv


def scalar_loss_parts(rng, n, act_dim):
    """Random upstream coefficients for L = sum(cm * mean) + 0.5 sum(mean^2) + sum(cv * v) + 0.5 sum(v^2) + cl . log_std."""
    return rng.normal(size=(n, act_dim)), rng.normal(size=n), rng.normal(size=act_dim)


def scalar_loss(params, x, cm, cv, cl):
    mean, log_std, value, _ = forward(params, x)
    return float(np.sum(cm * mean) + 0.5 * np.sum(mean * mean) + np.sum(cv * value)
                 + 0.5 * np.sum(value * value) + np.sum(cl * log_std))


def analytic_grads(params, x, cm, cv, cl):
    mean, log_std, value, cache = forward(params, x)
    return backward(params, cache, cm + mean, cl, cv + value)


def finite_difference_errors(params: ActorCriticParams, x, cm, cv, cl, h=1e-5):
    """Per-group relative error ||g_analytic - g_fd|| / ||g_fd|| with central differences."""
    grads = analytic_grads(params, x, cm, cv, cl)
    out = {}
    for name, arr in params.arrays().items():
        fd = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + h
            up = scalar_loss(params, x, cm, cv, cl)
            arr[idx] = orig - h
            down = scalar_loss(params, x, cm, cv, cl)
            arr[idx] = orig
            fd[idx] = (up - down) / (2.0 * h)
        g = getattr(grads, name)
        out[name] = float(np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-300))
    return out


def small_network(rng, in_dim=4, act_dim=3, hidden=8):
    """Randomized network with nonzero biases (hidden width reduced to keep FD cheap)."""
    from prlpid.neuralnet import init_params

    p = init_params(in_dim, act_dim, rng, hidden=hidden)
    for name, arr in p.arrays().items():
        arr += 0.3 * rng.normal(size=arr.shape)
    return p
