"""Reference implementations shared by unit and acceptance tests."""

import numpy as np

from sabr.mlp import forward, init_params, log_softmax
from sabr.train import RolloutBatch


def gae_double_sum(rewards, values, next_values, dones, gamma, lam):
    """A_t = sum_k (gamma*lam)^k delta_{t+k}, truncated after the first done."""
    n = len(rewards)
    delta = [rewards[t] + gamma * next_values[t] * (1 - dones[t]) - values[t] for t in range(n)]
    adv = []
    for t in range(n):
        total, coef = 0.0, 1.0
        for k in range(t, n):
            total += coef * delta[k]
            if dones[k]:
                break
            coef *= gamma * lam
        adv.append(total)
    return np.array(adv)


def random_gae_case(rng, max_len=32):
    n = int(rng.integers(1, max_len + 1))
    return (rng.normal(size=n), rng.normal(size=n), rng.normal(size=n),
            (rng.random(n) < 0.2).astype(float), float(rng.uniform(0, 1)), float(rng.uniform(0, 1)))


def random_rollout(rng, n=16, spread=0.3):
    """A batch whose old log-probs sit near, but not at, the current actor's."""
    theta = init_params(seed=int(rng.integers(2**31)))
    phi = init_params((48, 64, 64, 1), seed=int(rng.integers(2**31)))
    obs = rng.normal(size=(n, 48))
    actions = rng.integers(0, 6, n)
    logp = log_softmax(forward(theta, obs)[0])[np.arange(n), actions]
    z = np.zeros(n)
    batch = RolloutBatch(obs, actions, z, obs, z, z, z, rng.normal(size=n), rng.normal(size=n),
                         logp + rng.uniform(-spread, spread, n))
    return batch, theta, phi
