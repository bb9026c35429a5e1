"""PPO fine-tuning of a pretrained actor with a fresh critic."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from ..mlp import (AdamState, MLPParams, OBS_DIM, HIDDEN, actor_forward, adam_step, backward,
                   critic_forward, forward, init_params, log_softmax)
from .dpo import EmptyBatch
from .env import sample_action


class LengthMismatch(ValueError):
    pass


@dataclass(frozen=True)
class PPOConfig:
    iterations: int = 244
    epochs: int = 10
    rollout_steps: int = 512
    minibatch: int = 64
    lr: float = 3e-4
    clip: float = 0.2
    gamma: float = 0.99
    lam: float = 0.95
    c1: float = 0.5
    c2: float = 0.0
    n_envs: int = 4
    normalize_advantages: bool = True
    max_grad_norm: float | None = 0.5

    def __post_init__(self):
        if not 0 < self.clip < 1:
            raise ValueError("clip must lie in (0, 1)")
        if not (0 <= self.gamma <= 1 and 0 <= self.lam <= 1):
            raise ValueError("gamma and lambda must lie in [0, 1]")
        for name in ("iterations", "epochs", "rollout_steps", "minibatch", "n_envs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")

    @property
    def total_env_steps(self) -> int:
        return self.iterations * self.rollout_steps * self.n_envs


def compute_gae(rewards, values, next_values, dones, gamma: float, lam: float):
    """Advantages and value targets along one time-ordered sequence."""
    r = np.asarray(rewards, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    nv = np.asarray(next_values, dtype=np.float64)
    d = np.asarray(dones, dtype=np.float64)
    if not (r.shape == v.shape == nv.shape == d.shape):
        raise LengthMismatch("rewards, values, next values and done flags must align")
    notdone = 1.0 - d
    delta = r + gamma * nv * notdone - v
    adv = np.zeros_like(r)
    running = 0.0
    for t in range(len(r) - 1, -1, -1):
        running = delta[t] + gamma * lam * notdone[t] * running
        adv[t] = running
    return adv, v + adv


def clip_grad_norm(grads, max_norm: float):
    """Rescale a group of gradients so their joint L2 norm is at most ``max_norm``."""
    total = np.sqrt(sum(float(np.sum(a * a)) for g in grads for a in g.arrays()))
    if total <= max_norm:
        return grads
    scale = max_norm / (total + 1e-6)
    return tuple(MLPParams(*(a * scale for a in g.arrays())) for g in grads)


@dataclass
class RolloutBatch:
    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_obs: np.ndarray
    dones: np.ndarray
    values: np.ndarray
    next_values: np.ndarray
    advantages: np.ndarray
    targets: np.ndarray
    old_logp: np.ndarray

    def __len__(self):
        return len(self.actions)

    def take(self, idx) -> "RolloutBatch":
        return RolloutBatch(*(getattr(self, f)[idx] for f in self.__dataclass_fields__))


def ppo_loss(batch: RolloutBatch, theta: MLPParams, phi: MLPParams, cfg: PPOConfig):
    """Clipped PPO loss (to minimize) and gradients for actor and critic.

    Returns ``(loss, grad_theta, grad_phi, info)``.
    """
    n = len(batch)
    if n == 0:
        raise EmptyBatch("PPO batch is empty")
    rows = np.arange(n)
    adv = batch.advantages
    if cfg.normalize_advantages and n > 1:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)

    logits, a_cache = forward(theta, batch.obs)
    lp = log_softmax(logits)
    p = np.exp(lp)
    logp = lp[rows, batch.actions]
    ratio = np.exp(logp - batch.old_logp)
    clipped = np.clip(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip)
    surr1, surr2 = ratio * adv, clipped * adv
    actor_loss = -float(np.mean(np.minimum(surr1, surr2)))
    entropy = -(p * lp).sum(axis=1)

    # unclipped branch carries the gradient when it is the (weak) minimum
    active = surr1 <= surr2
    d_logp = np.where(active, -ratio * adv, 0.0) / n
    d_logits = -p * d_logp[:, None]
    d_logits[rows, batch.actions] += d_logp
    if cfg.c2:
        # dS/dlogit_j = -p_j (log p_j + S)
        d_logits += cfg.c2 / n * p * (lp + entropy[:, None])
    g_theta = backward(theta, a_cache, d_logits)

    value, c_cache = forward(phi, batch.obs)
    err = value[:, 0] - batch.targets
    value_loss = float(np.mean(err ** 2))
    g_phi = backward(phi, c_cache, (2.0 * cfg.c1 / n) * err)

    loss = actor_loss + cfg.c1 * value_loss - cfg.c2 * float(np.mean(entropy))
    info = {
        "actor_loss": actor_loss,
        "value_loss": value_loss,
        "entropy": float(np.mean(entropy)),
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > cfg.clip)),
        "max_ratio_dev": float(np.max(np.abs(ratio - 1.0))),
    }
    return loss, g_theta, g_phi, info


def collect_rollout(envs, obs, theta: MLPParams, phi: MLPParams, steps: int, rng, returns: list):
    """Roll every env forward ``steps`` times; returns per-env arrays shaped (n_envs, steps, ...)."""
    n_envs = len(envs)
    S = np.zeros((n_envs, steps, OBS_DIM))
    S2 = np.zeros_like(S)
    A = np.zeros((n_envs, steps), dtype=np.int64)
    R = np.zeros((n_envs, steps))
    D = np.zeros((n_envs, steps))
    LP = np.zeros((n_envs, steps))
    for t in range(steps):
        probs, logits = actor_forward(theta, np.stack(obs))
        lps = log_softmax(logits)
        for i, env in enumerate(envs):
            a = sample_action(probs[i], rng)
            S[i, t], A[i, t], LP[i, t] = obs[i], a, lps[i, a]
            nxt, r, done, info = env.step(a)
            R[i, t], D[i, t] = r, float(done)
            S2[i, t] = info["terminal_obs"] if done else nxt
            if done:
                returns.append(info["episode_return"])
            obs[i] = nxt
    V = critic_forward(phi, S.reshape(-1, OBS_DIM)).reshape(n_envs, steps)
    V2 = critic_forward(phi, S2.reshape(-1, OBS_DIM)).reshape(n_envs, steps)
    return S, A, R, S2, D, V, V2, LP


def run_rl_finetune(base: MLPParams, envs, cfg: PPOConfig = PPOConfig(), seed: int = 0,
                    critic: MLPParams | None = None, hook=None, return_critic: bool = False):
    """Fine-tune ``base`` with PPO over ``envs`` (one simulator per parallel env).

    ``hook(record, theta)`` runs after every iteration.
    """
    if len(envs) != cfg.n_envs:
        raise ValueError(f"expected {cfg.n_envs} environments, got {len(envs)}")
    ss = np.random.SeedSequence(seed)
    critic_seed, rng_seed = ss.generate_state(2)
    rng = np.random.default_rng(rng_seed)
    theta = base.copy()
    phi = critic.copy() if critic is not None else init_params((OBS_DIM, HIDDEN, HIDDEN, 1), int(critic_seed))
    adam_a, adam_c = AdamState(lr=cfg.lr), AdamState(lr=cfg.lr)
    obs = [env.reset() for env in envs]
    t0 = time.time()
    for it in range(cfg.iterations):
        returns: list[float] = []
        S, A, R, S2, D, V, V2, LP = collect_rollout(envs, obs, theta, phi, cfg.rollout_steps, rng, returns)
        adv = np.zeros_like(R)
        tgt = np.zeros_like(R)
        for i in range(len(envs)):
            adv[i], tgt[i] = compute_gae(R[i], V[i], V2[i], D[i], cfg.gamma, cfg.lam)
        # merge in (env index, step index) order
        buf = RolloutBatch(S.reshape(-1, OBS_DIM), A.ravel(), R.ravel(), S2.reshape(-1, OBS_DIM),
                           D.ravel(), V.ravel(), V2.ravel(), adv.ravel(), tgt.ravel(), LP.ravel())
        n = len(buf)
        stats = []
        first_ratio_dev = None
        for _ in range(cfg.epochs):
            perm = rng.permutation(n)
            for lo in range(0, n, cfg.minibatch):
                mb = buf.take(perm[lo:lo + cfg.minibatch])
                loss, g_theta, g_phi, info = ppo_loss(mb, theta, phi, cfg)
                if first_ratio_dev is None:
                    first_ratio_dev = info["max_ratio_dev"]
                if cfg.max_grad_norm:
                    g_theta, g_phi = clip_grad_norm((g_theta, g_phi), cfg.max_grad_norm)
                theta, adam_a = adam_step(theta, g_theta, adam_a)
                phi, adam_c = adam_step(phi, g_phi, adam_c)
                stats.append((loss, info["actor_loss"], info["value_loss"], info["entropy"]))
        del buf  # the rollout buffer is rebuilt from scratch next iteration
        if hook is not None:
            s = np.mean(stats, axis=0)
            hook({
                "stage": "rl",
                "iteration": it + 1,
                "buffer_size": n,
                "mean_episode_reward": float(np.mean(returns)) if returns else None,
                "loss": float(s[0]),
                "actor_loss": float(s[1]),
                "value_loss": float(s[2]),
                "entropy": float(s[3]),
                "first_minibatch_max_ratio_dev": first_ratio_dev,
                "wall_time": time.time() - t0,
            }, theta)
    return (theta, phi) if return_critic else theta
