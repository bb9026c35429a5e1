"""Behavior-cloning pretraining with a step-wise DPO loss over DAgger rollouts."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import SabrError
from ..expert import ExpertConfig, beam_search
from ..mlp import AdamState, MLPParams, actor_forward, adam_step, backward, forward, init_params, log_softmax
from .env import TrainEnv, sample_action


class EmptyBatch(ValueError):
    pass


class ExpertFailure(SabrError):
    pass


@dataclass(frozen=True)
class DPOConfig:
    beta: float = 0.1
    iterations: int = 15
    epochs: int = 5
    rollout_steps: int = 2000
    minibatch: int = 128
    lr: float = 3e-4

    def __post_init__(self):
        if not all(v > 0 for v in asdict(self).values()):
            raise ValueError("DPO hyperparameters must be positive")


@dataclass
class PreferenceBatch:
    obs: np.ndarray          # (n, 48)
    a_w: np.ndarray          # (n,) expert levels
    a_l: np.ndarray          # (n,) alternative levels
    ref_logp_w: np.ndarray | None = None
    ref_logp_l: np.ndarray | None = None

    def __len__(self):
        return len(self.a_w)


def _log_sigmoid(z):
    return -np.logaddexp(0.0, -z)


def dpo_step_loss(batch: PreferenceBatch, theta: MLPParams, ref: MLPParams | None, beta: float):
    """Mean step-wise DPO loss and its gradient w.r.t. ``theta``.

    Reference log-probabilities are taken from the batch when present,
    otherwise computed from ``ref``; no gradient flows through them.
    """
    n = len(batch)
    if n == 0:
        raise EmptyBatch("DPO batch is empty")
    if np.any(batch.a_w == batch.a_l):
        raise ValueError("preferred and alternative actions must differ")
    rows = np.arange(n)
    if batch.ref_logp_w is None:
        ref_lp = log_softmax(forward(ref, batch.obs)[0])
        ref_w, ref_l = ref_lp[rows, batch.a_w], ref_lp[rows, batch.a_l]
    else:
        ref_w, ref_l = batch.ref_logp_w, batch.ref_logp_l
    logits, cache = forward(theta, batch.obs)
    lp = log_softmax(logits)
    z = beta * ((lp[rows, batch.a_w] - ref_w) - (lp[rows, batch.a_l] - ref_l))
    loss = -float(np.mean(_log_sigmoid(z)))
    # d(-log sigmoid z)/dz = -sigmoid(-z); log p_w - log p_l = logit_w - logit_l
    coef = -np.exp(_log_sigmoid(-z)) * beta / n
    d_logits = np.zeros_like(logits)
    d_logits[rows, batch.a_w] += coef
    d_logits[rows, batch.a_l] -= coef
    return loss, backward(theta, cache, d_logits)


def run_bc_pretraining(env: TrainEnv, cfg: DPOConfig = DPOConfig(), seed: int = 0,
                       expert=None, init: MLPParams | None = None, hook=None) -> MLPParams:
    """DAgger-style pretraining: roll out the learner, label with the expert, fit with DPO.

    ``expert`` maps a simulator state to a level (default: beam search).
    ``hook(record, params)`` is called after every iteration.
    """
    ss = np.random.SeedSequence(seed)
    init_seed, rng_seed = ss.generate_state(2)
    rng = np.random.default_rng(rng_seed)
    if expert is None:
        expert_cfg = ExpertConfig(qoe=env.qoe)
        expert = lambda state: beam_search(state, expert_cfg)  # noqa: E731
    theta = init.copy() if init is not None else init_params(seed=int(init_seed))
    ref = theta.copy()
    adam = AdamState(lr=cfg.lr)
    n_levels = env.video.n_levels

    obs_buf, aw_buf, al_buf, rw_buf, rl_buf = [], [], [], [], []
    obs = env.reset()
    t0 = time.time()
    for it in range(cfg.iterations):
        returns = []
        for _ in range(cfg.rollout_steps):
            probs, _ = actor_forward(theta, obs)
            a = sample_action(probs, rng)
            try:
                a_w = int(expert(env.state))
            except Exception as exc:
                raise ExpertFailure(f"expert failed at iteration {it}: {exc}") from exc
            a_l = int(rng.integers(n_levels - 1))
            a_l += a_l >= a_w
            ref_lp = log_softmax(forward(ref, obs)[0])[0]
            obs_buf.append(obs)
            aw_buf.append(a_w)
            al_buf.append(a_l)
            rw_buf.append(ref_lp[a_w])
            rl_buf.append(ref_lp[a_l])
            obs, _, done, info = env.step(a)
            if done:
                returns.append(info["episode_return"])

        data = PreferenceBatch(np.array(obs_buf), np.array(aw_buf), np.array(al_buf),
                               np.array(rw_buf), np.array(rl_buf))
        n = len(data)
        losses = []
        for _ in range(cfg.epochs):
            perm = rng.permutation(n)
            for lo in range(0, n, cfg.minibatch):
                idx = perm[lo:lo + cfg.minibatch]
                mb = PreferenceBatch(data.obs[idx], data.a_w[idx], data.a_l[idx],
                                     data.ref_logp_w[idx], data.ref_logp_l[idx])
                loss, grads = dpo_step_loss(mb, theta, None, cfg.beta)
                theta, adam = adam_step(theta, grads, adam)
                losses.append(loss)
        if hook is not None:
            hook({
                "stage": "bc",
                "iteration": it + 1,
                "buffer_size": n,
                "mean_episode_reward": float(np.mean(returns)) if returns else None,
                "dpo_loss": float(np.mean(losses)),
                "wall_time": time.time() - t0,
            }, theta)
    return theta
