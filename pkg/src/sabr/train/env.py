"""Auto-resetting training environment over a pool of traces."""

from __future__ import annotations

import numpy as np

from ..qoe import QoEConfig, step_reward
from ..sim import Deterministic, RandomOffset, SimConfig, Timeline, reset
from ..video import VideoManifest


class TrainEnv:
    """One simulator that draws a fresh trace (uniformly, seeded) per episode.

    ``step`` returns ``(obs, reward, done, info)``; when ``done`` the returned
    observation already belongs to the next episode and the terminal
    observation is in ``info["terminal_obs"]``.
    """

    def __init__(self, traces, video: VideoManifest, qoe: QoEConfig, seed: int,
                 sim_cfg: SimConfig | None = None, random_start: bool = True):
        if not traces:
            raise ValueError("training pool is empty")
        self.traces = list(traces)
        self.video = video
        self.qoe = qoe
        self.sim_cfg = sim_cfg or SimConfig(chunk_duration_ms=video.chunk_duration_ms)
        self.random_start = random_start
        self.rng = np.random.default_rng(seed)
        self._timelines: dict[int, Timeline] = {}
        self.state = None
        self.episode_return = 0.0
        self.episodes_done = 0

    def reset(self):
        i = int(self.rng.integers(len(self.traces)))
        trace = self.traces[i]
        tl = self._timelines.get(i)
        if tl is None:
            tl = self._timelines[i] = Timeline(trace, self.sim_cfg.payload_portion)
        start = RandomOffset(int(self.rng.integers(2**63))) if self.random_start else Deterministic()
        self.state, obs = reset(trace, self.video, self.sim_cfg, start, timeline=tl)
        self.episode_return = 0.0
        return obs

    def step(self, action: int):
        obs, outcome, (prev, level, rebuf) = self.state.step(action)
        ladder = self.video.ladder_kbps
        reward = step_reward(ladder[prev], ladder[level], rebuf, self.qoe)
        self.episode_return += reward
        info = {"outcome": outcome}
        if outcome.done:
            info["terminal_obs"] = obs
            info["episode_return"] = self.episode_return
            self.episodes_done += 1
            obs = self.reset()
        return obs, reward, outcome.done, info


def sample_action(probs: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-CDF draw from a probability vector."""
    cdf = np.cumsum(probs)
    return int(min(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"), len(probs) - 1))
