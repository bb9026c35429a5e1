"""Beam-search expert that plans over the simulator's true future trace."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .qoe import QoEConfig
from .sim import EpisodeFinished, SimState, advance


@dataclass(frozen=True)
class ExpertConfig:
    horizon: int = 5
    max_beams: int = 5000
    qoe: QoEConfig = QoEConfig()

    def __post_init__(self):
        if self.horizon < 1 or self.max_beams < 1:
            raise ValueError("horizon and max_beams must be at least 1")


def beam_scores(state: SimState, cfg: ExpertConfig):
    """Run the pruned search and return (sequences, cumulative scores).

    Beams are kept in lexicographic order of their level sequences, so the
    first maximum of the returned scores is the tie-break winner.
    """
    if state.done:
        raise EpisodeFinished("no chunk left to plan for")
    video, sim_cfg, tl = state.video, state.cfg, state.timeline
    n_levels = video.n_levels
    ladder_q = np.asarray(video.ladder_kbps, dtype=np.float64) / 1000.0
    mu, delta = cfg.qoe.mu, cfg.qoe.delta
    depth = min(cfg.horizon, state.chunks_remaining)

    seqs = np.zeros((1, 0), dtype=np.int64)
    tau = np.array([state.tau])
    buf = np.array([state.buffer_ms])
    last = np.array([state.last_level])
    score = np.zeros(1)
    levels = np.arange(n_levels)
    for d in range(depth):
        n = len(score)
        parent = np.repeat(np.arange(n), n_levels)
        lv = np.tile(levels, n)
        chunk = video.sizes_bytes[lv, state.next_chunk_index + d].astype(np.float64)
        tau, buf, _, _, rebuf = advance(tl, sim_cfg, tau[parent], buf[parent], chunk)
        q = ladder_q[lv]
        score = score[parent] + (q - mu * rebuf - delta * np.abs(q - ladder_q[last[parent]]))
        seqs = np.concatenate([seqs[parent], lv[:, None]], axis=1)
        last = lv
        if len(score) > cfg.max_beams:
            # stable sort keeps lexicographic order among equal scores
            keep = np.sort(np.argsort(-score, kind="stable")[: cfg.max_beams])
            seqs, tau, buf, last, score = seqs[keep], tau[keep], buf[keep], last[keep], score[keep]
    return seqs, score


def beam_search(state: SimState, cfg: ExpertConfig = ExpertConfig()) -> int:
    """Preferred level for the next chunk; ``state`` is left untouched."""
    seqs, score = beam_scores(state, cfg)
    return int(seqs[int(np.argmax(score)), 0])


def exhaustive_search(state: SimState, horizon: int, qoe: QoEConfig) -> tuple[int, float]:
    """Reference planner: recursive enumeration over snapshots of the scalar simulator.

    Returns (first level of the best sequence, its cumulative score).
    """
    ladder = state.video.ladder_kbps
    depth = min(horizon, state.chunks_remaining)
    best = [None, -np.inf]

    def rec(s: SimState, d: int, first: int | None, acc: float):
        if d == depth:
            if acc > best[1]:
                best[0], best[1] = first, acc
            return
        for lv in range(len(ladder)):
            child = s.snapshot()
            _, out, _ = child.step(lv)
            q = ladder[lv] / 1000.0
            r = q - qoe.mu * out.rebuffer_s - qoe.delta * abs(q - ladder[out.prev_level] / 1000.0)
            rec(child, d + 1, lv if first is None else first, acc + r)

    rec(state, 0, None, 0.0)
    return best[0], best[1]
