"""Rule-based bitrate controllers: BB, BOLA, RobustMPC and QUETRA.

Every controller is a pure function of a ``ControllerState`` snapshot of
what a player can observe.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.stats import poisson

from .qoe import QoEConfig
from .sim import HISTORY_LEN, SimState
from .video import VideoManifest


@dataclass(frozen=True)
class ControllerState:
    buffer_s: float
    throughputs_mbps: tuple[float, ...]  # oldest first, at most 8
    download_times_s: tuple[float, ...]
    last_level: int
    next_chunk_sizes: tuple[float, ...]
    chunks_remaining: int
    next_chunk_index: int = 0

    @classmethod
    def from_sim(cls, state: SimState) -> "ControllerState":
        n = state.n_samples
        thr = tuple(state.throughput_mbps[HISTORY_LEN - n:].tolist()) if n else ()
        dts = tuple(state.delay_hist_s[HISTORY_LEN - n:].tolist()) if n else ()
        return cls(
            buffer_s=state.buffer_s,
            throughputs_mbps=thr,
            download_times_s=dts,
            last_level=state.last_level,
            next_chunk_sizes=tuple(state.next_chunk_sizes().tolist()),
            chunks_remaining=state.chunks_remaining,
            next_chunk_index=state.next_chunk_index,
        )


# --- BB ---------------------------------------------------------------------

@dataclass(frozen=True)
class BBConfig:
    reservoir_s: float = 5.0
    cushion_s: float = 10.0


def bb_select(state: ControllerState, ladder, cfg: BBConfig = BBConfig()) -> int:
    top = len(ladder) - 1
    buf = state.buffer_s
    if buf <= cfg.reservoir_s:
        return 0
    if buf >= cfg.reservoir_s + cfg.cushion_s:
        return top
    return int(math.floor(top * (buf - cfg.reservoir_s) / cfg.cushion_s))


# --- BOLA -------------------------------------------------------------------

@dataclass(frozen=True)
class BolaConfig:
    min_buffer_s: float = 10.0
    max_buffer_s: float = 60.0
    chunk_duration_s: float = 4.0


def bola_params(sizes, cfg: BolaConfig):
    """Return (utilities, V, gamma*p) for BOLA-basic.

    Utilities are ln(S_m / S_0) shifted by +1 so the lowest level has
    utility 1; V and gamma*p put the lowest level's decision threshold at
    the minimum buffer target and the top level's at the maximum.
    """
    sizes = np.asarray(sizes, dtype=np.float64)
    util = np.log(sizes / sizes[0]) + 1.0
    q_min = cfg.min_buffer_s / cfg.chunk_duration_s
    q_max = cfg.max_buffer_s / cfg.chunk_duration_s
    gp = (util[-1] - 1.0) / (q_max / q_min - 1.0)
    v = q_min / gp if gp > 0 else math.inf
    return util, v, gp


def bola_scores(state: ControllerState, cfg: BolaConfig = BolaConfig()) -> np.ndarray:
    sizes = np.asarray(state.next_chunk_sizes, dtype=np.float64)
    util, v, gp = bola_params(sizes, cfg)
    q = state.buffer_s / cfg.chunk_duration_s
    return (v * (util + gp) - q) / sizes


def bola_select(state: ControllerState, ladder, cfg: BolaConfig = BolaConfig()) -> int:
    sizes = np.asarray(state.next_chunk_sizes, dtype=np.float64)
    if np.all(sizes == sizes[0]):
        # no utility spread: every level scores the same, take the top one
        return len(ladder) - 1
    scores = bola_scores(state, cfg)
    # ties toward the higher level
    return int(len(scores) - 1 - np.argmax(scores[::-1]))


# --- RobustMPC --------------------------------------------------------------

@dataclass(frozen=True)
class MPCConfig:
    horizon: int = 5
    window: int = 5
    chunk_duration_s: float = 4.0


def harmonic_mean(samples) -> float:
    samples = [s for s in samples]
    return len(samples) / math.fsum(1.0 / s for s in samples)


def prediction_errors(throughputs, window: int = 5) -> list[float]:
    """Relative errors of the harmonic-mean predictor on each observed sample.

    The prediction for sample j is the harmonic mean of up to ``window``
    samples preceding it within the history.
    """
    errs = []
    for j in range(1, len(throughputs)):
        pred = harmonic_mean(throughputs[max(0, j - window):j])
        actual = throughputs[j]
        errs.append(abs(pred - actual) / actual)
    return errs


def predict_throughput(throughputs, ladder, errors=(), window: int = 5) -> float:
    """Robust throughput estimate in Mbps: harmonic mean / (1 + max recent error)."""
    if not throughputs:
        return ladder[0] / 1000.0
    hm = harmonic_mean(throughputs[-window:])
    max_err = max(errors[-window:]) if len(errors) else 0.0
    return hm / (1.0 + max_err)


@lru_cache(maxsize=None)
def _sequences(n_levels: int, depth: int) -> np.ndarray:
    return np.array(list(itertools.product(range(n_levels), repeat=depth)), dtype=np.int64)


def mpc_sequence_scores(buffer_s, last_level, chunk_index, bandwidth_mbps, video: VideoManifest,
                        qoe: QoEConfig, depth: int, chunk_duration_s: float = 4.0):
    """QoE of every level sequence of length ``depth`` (lexicographic order)."""
    seqs = _sequences(video.n_levels, depth)
    ladder_q = np.asarray(video.ladder_kbps, dtype=np.float64) / 1000.0
    buf = np.full(len(seqs), float(buffer_s))
    prev_q = np.full(len(seqs), ladder_q[last_level])
    score = np.zeros(len(seqs))
    for d in range(depth):
        lv = seqs[:, d]
        sizes = video.sizes_bytes[lv, chunk_index + d].astype(np.float64)
        dl = sizes * 8.0 / 1e6 / bandwidth_mbps
        rebuf = np.maximum(dl - buf, 0.0)
        buf = np.maximum(buf - dl, 0.0) + chunk_duration_s
        q = ladder_q[lv]
        score = score + q - qoe.mu * rebuf - qoe.delta * np.abs(q - prev_q)
        prev_q = q
    return seqs, score


def robust_mpc_select(state: ControllerState, video: VideoManifest, ladder, qoe: QoEConfig,
                      cfg: MPCConfig = MPCConfig()) -> int:
    thr = list(state.throughputs_mbps)
    bw = predict_throughput(thr, ladder, prediction_errors(thr, cfg.window), cfg.window)
    depth = min(cfg.horizon, state.chunks_remaining)
    if depth <= 0:
        return 0
    seqs, score = mpc_sequence_scores(state.buffer_s, state.last_level, state.next_chunk_index,
                                      bw, video, qoe, depth, cfg.chunk_duration_s)
    # argmax returns the first maximum: lexicographically smallest sequence
    return int(seqs[int(np.argmax(score)), 0])


# --- QUETRA -----------------------------------------------------------------

@dataclass(frozen=True)
class QuetraConfig:
    capacity_chunks: int = 15  # buffer threshold / chunk duration
    window: int = 5
    chunk_duration_s: float = 4.0


def md1k_occupancy(rho: float, k: int) -> float:
    """Time-average number in an M/D/1/K system with load ``rho``.

    Solves the embedded chain at departure epochs (states 0..K-1) and maps
    it to the time-average distribution over 0..K.
    """
    if k < 1:
        raise ValueError("capacity must be at least 1")
    if rho <= 0:
        return 0.0
    a = poisson.pmf(np.arange(k), rho)
    tail = lambda n: max(0.0, 1.0 - float(a[:n].sum()))  # noqa: E731  P(A >= n)
    P = np.zeros((k, k))
    for i in range(k):
        base = max(i - 1, 0)
        for j in range(base, k - 1):
            P[i, j] = a[j - base]
        P[i, k - 1] = tail(k - 1 - base)
    # pi (P - I) = 0 with sum(pi) = 1
    A = np.vstack([(P - np.eye(k)).T, np.ones(k)])
    b = np.zeros(k + 1)
    b[-1] = 1.0
    pi_d, *_ = np.linalg.lstsq(A, b, rcond=None)
    denom = pi_d[0] + rho
    p = np.empty(k + 1)
    p[:k] = pi_d / denom
    p[k] = 1.0 - 1.0 / denom
    return float(np.dot(np.arange(k + 1), p))


def quetra_select(state: ControllerState, ladder, cfg: QuetraConfig = QuetraConfig()) -> int:
    thr = list(state.throughputs_mbps)
    est = harmonic_mean(thr[-cfg.window:]) if thr else ladder[0] / 1000.0
    # buffer slack: room left in the K-chunk buffer
    target = max(cfg.capacity_chunks - state.buffer_s / cfg.chunk_duration_s, 0.0)
    gaps = [abs(md1k_occupancy(est / (r / 1000.0), cfg.capacity_chunks) - target) for r in ladder]
    gaps = np.asarray(gaps)
    # ties toward the higher level
    return int(len(gaps) - 1 - np.argmin(gaps[::-1]))


CONTROLLERS = ("bb", "bola", "robustmpc", "quetra")


def make_controller(name: str, video: VideoManifest, qoe: QoEConfig, sim_cfg=None):
    """Return ``select(ControllerState) -> level`` for a controller name."""
    ladder = video.ladder_kbps
    chunk_s = video.chunk_duration_ms / 1000.0
    if name == "bb":
        return lambda s: bb_select(s, ladder)
    if name == "bola":
        max_buf = sim_cfg.buffer_threshold_ms / 1000.0 if sim_cfg else 60.0
        cfg = BolaConfig(max_buffer_s=max_buf, chunk_duration_s=chunk_s)
        return lambda s: bola_select(s, ladder, cfg)
    if name == "robustmpc":
        cfg = MPCConfig(chunk_duration_s=chunk_s)
        return lambda s: robust_mpc_select(s, video, ladder, qoe, cfg)
    if name == "quetra":
        k = int(round(sim_cfg.buffer_threshold_ms / sim_cfg.chunk_duration_ms)) if sim_cfg else 15
        cfg = QuetraConfig(capacity_chunks=k, chunk_duration_s=chunk_s)
        return lambda s: quetra_select(s, ladder, cfg)
    raise ValueError(f"unknown controller {name!r}; choose from {CONTROLLERS}")
