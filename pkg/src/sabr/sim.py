"""Trace-driven chunk-level playback simulator.

Network time is tracked as an absolute position ``tau`` (seconds since the
start of the trace, growing past the trace end as the trace wraps around).
Bandwidth sample ``i`` holds over ``[t_i, t_{i+1})``; the final sample only
closes the last segment.  Downloads are resolved in closed form by inverting
the cumulative delivered-bytes curve, so a single chunk never walks the
trace point by point and the same kernel serves one state or a whole batch
of lookahead beams.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, SimulationError
from .traces import Trace
from .video import VideoManifest

HISTORY_LEN = 8
OBS_ROWS = 6
OBS_DIM = OBS_ROWS * HISTORY_LEN
BUFFER_NORM_S = 10.0
THROUGHPUT_NORM_MBPS = 8.0
DELAY_NORM_S = 10.0


class StalledForever(SimulationError):
    pass


class EpisodeFinished(SimulationError):
    pass


class BadAction(SimulationError, ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    chunk_duration_ms: float = 4000.0
    buffer_threshold_ms: float = 60000.0
    drain_sleep_ms: float = 500.0
    link_rtt_ms: float = 80.0
    payload_portion: float = 0.95
    default_quality_level: int = 1
    throughput_history_len: int = HISTORY_LEN

    def __post_init__(self):
        for name in ("chunk_duration_ms", "buffer_threshold_ms", "drain_sleep_ms", "link_rtt_ms"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if not 0 < self.payload_portion <= 1:
            raise ConfigError("payload_portion must lie in (0, 1]")
        if self.throughput_history_len != HISTORY_LEN:
            raise ConfigError(f"observation layout requires a history of {HISTORY_LEN}")
        if self.default_quality_level < 0:
            raise ConfigError("default_quality_level must be nonnegative")


@dataclass(frozen=True)
class Deterministic:
    """Start every episode at trace time 0."""


@dataclass(frozen=True)
class RandomOffset:
    seed: int


class Timeline:
    """Cumulative delivered-bytes view of a trace for a given payload portion."""

    def __init__(self, trace: Trace, payload_portion: float = 0.95):
        self.trace = trace
        self.payload_portion = payload_portion
        self.t = np.asarray(trace.times - trace.times[0], dtype=np.float64)
        self.period = float(self.t[-1])
        # bytes per second on each segment
        self.rate = trace.bandwidths[:-1] * (1e6 / 8.0) * payload_portion
        self.cum = np.concatenate([[0.0], np.cumsum(self.rate * np.diff(self.t))])
        self.cycle_bytes = float(self.cum[-1])
        self._last_seg = len(self.t) - 2

    def bytes_at(self, tau):
        """Bytes delivered between time 0 and absolute time ``tau``."""
        cyc = np.floor(tau / self.period)
        off = tau - cyc * self.period
        k = np.clip(np.searchsorted(self.t, off, side="right") - 1, 0, self._last_seg)
        return cyc * self.cycle_bytes + self.cum[k] + self.rate[k] * (off - self.t[k])

    def time_at(self, target):
        """Earliest absolute time by which ``target`` bytes have been delivered."""
        if self.cycle_bytes <= 0:
            raise StalledForever(f"trace {self.trace.id!r} delivers no bytes over a full cycle")
        cyc = np.ceil(target / self.cycle_bytes) - 1.0
        rem = target - cyc * self.cycle_bytes
        k = np.clip(np.searchsorted(self.cum, rem, side="left"), 1, self._last_seg + 1)
        seg = k - 1
        return cyc * self.period + self.t[seg] + (rem - self.cum[seg]) / self.rate[seg]

    def download(self, tau, chunk_bytes):
        """Return the absolute time at which a transfer started at ``tau`` completes."""
        return self.time_at(self.bytes_at(tau) + chunk_bytes)


def advance(timeline: Timeline, cfg: SimConfig, tau, buffer_ms, chunk_bytes):
    """Download one chunk and update playback; works elementwise on arrays.

    Returns ``(tau_after, buffer_after_ms, delay_s, sleep_s, rebuffer_s)``.
    """
    transfer_end = timeline.download(tau, chunk_bytes)
    delay_s = (transfer_end - tau) + cfg.link_rtt_ms / 1000.0
    delay_ms = delay_s * 1000.0
    rebuffer_s = np.maximum(delay_ms - buffer_ms, 0.0) / 1000.0
    buffer_ms = np.maximum(buffer_ms - delay_ms, 0.0) + cfg.chunk_duration_ms
    excess = np.maximum(buffer_ms - cfg.buffer_threshold_ms, 0.0)
    sleep_ms = np.ceil(excess / cfg.drain_sleep_ms) * cfg.drain_sleep_ms
    buffer_ms = buffer_ms - sleep_ms
    tau_after = tau + delay_s + sleep_ms / 1000.0
    return tau_after, buffer_ms, delay_s, sleep_ms / 1000.0, rebuffer_s


@dataclass(frozen=True)
class StepOutcome:
    delay_s: float
    sleep_s: float
    rebuffer_s: float
    buffer_before_ms: float
    buffer_after_ms: float
    selected_level: int
    prev_level: int
    chunk_bytes: int
    done: bool


@dataclass
class SimState:
    timeline: Timeline
    video: VideoManifest
    cfg: SimConfig
    tau: float
    start_tau: float
    buffer_ms: float = 0.0
    next_chunk_index: int = 0
    last_level: int = 1
    throughput_mbps: np.ndarray = field(default_factory=lambda: np.zeros(HISTORY_LEN))
    delay_hist_s: np.ndarray = field(default_factory=lambda: np.zeros(HISTORY_LEN))

    @property
    def done(self) -> bool:
        return self.next_chunk_index >= self.video.n_chunks

    @property
    def chunks_remaining(self) -> int:
        return self.video.n_chunks - self.next_chunk_index

    @property
    def buffer_s(self) -> float:
        return self.buffer_ms / 1000.0

    @property
    def n_samples(self) -> int:
        """Number of valid entries at the tail of the history rows."""
        return min(self.next_chunk_index, HISTORY_LEN)

    def next_chunk_sizes(self) -> np.ndarray:
        if self.done:
            return np.zeros(self.video.n_levels)
        return self.video.sizes_bytes[:, self.next_chunk_index].astype(np.float64)

    def observation(self) -> np.ndarray:
        m = np.zeros((OBS_ROWS, HISTORY_LEN))
        ladder = self.video.ladder_kbps
        m[0, -1] = ladder[self.last_level] / ladder[-1]
        m[1, -1] = self.buffer_s / BUFFER_NORM_S
        m[2, :] = self.throughput_mbps / THROUGHPUT_NORM_MBPS
        m[3, :] = self.delay_hist_s / DELAY_NORM_S
        m[4, : self.video.n_levels] = self.next_chunk_sizes() / 1e6
        m[5, -1] = self.chunks_remaining / self.video.n_chunks
        return m.reshape(-1)

    def step(self, action: int):
        if self.done:
            raise EpisodeFinished("episode already finished")
        if not (isinstance(action, (int, np.integer)) and 0 <= action < self.video.n_levels):
            raise BadAction(f"action must be a level in [0, {self.video.n_levels}), got {action!r}")
        action = int(action)
        chunk_bytes = int(self.video.sizes_bytes[action, self.next_chunk_index])
        buffer_before = self.buffer_ms
        tau, buf, delay_s, sleep_s, rebuf_s = advance(
            self.timeline, self.cfg, self.tau, self.buffer_ms, chunk_bytes
        )
        self.tau = float(tau)
        self.buffer_ms = float(buf)
        delay_s, sleep_s, rebuf_s = float(delay_s), float(sleep_s), float(rebuf_s)
        self.throughput_mbps = np.roll(self.throughput_mbps, -1)
        self.throughput_mbps[-1] = chunk_bytes * 8.0 / 1e6 / delay_s
        self.delay_hist_s = np.roll(self.delay_hist_s, -1)
        self.delay_hist_s[-1] = delay_s
        prev = self.last_level
        self.last_level = action
        self.next_chunk_index += 1
        outcome = StepOutcome(
            delay_s=delay_s,
            sleep_s=sleep_s,
            rebuffer_s=rebuf_s,
            buffer_before_ms=buffer_before,
            buffer_after_ms=self.buffer_ms,
            selected_level=action,
            prev_level=prev,
            chunk_bytes=chunk_bytes,
            done=self.done,
        )
        return self.observation(), outcome, (prev, action, rebuf_s)

    def snapshot(self) -> "SimState":
        return snapshot(self)


def reset(trace: Trace, video: VideoManifest, cfg: SimConfig | None = None, start=Deterministic(),
          timeline: Timeline | None = None):
    """Start a fresh episode. Returns ``(state, observation)``."""
    cfg = cfg or SimConfig()
    if not cfg.default_quality_level < video.n_levels:
        raise ConfigError("default_quality_level outside the ladder")
    if float(cfg.chunk_duration_ms) != float(video.chunk_duration_ms):
        raise ConfigError("simulator and video disagree on chunk duration")
    if timeline is None or timeline.trace is not trace or timeline.payload_portion != cfg.payload_portion:
        timeline = Timeline(trace, cfg.payload_portion)
    if isinstance(start, Deterministic):
        tau = 0.0
    elif isinstance(start, RandomOffset):
        tau = float(np.random.default_rng(start.seed).uniform(0.0, timeline.period))
    else:
        raise ConfigError(f"unknown start policy {start!r}")
    state = SimState(timeline, video, cfg, tau=tau, start_tau=tau,
                     last_level=cfg.default_quality_level)
    return state, state.observation()


def step(state: SimState, action: int):
    return state.step(action)


def snapshot(state: SimState) -> SimState:
    # trace, timeline, video and cfg are immutable and shared
    snap = copy.copy(state)
    snap.throughput_mbps = state.throughput_mbps.copy()
    snap.delay_hist_s = state.delay_hist_s.copy()
    return snap


def restore(snap: SimState) -> SimState:
    return snapshot(snap)


def simulate_download(state: SimState, chunk_bytes: int):
    """Transfer time of ``chunk_bytes`` from the current position, plus link RTT.

    Returns ``(delay_s, tau_after)``; the state itself is not modified.
    """
    if chunk_bytes <= 0:
        raise ValueError("chunk_bytes must be positive")
    end = float(state.timeline.download(state.tau, chunk_bytes))
    rtt = state.cfg.link_rtt_ms / 1000.0
    return (end - state.tau) + rtt, end + rtt
