"""QoE scoring, the per-step training reward, and average-rank tables."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal

import numpy as np
from scipy.stats import rankdata

from .errors import DataError


class EmptyEpisode(DataError):
    pass


class NonFiniteEntry(DataError):
    pass


def kbps_to_quality(kbps: float) -> float:
    """Quality of a bitrate: the bitrate itself, in Mbps."""
    return kbps / 1000.0


@dataclass(frozen=True)
class QoEConfig:
    mu: float = 4.3
    delta: float = 1.0

    def __post_init__(self):
        if not (self.mu >= 0 and self.delta >= 0):
            raise ValueError("QoE coefficients must be nonnegative")

    def quality(self, kbps):
        return kbps_to_quality(kbps)


@dataclass(frozen=True)
class ChunkRecord:
    level: int
    bitrate_kbps: float
    rebuffer_s: float

    def __post_init__(self):
        if self.rebuffer_s < 0:
            raise ValueError("rebuffer time must be nonnegative")


@dataclass(frozen=True)
class QoESummary:
    total: float
    quality_sum: float
    smoothness_penalty: float
    rebuffer_penalty: float
    n_chunks: int


def episode_qoe(records, cfg: QoEConfig) -> QoESummary:
    records = list(records)
    if not records:
        raise EmptyEpisode("cannot score an empty episode")
    q = [cfg.quality(r.bitrate_kbps) for r in records]
    quality_sum = math.fsum(q)
    smooth = cfg.delta * math.fsum(abs(b - a) for a, b in zip(q, q[1:]))
    rebuf = cfg.mu * math.fsum(r.rebuffer_s for r in records)
    total = quality_sum - smooth - rebuf
    return QoESummary(total, quality_sum, smooth, rebuf, len(records))


def step_reward(prev_kbps: float, kbps: float, rebuffer_s: float, cfg: QoEConfig) -> float:
    """Training reward for one chunk; the first chunk is compared with the default level."""
    q, q_prev = cfg.quality(kbps), cfg.quality(prev_kbps)
    return q - cfg.mu * rebuffer_s - cfg.delta * abs(q - q_prev)


@dataclass
class RankReport:
    algorithms: list[str]
    trace_sets: list[str]
    qoe_table: np.ndarray
    ranks: np.ndarray
    ave_rank: np.ndarray

    def display_rank(self, algorithm: str) -> float:
        return round_half_up(self.ave_rank[self.algorithms.index(algorithm)], 1)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["algorithm", *self.trace_sets, "ave_rank", "ave_rank_display"])
            for i, algo in enumerate(self.algorithms):
                w.writerow([algo, *(repr(float(r)) for r in self.ranks[i]),
                            repr(float(self.ave_rank[i])), f"{self.display_rank(algo):.1f}"])

    def format(self) -> str:
        width = max(len(a) for a in self.algorithms)
        head = " ".join(f"{s:>10}" for s in self.trace_sets)
        lines = [f"{'algorithm':<{width}} {head} {'ave_rank':>8}"]
        for i, algo in enumerate(self.algorithms):
            cells = " ".join(f"{v:>10.2f}" for v in self.qoe_table[i])
            lines.append(f"{algo:<{width}} {cells} {self.display_rank(algo):>8.1f}")
        return "\n".join(lines)


def round_half_up(x: float, ndigits: int) -> float:
    q = Decimal(1).scaleb(-ndigits)
    return float(Decimal(repr(float(x))).quantize(q, rounding=ROUND_HALF_UP))


def average_rank(qoe_table, algorithms=None, trace_sets=None) -> RankReport:
    """Rank algorithms per trace set (1 = highest QoE, ties share the mean rank)."""
    table = np.asarray(qoe_table, dtype=np.float64)
    if table.ndim != 2 or table.size == 0:
        raise DataError("QoE table must be a nonempty algorithms x trace-sets matrix")
    if not np.all(np.isfinite(table)):
        raise NonFiniteEntry("QoE table contains non-finite entries")
    n_alg, n_sets = table.shape
    algorithms = list(algorithms) if algorithms is not None else [f"alg{i}" for i in range(n_alg)]
    trace_sets = list(trace_sets) if trace_sets is not None else [f"set{j}" for j in range(n_sets)]
    if len(algorithms) != n_alg or len(trace_sets) != n_sets:
        raise DataError("labels do not match the QoE table shape")
    ranks = rankdata(-table, method="average", axis=0)
    return RankReport(algorithms, trace_sets, table, ranks, ranks.mean(axis=1))
