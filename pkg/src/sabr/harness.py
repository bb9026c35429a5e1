"""Per-trace-set evaluation, multi-run averaging and result files."""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .baselines import CONTROLLERS, ControllerState, make_controller
from .errors import DataError
from .expert import ExpertConfig, beam_search
from .mlp import MLPParams, actor_forward
from .qoe import ChunkRecord, QoEConfig, QoESummary, average_rank, episode_qoe
from .sim import Deterministic, SimConfig, reset
from .train.env import sample_action
from .traces import TraceSet
from .video import VideoManifest

ALGORITHMS = CONTROLLERS + ("oracle", "policy")
RESULT_FIELDS = ["algorithm", "trace_set", "trace_id", "run", "qoe", "quality_sum", "smooth_pen", "rebuf_pen"]


class ControllerPolicy:
    deterministic = True

    def __init__(self, name: str, video: VideoManifest, qoe: QoEConfig, sim_cfg: SimConfig | None = None):
        self.name = name
        self._select = make_controller(name, video, qoe, sim_cfg)

    def select(self, state, obs) -> int:
        return self._select(ControllerState.from_sim(state))


class OraclePolicy:
    name = "oracle"
    deterministic = True

    def __init__(self, cfg: ExpertConfig):
        self.cfg = cfg

    def select(self, state, obs) -> int:
        return beam_search(state, self.cfg)


class NetPolicy:
    """Actor network; greedy argmax by default, or seeded sampling."""

    def __init__(self, params: MLPParams, greedy: bool = True, seed: int = 0, name: str = "policy"):
        self.params = params
        self.greedy = greedy
        self.deterministic = greedy
        self.name = name
        self.rng = np.random.default_rng(seed)

    def select(self, state, obs) -> int:
        probs, _ = actor_forward(self.params, obs)
        if self.greedy:
            return int(np.argmax(probs))
        return sample_action(probs, self.rng)


def run_episode(policy, trace, video: VideoManifest, qoe: QoEConfig, sim_cfg: SimConfig | None = None):
    """Play one full episode from trace time 0; returns (records, summed step reward)."""
    state, obs = reset(trace, video, sim_cfg, Deterministic())
    records, reward = [], 0.0
    ladder = video.ladder_kbps
    while not state.done:
        level = policy.select(state, obs)
        obs, out, (prev, lv, rebuf) = state.step(level)
        records.append(ChunkRecord(lv, ladder[lv], rebuf))
        q, qp = ladder[lv] / 1000.0, ladder[prev] / 1000.0
        reward += q - qoe.mu * rebuf - qoe.delta * abs(q - qp)
    return records, reward


def evaluate(policy, trace_set: TraceSet, video: VideoManifest, qoe: QoEConfig,
             sim_cfg: SimConfig | None = None) -> list[tuple[str, QoESummary]]:
    """One deterministic-start episode per trace in the set."""
    out = []
    for trace in trace_set.traces:
        records, _ = run_episode(policy, trace, video, qoe, sim_cfg)
        out.append((trace.id, episode_qoe(records, qoe)))
    return out


def set_mean(results) -> float:
    return float(np.mean([s.total for _, s in results]))


@dataclass
class EvalReport:
    algorithm: str
    # runs[k][set_name] -> [(trace_id, QoESummary), ...]
    runs: list[dict] = field(default_factory=list)
    replicated: bool = False

    def add_run(self, per_set: dict) -> None:
        self.runs.append(per_set)

    @property
    def trace_sets(self) -> list[str]:
        return list(self.runs[0]) if self.runs else []

    def run_means(self, set_name: str) -> list[float]:
        return [set_mean(run[set_name]) for run in self.runs]

    def set_means(self) -> dict[str, float]:
        """Mean over runs of each run's per-set mean QoE (never pooled across sets)."""
        return {s: float(np.mean(self.run_means(s))) for s in self.trace_sets}

    def rows(self):
        for k, run in enumerate(self.runs):
            for set_name, results in run.items():
                for trace_id, s in results:
                    yield {
                        "algorithm": self.algorithm, "trace_set": set_name, "trace_id": trace_id,
                        "run": k, "qoe": repr(s.total), "quality_sum": repr(s.quality_sum),
                        "smooth_pen": repr(s.smoothness_penalty), "rebuf_pen": repr(s.rebuffer_penalty),
                    }


def evaluate_runs(policies, trace_sets, video: VideoManifest, qoe: QoEConfig,
                  sim_cfg: SimConfig | None = None, n_runs: int | None = None) -> EvalReport:
    """Evaluate each policy (one per run) on every set.

    A single deterministic policy with ``n_runs > 1`` is evaluated once and
    its result replicated, since re-running it cannot change the outcome.
    """
    policies = list(policies)
    report = EvalReport(policies[0].name)
    if len(policies) == 1 and n_runs and n_runs > 1 and policies[0].deterministic:
        per_set = {ts.name: evaluate(policies[0], ts, video, qoe, sim_cfg) for ts in trace_sets}
        for _ in range(n_runs):
            report.add_run(per_set)
        report.replicated = True
        return report
    for pol in policies:
        report.add_run({ts.name: evaluate(pol, ts, video, qoe, sim_cfg) for ts in trace_sets})
    return report


def write_results(reports, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=RESULT_FIELDS)
        w.writeheader()
        for rep in reports:
            w.writerows(rep.rows())


def write_summary(reports, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["algorithm", "trace_set", "mean_qoe", "n_traces", "n_runs", "replicated"])
        for rep in reports:
            for set_name, mean in rep.set_means().items():
                w.writerow([rep.algorithm, set_name, repr(mean), len(rep.runs[0][set_name]),
                            len(rep.runs), int(rep.replicated)])


def read_qoe_table(paths):
    """Read per-set QoE into ``{algorithm: {trace_set: qoe}}``.

    Accepts long files (``algorithm,trace_set,qoe`` per row, optionally with
    ``run``/``trace_id``; rows are averaged per trace set and run, then over
    runs) and wide files (``algorithm,<set1>,<set2>,...``).
    """
    table: dict[str, dict[str, float]] = defaultdict(dict)
    for path in paths:
        try:
            fh = open(path, newline="")
        except FileNotFoundError:
            raise DataError(f"QoE file not found: {path}") from None
        with fh:
            reader = csv.DictReader(fh)
            cols = reader.fieldnames or []
            if "algorithm" not in cols:
                raise DataError(f"{path}: missing 'algorithm' column")
            rows = list(reader)
        try:
            if "trace_set" in cols:
                qcol = "qoe" if "qoe" in cols else "mean_qoe"
                acc = defaultdict(list)
                for r in rows:
                    acc[(r["algorithm"], r["trace_set"], r.get("run", "0"))].append(float(r[qcol]))
                per_run = defaultdict(list)
                for (algo, ts, _), vals in acc.items():
                    per_run[(algo, ts)].append(float(np.mean(vals)))
                for (algo, ts), vals in per_run.items():
                    table[algo][ts] = float(np.mean(vals))
            else:
                sets = [c for c in cols if c not in ("algorithm", "ave_rank")]
                for r in rows:
                    for s in sets:
                        table[r["algorithm"]][s] = float(r[s])
        except (KeyError, ValueError, TypeError) as exc:
            raise DataError(f"{path}: malformed QoE table ({exc})") from None
    return dict(table)


def rank_table(table: dict):
    algorithms = list(table)
    sets = []
    for algo in algorithms:
        for s in table[algo]:
            if s not in sets:
                sets.append(s)
    missing = [(a, s) for a in algorithms for s in sets if s not in table[a]]
    if missing:
        raise DataError(f"QoE table is incomplete, e.g. {missing[0]}")
    matrix = [[table[a][s] for s in sets] for a in algorithms]
    return average_rank(matrix, algorithms, sets)
