"""Bandwidth traces and benchmark manifests.

A trace file holds one ``<time_s> <bandwidth_mbps>`` pair per line.  A
manifest is a JSON document grouping trace files into named sets per role::

    {
      "name": "ABRBench-3G",
      "ladder_kbps": [300, 750, 1200, 1850, 2850, 4300],
      "mu": 4.3,
      "groups": {
        "train": [{"set_name": "all", "path_glob": "train/*.txt"}],
        "test":  [{"set_name": "FCC-16", "path_glob": "test/fcc16/*"}],
        "ood":   [{"set_name": "HSR", "path_glob": "ood/hsr/*"}]
      }
    }

Globs are resolved relative to the manifest's directory, and a trace's id
is its path relative to that directory.
"""

from __future__ import annotations

import glob
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError

ROLES = ("train", "test", "ood")
N_LEVELS = 6


class TraceError(DataError):
    pass


class MalformedLine(TraceError):
    pass


class NonMonotonicTime(TraceError):
    pass


class TooFewPoints(TraceError):
    pass


class ManifestError(DataError):
    pass


class MissingFile(ManifestError):
    pass


class DuplicateTraceId(ManifestError):
    pass


class OverlappingRoles(ManifestError):
    pass


class BadLadder(ManifestError):
    pass


class EmptySet(DataError):
    pass


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Trace:
    id: str
    times: np.ndarray
    bandwidths: np.ndarray

    def __post_init__(self):
        times = _frozen(self.times)
        bws = _frozen(self.bandwidths)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "bandwidths", bws)
        if times.ndim != 1 or times.shape != bws.shape:
            raise TraceError(f"{self.id}: times and bandwidths must be equal-length vectors")
        if len(times) < 2:
            raise TooFewPoints(f"{self.id}: need at least 2 points, got {len(times)}")
        if not (np.all(np.isfinite(times)) and np.all(np.isfinite(bws))):
            raise TraceError(f"{self.id}: non-finite value")
        if times[0] < 0:
            raise TraceError(f"{self.id}: negative timestamp")
        if np.any(np.diff(times) <= 0):
            raise NonMonotonicTime(f"{self.id}: timestamps must be strictly increasing")
        if np.any(bws < 0):
            raise TraceError(f"{self.id}: negative bandwidth")

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.times.tolist(), self.bandwidths.tolist()))

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])

    def __len__(self):
        return len(self.times)

    def __eq__(self, other):
        if not isinstance(other, Trace):
            return NotImplemented
        return (
            self.id == other.id
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.bandwidths, other.bandwidths)
        )

    __hash__ = object.__hash__


@dataclass(frozen=True)
class TraceSet:
    name: str
    traces: tuple[Trace, ...]
    role: str

    def __post_init__(self):
        object.__setattr__(self, "traces", tuple(self.traces))
        if not self.name:
            raise ManifestError("trace set name must be nonempty")
        if self.role not in ROLES:
            raise ManifestError(f"unknown role {self.role!r}")

    def __len__(self):
        return len(self.traces)

    def __iter__(self):
        return iter(self.traces)


@dataclass(frozen=True)
class BenchmarkManifest:
    name: str
    train: TraceSet
    test: tuple[TraceSet, ...]
    ood: tuple[TraceSet, ...]
    ladder_kbps: tuple[int, ...]
    mu: float

    def __post_init__(self):
        object.__setattr__(self, "test", tuple(self.test))
        object.__setattr__(self, "ood", tuple(self.ood))
        object.__setattr__(self, "ladder_kbps", tuple(self.ladder_kbps))
        check_ladder(self.ladder_kbps)
        if not (self.mu > 0 and math.isfinite(self.mu)):
            raise ManifestError(f"mu must be positive, got {self.mu}")
        seen: dict[str, str] = {}
        for role, sets in (("train", [self.train]), ("test", self.test), ("ood", self.ood)):
            for ts in sets:
                if ts.role != role:
                    raise ManifestError(f"set {ts.name!r} has role {ts.role!r}, listed under {role!r}")
                for tr in ts.traces:
                    prev = seen.get(tr.id)
                    if prev is None:
                        seen[tr.id] = role
                    elif prev == role:
                        raise DuplicateTraceId(f"trace {tr.id!r} listed twice in {role!r}")
                    else:
                        raise OverlappingRoles(f"trace {tr.id!r} appears in both {prev!r} and {role!r}")

    def group(self, role: str) -> tuple[TraceSet, ...]:
        if role == "train":
            return (self.train,)
        if role == "test":
            return self.test
        if role == "ood":
            return self.ood
        raise ManifestError(f"unknown group {role!r}")


def check_ladder(ladder) -> None:
    if len(ladder) != N_LEVELS:
        raise BadLadder(f"ladder must have {N_LEVELS} entries, got {len(ladder)}")
    for x in ladder:
        if isinstance(x, bool) or not isinstance(x, (int, np.integer)) or x <= 0:
            raise BadLadder(f"ladder entries must be positive integers, got {x!r}")
    if any(b <= a for a, b in zip(ladder, ladder[1:])):
        raise BadLadder(f"ladder must be strictly increasing: {list(ladder)}")


def parse_trace(text: str, id: str) -> Trace:
    times, bws = [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) != 2:
            raise MalformedLine(f"{id}:{lineno}: expected 2 fields, got {len(fields)}")
        try:
            t, bw = float(fields[0]), float(fields[1])
        except ValueError:
            raise MalformedLine(f"{id}:{lineno}: non-numeric field in {line!r}") from None
        if times and t <= times[-1]:
            raise NonMonotonicTime(f"{id}:{lineno}: time {t} does not follow {times[-1]}")
        times.append(t)
        bws.append(bw)
    return Trace(id, times, bws)


def serialize_trace(trace: Trace) -> str:
    # repr() is the shortest string that round-trips a float exactly
    return "".join(f"{t!r} {b!r}\n" for t, b in trace.points)


def load_trace(path, id: str | None = None) -> Trace:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise MissingFile(f"trace file not found: {path}") from None
    return parse_trace(text, id if id is not None else path.name)


def load_manifest(path) -> BenchmarkManifest:
    path = Path(path)
    try:
        spec = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise MissingFile(f"manifest not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: invalid JSON ({exc})") from None
    root = path.parent

    try:
        name = spec["name"]
        ladder = spec["ladder_kbps"]
        mu = float(spec["mu"])
        groups = spec["groups"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ManifestError(f"{path}: missing or invalid field {exc}") from None
    check_ladder(ladder)
    unknown = set(groups) - set(ROLES)
    if unknown:
        raise ManifestError(f"{path}: unknown groups {sorted(unknown)}")

    def load_set(entry, role):
        pattern = entry["path_glob"]
        files = sorted(glob.glob(os.path.join(root, pattern)))
        files = [f for f in files if os.path.isfile(f)]
        if not files:
            raise MissingFile(f"{path}: glob {pattern!r} matched no files")
        traces = [load_trace(f, Path(f).relative_to(root).as_posix()) for f in files]
        return TraceSet(entry["set_name"], traces, role)

    sets = {role: [load_set(e, role) for e in groups.get(role, [])] for role in ROLES}
    if not sets["train"]:
        raise ManifestError(f"{path}: no training set")
    if len(sets["train"]) == 1:
        train = sets["train"][0]
    else:
        train = TraceSet("train", [t for s in sets["train"] for t in s.traces], "train")
    return BenchmarkManifest(name, train, sets["test"], sets["ood"], tuple(ladder), mu)


def trace_stats(trace_set: TraceSet) -> tuple[int, float, float]:
    """Return (number of traces, min bandwidth, max bandwidth) over a set."""
    if len(trace_set.traces) == 0:
        raise EmptySet(f"trace set {trace_set.name!r} is empty")
    lo = min(float(t.bandwidths.min()) for t in trace_set.traces)
    hi = max(float(t.bandwidths.max()) for t in trace_set.traces)
    return len(trace_set.traces), lo, hi
