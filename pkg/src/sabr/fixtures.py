"""Synthetic benchmark generator used by tests and ``abr synth-fixtures``."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .traces import Trace, serialize_trace
from .video import R3G_KBPS, save_video, synth_video


def synth_trace(kind: str, seed: int, duration_s: float = 320.0, step_s: float = 1.0,
                trace_id: str | None = None) -> Trace:
    """Bandwidth trace of one of a few shapes (Mbps, sampled every ``step_s``).

    * ``steady``: a seeded base level with +-10% noise
    * ``variable``: a slow log-space random walk around a seeded base level
    * ``onoff``: alternating good and poor periods
    * ``constant:<mbps>``: exactly flat
    """
    rng = np.random.default_rng(seed)
    n = int(round(duration_s / step_s)) + 1
    t = np.arange(n) * step_s
    if kind.startswith("constant:"):
        bw = np.full(n, float(kind.split(":", 1)[1]))
    elif kind == "steady":
        base = float(np.exp(rng.uniform(np.log(0.6), np.log(6.0))))
        bw = base * (1.0 + rng.uniform(-0.1, 0.1, n))
    elif kind == "variable":
        base = float(np.exp(rng.uniform(np.log(0.8), np.log(5.0))))
        walk = np.cumsum(rng.normal(0.0, 0.05, n))
        walk -= walk.mean()
        bw = base * np.exp(np.clip(walk, -0.8, 0.8)) * (1.0 + rng.uniform(-0.1, 0.1, n))
    elif kind == "onoff":
        hi = float(rng.uniform(3.0, 6.0))
        lo = float(rng.uniform(0.2, 0.6))
        period = int(rng.integers(20, 40))
        phase = (np.arange(n) // period) % 2
        bw = np.where(phase == 0, hi, lo) * (1.0 + rng.uniform(-0.1, 0.1, n))
    else:
        raise ValueError(f"unknown trace kind {kind!r}")
    return Trace(trace_id or f"{kind}-{seed}", t, np.round(bw, 4))


FIXTURE_LAYOUT = {
    "train": [("all", [("steady", 6), ("variable", 6)])],
    "test": [("steady", [("steady", 3)]), ("variable", [("variable", 3)])],
    "ood": [("onoff", [("onoff", 3)])],
}


def write_fixture_benchmark(out_dir, seed: int = 0, mu: float = 4.3, ladder=R3G_KBPS,
                            n_chunks: int = 49, jitter: float = 0.1) -> Path:
    """Write traces, a manifest and a video size table; returns the manifest path."""
    out = Path(out_dir)
    counter = 0
    groups = {}
    for role, sets in FIXTURE_LAYOUT.items():
        groups[role] = []
        for set_name, recipe in sets:
            d = out / "traces" / role / set_name
            d.mkdir(parents=True, exist_ok=True)
            for kind, count in recipe:
                for _ in range(count):
                    tr = synth_trace(kind, seed * 1000 + counter)
                    (d / f"{kind}_{counter:03d}.txt").write_text(serialize_trace(tr), encoding="utf-8")
                    counter += 1
            groups[role].append({"set_name": set_name, "path_glob": f"traces/{role}/{set_name}/*.txt"})
    manifest = {"name": "fixture", "ladder_kbps": list(ladder), "mu": mu, "groups": groups}
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    save_video(synth_video(ladder, n_chunks, jitter, seed), out / "video.txt")
    return path
