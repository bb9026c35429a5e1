"""Per-chunk size tables for the streamed video.

File format: the first line is the bitrate ladder in kbps, followed by one
line per level holding that level's chunk sizes in bytes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .traces import MissingFile, check_ladder

log = logging.getLogger(__name__)

CHUNK_DURATION_MS = 4000
R3G_KBPS = (300, 750, 1200, 1850, 2850, 4300)
R4G_KBPS = (1000, 2500, 5000, 8000, 16000, 40000)


class VideoError(DataError):
    pass


class DimensionMismatch(VideoError):
    pass


class NonPositiveSize(VideoError):
    pass


class BadJitter(VideoError):
    pass


@dataclass(frozen=True, eq=False)
class VideoManifest:
    sizes_bytes: np.ndarray
    ladder_kbps: tuple[int, ...]
    chunk_duration_ms: int = CHUNK_DURATION_MS

    def __post_init__(self):
        ladder = tuple(int(x) for x in self.ladder_kbps)
        check_ladder(ladder)
        sizes = np.asarray(self.sizes_bytes)
        if sizes.ndim != 2 or sizes.shape[0] != len(ladder) or sizes.shape[1] == 0:
            raise DimensionMismatch(f"size table shape {sizes.shape} does not match {len(ladder)} levels")
        if not np.all(np.isfinite(sizes)) or np.any(sizes != np.round(sizes)):
            raise VideoError("chunk sizes must be integers")
        sizes = sizes.astype(np.int64)
        if np.any(sizes <= 0):
            raise NonPositiveSize("chunk sizes must be positive")
        if self.chunk_duration_ms <= 0:
            raise VideoError("chunk duration must be positive")
        sizes.setflags(write=False)
        object.__setattr__(self, "sizes_bytes", sizes)
        object.__setattr__(self, "ladder_kbps", ladder)
        bad = np.nonzero(np.any(np.diff(sizes, axis=0) < 0, axis=0))[0]
        if len(bad):
            log.warning("chunk sizes not monotone across levels at %d chunk(s), first %d", len(bad), bad[0])

    @property
    def n_levels(self) -> int:
        return self.sizes_bytes.shape[0]

    @property
    def n_chunks(self) -> int:
        return self.sizes_bytes.shape[1]

    def __eq__(self, other):
        if not isinstance(other, VideoManifest):
            return NotImplemented
        return (
            self.ladder_kbps == other.ladder_kbps
            and self.chunk_duration_ms == other.chunk_duration_ms
            and np.array_equal(self.sizes_bytes, other.sizes_bytes)
        )

    __hash__ = object.__hash__


def load_video(path, chunk_duration_ms: int = CHUNK_DURATION_MS) -> VideoManifest:
    path = Path(path)
    try:
        lines = [ln.split() for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip()]
    except FileNotFoundError:
        raise MissingFile(f"video size table not found: {path}") from None
    if not lines:
        raise VideoError(f"{path}: empty size table")
    try:
        ladder = [int(x) for x in lines[0]]
        rows = [[int(x) for x in ln] for ln in lines[1:]]
    except ValueError:
        raise VideoError(f"{path}: non-integer entry") from None
    if len(rows) != len(ladder):
        raise DimensionMismatch(f"{path}: {len(rows)} size rows for a {len(ladder)}-level ladder")
    if len({len(r) for r in rows}) != 1:
        raise DimensionMismatch(f"{path}: size rows have unequal lengths")
    return VideoManifest(np.array(rows, dtype=np.int64), tuple(ladder), chunk_duration_ms)


def save_video(video: VideoManifest, path) -> None:
    lines = [" ".join(str(x) for x in video.ladder_kbps)]
    lines += [" ".join(str(int(x)) for x in row) for row in video.sizes_bytes]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def synth_video(ladder_kbps, n_chunks: int = 49, jitter_fraction: float = 0.0, seed: int = 0,
                chunk_duration_ms: int = CHUNK_DURATION_MS) -> VideoManifest:
    """Constant-bitrate size table with optional seeded multiplicative jitter."""
    if not 0 <= jitter_fraction < 0.5:
        raise BadJitter(f"jitter_fraction must lie in [0, 0.5), got {jitter_fraction}")
    ladder = np.asarray(ladder_kbps, dtype=np.float64)
    rng = np.random.default_rng(seed)
    u = rng.uniform(-jitter_fraction, jitter_fraction, size=(len(ladder), n_chunks))
    nominal = ladder[:, None] * 1000.0 * (chunk_duration_ms / 1000.0) / 8.0
    sizes = np.round(nominal * (1.0 + u)).astype(np.int64)
    return VideoManifest(sizes, tuple(int(x) for x in ladder_kbps), chunk_duration_ms)
