import logging

import numpy as np
import pytest

from sabr.traces import MissingFile
from sabr.video import (R3G_KBPS, BadJitter, DimensionMismatch, NonPositiveSize, VideoManifest, load_video,
                        save_video, synth_video)


def test_zero_jitter_sizes(video3g):
    assert np.all(video3g.sizes_bytes[0] == 150000)
    assert np.all(video3g.sizes_bytes[5] == 2150000)
    assert (video3g.n_levels, video3g.n_chunks, video3g.chunk_duration_ms) == (6, 49, 4000)


def test_zero_jitter_rate_identity(video3g):
    for lv, kbps in enumerate(R3G_KBPS):
        assert np.all(video3g.sizes_bytes[lv] * 8 / 4000 == kbps)


def test_jitter_is_bounded_and_seeded():
    a = synth_video(R3G_KBPS, 49, 0.2, seed=3)
    assert a == synth_video(R3G_KBPS, 49, 0.2, seed=3)
    assert a != synth_video(R3G_KBPS, 49, 0.2, seed=4)
    nominal = np.array(R3G_KBPS)[:, None] * 500.0
    assert np.all(np.abs(a.sizes_bytes / nominal - 1) <= 0.2 + 1e-6)


@pytest.mark.parametrize("jitter", [-0.1, 0.5, 0.9])
def test_bad_jitter(jitter):
    with pytest.raises(BadJitter):
        synth_video(R3G_KBPS, 49, jitter)


def test_load_save_round_trip(tmp_path, jitter_video):
    save_video(jitter_video, tmp_path / "v.txt")
    assert load_video(tmp_path / "v.txt") == jitter_video


def test_load_errors(tmp_path):
    rows = [" ".join(["1000"] * 49)] * 5
    (tmp_path / "short.txt").write_text(" ".join(map(str, R3G_KBPS)) + "\n" + "\n".join(rows) + "\n")
    with pytest.raises(DimensionMismatch):
        load_video(tmp_path / "short.txt")
    rows = [" ".join(["1000"] * 49)] * 5 + [" ".join(["0"] + ["1000"] * 48)]
    (tmp_path / "zero.txt").write_text(" ".join(map(str, R3G_KBPS)) + "\n" + "\n".join(rows) + "\n")
    with pytest.raises(NonPositiveSize):
        load_video(tmp_path / "zero.txt")
    with pytest.raises(MissingFile):
        load_video(tmp_path / "none.txt")


def test_non_monotone_sizes_only_warn(caplog):
    sizes = np.tile(np.array(R3G_KBPS)[:, None] * 500, (1, 3))
    sizes[2, 1] = 10
    with caplog.at_level(logging.WARNING):
        v = VideoManifest(sizes, R3G_KBPS)
    assert v.n_chunks == 3
    assert "not monotone" in caplog.text
