import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_trace
from sabr.qoe import (ChunkRecord, EmptyEpisode, NonFiniteEntry, QoEConfig, average_rank, episode_qoe,
                      round_half_up, step_reward)
from sabr.sim import reset
from sabr.video import R3G_KBPS

# per-set QoE as published, with the displayed average rank as the last entry
TABLE_3G_TEST = {
    "sets": ["FCC-16", "FCC-18", "Oboe", "Puffer-21", "Puffer-22"],
    "BB": [25.37, 131.54, 82.74, -6.05, 13.28, 7.2],
    "BOLA": [32.51, 123.42, 81.02, 38.35, 30.99, 6.0],
    "QUETRA": [33.91, 122.25, 82.84, 42.48, 36.89, 4.4],
    "RobustMPC": [36.56, 143.30, 96.14, 34.13, 36.90, 3.4],
    "Pensieve": [34.50, 134.39, 90.92, 38.94, 35.23, 3.8],
    "Comyco": [32.10, 143.89, 96.23, -4.09, 31.34, 4.8],
    "NetLLM": [21.92, 141.91, 97.39, 37.55, 33.73, 4.6],
    "SABR": [36.68, 145.18, 99.68, 36.05, 40.05, 1.8],
}
TABLE_4G_TEST = {
    "sets": ["Lumos 4G", "Lumos 5G", "Solis Wi-Fi"],
    "BB": [1255.91, 1726.66, 429.34, 5.0],
    "BOLA": [1200.05, 1614.40, 477.08, 5.0],
    "QUETRA": [754.43, 992.74, 421.58, 7.7],
    "RobustMPC": [1283.05, 1696.77, 589.64, 3.0],
    "Pensieve": [1160.76, 1828.24, 447.84, 5.0],
    "Comyco": [1285.43, 1835.42, 552.55, 2.0],
    "NetLLM": [672.35, 1510.35, 474.15, 6.7],
    "SABR": [1309.65, 1832.14, 576.33, 1.7],
}
TABLE_OOD = {
    "sets": ["HSR", "Ghent", "Lab"],
    "BB": [138.86, 834.30, 1429.22, 4.3],
    "BOLA": [137.02, 912.39, 1342.63, 5.0],
    "QUETRA": [132.56, 566.61, 965.94, 7.0],
    "RobustMPC": [122.37, 1075.17, 1527.84, 4.0],
    "Pensieve": [137.82, 652.45, 1508.43, 4.7],
    "Comyco": [130.22, 963.94, 1595.09, 3.7],
    "NetLLM": [129.25, 1035.09, 1307.49, 5.3],
    "SABR": [142.20, 1023.56, 1561.18, 2.0],
}
PUBLISHED = [TABLE_3G_TEST, TABLE_4G_TEST, TABLE_OOD]


def split_table(table):
    algos = [k for k in table if k != "sets"]
    return algos, table["sets"], [table[a][:-1] for a in algos], {a: table[a][-1] for a in algos}


def test_constant_top_bitrate_episode():
    s = episode_qoe([ChunkRecord(5, 4300, 0.0)] * 49, QoEConfig(4.3))
    assert s.total == pytest.approx(210.7, abs=1e-9)
    assert s.smoothness_penalty == 0 and s.rebuffer_penalty == 0


def test_two_chunk_example():
    s = episode_qoe([ChunkRecord(3, 1850, 0.0), ChunkRecord(5, 4300, 1.0)], QoEConfig(4.3))
    assert s.total == pytest.approx(-0.6, abs=1e-12)
    assert (s.quality_sum, s.smoothness_penalty, s.rebuffer_penalty) == pytest.approx((6.15, 2.45, 4.3))


def test_single_chunk():
    s = episode_qoe([ChunkRecord(0, 300, 0.0)], QoEConfig())
    assert (s.total, s.smoothness_penalty, s.n_chunks) == (0.3, 0.0, 1)


def test_empty_episode():
    with pytest.raises(EmptyEpisode):
        episode_qoe([], QoEConfig())


@pytest.mark.parametrize("prev,new,rebuf,expected", [
    (1850, 4300, 0.0, 1.85),
    (750, 750, 0.0, 0.75),
    (300, 300, 2.0, -8.3),
])
def test_step_reward_examples(prev, new, rebuf, expected):
    assert step_reward(prev, new, rebuf, QoEConfig(4.3)) == pytest.approx(expected, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 5), st.floats(0, 20)), min_size=1, max_size=60),
       st.floats(0, 50), st.floats(0, 3))
def test_decomposition_is_exact(chunks, mu, delta):
    cfg = QoEConfig(mu, delta)
    s = episode_qoe([ChunkRecord(lv, R3G_KBPS[lv], t) for lv, t in chunks], cfg)
    assert s.total == s.quality_sum - s.smoothness_penalty - s.rebuffer_penalty


def test_rewards_sum_to_episode_qoe_plus_first_step_term(jitter_video):
    cfg = QoEConfig(4.3)
    rng = np.random.default_rng(8)
    for ep in range(20):
        state, _ = reset(random_trace(rng), jitter_video)
        default = state.last_level
        records, rewards = [], []
        while not state.done:
            _, out, (prev, lv, rebuf) = state.step(int(rng.integers(6)))
            records.append(ChunkRecord(lv, R3G_KBPS[lv], rebuf))
            rewards.append(step_reward(R3G_KBPS[prev], R3G_KBPS[lv], rebuf, cfg))
        first = cfg.delta * abs(R3G_KBPS[records[0].level] - R3G_KBPS[default]) / 1000
        assert math.fsum(rewards) + first == pytest.approx(episode_qoe(records, cfg).total, abs=1e-9)


@pytest.mark.parametrize("table", PUBLISHED, ids=["3g-test", "4g-test", "ood"])
def test_published_average_ranks(table):
    algos, sets, qoe, shown = split_table(table)
    report = average_rank(qoe, algos, sets)
    assert {a: report.display_rank(a) for a in algos} == shown


def test_rank_ties_share_mean():
    report = average_rank([[10.0], [10.0], [3.0]])
    assert report.ranks[:, 0].tolist() == [1.5, 1.5, 3.0]


def test_rank_rejects_non_finite():
    with pytest.raises(NonFiniteEntry):
        average_rank([[1.0, float("nan")]])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.lists(st.integers(-500, 500), min_size=3, max_size=3), min_size=2, max_size=8),
       st.integers(-1000, 1000))
def test_ranks_invariant_under_column_shift(rows, shift):
    table = np.array(rows, dtype=float)
    base = average_rank(table)
    shifted = table.copy()
    shifted[:, 1] += shift
    assert np.array_equal(average_rank(shifted).ranks, base.ranks)
    n = len(rows)
    assert np.allclose(base.ranks.sum(axis=0), n * (n + 1) / 2)


def test_rank_csv_layout(tmp_path):
    algos, sets, qoe, _ = split_table(TABLE_OOD)
    average_rank(qoe, algos, sets).to_csv(tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "algorithm,HSR,Ghent,Lab,ave_rank,ave_rank_display"
    assert lines[-1].startswith("SABR,1.0,") and lines[-1].endswith(",2.0")


def test_round_half_up():
    assert round_half_up(4.25, 1) == 4.3
    assert round_half_up(3.666666, 1) == 3.7
    assert round_half_up(2.35, 1) == 2.4
