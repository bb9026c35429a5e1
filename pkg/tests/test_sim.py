import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import constant_trace, random_trace
from sabr.sim import (OBS_DIM, BadAction, EpisodeFinished, RandomOffset, SimConfig, StalledForever,
                      reset, restore, simulate_download, snapshot)
from sabr.traces import Trace
from sabr.video import R3G_KBPS


def walk_download(trace, tau, chunk_bytes, payload=0.95, rtt_s=0.08):
    """Point-by-point transfer over a cyclic trace (sample i holds on [t_i, t_i+1))."""
    t = trace.times - trace.times[0]
    period = t[-1]
    cyc = int(tau // period)
    k = min(int(np.searchsorted(t, tau - cyc * period, side="right")) - 1, len(t) - 2)
    now, left = tau, float(chunk_bytes)
    for _ in range(10 ** 6):
        seg_end = cyc * period + t[k + 1]
        rate = trace.bandwidths[k] * 1e6 / 8 * payload
        if rate > 0 and rate * (seg_end - now) >= left:
            return now + left / rate - tau + rtt_s
        left -= rate * (seg_end - now)
        now = seg_end
        k += 1
        if k == len(t) - 1:
            cyc, k = cyc + 1, 0
    raise AssertionError("walker did not finish")


@pytest.mark.parametrize("mbps,expected", [(1.0, 1.0 / 0.95 + 0.08), (2.0, 0.5 / 0.95 + 0.08)])
def test_constant_bandwidth_examples(video3g, mbps, expected):
    state, _ = reset(constant_trace(mbps), video3g)
    delay, _ = simulate_download(state, 125000)
    assert delay == pytest.approx(expected, abs=1e-12)
    assert round(delay, 5) in (1.13263, 0.60632)


def test_zero_trace_stalls(video3g):
    state, _ = reset(Trace("z", [0, 1, 2], [0, 0, 0]), video3g)
    with pytest.raises(StalledForever):
        state.step(0)


def test_download_matches_walker_on_random_traces(video3g):
    rng = np.random.default_rng(11)
    for i in range(300):
        tr = random_trace(rng, trace_id=f"r{i}")
        state, _ = reset(tr, video3g)
        state.tau = float(rng.uniform(0, 3 * tr.duration))
        size = int(rng.integers(1000, 3_000_000))
        delay, _ = simulate_download(state, size)
        assert delay == pytest.approx(walk_download(tr, state.tau, size), rel=1e-9, abs=1e-9)


def test_zero_bandwidth_segment_costs_time_only(video3g):
    tr = Trace("gap", [0, 1, 3, 4], [1.0, 0.0, 1.0, 1.0])
    state, _ = reset(tr, video3g)
    full = 1e6 / 8 * 0.95
    delay, _ = simulate_download(state, int(full * 1.5))
    # one second of data, two dead seconds, half a second more
    assert delay == pytest.approx(3.5 + 0.08, abs=1e-6)


def test_reset_observation(video3g):
    state, obs = reset(constant_trace(1.0), video3g)
    m = obs.reshape(6, 8)
    assert obs.shape == (OBS_DIM,)
    assert np.all(m[2] == 0) and np.all(m[3] == 0)
    assert m[0, -1] == pytest.approx(750 / 4300)
    assert m[5, -1] == 1.0
    assert m[4, :6] == pytest.approx(np.array(R3G_KBPS) * 500 / 1e6)
    assert state.buffer_ms == 0 and state.next_chunk_index == 0 and state.last_level == 1


def test_random_offset_is_seeded(video3g):
    tr = constant_trace(3.0, 500.0)
    a, _ = reset(tr, video3g, start=RandomOffset(5))
    b, _ = reset(tr, video3g, start=RandomOffset(5))
    c, _ = reset(tr, video3g, start=RandomOffset(6))
    assert a.tau == b.tau != c.tau
    assert 0 <= a.tau < 500.0


def test_first_step_rebuffers_whole_download(video3g):
    state, _ = reset(constant_trace(1.0), video3g)
    _, out, _ = state.step(0)
    expected = 150000 * 8 / 1e6 / 0.95 + 0.08
    assert out.delay_s == pytest.approx(expected)
    assert out.rebuffer_s == pytest.approx(out.delay_s)
    assert out.buffer_after_ms == pytest.approx(4000.0)


def test_buffer_eight_seconds_delay_two(video3g):
    # 228000 bytes at 1 Mbps: 1.92 s of transfer plus 0.08 s RTT
    from sabr.video import VideoManifest
    sizes = np.tile(np.array([228000, 300000, 400000, 500000, 600000, 700000])[:, None], (1, 49))
    video = VideoManifest(sizes, R3G_KBPS)
    state, _ = reset(constant_trace(1.0), video)
    state.buffer_ms = 8000.0
    _, out, _ = state.step(0)
    assert out.delay_s == pytest.approx(2.0, abs=1e-9)
    assert out.rebuffer_s == 0.0
    assert out.buffer_after_ms == pytest.approx(10000.0, abs=1e-6)


def test_episode_ends_on_chunk_49(video3g):
    state, _ = reset(constant_trace(5.0), video3g)
    for k in range(49):
        assert not state.done
        _, out, _ = state.step(k % 6)
    assert out.done and state.done
    with pytest.raises(EpisodeFinished):
        state.step(0)
    assert np.all(state.observation().reshape(6, 8)[4] == 0)


def test_bad_actions(video3g):
    state, _ = reset(constant_trace(5.0), video3g)
    for a in (-1, 6, 2.0, "1"):
        with pytest.raises(BadAction):
            state.step(a)


def test_drain_sleeps_in_half_second_steps(video3g):
    state, _ = reset(constant_trace(100.0), video3g)
    outs = [state.step(0)[1] for _ in range(25)]
    assert any(o.sleep_s > 0 for o in outs)
    for o in outs:
        assert (o.sleep_s * 1000) % 500 == pytest.approx(0, abs=1e-6)
        assert o.buffer_after_ms <= 60000.0


def test_history_rows_track_measurements(video3g):
    state, _ = reset(constant_trace(2.0), video3g)
    obs, out, _ = state.step(3)
    m = obs.reshape(6, 8)
    assert m[2, -1] == pytest.approx(out.chunk_bytes * 8 / 1e6 / out.delay_s / 8)
    assert m[3, -1] == pytest.approx(out.delay_s / 10)
    assert m[0, -1] == pytest.approx(R3G_KBPS[3] / 4300)
    assert m[1, -1] == pytest.approx(out.buffer_after_ms / 1000 / 10)
    assert m[5, -1] == pytest.approx(48 / 49)


def test_nested_snapshots_are_independent(video3g):
    state, _ = reset(random_trace(np.random.default_rng(3)), video3g)
    state.step(2)
    s1 = snapshot(state)
    s1.step(5)
    s2 = snapshot(s1)
    s2.step(0)
    assert state.next_chunk_index == 1 and s1.next_chunk_index == 2 and s2.next_chunk_index == 3
    assert state.throughput_mbps[-2] == 0.0


def test_restore_replays_exactly(video3g):
    state, _ = reset(random_trace(np.random.default_rng(4)), video3g)
    for a in (1, 4, 2):
        state.step(a)
    snap = snapshot(state)
    runs = []
    for _ in range(2):
        s = restore(snap)
        runs.append([s.step(a)[1] for a in (5, 0, 3, 3, 1)])
    runs.append([state.step(a)[1] for a in (5, 0, 3, 3, 1)])
    assert runs[0] == runs[1] == runs[2]


def test_chunk_duration_must_agree(video3g):
    from sabr.errors import ConfigError
    with pytest.raises(ConfigError):
        reset(constant_trace(1.0), video3g, SimConfig(chunk_duration_ms=2000))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.lists(st.integers(0, 5), min_size=1, max_size=49))
def test_step_invariants(seed, actions):
    from sabr.video import synth_video
    video = synth_video(R3G_KBPS, 49, 0.2, seed % 97)
    rng = np.random.default_rng(seed)
    state, obs = reset(random_trace(rng), video, start=RandomOffset(seed))
    cfg = state.cfg
    tau0 = state.tau
    spent = 0.0
    for a in actions:
        prev_obs = obs.reshape(6, 8)
        obs, out, _ = state.step(a)
        m = obs.reshape(6, 8)
        pre_drain = max(out.buffer_before_ms - out.delay_s * 1000, 0) + cfg.chunk_duration_ms
        assert out.buffer_after_ms == pytest.approx(pre_drain - out.sleep_s * 1000, abs=1e-6)
        assert (out.sleep_s > 0) == (pre_drain > cfg.buffer_threshold_ms)
        assert 0 <= out.buffer_after_ms <= cfg.buffer_threshold_ms
        assert out.rebuffer_s == pytest.approx(max(0.0, out.delay_s - out.buffer_before_ms / 1000), abs=1e-9)
        if out.rebuffer_s > 0:
            assert pre_drain == pytest.approx(cfg.chunk_duration_ms)
        assert prev_obs[5, -1] - m[5, -1] == pytest.approx(1 / 49)
        assert np.all(np.isfinite(obs))
        spent += out.delay_s + out.sleep_s
    assert state.tau - tau0 == pytest.approx(spent, rel=1e-12, abs=1e-9)
