import numpy as np
import pytest

from sabr.fixtures import write_fixture_benchmark
from sabr.traces import Trace, load_manifest
from sabr.video import R3G_KBPS, load_video, synth_video

_acceptance = {}


def constant_trace(mbps, duration_s=100.0, trace_id=None):
    return Trace(trace_id or f"const-{mbps}", [0.0, duration_s], [mbps, mbps])


def random_trace(rng, n=None, zero_prob=0.1, trace_id="rand"):
    n = n or int(rng.integers(2, 40))
    gaps = rng.uniform(0.2, 3.0, n - 1)
    t = np.concatenate([[0.0], np.cumsum(gaps)])
    bw = rng.uniform(0.1, 8.0, n)
    bw[rng.random(n) < zero_prob] = 0.0
    bw[0] = max(bw[0], 0.5)  # keep at least one delivering segment
    return Trace(trace_id, t, bw)


@pytest.fixture(scope="session")
def video3g():
    return synth_video(R3G_KBPS, 49, 0.0, 0)


@pytest.fixture(scope="session")
def jitter_video():
    return synth_video(R3G_KBPS, 49, 0.1, 7)


@pytest.fixture(scope="session")
def bench_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("bench")
    write_fixture_benchmark(out, seed=0)
    return out


@pytest.fixture(scope="session")
def bench(bench_dir):
    return load_manifest(bench_dir / "manifest.json"), load_video(bench_dir / "video.txt")


@pytest.fixture
def record_criterion(request):
    """Register the outcome line printed for an acceptance criterion."""
    def record(label, detail=""):
        request.node.user_properties.append(("criterion", label))
        request.node.user_properties.append(("detail", detail))
    return record


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        _acceptance[report.nodeid] = (props["criterion"], status, props.get("detail", ""))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for label, status, detail in sorted(_acceptance.values()):
        line = f"{status}  {label}"
        if detail:
            line += f"  ({detail})"
        terminalreporter.write_line(line)
