from __future__ import annotations

import numpy as np
import pytest

from fmcw_vitals.ingest import RadarConfig
from fmcw_vitals.phasechain import PhaseSignal, Stage

RATE = 20.0


def tone(freq, n=600, rate=RATE, amp=1.0, phase=0.0):
    t = np.arange(n) / rate
    return amp * np.cos(2 * np.pi * freq * t + phase)


def as_signal(x, rate=RATE, stage=Stage.FILTERED):
    return PhaseSignal(np.asarray(x, dtype=float), rate, stage)


@pytest.fixture
def compact():
    return RadarConfig.compact(frame_count=200)


# one PASS/FAIL line per acceptance criterion at the end of the run
_acceptance: dict[int, tuple[str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    num, title = marker.args
    if rep.when == "call" or rep.failed:
        prev = _acceptance.get(num, (title, "PASS"))[1]
        status = "FAIL" if rep.failed or prev == "FAIL" else "PASS"
        _acceptance[num] = (title, status)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_acceptance):
        title, status = _acceptance[num]
        terminalreporter.write_line(f"{status} {num:2d} {title}")
