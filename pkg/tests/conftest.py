import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from badgesteer.eventlog import EventLog
from badgesteer.types import DAY

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

DATA = Path(__file__).resolve().parents[1] / "src" / "badgesteer" / "data"
FIXTURES = Path(__file__).resolve().parent / "fixtures"
GOLDEN = Path(__file__).resolve().parent / "golden"

T0 = 16436 * DAY  # 2015-01-01 00:00 UTC, a Thursday


@pytest.fixture
def data_dir():
    return DATA


@pytest.fixture
def fixtures_dir():
    return FIXTURES


def log_from_days(user, day_counts, action=1, start=T0):
    """EventLog with ``count`` actions on each ``day`` offset from ``start``."""
    ts = []
    for day, count in day_counts.items():
        ts += [start + day * DAY + 60 * j for j in range(count)]
    n = len(ts)
    return EventLog(np.full(n, user), np.asarray(ts, np.int64), np.full(n, action))


ACCEPTANCE = []


def record(criterion: str, ok: bool, detail: str = "") -> bool:
    """Log one acceptance line; the summary hook prints them all at the end."""
    line = f"ACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'}" + (f"  ({detail})" if detail else "")
    ACCEPTANCE.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
