import sys

import numpy as np
import pandas as pd
import pytest
from hypothesis import settings

from plantfault.ingest import INTERVAL, FaultEvent, PlantTable

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def make_table(start="2010-01-04 00:00:00", n=96, channels=("m1_S1", "n1_E1", "n1_E2"),
               events=(), seed=0, plant_id=1):
    """Small gridded table with random walk channels and no gaps."""
    rng = np.random.default_rng(seed)
    idx = pd.date_range(start, periods=n, freq=INTERVAL, name="Timestamp")
    data = pd.DataFrame({c: np.cumsum(rng.normal(size=n)) for c in channels}, index=idx)
    return PlantTable(plant_id, data, data.notna(), list(events))


def ev(start, end, k):
    return FaultEvent(pd.Timestamp(start), pd.Timestamp(end), k)


@pytest.fixture
def table_factory():
    return make_table


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
