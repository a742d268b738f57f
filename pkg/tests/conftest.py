import numpy as np
import pandas as pd
import pytest

from app.api.models.common import TimeSeriesSet
from app.api.models.estimation import FitGrid
from app.api.services.stats_tracker import stats_tracker
from app.api.services.synth import make_timestamps


@pytest.fixture
def rng():
    return np.random.default_rng(20240101)


@pytest.fixture
def small_set():
    """3 channels x 10 samples of distinct values"""
    values = np.arange(30, dtype=float).reshape(3, 10) ** 1.5
    return TimeSeriesSet(
        channels=["a", "b", "c"],
        timestamps=make_timestamps(10),
        values=values,
    )


@pytest.fixture
def coarse_grid():
    """p in 1..3, b in steps of 0.1: fast enough for whole detection runs"""
    return FitGrid(p_min=1, p_max=3, b_step=0.1, b_max=0.9)


def make_set(values, prefix="ch"):
    values = np.asarray(values, dtype=float)
    return TimeSeriesSet(
        channels=[f"{prefix}{i + 1}" for i in range(values.shape[0])],
        timestamps=pd.date_range("2020-01-01", periods=values.shape[1], freq="s"),
        values=values,
    )


@pytest.fixture(autouse=True)
def reset_stats():
    stats_tracker.reset_stats()
    yield
