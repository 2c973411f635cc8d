import datetime as dt

import numpy as np
import pytest
from hypothesis import settings

from crowdflow.data import STDataset, Station

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

UTC = dt.timezone.utc
START = dt.datetime(2024, 1, 1, tzinfo=UTC)


def equator_station(i, x_m, y_m=0.0):
    """Station placed x_m metres east and y_m north of (0, 0)."""
    deg = 180.0 / (np.pi * 6_371_000.0)
    return Station(f"s{i}", y_m * deg, x_m * deg, f"station {i}")


def make_dataset(traffic, fitness=60, external=None, stations=None, grid=None):
    traffic = np.asarray(traffic, dtype=float)
    t, n = traffic.shape
    end = START + dt.timedelta(minutes=fitness * t)
    stations = stations or [equator_station(i, 1000.0 * i) for i in range(n)]
    return STDataset((START, end), fitness, traffic, tuple(stations), grid, external or {})


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_dataset(rng):
    x = rng.uniform(0, 20, size=(168, 2))
    return make_dataset(x, external={"events": rng.integers(0, 2, size=(168, 1)).astype(float)})
