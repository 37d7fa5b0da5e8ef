import numpy as np
import pytest

from evlign.events import EventStream, SensorGeometry


def make_stream(rng, width=32, height=24, n_events=400, t_max=100_000) -> EventStream:
    """Uniform random event stream for property tests."""
    geometry = SensorGeometry(width=width, height=height)
    t = np.sort(rng.integers(0, t_max, n_events)).astype(np.int64)
    x = rng.integers(0, width, n_events).astype(np.int32)
    y = rng.integers(0, height, n_events).astype(np.int32)
    p = rng.choice(np.array([-1, 1], np.int8), n_events)
    return EventStream(geometry, t, x, y, p)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
