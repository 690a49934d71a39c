import numpy as np
import pytest

from graphfault.ingest import SynthClass, default_synth_spec, synth_dataset


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_manifest():
    """Four classes, one short record each (fast end-to-end fixture)."""
    spec = default_synth_spec(duration_s=0.5, records_per_class=1)
    return synth_dataset(spec, seed=3)


def blobs(n_per=30, d=4, k=2, sep=10.0, seed=0):
    """Well separated Gaussian blobs along the first axis."""
    g = np.random.default_rng(seed)
    x = np.vstack([g.normal(size=(n_per, d)) + np.eye(d)[0] * sep * c for c in range(k)])
    y = np.repeat(np.arange(k), n_per)
    return x, y


def impulse_class(name="fault", amplitude=1.0):
    return SynthClass(name, 100.0, amplitude, 2500.0, 800.0)
