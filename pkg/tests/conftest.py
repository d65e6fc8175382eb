import numpy as np
import pytest

from mtrluq import synth


@pytest.fixture(scope="session")
def default_data():
    sc = synth.SynthScenario()
    cs, raw, truth = synth.generate(sc)
    return sc, cs, raw, truth


@pytest.fixture(scope="session")
def small_scenario():
    return synth.SynthScenario(n_points=12)


def random_s(rng, shape=()):
    """Random 2x2 S-matrices with |S21| bounded away from zero."""
    s = (rng.normal(size=shape + (2, 2)) + 1j * rng.normal(size=shape + (2, 2))) * 0.4
    s[..., 1, 0] += 0.8 * np.exp(1j * rng.uniform(0, 2 * np.pi, size=shape))
    return s
