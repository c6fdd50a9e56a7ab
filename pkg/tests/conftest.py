import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20021022)


def random_hermitian(rng, d):
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return g + g.conj().T
