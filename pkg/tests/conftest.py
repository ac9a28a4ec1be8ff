import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_orthonormal(m, d, rng):
    q, r = np.linalg.qr(rng.standard_normal((m, d)))
    return q * np.sign(np.diag(r))


def unit_columns(data):
    data = np.asarray(data, dtype=float)
    return data / np.linalg.norm(data, axis=0)
