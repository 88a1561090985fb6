import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_psd(rng, p, rank):
    X = rng.standard_normal((rank, p))
    return X.T @ X


def rel_frob(A, B):
    return np.linalg.norm(A - B) / np.linalg.norm(B)
