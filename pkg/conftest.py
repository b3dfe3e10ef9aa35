"""
Shared pytest fixtures for the CatArray test suite
"""
import numpy as np
import pytest

from modules.model import (KerrArrayParams, Truncations, TwoPhotonArrayParams, build_model,
                           effective_zeno_kerr, effective_zeno_twophoton)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: production-truncation checks that run for minutes")


def random_matrix(rng, dim: int) -> np.ndarray:
    return rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))


def random_density(rng, dim: int) -> np.ndarray:
    X = random_matrix(rng, dim)
    rho = X @ X.conj().T
    return rho / np.trace(rho)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def kerr_params():
    return KerrArrayParams(N=3, G=1.0, U=1.0, gamma=10.0)


@pytest.fixture(scope="session")
def twophoton_params():
    return TwoPhotonArrayParams(N=3, G=1.0, eta=1.0, gamma=10.0)


@pytest.fixture(scope="session")
def kerr_model(kerr_params):
    return build_model(kerr_params, Truncations(18))


@pytest.fixture(scope="session")
def kerr_model_wide(kerr_params):
    """Cat mode wide enough that truncation residuals fall below 1e-6"""
    return build_model(kerr_params, Truncations(30))


@pytest.fixture(scope="session")
def twophoton_model_wide(twophoton_params):
    return build_model(twophoton_params, Truncations(30))


@pytest.fixture(scope="session")
def kerr_zeno():
    return effective_zeno_kerr(KerrArrayParams(N=3, G=1.0, U=1.0, gamma=100.0), M_phi=40)


@pytest.fixture(scope="session")
def twophoton_zeno():
    return effective_zeno_twophoton(TwoPhotonArrayParams(N=3, G=1.0, eta=1.0, gamma=10.0), M_phi=40)
