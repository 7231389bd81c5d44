import numpy as np
import pytest

from ghztomo.qlin import GHZ, DensityMatrix, depolarized


def random_density(rng, n_qubits=3, rank=None):
    d = 2**n_qubits
    rank = d if rank is None else rank
    g = rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank))
    m = g @ g.conj().T
    return DensityMatrix(m / np.trace(m).real)


def random_pure(rng, n_qubits=3):
    from ghztomo.qlin import PureState

    v = rng.standard_normal(2**n_qubits) + 1j * rng.standard_normal(2**n_qubits)
    return PureState.normalized(v)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def ghz_rho():
    return GHZ.density_matrix()


@pytest.fixture(scope="session")
def mixed8():
    return DensityMatrix.maximally_mixed(3)


@pytest.fixture(scope="session")
def werner735():
    return depolarized(GHZ, 0.735)
