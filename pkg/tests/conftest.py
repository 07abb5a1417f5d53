import numpy as np
import pytest

from feplab.core import GaussianDensity, LinearSystem, PartitionSpec


def random_spd(rng, n, floor=0.2):
    A = rng.standard_normal((n, n))
    return A @ A.T / n + floor * np.eye(n)


def random_hurwitz(rng, n, margin=0.3):
    """Generic drift shifted to have spectral abscissa -margin, plus SPD noise."""
    A = rng.standard_normal((n, n))
    B = A - (np.max(np.linalg.eigvals(A).real) + margin) * np.eye(n)
    return LinearSystem(B, random_spd(rng, n))


def random_antisymmetric(rng, n, scale=1.0):
    A = scale * rng.standard_normal((n, n))
    return A - A.T


def blanket_precision(rng, n_e=1, n_s=1, n_a=1, n_i=1, cross=0.0):
    """Random SPD precision on (e, s, a, i) blocks with Pi_ei set to ``cross``."""
    n = n_e + n_s + n_a + n_i
    while True:
        P = random_spd(rng, n, floor=0.5)
        P[:n_e, n - n_i:] = cross
        P[n - n_i:, :n_e] = cross
        if np.min(np.linalg.eigvalsh(P)) > 0.05:
            return P


def block_partition(n_e=1, n_s=1, n_a=1, n_i=1):
    k = np.cumsum([0, n_e, n_s, n_a, n_i])
    return PartitionSpec(*(tuple(range(k[j], k[j + 1])) for j in range(4)))


@pytest.fixture
def rng():
    return np.random.default_rng(20261014)


@pytest.fixture
def one_per_role():
    return block_partition()


@pytest.fixture
def blanket_gaussian(rng):
    P = blanket_precision(rng)
    return GaussianDensity.from_precision(rng.standard_normal(4), P)


# acceptance criterion -> (status, detail); filled by tests/test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        status, title, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"{status} criterion {k:2d}: {title} [{detail}]")
