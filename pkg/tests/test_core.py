import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import multivariate_normal

from feplab.core import (
    GaussianDensity,
    GridAxis,
    GridDensity,
    LinearSystem,
    PartitionSpec,
    conditional_gaussian,
    gaussian_kl,
    kl_gaussian,
    validate_partition,
)
from feplab.errors import EmptyRole, IncompleteCover, OverlappingSets, PartitionError

from conftest import random_spd


def test_partition_derived_sets():
    p = PartitionSpec(external=(0, 1), sensory=(2,), active=(3,), internal=(4, 5))
    assert list(p.blanket) == [2, 3]
    assert list(p.autonomous) == [3, 4, 5]
    assert list(p.particular) == [2, 3, 4, 5]
    assert p.n == 6
    assert p.role_of(4) == "internal"


def test_partition_errors():
    with pytest.raises(OverlappingSets):
        validate_partition(PartitionSpec((0,), (0,), (1,), (2,)), 3)
    with pytest.raises(IncompleteCover):
        validate_partition(PartitionSpec((0,), (1,), (2,), (3,)), 5)
    with pytest.raises(EmptyRole):
        validate_partition(PartitionSpec((0,), (1,), (2,), ()), 3)
    # an empty blanket is allowed
    validate_partition(PartitionSpec((0,), (), (), (1,)), 2)
    # all of them are partition errors
    assert issubclass(OverlappingSets, PartitionError)


def test_partition_permutation_roundtrip():
    p = PartitionSpec((0,), (1,), (2,), (3,))
    perm = [2, 0, 3, 1]
    q = p.permuted(perm)
    validate_partition(q, 4)
    # new coordinate k was old coordinate perm[k]
    assert [q.role_of(k) for k in range(4)] == [p.role_of(perm[k]) for k in range(4)]


def test_linear_system_rejects_asymmetric_noise():
    with pytest.raises(Exception):
        LinearSystem(-np.eye(2), np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_linear_system_spectrum():
    s = LinearSystem(np.array([[-1.0, -1.0], [1.0, -1.0]]), np.eye(2))
    assert s.spectral_abscissa() == pytest.approx(-1.0)
    assert s.is_hurwitz()
    assert not LinearSystem(np.zeros((1, 1)), np.eye(1)).is_hurwitz()


def test_gaussian_logpdf_matches_scipy(rng):
    S = random_spd(rng, 3)
    m = rng.standard_normal(3)
    g = GaussianDensity(m, S)
    x = rng.standard_normal((5, 3))
    np.testing.assert_allclose(g.logpdf(x), multivariate_normal(m, S).logpdf(x), rtol=1e-12)
    assert g.entropy() == pytest.approx(multivariate_normal(m, S).entropy(), rel=1e-12)


def test_grad_log_matches_finite_difference(rng):
    g = GaussianDensity(rng.standard_normal(3), random_spd(rng, 3))
    x = rng.standard_normal(3)
    h = 1e-6
    fd = np.array([(g.logpdf(x + h * e) - g.logpdf(x - h * e)) / (2 * h) for e in np.eye(3)])
    np.testing.assert_allclose(g.grad_log(x), fd, rtol=1e-6, atol=1e-8)


def test_conditional_gaussian_matches_precision_form(rng):
    S = random_spd(rng, 4)
    m = rng.standard_normal(4)
    P = np.linalg.inv(S)
    val = rng.standard_normal(2)
    cm, cc = conditional_gaussian(m, S, [0, 1], [2, 3], val)
    # conditional precision is the target block of the joint precision
    np.testing.assert_allclose(np.linalg.inv(cc), P[:2, :2], rtol=1e-10)
    expected = m[:2] - np.linalg.solve(P[:2, :2], P[:2, 2:] @ (val - m[2:]))
    np.testing.assert_allclose(cm, expected, rtol=1e-10, atol=1e-12)


def test_kl_closed_form_against_monte_carlo(rng):
    S0, S1 = random_spd(rng, 2), random_spd(rng, 2)
    m0, m1 = rng.standard_normal(2), rng.standard_normal(2)
    x = rng.multivariate_normal(m0, S0, size=400_000)
    lr = multivariate_normal(m0, S0).logpdf(x) - multivariate_normal(m1, S1).logpdf(x)
    kl = kl_gaussian(m0, S0, m1, S1)
    assert abs(kl - lr.mean()) < 5 * lr.std() / np.sqrt(x.shape[0])
    assert gaussian_kl(GaussianDensity(m0, S0), GaussianDensity(m1, S1)) == pytest.approx(kl)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2**31 - 1))
def test_kl_self_is_zero_and_nonnegative(n, seed):
    r = np.random.default_rng(seed)
    S0, S1 = random_spd(r, n), random_spd(r, n)
    m0, m1 = r.standard_normal(n), r.standard_normal(n)
    assert abs(kl_gaussian(m0, S0, m0, S0)) < 1e-12
    assert kl_gaussian(m0, S0, m1, S1) >= -1e-12


def test_grid_density_normalisation():
    ax = GridAxis(-8.0, 8.0, 0.05)
    g = GridDensity.from_gaussian(GaussianDensity.standard(1), (ax,))
    assert g.mass() == pytest.approx(1.0, abs=1e-10)
    with pytest.raises(ValueError):
        GridDensity((ax,), 2.0 * g.values)


def test_grid_axis_count():
    ax = GridAxis(-1.0, 1.0, 0.5)
    np.testing.assert_allclose(ax.points(), [-1.0, -0.5, 0.0, 0.5, 1.0])
