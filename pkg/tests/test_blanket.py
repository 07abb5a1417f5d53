import numpy as np
import pytest
from scipy.stats import multivariate_normal

from feplab.blanket import (
    blanket_check_gaussian,
    connectivity_report,
    empirical_tolerance,
    factorized_density,
    kl_factorization,
)
from feplab.core import GaussianDensity, LinearSystem, PartitionSpec
from feplab.presets import blanket_density, preset_partition, preset_system

from conftest import block_partition, blanket_precision

PREC_3D = np.array([[1.0, 0.3, 0.2], [0.3, 1.0, 0.3], [0.2, 0.3, 1.0]])
PART_3D = PartitionSpec(external=(0,), sensory=(1,), active=(), internal=(2,))
# I(e; i | b) from the conditional covariance determinants
MI_3D = 0.0204109972601276
# Pi_ei after adding 1e-3 to Sigma_ei of the preset blanket density
PERTURBED_PI_EI = -0.0010000010000010113


def test_kl_factorization_matches_conditional_mutual_information():
    d = GaussianDensity.from_precision(np.zeros(3), PREC_3D)
    assert kl_factorization(d, PART_3D) == pytest.approx(MI_3D, rel=1e-12)


def test_kl_factorization_against_monte_carlo(rng):
    d = GaussianDensity.from_precision(np.zeros(3), PREC_3D)
    f = factorized_density(d, PART_3D)
    x = d.sample(rng, 400_000)
    lr = multivariate_normal(d.mean, d.covariance).logpdf(x) - multivariate_normal(f.mean, f.covariance).logpdf(x)
    assert abs(lr.mean() - MI_3D) < 5 * lr.std() / np.sqrt(x.shape[0])


def test_factorized_density_keeps_marginals(rng):
    d = GaussianDensity(rng.standard_normal(4), np.linalg.inv(blanket_precision(rng, cross=0.4)))
    part = block_partition()
    f = factorized_density(d, part)
    eb, ib = [0, 1, 2], [1, 2, 3]
    np.testing.assert_allclose(f.covariance[np.ix_(eb, eb)], d.covariance[np.ix_(eb, eb)])
    np.testing.assert_allclose(f.covariance[np.ix_(ib, ib)], d.covariance[np.ix_(ib, ib)])
    assert abs(f.precision[0, 3]) < 1e-10


def test_preset_density_passes():
    rep = blanket_check_gaussian(blanket_density(), preset_partition("blanket-4d"), with_kl=True)
    assert rep.passes
    assert rep.max_cross_precision < 1e-12
    assert abs(rep.kl_gap) < 1e-12


def test_small_covariance_perturbation_detected():
    d = blanket_density()
    S = d.covariance.copy()
    S[0, 3] += 1e-3
    S[3, 0] += 1e-3
    rep = blanket_check_gaussian(GaussianDensity(d.mean, S), preset_partition("blanket-4d"), with_kl=True)
    assert not rep.passes
    assert rep.max_cross_precision == pytest.approx(abs(PERTURBED_PI_EI), rel=1e-6)
    assert rep.kl_gap > 0


def test_empty_blanket_means_marginal_independence(rng):
    part = PartitionSpec(external=(0, 1), sensory=(), active=(), internal=(2,))
    S = np.array([[1.0, 0.2, 0.0], [0.2, 1.0, 0.0], [0.0, 0.0, 2.0]])
    assert abs(kl_factorization(GaussianDensity(np.zeros(3), S), part)) < 1e-12
    S[0, 2] = S[2, 0] = 0.3
    assert kl_factorization(GaussianDensity(np.zeros(3), S), part) > 0


def test_empirical_tolerance():
    assert empirical_tolerance(10_000) == pytest.approx(0.03)


def test_connectivity_equilibrium_preset_agrees():
    rep = connectivity_report(preset_system("blanket-4d"), preset_partition("blanket-4d"))
    np.testing.assert_array_equal(rep.functional_adjacency, rep.statistical_adjacency)
    assert rep.agreement_ratio == 1.0
    assert not rep.statistical_adjacency[0, 3]


def test_connectivity_chain_preset():
    rep = connectivity_report(preset_system("chain-4d"), preset_partition("chain-4d"))
    F = rep.functional_adjacency
    np.testing.assert_array_equal(F, F.T)
    assert not np.any(np.diag(F))
    # chain edges only
    expected = np.zeros((4, 4), dtype=bool)
    for j in range(3):
        expected[j, j + 1] = expected[j + 1, j] = True
    np.testing.assert_array_equal(F, expected)
    assert 0.0 <= rep.agreement_ratio <= 1.0
