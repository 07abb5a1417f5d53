"""Markov blanket tests on Gaussian steady states."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import GaussianDensity, LinearSystem, PartitionSpec, gaussian_kl, validate_partition
from .errors import SingularBlock
from .stationary import solve_lyapunov

DEFAULT_TOL = 1e-8


def empirical_tolerance(n_samples: int) -> float:
    """Tolerance for precisions estimated from ``n_samples`` draws."""
    return 3.0 / np.sqrt(n_samples)


@dataclass(frozen=True)
class BlanketReport:
    max_cross_precision: float
    passes: bool
    tolerance: float
    kl_gap: Optional[float] = None


def _cross_block(M, partition):
    return M[np.ix_(partition.e, partition.i)]


def blanket_check_gaussian(density: GaussianDensity, partition: PartitionSpec,
                           tolerance: float = DEFAULT_TOL, with_kl: bool = False) -> BlanketReport:
    """Check ``Pi_ei = 0``, i.e. external and internal states independent given the blanket."""
    validate_partition(partition, density.n)
    block = _cross_block(density.precision, partition)
    m = float(np.max(np.abs(block))) if block.size else 0.0
    kl = kl_factorization(density, partition) if with_kl else None
    return BlanketReport(m, m < tolerance, tolerance, kl)


def factorized_density(density: GaussianDensity, partition: PartitionSpec) -> GaussianDensity:
    """Gaussian ``p(e|b) p(i|b) p(b)``: same blanket marginal and conditionals,
    no external-internal dependence beyond what flows through ``b``."""
    validate_partition(partition, density.n)
    e, i, b = partition.e, partition.i, partition.blanket
    S = np.array(density.covariance)
    if b.size:
        S_bb = S[np.ix_(b, b)]
        try:
            cross = S[np.ix_(e, b)] @ np.linalg.solve(S_bb, S[np.ix_(b, i)])
        except np.linalg.LinAlgError as exc:
            raise SingularBlock("blanket covariance block is singular") from exc
    else:
        cross = np.zeros((e.size, i.size))
    S[np.ix_(e, i)] = cross
    S[np.ix_(i, e)] = cross.T
    return GaussianDensity(density.mean, S)


def kl_factorization(density: GaussianDensity, partition: PartitionSpec) -> float:
    """``KL[p || p(e|b) p(i|b) p(b)]`` in nats (clipped at zero).

    Raises
    ------
    SingularBlock
        A conditional covariance is singular.
    """
    try:
        fac = factorized_density(density, partition)
    except Exception as exc:
        if isinstance(exc, SingularBlock):
            raise
        raise SingularBlock(f"factorized density is degenerate: {exc}") from exc
    return max(0.0, gaussian_kl(density, fac))


@dataclass(frozen=True, eq=False)
class ConnectivityReport:
    functional_adjacency: np.ndarray
    statistical_adjacency: np.ndarray
    agreement_ratio: float


def _adjacency(M: np.ndarray, tau: float) -> np.ndarray:
    A = np.abs(M) > tau
    A = A | A.T
    np.fill_diagonal(A, False)
    return A


def connectivity_report(system: LinearSystem, partition: PartitionSpec,
                        tau_f: float = DEFAULT_TOL, tau_s: float = DEFAULT_TOL) -> ConnectivityReport:
    """Compare drift sparsity with steady-state precision sparsity.

    The functional graph reads only ``B``; the statistical graph reads only
    the precision of the Lyapunov solution.
    """
    validate_partition(partition, system.n, require_nonempty=False)
    functional = _adjacency(system.drift, tau_f)
    statistical = _adjacency(solve_lyapunov(system).precision, tau_s)
    ju, ku = np.triu_indices(system.n, k=1)
    if ju.size == 0:
        ratio = 1.0
    else:
        ratio = float(np.mean(functional[ju, ku] == statistical[ju, ku]))
    return ConnectivityReport(functional, statistical, ratio)
