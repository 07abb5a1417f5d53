"""Helmholtz (Ao) decomposition of linear drifts and the marginal flow lemma.

A Hurwitz drift ``B`` with noise ``Gamma`` and stationary covariance
``Sigma`` factors as ``B = -(Gamma - Q) Pi`` with ``Q = B Sigma + Gamma``
antisymmetric and ``Pi = Sigma^{-1}``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .blanket import blanket_check_gaussian
from .core import GaussianDensity, GridAxis, GridDensity, LinearSystem, PartitionSpec, validate_partition
from .errors import AntisymmetryViolation, BlanketViolated, NotPositiveDefinite
from .stationary import diffusion_term, fp_residual, gaussian_quadratic_field_l2, solve_lyapunov

ANTISYMMETRY_TOL = 1e-8
SUBSETS = ("external", "autonomous")


def _frozen(a):
    out = np.array(a, dtype=float, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class HelmholtzDecomposition:
    """``(Gamma, Q, p*)`` such that the drift is ``(Gamma - Q) grad ln p*``.

    ``q`` is stored as given; :meth:`antisymmetry_error` reports how far it is
    from antisymmetric so that deliberately perturbed decompositions can be
    examined without being repaired.
    """

    gamma: np.ndarray
    q: np.ndarray
    density: GaussianDensity

    def __post_init__(self):
        G = np.atleast_2d(np.asarray(self.gamma, dtype=float))
        Q = np.atleast_2d(np.asarray(self.q, dtype=float))
        n = self.density.n
        if G.shape != (n, n) or Q.shape != (n, n):
            raise ValueError("gamma, q and density dimensions disagree")
        object.__setattr__(self, "gamma", _frozen(G))
        object.__setattr__(self, "q", _frozen(Q))

    @property
    def n(self) -> int:
        return self.density.n

    def antisymmetry_error(self) -> float:
        return float(np.max(np.abs(self.q + self.q.T)))

    def drift(self) -> np.ndarray:
        """``-(Gamma - Q) Pi`` without any validation."""
        return -(self.gamma - self.q) @ self.density.precision


def _require_spd(G):
    try:
        np.linalg.cholesky(G)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("decomposition requires positive definite noise amplitude") from exc


def decompose_linear(system: LinearSystem) -> HelmholtzDecomposition:
    """Split a Hurwitz linear drift into dissipative and solenoidal parts.

    Raises
    ------
    NotHurwitz
        From the Lyapunov solve.
    AntisymmetryViolation
        ``max |Q + Q^T|`` exceeds ``1e-8``.
    """
    _require_spd(system.noise_amplitude)
    density = solve_lyapunov(system)
    Q = system.drift @ density.covariance + system.noise_amplitude
    dec = HelmholtzDecomposition(system.noise_amplitude, Q, density)
    err = dec.antisymmetry_error()
    if err > ANTISYMMETRY_TOL:
        raise AntisymmetryViolation(f"max|Q + Q^T| = {err:.3e}")
    return dec


def reconstruct_drift(decomp: HelmholtzDecomposition) -> LinearSystem:
    """``B = -(Gamma - Q) Pi`` as a :class:`LinearSystem` with noise ``Gamma``."""
    err = decomp.antisymmetry_error()
    if err > ANTISYMMETRY_TOL:
        raise AntisymmetryViolation(f"max|Q + Q^T| = {err:.3e}")
    return LinearSystem(decomp.drift(), decomp.gamma)


# ---------------------------------------------------------------------------
# Stationarity identity
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StationarityReport:
    fp_norm: float
    solenoidal_divergence_norm: float
    mode: str
    flagged: bool
    tolerance: float


def _sym(M):
    return 0.5 * (M + M.T)


def stationarity_identity_check(decomp: HelmholtzDecomposition,
                                grid: Union[None, GridDensity, Sequence[GridAxis]] = None,
                                tolerance: Optional[float] = None) -> StationarityReport:
    """Fokker-Planck residual of the reconstructed drift at ``p*`` and the
    standalone term ``div(Q grad p*)``.

    With ``grid=None`` both L2 norms are exact Gaussian integrals. Otherwise
    ``grid`` is either a tabulated density or a list of axes on which ``p*`` is
    tabulated, and both fields use the same central-difference stencils.
    ``flagged`` is set when the solenoidal term exceeds ``tolerance``
    (``1e-8`` analytic, ``1e-3`` on a grid).
    """
    p = decomp.density
    B = decomp.drift()
    G, Q = decomp.gamma, decomp.q
    P = p.precision
    if grid is None:
        tol = 1e-8 if tolerance is None else tolerance
        # residual = p (y^T M y + v^T y - c) with y = x - mean
        M = B.T @ P + P @ G @ P
        fp = gaussian_quadratic_field_l2(p, M, P @ B @ p.mean, np.trace(B) + np.trace(G @ P))
        S = _sym(Q)
        sol = gaussian_quadratic_field_l2(p, P @ S @ P, None, np.trace(S @ P))
        mode = "analytic"
    else:
        tol = 1e-3 if tolerance is None else tolerance
        if not isinstance(grid, GridDensity):
            grid = GridDensity.from_gaussian(p, list(grid), normalize=True)
        rep = fp_residual(lambda x: x @ B.T, G, grid)
        fp = rep.l2_norm
        field = diffusion_term(grid.values, Q, grid.steps)
        inner = field[tuple(slice(1, -1) for _ in range(field.ndim))]
        sol = float(np.sqrt(np.sum(inner * inner) * grid.cell_volume))
        mode = "grid"
    return StationarityReport(float(fp), float(sol), mode, bool(sol > tol), float(tol))


@dataclass(frozen=True)
class OrthogonalityReport:
    expectation: float
    closed_form: float
    abs_error: float


def flow_orthogonality(decomp: HelmholtzDecomposition) -> OrthogonalityReport:
    """``E_p*[(Q grad ln p*)^T (Gamma grad ln p*)]`` two ways.

    ``expectation`` whitens through the Cholesky factor of ``Sigma``;
    ``closed_form`` is ``tr(Pi Q^T Gamma Pi Sigma)``.
    """
    p = decomp.density
    G, Q, P, S = decomp.gamma, decomp.q, p.precision, p.covariance
    L = np.linalg.cholesky(S)
    # grad ln p = -Pi (x - mu) = -Pi L z, z ~ N(0, I)
    W = P @ L
    expectation = float(np.trace(W.T @ Q.T @ G @ W))
    closed = float(np.trace(P @ Q.T @ G @ P @ S))
    return OrthogonalityReport(expectation, closed, abs(expectation - closed))


# ---------------------------------------------------------------------------
# Marginal flow lemma
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MarginalFlowReport:
    subset: str
    points: np.ndarray
    lhs_flows: np.ndarray
    rhs_flows: np.ndarray
    max_abs_gap: float
    lhs_flows_alt: np.ndarray
    rhs_flows_alt: np.ndarray
    max_abs_gap_alt: float
    solenoidal_coupling_norm: float


def _conditional_flow(B, Sigma, u, c, xc):
    """``E[(B x)_u | x_c]`` for ``x ~ N(0, Sigma)``, one row per point."""
    gain = np.linalg.solve(Sigma[np.ix_(c, c)], Sigma[np.ix_(c, np.arange(Sigma.shape[0]))]).T
    return xc @ (B[u] @ gain).T


def _marginal_gradient_flow(G, Q, Sigma, u, c, xc):
    """``(Gamma_uu - Q_uu) grad_u ln p(x_c)`` for the zero-mean marginal on ``c``."""
    score = -np.linalg.solve(Sigma[np.ix_(c, c)], xc.T).T
    pos = np.searchsorted(c, u)
    return score[:, pos] @ (G[np.ix_(u, u)] - Q[np.ix_(u, u)]).T


def marginal_flow_check(system: LinearSystem, partition: PartitionSpec, decomp: HelmholtzDecomposition,
                        subset: str = "external", n_eval: int = 100, seed: int = 0,
                        tolerance: float = 1e-8) -> MarginalFlowReport:
    """Compare the averaged flow of a subset with its marginal gradient flow.

    For ``subset='external'`` the flow of ``e`` is averaged over ``i`` given
    ``(e, b)``; for ``'autonomous'`` the flow of ``(a, i)`` is averaged over
    ``e`` given ``(i, s, a)``. The gradient is taken of the marginal density
    on that conditioning set. The ``_alt`` fields condition on the subset
    alone. ``solenoidal_coupling_norm`` is the Frobenius norm of the two
    ``Q`` blocks linking the subset to the rest of its conditioning set.

    Raises
    ------
    BlanketViolated
        ``Pi_ei`` is not zero at ``tolerance``.
    """
    if subset not in SUBSETS:
        raise ValueError(f"subset must be one of {SUBSETS}, got {subset!r}")
    validate_partition(partition, system.n)
    density = decomp.density
    rep = blanket_check_gaussian(density, partition, tolerance)
    if not rep.passes:
        raise BlanketViolated(f"max |Pi_ei| = {rep.max_cross_precision:.3e} >= {tolerance:g}")
    if subset == "external":
        u = partition.e
        c = np.union1d(partition.e, partition.blanket)
    else:
        u = partition.autonomous
        c = partition.particular
    rest = np.setdiff1d(c, u)
    S = density.covariance
    B, G, Q = system.drift, decomp.gamma, decomp.q
    rng = np.random.default_rng(seed)
    x = density.sample(rng, n_eval)
    y = x - density.mean
    xc, xu = y[:, c], y[:, u]
    lhs = _conditional_flow(B, S, u, c, xc)
    rhs = _marginal_gradient_flow(G, Q, S, u, c, xc)
    lhs_alt = _conditional_flow(B, S, u, u, xu)
    rhs_alt = _marginal_gradient_flow(G, Q, S, u, u, xu)
    coupling = np.sqrt(np.sum(Q[np.ix_(u, rest)] ** 2) + np.sum(Q[np.ix_(rest, u)] ** 2))
    return MarginalFlowReport(
        subset=subset,
        points=x,
        lhs_flows=lhs,
        rhs_flows=rhs,
        max_abs_gap=float(np.max(np.abs(lhs - rhs))) if lhs.size else 0.0,
        lhs_flows_alt=lhs_alt,
        rhs_flows_alt=rhs_alt,
        max_abs_gap_alt=float(np.max(np.abs(lhs_alt - rhs_alt))) if lhs.size else 0.0,
        solenoidal_coupling_norm=float(coupling),
    )
