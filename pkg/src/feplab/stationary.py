"""Steady-state densities: Lyapunov solves and Fokker-Planck residuals."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy import linalg

from .core import GaussianDensity, GridDensity, LinearSystem
from .errors import (
    DimensionTooHigh,
    GridTooCoarse,
    IllConditioned,
    InsufficientSamples,
    NotHurwitz,
    NotPositiveDefinite,
    SingularCovariance,
)

LYAPUNOV_TOL = 1e-10
KRONECKER_MAX_N = 20
MIN_GRID_POINTS = 32


def lyapunov_residual(B, Sigma, Gamma) -> float:
    """``max |B Sigma + Sigma B^T + 2 Gamma|``."""
    B, S, G = (np.asarray(m, dtype=float) for m in (B, Sigma, Gamma))
    return float(np.max(np.abs(B @ S + S @ B.T + 2.0 * G)))


def _kronecker_lyapunov(B: np.ndarray, G: np.ndarray) -> np.ndarray:
    n = B.shape[0]
    eye = np.eye(n)
    # row-major vec: vec(B S) = (B kron I) vec(S), vec(S B^T) = (I kron B) vec(S)
    K = np.kron(B, eye) + np.kron(eye, B)
    lu = linalg.lu_factor(K)
    S = linalg.lu_solve(lu, -2.0 * G.ravel()).reshape(n, n)
    S = 0.5 * (S + S.T)
    R = B @ S + S @ B.T + 2.0 * G
    S = S + linalg.lu_solve(lu, -R.ravel()).reshape(n, n)
    return 0.5 * (S + S.T)


def solve_lyapunov(system: LinearSystem) -> GaussianDensity:
    """Stationary density ``N(0, Sigma)`` with ``B Sigma + Sigma B^T + 2 Gamma = 0``.

    Uses a Kronecker-vectorised dense solve (one refinement step) for
    ``n <= 20`` and Bartels-Stewart beyond that.

    Raises
    ------
    NotHurwitz
        Some eigenvalue of ``B`` has non-negative real part.
    IllConditioned
        The returned ``Sigma`` leaves a residual of ``1e-10`` or more.
    """
    if not system.is_hurwitz():
        raise NotHurwitz(f"spectral abscissa {system.spectral_abscissa():.3g} >= 0")
    B, G = system.drift, system.noise_amplitude
    if system.n <= KRONECKER_MAX_N:
        S = _kronecker_lyapunov(B, G)
    else:
        S = linalg.solve_continuous_lyapunov(B, -2.0 * G)
        S = 0.5 * (S + S.T)
    res = lyapunov_residual(B, S, G)
    if not res < LYAPUNOV_TOL:
        raise IllConditioned(f"Lyapunov residual {res:.3e} exceeds {LYAPUNOV_TOL:g}")
    try:
        return GaussianDensity(np.zeros(system.n), S)
    except NotPositiveDefinite as exc:
        raise IllConditioned("stationary covariance is singular (noise does not reach every state)") from exc


# ---------------------------------------------------------------------------
# Fokker-Planck residuals
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FPResidualReport:
    residual_field: np.ndarray
    l2_norm: float
    linf_norm: float
    grid_step: float

    @property
    def interior(self) -> np.ndarray:
        f = self.residual_field
        return f[tuple(slice(1, -1) for _ in range(f.ndim))]


def _central(F: np.ndarray, axis: int, h: float) -> np.ndarray:
    return (np.roll(F, -1, axis) - np.roll(F, 1, axis)) / (2.0 * h)


def _second(F: np.ndarray, axis: int, h: float) -> np.ndarray:
    return (np.roll(F, -1, axis) - 2.0 * F + np.roll(F, 1, axis)) / (h * h)


def diffusion_term(p: np.ndarray, Gamma: np.ndarray, steps) -> np.ndarray:
    """``sum_jk Gamma_jk d_j d_k p`` by central differences (valid on interior cells)."""
    d = p.ndim
    out = np.zeros_like(p)
    for j in range(d):
        if Gamma[j, j] != 0.0:
            out += Gamma[j, j] * _second(p, j, steps[j])
        for k in range(j + 1, d):
            g = Gamma[j, k] + Gamma[k, j]
            if g != 0.0:
                out += g * _central(_central(p, j, steps[j]), k, steps[k])
    return out


def _interior_norms(field, cell_volume):
    inner = field[tuple(slice(1, -1) for _ in range(field.ndim))]
    return float(np.sqrt(np.sum(inner * inner) * cell_volume)), float(np.max(np.abs(inner)))


def _check_grid(candidate: GridDensity):
    if candidate.dim > 3:
        raise DimensionTooHigh("Fokker-Planck residuals are limited to 3 dimensions")
    for ax in candidate.axes:
        if ax.count < MIN_GRID_POINTS:
            raise GridTooCoarse(f"axis has {ax.count} points; at least {MIN_GRID_POINTS} required")
    v = candidate.values
    edge = max(
        float(np.max(np.abs(np.take(v, idx, axis=a)))) for a in range(v.ndim) for idx in (0, -1)
    )
    if np.max(v) > 0 and edge > 1e-6 * float(np.max(v)):
        warnings.warn("candidate density is not negligible on the grid boundary", RuntimeWarning, stacklevel=3)


def fp_residual(drift: Union[LinearSystem, Callable[[np.ndarray], np.ndarray]],
                noise_amplitude, candidate: GridDensity) -> FPResidualReport:
    """Right-hand side of the Fokker-Planck equation evaluated at ``candidate``.

    ``residual = -div(f p) + sum_jk Gamma_jk d_j d_k p`` with second-order
    central differences. The one-cell boundary ring is set to zero and left
    out of both norms. A callable drift must map an ``(N, d)`` array of points
    to ``(N, d)`` flows. ``noise_amplitude`` may be ``None`` when ``drift`` is
    a :class:`LinearSystem`.

    Raises
    ------
    GridTooCoarse
        Fewer than 32 grid points along some axis.
    DimensionTooHigh
        Grid of more than 3 dimensions.
    """
    if candidate.mass() - 1.0 > 1e-6 or candidate.mass() - 1.0 < -1e-6:
        raise ValueError("candidate density is not normalized")
    _check_grid(candidate)
    d = candidate.dim
    if isinstance(drift, LinearSystem):
        G = drift.noise_amplitude if noise_amplitude is None else noise_amplitude
        flow = drift.flow
    else:
        G, flow = noise_amplitude, drift
    G = np.atleast_2d(np.asarray(G, dtype=float))
    if G.shape != (d, d):
        raise ValueError("noise amplitude does not match grid dimension")
    p = candidate.values
    steps = candidate.steps
    fx = np.asarray(flow(candidate.points()), dtype=float).reshape(p.shape + (d,))
    field = diffusion_term(p, G, steps)
    for j in range(d):
        field -= _central(fx[..., j] * p, j, steps[j])
    ring = np.ones(p.shape, dtype=bool)
    ring[tuple(slice(1, -1) for _ in range(d))] = False
    field[ring] = 0.0
    l2, linf = _interior_norms(field, candidate.cell_volume)
    return FPResidualReport(field, l2, linf, float(np.max(steps)))


def gaussian_quadratic_field_l2(density: GaussianDensity, M, v, c) -> float:
    """Exact ``L2(R^n)`` norm of ``p(x) * (y^T M y + v^T y - c)`` with ``y = x - mean``.

    Uses ``p^2 = (4 pi)^{-n/2} |Sigma|^{-1/2} N(x; mean, Sigma / 2)`` and the
    Gaussian moments of a quadratic form.
    """
    n = density.n
    M = np.atleast_2d(np.asarray(M, dtype=float))
    M = 0.5 * (M + M.T)
    v = np.zeros(n) if v is None else np.asarray(v, dtype=float)
    C = 0.5 * density.covariance
    MC = M @ C
    second = 2.0 * float(np.trace(MC @ MC)) + (float(np.trace(MC)) - float(c)) ** 2 + float(v @ C @ v)
    log_pref = -0.5 * n * np.log(4 * np.pi) - 0.5 * density.log_det_cov()
    return float(np.sqrt(max(second, 0.0) * np.exp(log_pref)))


def fp_residual_gaussian(system: LinearSystem, density: GaussianDensity) -> float:
    """Exact L2 norm of the Fokker-Planck residual of a linear system at a Gaussian."""
    B, G, P = system.drift, system.noise_amplitude, density.precision
    M = B.T @ P + P @ G @ P
    v = P @ B @ density.mean
    c = float(np.trace(B) + np.trace(G @ P))
    return gaussian_quadratic_field_l2(density, M, v, c)


def convergence_order(norm_coarse: float, norm_fine: float, ratio: float = 2.0) -> float:
    return float(np.log(norm_coarse / norm_fine) / np.log(ratio))


def fit_empirical_gaussian(samples) -> GaussianDensity:
    """Moment-matched Gaussian (unbiased covariance) from an ``(N, n)`` sample array.

    Raises
    ------
    InsufficientSamples
        Fewer than ``n + 2`` samples.
    SingularCovariance
        Sample covariance is not positive definite.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    N, n = x.shape
    if N < n + 2:
        raise InsufficientSamples(f"need at least {n + 2} samples, got {N}")
    mean = x.mean(axis=0)
    d = x - mean
    cov = d.T @ d / (N - 1)
    cov = 0.5 * (cov + cov.T)
    scale = float(np.max(np.abs(cov)))
    if scale == 0.0 or np.min(np.linalg.eigvalsh(cov)) <= 1e-12 * scale:
        raise SingularCovariance("sample covariance is singular")
    try:
        return GaussianDensity(mean, cov)
    except (NotPositiveDefinite, IllConditioned) as exc:
        raise SingularCovariance(str(exc)) from exc
