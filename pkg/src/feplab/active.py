"""Expected free energy and relaxation of synthesised linear agents."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import linalg

from .blanket import blanket_check_gaussian
from .core import GaussianDensity, LinearSystem, PartitionSpec, conditional_gaussian, gaussian_kl
from .errors import (
    AntisymmetryViolation,
    BlanketViolated,
    IllConditioned,
    InsufficientSamples,
    NoDynamics,
    NotHurwitz,
    NotPositiveDefinite,
    SupportMismatch,
    SynthesisFailure,
)
from .inference import expected_inaccuracy, _particular_point
from .sde import IntegratorConfig, simulate_ensemble
from .stationary import fit_empirical_gaussian, solve_lyapunov

PROB_TOL = 1e-12
SYNTHESIS_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class DiscreteJoint:
    """Joint probabilities with rows indexed by external outcomes and columns by
    particular outcomes."""

    table: np.ndarray

    def __post_init__(self):
        T = np.atleast_2d(np.asarray(self.table, dtype=float))
        if T.ndim != 2 or np.any(T < 0) or not np.all(np.isfinite(T)):
            raise ValueError("joint table must be a finite non-negative matrix")
        if abs(T.sum() - 1.0) > PROB_TOL:
            raise ValueError(f"joint table sums to {T.sum():.15f}, not 1")
        T = T.copy()
        T.setflags(write=False)
        object.__setattr__(self, "table", T)

    @property
    def marginal_e(self) -> np.ndarray:
        return self.table.sum(axis=1)

    @property
    def marginal_pi(self) -> np.ndarray:
        return self.table.sum(axis=0)


@dataclass(frozen=True)
class EfeReport:
    value: float
    ambiguity: float
    risk: float
    bound_slack: float

    def rows(self):
        return [("efe", self.value), ("ambiguity", self.ambiguity), ("risk", self.risk),
                ("bound_slack", self.bound_slack)]


def _as_joint(t) -> DiscreteJoint:
    return t if isinstance(t, DiscreteJoint) else DiscreteJoint(t)


def efe_discrete(pred, target) -> EfeReport:
    """Expected free energy of a predictive joint against a target joint.

    ``G = sum pred(e, pi) [ln pred(e | pi) - ln target(e, pi)]``, split into
    ambiguity ``E_pred[-ln target(pi | e)]`` and risk
    ``E_pred(pi) KL[pred(e | pi) || target(e)]``. ``bound_slack`` is
    ``G + E_pred[ln pred(pi)]``, which is ``KL[pred || target]``.

    Raises
    ------
    SupportMismatch
        ``pred`` has mass where ``target`` has none.
    """
    P, T = _as_joint(pred).table, _as_joint(target).table
    if P.shape != T.shape:
        raise ValueError("pred and target tables must have the same shape")
    if np.any((P > 0) & (T <= 0)):
        raise SupportMismatch("pred assigns mass outside the target support")
    m = P > 0
    p_pi = P.sum(axis=0)
    t_e = T.sum(axis=1)
    rows, cols = np.nonzero(m)
    p = P[m]
    cond = p / p_pi[cols]
    lt = np.log(T[m])
    value = float(np.sum(p * (np.log(cond) - lt)))
    ambiguity = float(np.sum(p * (np.log(t_e[rows]) - lt)))
    risk = float(np.sum(p * (np.log(cond) - np.log(t_e[rows]))))
    pm = p_pi > 0
    slack = value + float(np.sum(p_pi[pm] * np.log(p_pi[pm])))
    return EfeReport(value, ambiguity, risk, slack)


def kl_discrete(p, q) -> float:
    """KL between two tables of the same shape (``q`` must cover ``p``)."""
    p, q = np.asarray(p, dtype=float).ravel(), np.asarray(q, dtype=float).ravel()
    m = p > 0
    if np.any(q[m] <= 0):
        raise SupportMismatch("second argument lacks support")
    return float(np.sum(p[m] * (np.log(p[m]) - np.log(q[m]))))


def inaccuracy_gradient_flow(density: GaussianDensity, partition: PartitionSpec, point,
                             gamma=None, q=None, tolerance: float = 1e-8) -> np.ndarray:
    """Active-state flow ``-(Gamma_aa - Q_aa) grad_a E_q[-ln p(pi | e)]``.

    ``q`` over ``e`` is the exact conditional ``p(e | pi)`` at ``point`` and is
    held fixed while differentiating. ``point`` is a particular-state vector
    (ascending coordinate order) or a full state. ``gamma``/``q`` are full
    ``n x n`` matrices (default identity and zero).
    """
    rep = blanket_check_gaussian(density, partition, tolerance)
    if not rep.passes:
        raise BlanketViolated(f"max |Pi_ei| = {rep.max_cross_precision:.3e} >= {tolerance:g}")
    n = density.n
    pi = _particular_point(partition, point, n)
    G = np.eye(n) if gamma is None else np.atleast_2d(np.asarray(gamma, dtype=float))
    Q = np.zeros((n, n)) if q is None else np.atleast_2d(np.asarray(q, dtype=float))
    m, C = conditional_gaussian(density.mean, density.covariance, partition.e, partition.particular, pi)
    _, grad = expected_inaccuracy(density, partition, pi, m, C)
    a = partition.a
    pos = np.searchsorted(partition.particular, a)
    return -(G[np.ix_(a, a)] - Q[np.ix_(a, a)]) @ grad[pos]


# ---------------------------------------------------------------------------
# Synthesis and relaxation
# ---------------------------------------------------------------------------

def boltzmann_target(energy_hessian, temperature: float = 1.0) -> GaussianDensity:
    """Zero-mean Gaussian ``p(x) ~ exp(-x^T H x / (2 T))``."""
    if not temperature > 0:
        raise ValueError("temperature must be positive")
    H = np.atleast_2d(np.asarray(energy_hessian, dtype=float))
    return GaussianDensity.from_precision(np.zeros(H.shape[0]), H / temperature)


def synthesize_system(target: GaussianDensity, gamma, q) -> LinearSystem:
    """Linear drift ``B = -(Gamma - Q) Pi_target`` whose steady state is ``target``.

    Raises
    ------
    AntisymmetryViolation
        ``Q`` not antisymmetric to ``1e-8``.
    NotPositiveDefinite
        ``Gamma`` not symmetric positive definite.
    SynthesisFailure
        The drift is not Hurwitz or its Lyapunov solution misses the target
        covariance by ``1e-8`` or more.
    """
    if np.any(target.mean != 0.0):
        raise ValueError("linear synthesis needs a zero-mean target")
    n = target.n
    G = np.atleast_2d(np.asarray(gamma, dtype=float))
    Q = np.atleast_2d(np.asarray(q, dtype=float))
    if G.shape != (n, n) or Q.shape != (n, n):
        raise ValueError("gamma and q must match the target dimension")
    if np.max(np.abs(Q + Q.T)) > SYNTHESIS_TOL:
        raise AntisymmetryViolation(f"max|Q + Q^T| = {np.max(np.abs(Q + Q.T)):.3e}")
    if np.max(np.abs(G - G.T)) > 1e-12 * max(1.0, float(np.max(np.abs(G)))):
        raise NotPositiveDefinite("gamma must be symmetric")
    try:
        np.linalg.cholesky(G)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("gamma must be positive definite") from exc
    system = LinearSystem(-(G - Q) @ target.precision, G)
    try:
        recovered = solve_lyapunov(system)
    except (NotHurwitz, IllConditioned) as exc:
        raise SynthesisFailure(str(exc)) from exc
    err = float(np.max(np.abs(recovered.covariance - target.covariance)))
    if not err < SYNTHESIS_TOL:
        raise SynthesisFailure(f"recovered covariance misses target by {err:.3e}")
    return system


def transient_moments(system: LinearSystem, x0, times, cov0=None):
    """Mean ``e^{Bt} x0`` and covariance ``Sigma + e^{Bt} (Sigma_0 - Sigma) e^{B^T t}``."""
    B = system.drift
    S = solve_lyapunov(system).covariance
    S0 = np.zeros_like(S) if cov0 is None else np.asarray(cov0, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    means, covs = [], []
    for t in times:
        E = linalg.expm(B * t)
        means.append(E @ x0)
        C = S + E @ (S0 - S) @ E.T
        covs.append(0.5 * (C + C.T))
    return np.array(means), np.array(covs)


@dataclass(frozen=True, eq=False)
class RelaxReport:
    times: np.ndarray
    kl_curve: np.ndarray
    final_kl: float
    empirical_means: np.ndarray
    empirical_covariances: np.ndarray
    system: LinearSystem

    def rows(self):
        return [("final_kl", self.final_kl)]


def agent_relax(target: GaussianDensity, gamma, q, x0, cfg: IntegratorConfig, n_traj: int = 10_000,
                checkpoints: Optional[Sequence[int]] = None) -> RelaxReport:
    """Relax an ensemble of the synthesised system from ``x0`` towards ``target``.

    At each checkpoint step (default: 20 evenly spaced, excluding ``t = 0``)
    the ensemble is moment-matched to a Gaussian and its KL to ``target``
    recorded. ``kl_curve`` has columns ``(t, kl)``.

    Raises
    ------
    NoDynamics
        ``Gamma`` and ``Q`` are both zero.
    InsufficientSamples
        ``n_traj < 1000``.
    """
    G = np.atleast_2d(np.asarray(gamma, dtype=float))
    Q = np.atleast_2d(np.asarray(q, dtype=float))
    if not np.any(G) and not np.any(Q):
        raise NoDynamics("zero noise amplitude and zero solenoidal flow: nothing moves")
    if n_traj < 1000:
        raise InsufficientSamples("relaxation needs at least 1000 trajectories")
    system = synthesize_system(target, G, Q)
    if checkpoints is None:
        k = min(20, cfg.n_steps)
        checkpoints = np.unique(np.round(np.linspace(0, cfg.n_steps, k + 1)[1:]).astype(int))
    steps = np.array(sorted(int(c) for c in checkpoints), dtype=int)
    if steps.size == 0 or steps[0] < 1:
        raise ValueError("checkpoints must be positive step indices")
    states = simulate_ensemble(system, np.asarray(x0, dtype=float), cfg, n_traj, record_steps=steps)
    times = steps * cfg.dt
    kls, means, covs = [], [], []
    for X in states:
        fit = fit_empirical_gaussian(X)
        means.append(fit.mean)
        covs.append(fit.covariance)
        kls.append(gaussian_kl(fit, target))
    curve = np.column_stack([times, kls])
    return RelaxReport(times, curve, float(kls[-1]), np.array(means), np.array(covs), system)
