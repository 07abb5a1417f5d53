"""Conditional modes, the synchronisation map, free energies and metrics.

Sign convention: every free energy here is ``E_q[ln q - ln p]``, so the
particular free energy is the surprisal ``-ln p(i, s, a)`` and flows descend
its gradient.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg

from .blanket import blanket_check_gaussian
from .core import (
    GaussianDensity,
    LinearSystem,
    PartitionSpec,
    conditional_gaussian,
    kl_gaussian,
    validate_partition,
)
from .errors import (
    BlanketViolated,
    ConsistencyError,
    NonInjective,
    SingularBlanketBlock,
    SingularBlock,
    SupportMismatch,
    ZeroMarginal,
)
from .helmholtz import decompose_linear
from .sde import IntegratorConfig, simulate_ensemble

PROB_TOL = 1e-12
IDENTITY_TOL = 1e-10
SYNC_TOL = 1e-8
LOG2PI = np.log(2.0 * np.pi)


def _logdet(S) -> float:
    sign, val = np.linalg.slogdet(S)
    if sign <= 0:
        raise SingularBlock("covariance block is not positive definite")
    return float(val)


def _require_blanket(density, partition, tolerance):
    rep = blanket_check_gaussian(density, partition, tolerance)
    if not rep.passes:
        raise BlanketViolated(f"max |Pi_ei| = {rep.max_cross_precision:.3e} >= {tolerance:g}")


# ---------------------------------------------------------------------------
# Conditional modes and the sync map
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ConditionalMoments:
    i_mode: np.ndarray
    e_mode: np.ndarray
    cond_cov_i: np.ndarray
    cond_cov_e: np.ndarray


def conditional_moments(density: GaussianDensity, partition: PartitionSpec, b) -> ConditionalMoments:
    """Most likely internal and external states given a blanket state.

    Raises
    ------
    SingularBlanketBlock
        ``Sigma_bb`` is singular.
    """
    validate_partition(partition, density.n)
    bi = partition.blanket
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if b.shape != (bi.size,):
        raise ValueError(f"blanket state must have length {bi.size}")
    try:
        mi, Ci = conditional_gaussian(density.mean, density.covariance, partition.i, bi, b)
        me, Ce = conditional_gaussian(density.mean, density.covariance, partition.e, bi, b)
    except SingularBlock as exc:
        raise SingularBlanketBlock(str(exc)) from exc
    return ConditionalMoments(mi, me, Ci, Ce)


@dataclass(frozen=True, eq=False)
class SyncMap:
    """Affine maps ``i(b) = mu_i + M_i (b - mu_b)``, ``e(b) = mu_e + M_e (b - mu_b)``
    and ``sigma(i) = mu_e + S (i - mu_i)`` with ``S = M_e pinv(M_i)``.

    ``exact_inverse`` records whether ``S M_i = M_e`` holds to ``1e-8``, i.e.
    whether ``e(b) = sigma(i(b))`` for every blanket state; ``sync_residual``
    is ``max |S M_i - M_e|``.
    """

    internal_map: np.ndarray
    external_map: np.ndarray
    sigma: np.ndarray
    exact_inverse: bool
    sync_residual: float
    mean_i: np.ndarray
    mean_e: np.ndarray
    mean_b: np.ndarray

    def i_mode(self, b) -> np.ndarray:
        return self.mean_i + (np.asarray(b, dtype=float) - self.mean_b) @ self.internal_map.T

    def e_mode(self, b) -> np.ndarray:
        return self.mean_e + (np.asarray(b, dtype=float) - self.mean_b) @ self.external_map.T

    def apply(self, i) -> np.ndarray:
        return self.mean_e + (np.asarray(i, dtype=float) - self.mean_i) @ self.sigma.T


def sigma_linear(density: GaussianDensity, partition: PartitionSpec,
                 tolerance: float = SYNC_TOL) -> SyncMap:
    """Synchronisation map between conditional internal and external modes.

    Raises
    ------
    BlanketViolated
        ``Pi_ei`` is not zero at ``tolerance``.
    NonInjective
        ``M_i`` is rank deficient, so internal modes do not determine ``b``
        as far as the map can see.
    """
    validate_partition(partition, density.n)
    _require_blanket(density, partition, tolerance)
    e, i, b = partition.e, partition.i, partition.blanket
    S = density.covariance
    if b.size == 0:
        raise NonInjective("empty blanket: modes do not depend on any blanket state")
    try:
        chol = linalg.cho_factor(S[np.ix_(b, b)], lower=True)
    except linalg.LinAlgError as exc:
        raise SingularBlanketBlock("blanket covariance block is singular") from exc
    Mi = linalg.cho_solve(chol, S[np.ix_(b, i)]).T
    Me = linalg.cho_solve(chol, S[np.ix_(b, e)]).T
    scale = max(1.0, float(np.max(np.abs(Mi))))
    rank = np.linalg.matrix_rank(Mi, tol=1e-10 * scale)
    if rank < min(Mi.shape):
        raise NonInjective(f"internal map has rank {rank} < {min(Mi.shape)}")
    sig = Me @ np.linalg.pinv(Mi)
    resid = float(np.max(np.abs(sig @ Mi - Me)))
    mu = density.mean
    return SyncMap(Mi, Me, sig, resid < tolerance, resid, mu[i].copy(), mu[e].copy(), mu[b].copy())


# ---------------------------------------------------------------------------
# Discrete variational free energy
# ---------------------------------------------------------------------------

def _probability_vector(p, what: str) -> np.ndarray:
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if p.ndim != 1 or np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ValueError(f"{what} must be a finite non-negative vector")
    if abs(p.sum() - 1.0) > PROB_TOL:
        raise ValueError(f"{what} sums to {p.sum():.15f}, not 1")
    return p


@dataclass(frozen=True, eq=False)
class VariationalDist:
    probabilities: np.ndarray

    def __post_init__(self):
        p = _probability_vector(self.probabilities, "variational distribution")
        p.setflags(write=False)
        object.__setattr__(self, "probabilities", p)


@dataclass(frozen=True)
class FreeEnergyReport:
    value: float
    energy: float
    entropy: float
    accuracy: float
    complexity: float
    evidence_bound_slack: float
    log_evidence: float

    def rows(self):
        return [(k, getattr(self, k)) for k in
                ("value", "energy", "entropy", "accuracy", "complexity", "evidence_bound_slack", "log_evidence")]


def _xlogy(x, y):
    """``x * ln y`` with ``0 * ln 0 = 0``."""
    out = np.zeros_like(x, dtype=float)
    m = x > 0
    out[m] = x[m] * np.log(y[m])
    return out


def vfe_discrete(q, prior, likelihood) -> FreeEnergyReport:
    """Free energy of ``q`` over a finite hypothesis set for one observed datum.

    ``likelihood[h] = p(D | h)``. Accuracy is stored as ``E_q[ln p(D|H)]``,
    so ``value = energy - entropy = -accuracy + complexity``.

    Raises
    ------
    SupportMismatch
        ``q`` puts mass on a hypothesis with ``p(H, D) = 0``.
    """
    q = q.probabilities if isinstance(q, VariationalDist) else VariationalDist(q).probabilities
    prior = _probability_vector(prior, "prior")
    lik = np.atleast_1d(np.asarray(likelihood, dtype=float))
    if not (q.shape == prior.shape == lik.shape):
        raise ValueError("q, prior and likelihood must cover the same hypotheses")
    if np.any(lik < 0) or np.any(lik > 1) or not np.all(np.isfinite(lik)):
        raise ValueError("likelihood entries must lie in [0, 1]")
    joint = prior * lik
    if np.any((q > 0) & (joint <= 0)):
        raise SupportMismatch("q assigns mass outside the support of p(H, D)")
    evidence = float(joint.sum())
    if evidence <= 0:
        raise SupportMismatch("datum has zero evidence")
    entropy = -float(np.sum(_xlogy(q, q)))
    energy = -float(np.sum(_xlogy(q, joint)))
    accuracy = float(np.sum(_xlogy(q, lik)))
    complexity = float(np.sum(_xlogy(q, q)) - np.sum(_xlogy(q, prior)))
    m = q > 0
    value = float(np.sum(q[m] * (np.log(q[m]) - np.log(joint[m]))))
    log_ev = float(np.log(evidence))
    return FreeEnergyReport(value, energy, entropy, accuracy, complexity, value + log_ev, log_ev)


# ---------------------------------------------------------------------------
# Surprisal and Gaussian free energies
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SurprisalDecomposition:
    surprisal: float
    inaccuracy: float
    complexity: float


def _particular_point(partition: PartitionSpec, point, n: int) -> np.ndarray:
    """Accept either a particular-state vector or a full state vector."""
    x = np.atleast_1d(np.asarray(point, dtype=float))
    pi = partition.particular
    if x.shape == (pi.size,):
        return x
    if x.shape == (n,):
        return x[pi]
    raise ValueError(f"point must have length {pi.size} (particular) or {n} (full state)")


def _posterior_of_pi(density, partition):
    """``p(pi | e) = N(mu_pi + K (e - mu_e), D)``: returns ``(K, D)``."""
    e, pi = partition.e, partition.particular
    S = density.covariance
    try:
        chol = linalg.cho_factor(S[np.ix_(e, e)], lower=True)
    except linalg.LinAlgError as exc:
        raise SingularBlock("external covariance block is singular") from exc
    K = linalg.cho_solve(chol, S[np.ix_(e, pi)]).T
    D = S[np.ix_(pi, pi)] - K @ S[np.ix_(e, pi)]
    return K, 0.5 * (D + D.T)


def expected_inaccuracy(density: GaussianDensity, partition: PartitionSpec, point,
                        q_mean, q_cov) -> tuple[float, np.ndarray]:
    """``E_q[-ln p(pi | e)]`` for ``q = N(q_mean, q_cov)`` over ``e`` and its
    gradient in ``pi`` with ``q`` held fixed."""
    pi = _particular_point(partition, point, density.n)
    e = partition.e
    K, D = _posterior_of_pi(density, partition)
    mu = density.mean
    r = pi - mu[partition.particular] - K @ (np.asarray(q_mean, dtype=float) - mu[e])
    A = np.linalg.inv(D)
    A = 0.5 * (A + A.T)
    spread = K @ np.atleast_2d(q_cov) @ K.T
    val = 0.5 * (float(r @ A @ r) + float(np.sum(A * spread)) + pi.size * LOG2PI + _logdet(D))
    return val, A @ r


def _exact_posterior(density, partition, pi):
    return conditional_gaussian(density.mean, density.covariance, partition.e, partition.particular, pi)


def surprisal_decomposition(density, partition: Optional[PartitionSpec] = None, point=None,
                            column: Optional[int] = None) -> SurprisalDecomposition:
    """``-ln p(pi) = E_{p(e|pi)}[-ln p(pi|e)] + KL[p(e|pi) || p(e)]``.

    ``density`` is either a 2-D table with rows indexed by external outcomes
    and columns by particular outcomes (pass ``column``), or a
    :class:`GaussianDensity` with a partition and a particular ``point``.

    Raises
    ------
    ZeroMarginal
        The particular outcome has zero probability.
    """
    if isinstance(density, GaussianDensity):
        if partition is None or point is None:
            raise ValueError("Gaussian mode needs a partition and an evaluation point")
        validate_partition(partition, density.n)
        pi = _particular_point(partition, point, density.n)
        marg = density.marginal(partition.particular)
        surprisal = -marg.logpdf(pi)
        if not np.isfinite(surprisal):
            raise ZeroMarginal("particular marginal density underflows at the point")
        m, C = _exact_posterior(density, partition, pi)
        inacc, _ = expected_inaccuracy(density, partition, pi, m, C)
        e = partition.e
        comp = kl_gaussian(m, C, density.mean[e], density.covariance[np.ix_(e, e)])
        return SurprisalDecomposition(float(surprisal), float(inacc), float(comp))
    T = np.asarray(density, dtype=float)
    if T.ndim != 2 or np.any(T < 0) or abs(T.sum() - 1.0) > PROB_TOL:
        raise ValueError("table must be a non-negative 2-D array summing to 1")
    if column is None:
        raise ValueError("table mode needs the particular outcome column")
    p_pi = float(T[:, column].sum())
    if p_pi <= 0:
        raise ZeroMarginal(f"particular outcome {column} has zero probability")
    post = T[:, column] / p_pi
    p_e = T.sum(axis=1)
    m = post > 0
    inacc = -float(np.sum(post[m] * np.log(T[m, column] / p_e[m])))
    comp = float(np.sum(post[m] * (np.log(post[m]) - np.log(p_e[m]))))
    return SurprisalDecomposition(-float(np.log(p_pi)), inacc, comp)


def gaussian_vfe(density: GaussianDensity, partition: PartitionSpec, point, q_mean, q_cov) -> FreeEnergyReport:
    """``E_q[ln q(e) - ln p(e, pi)]`` with ``q = N(q_mean, q_cov)`` and ``pi`` fixed."""
    validate_partition(partition, density.n)
    pi = _particular_point(partition, point, density.n)
    e = partition.e
    qm = np.atleast_1d(np.asarray(q_mean, dtype=float))
    qC = np.atleast_2d(np.asarray(q_cov, dtype=float))
    x = np.empty(density.n)
    x[e] = qm
    x[partition.particular] = pi
    d = x - density.mean
    P = density.precision
    energy = 0.5 * (float(d @ P @ d) + float(np.sum(P[np.ix_(e, e)] * qC)) + density.n * LOG2PI + density.log_det_cov())
    entropy = 0.5 * (e.size * (1.0 + LOG2PI) + _logdet(qC))
    inacc, _ = expected_inaccuracy(density, partition, pi, qm, qC)
    complexity = kl_gaussian(qm, qC, density.mean[e], density.covariance[np.ix_(e, e)])
    value = energy - entropy
    log_ev = float(density.marginal(partition.particular).logpdf(pi))
    return FreeEnergyReport(value, energy, entropy, -inacc, complexity, value + log_ev, log_ev)


def particular_fe(density: GaussianDensity, partition: PartitionSpec, particular_state) -> float:
    """Surprisal ``-ln p(i, s, a)``, cross-checked against the free energy of the
    exact posterior ``p(e | pi)``.

    Raises
    ------
    ConsistencyError
        The two routes differ by more than ``1e-10``.
    """
    validate_partition(partition, density.n)
    pi = _particular_point(partition, particular_state, density.n)
    value = -density.marginal(partition.particular).logpdf(pi)
    m, C = _exact_posterior(density, partition, pi)
    via_vfe = gaussian_vfe(density, partition, pi, m, C).value
    if abs(via_vfe - value) > IDENTITY_TOL * max(1.0, abs(value)):
        raise ConsistencyError(f"particular free energy {value!r} != VFE with exact posterior {via_vfe!r}")
    return float(value)


@dataclass(frozen=True, eq=False)
class LaplaceReport:
    value: float
    grad_i: np.ndarray
    q_mean: np.ndarray
    q_cov: np.ndarray


def laplace_vfe(density: GaussianDensity, partition: PartitionSpec, b, i) -> LaplaceReport:
    """Free energy under the Laplace density ``q(e) = N(e*, Pi_ee^{-1})``.

    ``e*`` maximises ``p(e | i, b)`` and the covariance is the inverse
    curvature there, which is constant in ``i``. With ``Pi_ei = 0`` the
    mode depends on ``b`` alone. ``value`` equals ``-ln p(i, b)`` and
    ``grad_i = -grad_i ln p(i, b)``.
    """
    validate_partition(partition, density.n)
    bi, ii = partition.blanket, partition.i
    b = np.atleast_1d(np.asarray(b, dtype=float))
    i = np.atleast_1d(np.asarray(i, dtype=float))
    if b.shape != (bi.size,) or i.shape != (ii.size,):
        raise ValueError("blanket or internal state has the wrong length")
    e = partition.e
    P = density.precision
    try:
        q_cov = np.linalg.inv(P[np.ix_(e, e)])
    except np.linalg.LinAlgError as exc:
        raise SingularBlock("external precision block is singular") from exc
    q_cov = 0.5 * (q_cov + q_cov.T)
    x = density.mean.copy()
    x[bi], x[ii] = b, i
    d = x - density.mean
    # stationary point of the quadratic in e with everything else fixed
    q_mean = density.mean[e] - q_cov @ (P[np.ix_(e, partition.particular)] @ d[partition.particular])
    pi = x[partition.particular]
    value = gaussian_vfe(density, partition, pi, q_mean, q_cov).value
    ib = np.union1d(bi, ii)
    marg = density.marginal(ib)
    g = -marg.grad_log(x[ib])
    return LaplaceReport(float(value), g[np.searchsorted(ib, ii)], q_mean, q_cov)


# ---------------------------------------------------------------------------
# Free-energy lemma diagnostic
# ---------------------------------------------------------------------------

def _cosine(a, b) -> float:
    a, b = np.ravel(a), np.ravel(b)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return float("nan")
    return float(a @ b / (na * nb))


def _ratio(a, b) -> float:
    nb = np.linalg.norm(b)
    return float(np.linalg.norm(a) / nb) if nb > 0 else float("nan")


@dataclass(frozen=True, eq=False)
class FepLemmaReport:
    blanket_points: np.ndarray
    internal_points: np.ndarray
    chain_rule_flow: np.ndarray
    ao_form_flow: np.ndarray
    simulated_flow: np.ndarray
    alignment_chain_vs_sim: float
    alignment_ao_vs_sim: float
    alignment_chain_vs_ao: float
    norm_ratio_chain_vs_sim: float
    norm_ratio_ao_vs_sim: float
    norm_ratio_chain_vs_ao: float
    ao_operator: np.ndarray
    sync: SyncMap

    def rows(self):
        keys = ("alignment_chain_vs_sim", "alignment_ao_vs_sim", "alignment_chain_vs_ao",
                "norm_ratio_chain_vs_sim", "norm_ratio_ao_vs_sim", "norm_ratio_chain_vs_ao")
        return [(k, getattr(self, k)) for k in keys]


def ao_operator(sync: SyncMap, gamma_e, q_e) -> np.ndarray:
    """``(Gamma_sigma - Q_sigma)`` from the sync-map Jacobian ``J = S``.

    For square ``J`` this is ``J^+ (Gamma_e - Q_e) J^+`` as written in the
    derivation; otherwise the congruence ``J^+ (Gamma_e - Q_e) J^+T``.
    """
    Jp = np.linalg.pinv(sync.sigma)
    core = np.atleast_2d(gamma_e) - np.atleast_2d(q_e)
    if sync.sigma.shape[0] == sync.sigma.shape[1]:
        return Jp @ core @ Jp
    return Jp @ core @ Jp.T


def fep_lemma_check(system: LinearSystem, partition: PartitionSpec, n_samples: int = 100,
                    horizon: float = 0.1, n_traj: int = 10_000, dt: float = 1e-3, seed: int = 0,
                    blanket_points=None, internal_points=None, tolerance: float = SYNC_TOL) -> FepLemmaReport:
    """Three estimates of how the internal mode moves.

    (a) chain rule: ``M_i`` applied to the marginal gradient flow of the
    blanket, ``(Gamma_bb - Q_bb) grad_b ln p(b)``;
    (b) Ao form: ``-(Gamma_sigma - Q_sigma) grad_i F`` at ``(b, i)``;
    (c) simulation: ``(E[M_i b(h)] - M_i b0) / h`` over paths started from
    ``p(e, i | b0)``, with antithetic noise pairs.

    Points are drawn jointly from ``p*`` unless given. ``n_traj`` paths are
    split evenly over the points. Alignments are cosines between the stacked
    flow vectors. Nothing here is asserted.
    """
    validate_partition(partition, system.n)
    dec = decompose_linear(system)
    density = dec.density
    sync = sigma_linear(density, partition, tolerance)
    e, b_idx, i_idx = partition.e, partition.blanket, partition.i
    rng = np.random.default_rng(seed)
    if blanket_points is None or internal_points is None:
        x = density.sample(rng, n_samples)
        bp = x[:, b_idx] if blanket_points is None else np.atleast_2d(np.asarray(blanket_points, dtype=float))
        ip = x[:, i_idx] if internal_points is None else np.atleast_2d(np.asarray(internal_points, dtype=float))
    else:
        bp = np.atleast_2d(np.asarray(blanket_points, dtype=float))
        ip = np.atleast_2d(np.asarray(internal_points, dtype=float))
    if bp.shape[0] != ip.shape[0]:
        raise ValueError("blanket and internal point counts differ")
    m = bp.shape[0]
    G, Q, S = dec.gamma, dec.q, density.covariance
    Mi = sync.internal_map
    mu = density.mean

    # (a) chain rule through the blanket's marginal flow
    score_b = -np.linalg.solve(S[np.ix_(b_idx, b_idx)], (bp - mu[b_idx]).T).T
    Ab = G[np.ix_(b_idx, b_idx)] - Q[np.ix_(b_idx, b_idx)]
    chain = score_b @ Ab.T @ Mi.T

    # (b) Ao form
    op = ao_operator(sync, G[np.ix_(e, e)], Q[np.ix_(e, e)])
    grads = np.array([laplace_vfe(density, partition, bp[k], ip[k]).grad_i for k in range(m)])
    ao = -grads @ op.T

    # (c) simulated flow of E[i-mode]
    per = max(2, n_traj // m)
    per += per % 2
    rest = np.union1d(e, i_idx)
    X0 = np.empty((m * per, system.n))
    for k in range(m):
        cm, cC = conditional_gaussian(mu, S, rest, b_idx, bp[k])
        rows = slice(k * per, (k + 1) * per)
        X0[rows, b_idx] = bp[k]
        X0[rows, rest] = GaussianDensity(cm, cC).sample(rng, per)
    n_steps = max(1, int(round(horizon / dt)))
    cfg = IntegratorConfig(dt=horizon / n_steps, n_steps=n_steps, seed=seed + 1, burn_in=0.0)
    final = simulate_ensemble(system, X0, cfg, m * per, antithetic=True)[-1]
    mean_b = final[:, b_idx].reshape(m, per, b_idx.size).mean(axis=1)
    sim = (mean_b - bp) @ Mi.T / cfg.horizon

    return FepLemmaReport(
        blanket_points=bp,
        internal_points=ip,
        chain_rule_flow=chain,
        ao_form_flow=ao,
        simulated_flow=sim,
        alignment_chain_vs_sim=_cosine(chain, sim),
        alignment_ao_vs_sim=_cosine(ao, sim),
        alignment_chain_vs_ao=_cosine(chain, ao),
        norm_ratio_chain_vs_sim=_ratio(chain, sim),
        norm_ratio_ao_vs_sim=_ratio(ao, sim),
        norm_ratio_chain_vs_ao=_ratio(chain, ao),
        ao_operator=op,
        sync=sync,
    )


# ---------------------------------------------------------------------------
# Information geometry
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MetricReport:
    fisher: np.ndarray
    kl_quadratic_gap: float
    kl: float
    quadratic_form: float
    fd_hessian: np.ndarray
    fd_max_abs_error: float


def kl_hessian_fd(kl_of_offset, dim: int, h: float = 1e-3) -> np.ndarray:
    """Central second differences of ``kl_of_offset(delta)`` at ``delta = 0``."""
    H = np.empty((dim, dim))
    E = np.eye(dim) * h
    for j in range(dim):
        for k in range(j, dim):
            v = (kl_of_offset(E[j] + E[k]) - kl_of_offset(E[j] - E[k])
                 - kl_of_offset(-E[j] + E[k]) + kl_of_offset(-E[j] - E[k])) / (4 * h * h)
            H[j, k] = H[k, j] = v
    return H


def fisher_metric_gaussian(covariance, point, delta, fd_step: float = 1e-3) -> MetricReport:
    """Fisher metric of the mean family ``N(theta, Sigma)`` at ``point``.

    Raises
    ------
    ValueError
        ``|delta|`` exceeds a tenth of the smallest standard deviation.
    ConsistencyError
        KL and its quadratic form differ by ``1e-12`` or more.
    """
    S = np.atleast_2d(np.asarray(covariance, dtype=float))
    mu = np.atleast_1d(np.asarray(point, dtype=float))
    d = np.atleast_1d(np.asarray(delta, dtype=float))
    fam = GaussianDensity(mu, S)
    lam_min = float(np.min(np.linalg.eigvalsh(fam.covariance)))
    if np.linalg.norm(d) > 0.1 * np.sqrt(lam_min) * (1 + 1e-12):
        raise ValueError("probe offset too large for the quadratic regime")
    F = fam.precision
    kl = kl_gaussian(mu, fam.covariance, mu + d, fam.covariance)
    quad = 0.5 * float(d @ F @ d)
    gap = abs(kl - quad)
    if not gap < 1e-12:
        raise ConsistencyError(f"Gaussian mean-shift KL deviates from its quadratic form by {gap:.3e}")
    H = kl_hessian_fd(lambda off: kl_gaussian(mu, fam.covariance, mu + off, fam.covariance), mu.size, fd_step)
    return MetricReport(F, gap, kl, quad, H, float(np.max(np.abs(H - F))))


@dataclass(frozen=True, eq=False)
class DualGeometryReport:
    intrinsic_fisher: np.ndarray
    extrinsic_fisher: np.ndarray
    sigma: np.ndarray
    cond_cov_i: np.ndarray
    cond_cov_e: np.ndarray


def dual_geometry_report(density: GaussianDensity, partition: PartitionSpec,
                         tolerance: float = SYNC_TOL) -> DualGeometryReport:
    """Intrinsic metric of ``p(i; i_mode)`` and the pull-back through ``sigma``
    of the metric of ``q(e; sigma(i_mode))``."""
    sync = sigma_linear(density, partition, tolerance)
    mom = conditional_moments(density, partition, density.mean[partition.blanket])
    intrinsic = np.linalg.inv(mom.cond_cov_i)
    Pe = np.linalg.inv(mom.cond_cov_e)
    extrinsic = sync.sigma.T @ Pe @ sync.sigma
    return DualGeometryReport(0.5 * (intrinsic + intrinsic.T), 0.5 * (extrinsic + extrinsic.T),
                              sync.sigma, mom.cond_cov_i, mom.cond_cov_e)
