"""Registry experiments. Each returns report rows plus any extra artifact files."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import active, blanket, helmholtz, inference, io, sde, stationary
from ..core import GridAxis, GridDensity, conditional_gaussian, kl_gaussian, validate_partition
from ..presets import preset_partition, preset_system
from . import svg
from .config import ConfigSchema, ExperimentConfig

DEFAULT_PRESET = {
    "simulate": "ou-1d",
    "stationary-check": "rotation-2d",
    "helmholtz-roundtrip": "rotation-2d",
    "blanket-report": "blanket-4d",
    "marginal-flow": "blanket-4d-coupled",
    "fep-lemma": "blanket-4d",
    "vfe-suite": "blanket-4d",
    "efe-suite": "blanket-4d",
    "agent-relax": "rotation-2d",
    "geometry-suite": "blanket-4d",
}


@dataclass
class Artifacts:
    rows: list = field(default_factory=list)
    files: dict = field(default_factory=dict)

    def add(self, name, value):
        self.rows.append((name, float(value)))

    def add_matrix(self, name, M):
        M = np.atleast_2d(M)
        for j in range(M.shape[0]):
            for k in range(M.shape[1]):
                self.add(f"{name}_{j}_{k}", M[j, k])


def _system(cfg: ExperimentConfig):
    if cfg.system is not None:
        return cfg.system
    return preset_system(DEFAULT_PRESET[cfg.experiment])


def _partition(cfg: ExperimentConfig, n: int):
    part = cfg.partition
    if part is None and cfg.system is None:
        part = preset_partition(DEFAULT_PRESET[cfg.experiment])
    if part is None:
        raise ConfigSchema(f"experiment {cfg.experiment!r} needs a [partition]")
    try:
        return validate_partition(part, n)
    except ValueError as exc:
        raise ConfigSchema(str(exc)) from exc


def _rng(cfg, salt: int = 0):
    return np.random.default_rng([cfg.seed, salt])


# ---------------------------------------------------------------------------

def run_simulate(cfg: ExperimentConfig) -> Artifacts:
    system = _system(cfg)
    ic = sde.IntegratorConfig(cfg.get("dt", 1e-3), cfg.get("n_steps", 1_000_000), cfg.seed)
    x0 = cfg.get("x0", np.zeros(system.n))
    traj = sde.integrate_em(system, x0, ic)
    var, se = sde.stationary_variance(traj, ic.burn_in)
    art = Artifacts()
    art.add("dt", ic.dt)
    art.add("n_steps", ic.n_steps)
    for k in range(system.n):
        art.add(f"time_avg_variance_{k}", var[k])
        art.add(f"variance_se_{k}", se[k])
    if system.is_hurwitz():
        target = np.diag(stationary.solve_lyapunov(system).covariance)
        for k in range(system.n):
            art.add(f"lyapunov_variance_{k}", target[k])
            art.add(f"variance_z_{k}", (var[k] - target[k]) / se[k])
    erg = sde.ergodicity_report(system, x0, ic, cfg.get("n_traj", 1000))
    art.add("ergodicity_max_rel_discrepancy", erg.max_rel_discrepancy)
    art.add("non_stationary", erg.non_stationary)
    every = cfg.get("record_every", max(1, ic.n_steps // 10_000))
    art.files["trajectory.csv"] = io.trajectory_to_csv(traj, every)
    art.files["trajectory.svg"] = svg.line_plot(
        [(traj.times[::every], traj.states[::every, 0])], "sample path", "t", "x0")
    return art


def run_stationary_check(cfg: ExperimentConfig) -> Artifacts:
    system = _system(cfg)
    if system.n > 3:
        raise ConfigSchema("stationary-check needs a system of dimension <= 3")
    dens = stationary.solve_lyapunov(system)
    h = cfg.get("grid_step", 0.05)
    half = cfg.get("grid_half_width", 6.0 * float(np.sqrt(np.max(np.diag(dens.covariance)))))
    art = Artifacts()
    art.add("lyapunov_residual", stationary.lyapunov_residual(system.drift, dens.covariance, system.noise_amplitude))
    art.add_matrix("sigma", dens.covariance)
    norms = []
    report = None
    for step in (h, h / 2):
        axes = [GridAxis(-half, half, step)] * system.n
        grid = GridDensity.from_gaussian(dens, axes, normalize=True)
        rep = stationary.fp_residual(system, None, grid)
        norms.append(rep.l2_norm)
        report = report or (rep, grid)
    art.add("grid_step", h)
    art.add("fp_l2_norm", norms[0])
    art.add("fp_linf_norm", report[0].linf_norm)
    art.add("fp_l2_norm_half_step", norms[1])
    art.add("convergence_order", stationary.convergence_order(norms[0], norms[1]))
    art.add("fp_l2_norm_analytic", stationary.fp_residual_gaussian(system, dens))
    if system.n == 2:
        art.files["residual.svg"] = svg.heatmap(report[0].residual_field, (-half, half, -half, half),
                                                "Fokker-Planck residual")
    return art


def run_helmholtz_roundtrip(cfg: ExperimentConfig) -> Artifacts:
    system = _system(cfg)
    dec = helmholtz.decompose_linear(system)
    rec = helmholtz.reconstruct_drift(dec)
    art = Artifacts()
    art.add("max_abs_q_antisymmetry", dec.antisymmetry_error())
    art.add("roundtrip_drift_error", np.max(np.abs(rec.drift - system.drift)))
    art.add("lyapunov_residual", stationary.lyapunov_residual(system.drift, dec.density.covariance, dec.gamma))
    ident = helmholtz.stationarity_identity_check(dec)
    art.add("fp_norm_analytic", ident.fp_norm)
    art.add("solenoidal_divergence_norm", ident.solenoidal_divergence_norm)
    orth = helmholtz.flow_orthogonality(dec)
    art.add("flow_orthogonality_expectation", orth.expectation)
    art.add("flow_orthogonality_abs_error", orth.abs_error)
    art.add_matrix("q", dec.q)
    art.add_matrix("sigma", dec.density.covariance)
    art.files["decomposition.csv"] = io.decomposition_to_csv(dec)
    return art


def run_blanket_report(cfg: ExperimentConfig) -> Artifacts:
    system = _system(cfg)
    part = _partition(cfg, system.n)
    dens = stationary.solve_lyapunov(system)
    tol = cfg.get("tolerance", blanket.DEFAULT_TOL)
    rep = blanket.blanket_check_gaussian(dens, part, tol, with_kl=True)
    con = blanket.connectivity_report(system, part, cfg.get("tau_f", tol), cfg.get("tau_s", tol))
    art = Artifacts()
    art.add("max_cross_precision", rep.max_cross_precision)
    art.add("passes", rep.passes)
    art.add("tolerance", rep.tolerance)
    art.add("kl_factorization", rep.kl_gap)
    art.add("agreement_ratio", con.agreement_ratio)
    art.add_matrix("functional_adjacency", con.functional_adjacency)
    art.add_matrix("statistical_adjacency", con.statistical_adjacency)
    return art


def run_marginal_flow(cfg: ExperimentConfig) -> Artifacts:
    system = _system(cfg)
    part = _partition(cfg, system.n)
    dec = helmholtz.decompose_linear(system)
    art = Artifacts()
    n_eval = cfg.get("n_eval", 200)
    tol = cfg.get("tolerance", 1e-8)
    for k, subset in enumerate(helmholtz.SUBSETS):
        rep = helmholtz.marginal_flow_check(system, part, dec, subset, n_eval, seed=cfg.seed + k, tolerance=tol)
        art.add(f"{subset}_max_abs_gap", rep.max_abs_gap)
        art.add(f"{subset}_max_abs_gap_alt", rep.max_abs_gap_alt)
        art.add(f"{subset}_solenoidal_coupling_norm", rep.solenoidal_coupling_norm)
        art.files[f"{subset}_flows.svg"] = svg.scatter(rep.lhs_flows, rep.rhs_flows, f"{subset} marginal flow",
                                                       "averaged flow", "marginal gradient flow")
    return art


def run_fep_lemma(cfg: ExperimentConfig) -> Artifacts:
    system = _system(cfg)
    part = _partition(cfg, system.n)
    rep = inference.fep_lemma_check(system, part, n_samples=cfg.get("n_samples", 100),
                                    horizon=cfg.get("horizon", 0.1), n_traj=cfg.get("n_traj", 10_000),
                                    dt=cfg.get("dt", 1e-3), seed=cfg.seed)
    art = Artifacts()
    for name, value in rep.rows():
        art.add(name, value)
    art.add("sync_residual", rep.sync.sync_residual)
    art.add_matrix("sigma_map", rep.sync.sigma)
    art.add_matrix("ao_operator", rep.ao_operator)
    art.files["chain_vs_sim.svg"] = svg.scatter(rep.simulated_flow, rep.chain_rule_flow, "internal-mode flow",
                                                "simulated", "chain rule")
    art.files["ao_vs_sim.svg"] = svg.scatter(rep.simulated_flow, rep.ao_form_flow, "internal-mode flow",
                                             "simulated", "Ao form")
    return art


def _random_simplex(rng, k):
    return rng.dirichlet(np.ones(k))


def run_vfe_suite(cfg: ExperimentConfig) -> Artifacts:
    art = Artifacts()
    prior, lik = np.array([0.5, 0.5]), np.array([0.8, 0.4])
    for label, q in (("posterior", [2 / 3, 1 / 3]), ("uniform", [0.5, 0.5]), ("point", [1.0, 0.0])):
        rep = inference.vfe_discrete(q, prior, lik)
        art.add(f"worked_{label}_value", rep.value)
        art.add(f"worked_{label}_slack", rep.evidence_bound_slack)
    rng = _rng(cfg, 1)
    min_slack, post_slack, dec_err = np.inf, 0.0, 0.0
    for _ in range(cfg.get("n_models", 1000)):
        k = int(rng.integers(2, 8))
        prior = _random_simplex(rng, k)
        lik = rng.uniform(0.01, 1.0, size=k)
        q = _random_simplex(rng, k)
        rep = inference.vfe_discrete(q, prior, lik)
        min_slack = min(min_slack, rep.evidence_bound_slack)
        dec_err = max(dec_err, abs(rep.value - (rep.energy - rep.entropy)),
                      abs(rep.value - (-rep.accuracy + rep.complexity)))
        post = prior * lik
        exact = inference.vfe_discrete(post / post.sum(), prior, lik)
        post_slack = max(post_slack, abs(exact.evidence_bound_slack))
    art.add("random_min_slack", min_slack)
    art.add("random_max_posterior_slack", post_slack)
    art.add("random_max_decomposition_error", dec_err)
    sd = inference.surprisal_decomposition(np.array([[0.4, 0.1], [0.2, 0.3]]), column=0)
    art.add("table_surprisal", sd.surprisal)
    art.add("table_inaccuracy", sd.inaccuracy)
    art.add("table_complexity", sd.complexity)

    system = _system(cfg)
    part = _partition(cfg, system.n)
    dens = stationary.solve_lyapunov(system)
    pi_idx = part.particular
    ident_err, pfe_err, grad_err = 0.0, 0.0, 0.0
    h = cfg.get("fd_step", 1e-5)
    for _ in range(cfg.get("n_samples", 100)):
        x = dens.sample(rng, 1)[0]
        sd = inference.surprisal_decomposition(dens, part, x[pi_idx])
        ident_err = max(ident_err, abs(sd.surprisal - sd.inaccuracy - sd.complexity))
        m, C = conditional_gaussian(dens.mean, dens.covariance, part.e, pi_idx, x[pi_idx])
        pfe = inference.particular_fe(dens, part, x[pi_idx])
        pfe_err = max(pfe_err, abs(pfe - inference.gaussian_vfe(dens, part, x[pi_idx], m, C).value))
        b, i = x[part.blanket], x[part.i]
        lap = inference.laplace_vfe(dens, part, b, i)
        fd = np.array([(inference.laplace_vfe(dens, part, b, i + h * ej).value
                        - inference.laplace_vfe(dens, part, b, i - h * ej).value) / (2 * h)
                       for ej in np.eye(i.size)])
        grad_err = max(grad_err, float(np.linalg.norm(fd - lap.grad_i) / max(np.linalg.norm(lap.grad_i), 1e-300)))
    art.add("gaussian_surprisal_identity_error", ident_err)
    art.add("particular_fe_vs_vfe_error", pfe_err)
    art.add("laplace_grad_max_rel_error", grad_err)
    return art


def _random_table(rng, shape):
    t = rng.dirichlet(np.ones(shape[0] * shape[1])).reshape(shape)
    return t / t.sum()


def run_efe_suite(cfg: ExperimentConfig) -> Artifacts:
    art = Artifacts()
    T = np.array([[0.4, 0.1], [0.2, 0.3]])
    eq = active.efe_discrete(T, T)
    art.add("worked_equilibrium_efe", eq.value)
    art.add("worked_equilibrium_slack", eq.bound_slack)
    U = np.full((2, 2), 0.25)
    un = active.efe_discrete(U, T)
    art.add("worked_uniform_efe", un.value)
    art.add("worked_uniform_slack", un.bound_slack)
    art.add("worked_uniform_kl", active.kl_discrete(U, T))
    rng = _rng(cfg, 2)
    ident, slack_err, min_slack = 0.0, 0.0, np.inf
    for _ in range(cfg.get("n_models", 1000)):
        shape = (int(rng.integers(2, 5)), int(rng.integers(2, 5)))
        P, Tt = _random_table(rng, shape), _random_table(rng, shape)
        rep = active.efe_discrete(P, Tt)
        ident = max(ident, abs(rep.value - rep.ambiguity - rep.risk))
        slack_err = max(slack_err, abs(rep.bound_slack - active.kl_discrete(P, Tt)))
        min_slack = min(min_slack, rep.bound_slack)
    art.add("random_max_identity_error", ident)
    art.add("random_max_slack_vs_kl_error", slack_err)
    art.add("random_min_slack", min_slack)

    system = _system(cfg)
    part = _partition(cfg, system.n)
    dec = helmholtz.decompose_linear(system)
    dens = dec.density
    h = cfg.get("fd_step", 1e-5)
    a_pos = np.searchsorted(part.particular, part.a)
    worst = 0.0
    for _ in range(cfg.get("n_samples", 100)):
        pi = dens.sample(rng, 1)[0][part.particular]
        m, C = conditional_gaussian(dens.mean, dens.covariance, part.e, part.particular, pi)
        flow = active.inaccuracy_gradient_flow(dens, part, pi, dec.gamma, dec.q)
        fd = np.empty(a_pos.size)
        for k, p in enumerate(a_pos):
            up, dn = pi.copy(), pi.copy()
            up[p] += h
            dn[p] -= h
            fd[k] = (inference.expected_inaccuracy(dens, part, up, m, C)[0]
                     - inference.expected_inaccuracy(dens, part, dn, m, C)[0]) / (2 * h)
        a = part.a
        fd_flow = -(dec.gamma[np.ix_(a, a)] - dec.q[np.ix_(a, a)]) @ fd
        worst = max(worst, float(np.linalg.norm(fd_flow - flow) / max(np.linalg.norm(flow), 1e-300)))
    art.add("inaccuracy_flow_max_rel_error", worst)
    return art


def run_agent_relax(cfg: ExperimentConfig) -> Artifacts:
    system = _system(cfg)
    dec = helmholtz.decompose_linear(system)
    target = dec.density
    ic = sde.IntegratorConfig(cfg.get("dt", 1e-3), cfg.get("n_steps", 10_000), cfg.seed)
    x0 = cfg.get("x0", np.zeros(system.n))
    n_traj = cfg.get("n_traj", 10_000)
    rep = active.agent_relax(target, dec.gamma, dec.q, x0, ic, n_traj)
    _, covs = active.transient_moments(rep.system, x0, rep.times)
    # standard error of a sample covariance entry: sqrt((S_jj S_kk + S_jk^2) / N)
    z = 0.0
    for C_emp, C_true in zip(rep.empirical_covariances, covs):
        se = np.sqrt((np.outer(np.diag(C_true), np.diag(C_true)) + C_true ** 2) / n_traj)
        z = max(z, float(np.max(np.abs(C_emp - C_true) / se)))
    art = Artifacts()
    art.add("final_kl", rep.final_kl)
    art.add("max_transient_cov_z", z)
    inv = 0.0
    for Q in (np.zeros_like(dec.q), dec.q, 2.0 * dec.q):
        syn = active.synthesize_system(target, dec.gamma, Q)
        rec = stationary.solve_lyapunov(syn).covariance
        inv = max(inv, float(np.max(np.abs(rec - target.covariance))))
    art.add("solenoidal_invariance_error", inv)
    art.files["kl_curve.csv"] = io.kl_curve_to_csv(rep.kl_curve)
    art.files["kl_curve.svg"] = svg.line_plot([(rep.kl_curve[:, 0], rep.kl_curve[:, 1])],
                                              "KL to target", "t", "KL")
    return art


def run_geometry_suite(cfg: ExperimentConfig) -> Artifacts:
    system = _system(cfg)
    part = _partition(cfg, system.n)
    dens = stationary.solve_lyapunov(system)
    art = Artifacts()
    S = dens.covariance
    delta = 0.05 * np.sqrt(np.min(np.linalg.eigvalsh(S))) * np.ones(system.n) / np.sqrt(system.n)
    met = inference.fisher_metric_gaussian(S, dens.mean, delta, cfg.get("fd_step", 1e-3))
    art.add("fisher_vs_precision_error", np.max(np.abs(met.fisher - dens.precision)))
    art.add("kl_quadratic_gap", met.kl_quadratic_gap)
    art.add("kl_fd_hessian_error", met.fd_max_abs_error)
    geo = inference.dual_geometry_report(dens, part)
    art.add_matrix("intrinsic_fisher", geo.intrinsic_fisher)
    art.add_matrix("extrinsic_fisher", geo.extrinsic_fisher)
    Ce = geo.cond_cov_e
    S_map = geo.sigma
    fd = inference.kl_hessian_fd(lambda d: kl_gaussian(np.zeros(Ce.shape[0]), Ce, S_map @ d, Ce),
                                 S_map.shape[1], cfg.get("fd_step", 1e-3))
    art.add("extrinsic_fd_error", np.max(np.abs(fd - geo.extrinsic_fisher)))
    return art


EXPERIMENTS = {
    "simulate": run_simulate,
    "stationary-check": run_stationary_check,
    "helmholtz-roundtrip": run_helmholtz_roundtrip,
    "blanket-report": run_blanket_report,
    "marginal-flow": run_marginal_flow,
    "fep-lemma": run_fep_lemma,
    "vfe-suite": run_vfe_suite,
    "efe-suite": run_efe_suite,
    "agent-relax": run_agent_relax,
    "geometry-suite": run_geometry_suite,
}
