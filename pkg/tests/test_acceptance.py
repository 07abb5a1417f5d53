"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` (the lines are repeated in the
terminal summary) or directly with ``python3 tests/test_acceptance.py``.
"""
import csv
import io
import math
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent))

from conftest import ACCEPTANCE, blanket_precision, block_partition, random_hurwitz, random_spd  # noqa: E402

from feplab.active import agent_relax, efe_discrete, inaccuracy_gradient_flow, kl_discrete, synthesize_system, \
    transient_moments  # noqa: E402
from feplab.blanket import kl_factorization  # noqa: E402
from feplab.cli.config import REGISTRY, bundled_config_path  # noqa: E402
from feplab.cli.main import main as cli_main  # noqa: E402
from feplab.core import GaussianDensity, GridAxis, GridDensity, conditional_gaussian, kl_gaussian  # noqa: E402
from feplab.helmholtz import decompose_linear, reconstruct_drift  # noqa: E402
from feplab.inference import (  # noqa: E402
    dual_geometry_report,
    expected_inaccuracy,
    fep_lemma_check,
    fisher_metric_gaussian,
    kl_hessian_fd,
    laplace_vfe,
    vfe_discrete,
)
from feplab.io import decomposition_from_csv, quantities_from_csv, trajectory_from_csv  # noqa: E402
from feplab.presets import preset_partition, preset_system  # noqa: E402
from feplab.sde import IntegratorConfig, integrate_em, stationary_variance  # noqa: E402
from feplab.stationary import convergence_order, fp_residual, lyapunov_residual, solve_lyapunov  # noqa: E402

# worked two-hypothesis model: prior (1/2, 1/2), p(D | h) = (0.8, 0.4)
WORKED_PRIOR, WORKED_LIK = (0.5, 0.5), (0.8, 0.4)
WORKED_VFE = {
    (2 / 3, 1 / 3): -math.log(0.6),
    (0.5, 0.5): 0.5 * (math.log(0.5 / 0.4) + math.log(0.5 / 0.2)),
    (1.0, 0.0): -math.log(0.4),
}
WORKED_TABLE = np.array([[0.4, 0.1], [0.2, 0.3]])
WORKED_PI_ENTROPY = -(0.6 * math.log(0.6) + 0.4 * math.log(0.4))


def _report(k, title, ok, detail):
    status = "PASS" if ok else "FAIL"
    ACCEPTANCE[k] = (status, title, detail)
    print(f"{status} criterion {k:2d}: {title} [{detail}]")
    assert ok, f"criterion {k}: {detail}"


def _hundred_systems():
    rng = np.random.default_rng(1)
    return [random_hurwitz(rng, int(rng.integers(1, 9))) for _ in range(100)]


def test_criterion_01_lyapunov_consistency():
    systems = _hundred_systems()
    t0 = time.perf_counter()
    worst = max(lyapunov_residual(s.drift, solve_lyapunov(s).covariance, s.noise_amplitude) for s in systems)
    dt = time.perf_counter() - t0
    _report(1, "Lyapunov/NESS consistency", worst < 1e-10 and dt < 5.0,
            f"max residual {worst:.2e}, {dt:.2f} s")


def test_criterion_02_helmholtz_roundtrip():
    worst_rt, worst_q = 0.0, 0.0
    for s in _hundred_systems():
        d = decompose_linear(s)
        worst_rt = max(worst_rt, float(np.max(np.abs(reconstruct_drift(d).drift - s.drift))))
        worst_q = max(worst_q, d.antisymmetry_error())
    _report(2, "Helmholtz round-trip", worst_rt < 1e-10 and worst_q < 1e-10,
            f"round-trip {worst_rt:.2e}, antisymmetry {worst_q:.2e}")


def test_criterion_03_stationarity_identity():
    s = preset_system("rotation-2d")
    dens = solve_lyapunov(s)
    t0 = time.perf_counter()
    norms = []
    for h in (0.05, 0.025):
        axes = (GridAxis(-6.0, 6.0, h),) * 2
        norms.append(fp_residual(s, None, GridDensity.from_gaussian(dens, axes, normalize=True)).l2_norm)
    order = convergence_order(*norms)
    dt = time.perf_counter() - t0
    _report(3, "stationarity identity on the grid", norms[0] < 1e-3 and order >= 1.8 and dt < 30.0,
            f"L2 {norms[0]:.2e} at h=0.05, order {order:.3f}, {dt:.2f} s")


def test_criterion_04_simulation_agreement():
    s = preset_system("ou-1d")
    cfg = IntegratorConfig(1e-3, 1_000_000, seed=0)
    t0 = time.perf_counter()
    a = integrate_em(s, [0.0], cfg)
    dt = time.perf_counter() - t0
    b = integrate_em(s, [0.0], cfg)
    var, se = stationary_variance(a)
    z = abs(var[0] - 1.0) / se[0]
    same = a.states.tobytes() == b.states.tobytes()
    _report(4, "OU long-run variance", z < 3.0 and same and dt < 10.0,
            f"var {var[0]:.4f}, SE {se[0]:.4f}, z {z:.2f}, identical rerun {same}, {dt:.2f} s")


def test_criterion_05_blanket_equivalence():
    rng = np.random.default_rng(5)
    part = block_partition()
    worst_zero, min_pos = 0.0, np.inf
    for k in range(100):
        cross = 0.0 if k % 2 == 0 else rng.choice([-1, 1]) * rng.uniform(0.05, 0.4)
        d = GaussianDensity.from_precision(rng.standard_normal(4), blanket_precision(rng, cross=cross))
        kl = kl_factorization(d, part)
        if cross == 0.0:
            worst_zero = max(worst_zero, abs(kl))
        else:
            min_pos = min(min_pos, kl)
    _report(5, "blanket equivalence", worst_zero <= 1e-12 and min_pos > 0.0,
            f"max |KL| when Pi_ei=0: {worst_zero:.2e}, min KL otherwise: {min_pos:.2e}")


def test_criterion_06_vfe_suite():
    rng = np.random.default_rng(6)
    min_slack, post_slack, dec_err = np.inf, 0.0, 0.0
    for _ in range(1000):
        k = int(rng.integers(2, 8))
        prior, lik, q = rng.dirichlet(np.ones(k)), rng.uniform(0.01, 1.0, k), rng.dirichlet(np.ones(k))
        rep = vfe_discrete(q, prior, lik)
        min_slack = min(min_slack, rep.evidence_bound_slack)
        dec_err = max(dec_err, abs(rep.value - (rep.energy - rep.entropy)),
                      abs(rep.value - (rep.complexity - rep.accuracy)))
        post = prior * lik / np.sum(prior * lik)
        post_slack = max(post_slack, abs(vfe_discrete(post, prior, lik).evidence_bound_slack))
    worked = [vfe_discrete(q, WORKED_PRIOR, WORKED_LIK).value for q in WORKED_VFE]
    worked_err = max(abs(v - ref) for v, ref in zip(worked, WORKED_VFE.values()))
    printed = max(abs(v - ref) for v, ref in zip(worked, (0.5108, 0.5697, 0.9163)))
    ok = min_slack >= 0.0 and post_slack <= 1e-12 and dec_err <= 1e-10 and worked_err < 1e-12 and printed < 1e-4
    _report(6, "VFE suite", ok,
            f"min slack {min_slack:.2e}, posterior slack {post_slack:.1e}, decomposition {dec_err:.1e}, "
            f"worked F {worked[0]:.4f}/{worked[1]:.4f}/{worked[2]:.4f}")


def _rel(a, b):
    return float(np.linalg.norm(np.subtract(a, b)) / np.linalg.norm(b))


def test_criterion_07_gradient_checks():
    rng = np.random.default_rng(7)
    part = block_partition(1, 1, 1, 1)
    dens = GaussianDensity.from_precision(rng.standard_normal(4), blanket_precision(rng))
    G, Q = random_spd(rng, 4), np.zeros((4, 4))
    Q[1, 2], Q[2, 1] = 0.3, -0.3
    h = 1e-5
    worst_lap, worst_flow = 0.0, 0.0
    for _ in range(100):
        x = dens.sample(rng, 1)[0]
        b, i = x[part.blanket], x[part.i]
        lap = laplace_vfe(dens, part, b, i)
        fd = [(laplace_vfe(dens, part, b, i + h * u).value - laplace_vfe(dens, part, b, i - h * u).value) / (2 * h)
              for u in np.eye(i.size)]
        worst_lap = max(worst_lap, _rel(fd, lap.grad_i))

        pi = x[part.particular]
        m, C = conditional_gaussian(dens.mean, dens.covariance, part.e, part.particular, pi)
        flow = inaccuracy_gradient_flow(dens, part, pi, G, Q)
        pos = np.searchsorted(part.particular, part.a)
        g = np.empty(pos.size)
        for k, p in enumerate(pos):
            up, dn = pi.copy(), pi.copy()
            up[p] += h
            dn[p] -= h
            g[k] = (expected_inaccuracy(dens, part, up, m, C)[0] - expected_inaccuracy(dens, part, dn, m, C)[0]) / (2 * h)
        a = part.a
        worst_flow = max(worst_flow, _rel(-(G[np.ix_(a, a)] - Q[np.ix_(a, a)]) @ g, flow))
    _report(7, "analytic gradients vs finite differences", worst_lap < 1e-6 and worst_flow < 1e-6,
            f"laplace {worst_lap:.2e}, inaccuracy flow {worst_flow:.2e}")


def test_criterion_08_information_geometry():
    rng = np.random.default_rng(8)
    S = random_spd(rng, 3)
    lam = np.min(np.linalg.eigvalsh(S))
    delta = 0.05 * np.sqrt(lam) * np.array([1.0, -1.0, 1.0]) / np.sqrt(3)
    met = fisher_metric_gaussian(S, rng.standard_normal(3), delta)
    P = np.linalg.inv(S)
    fisher_err = float(np.max(np.abs(met.fisher @ S - np.eye(3))))
    dens = GaussianDensity.from_precision(np.zeros(4), blanket_precision(rng))
    geo = dual_geometry_report(dens, block_partition())
    Ce = geo.cond_cov_e
    fd = kl_hessian_fd(lambda d: kl_gaussian(np.zeros(1), Ce, geo.sigma @ d, Ce), geo.sigma.shape[1])
    ext_err = float(np.max(np.abs(fd - geo.extrinsic_fisher)))
    hess_err = float(np.max(np.abs(met.fd_hessian - P)))
    ok = fisher_err < 1e-12 and met.kl_quadratic_gap < 1e-12 and hess_err < 1e-6 and ext_err < 1e-6
    _report(8, "information geometry", ok,
            f"Fisher*Sigma-I {fisher_err:.1e}, KL gap {met.kl_quadratic_gap:.1e}, FD Hessian {hess_err:.1e}, "
            f"extrinsic FD {ext_err:.1e}")


def test_criterion_09_efe_suite():
    rng = np.random.default_rng(9)
    ident, slack_err = 0.0, 0.0
    for _ in range(1000):
        shape = (int(rng.integers(2, 5)), int(rng.integers(2, 5)))
        P = rng.dirichlet(np.ones(shape[0] * shape[1])).reshape(shape)
        T = rng.dirichlet(np.ones(shape[0] * shape[1])).reshape(shape)
        rep = efe_discrete(P, T)
        ident = max(ident, abs(rep.value - rep.ambiguity - rep.risk))
        slack_err = max(slack_err, abs(rep.bound_slack - kl_discrete(P, T)))
    eq = efe_discrete(WORKED_TABLE, WORKED_TABLE)
    ok = (ident <= 1e-12 and slack_err <= 1e-12 and abs(eq.bound_slack) <= 1e-12
          and abs(eq.value - WORKED_PI_ENTROPY) <= 1e-12 and abs(eq.value - 0.6730) < 1e-4)
    _report(9, "EFE suite", ok,
            f"identity {ident:.1e}, slack-KL {slack_err:.1e}, equilibrium slack {eq.bound_slack:.1e}, G {eq.value:.4f}")


def test_criterion_10_synthesis_relaxation():
    target = GaussianDensity.standard(2)
    gamma = np.eye(2)
    q = np.array([[0.0, 1.0], [-1.0, 0.0]])
    x0 = np.array([3.0, -2.0])
    n_traj = 10_000
    t0 = time.perf_counter()
    rep = agent_relax(target, gamma, q, x0, IntegratorConfig(1e-3, 10_000, seed=0), n_traj=n_traj)
    dt = time.perf_counter() - t0
    _, covs = transient_moments(rep.system, x0, rep.times)
    z = 0.0
    for C_emp, C in zip(rep.empirical_covariances, covs):
        se = np.sqrt((np.outer(np.diag(C), np.diag(C)) + C ** 2) / n_traj)
        z = max(z, float(np.max(np.abs(C_emp - C) / se)))
    rng = np.random.default_rng(10)
    inv = 0.0
    for Q in (np.zeros((2, 2)), q, 3.0 * q, rng.standard_normal() * q):
        rec = solve_lyapunov(synthesize_system(target, gamma, Q)).covariance
        inv = max(inv, float(np.max(np.abs(rec - target.covariance))))
    ok = rep.final_kl < 0.01 and z <= 3.0 and inv < 1e-8 and dt < 60.0
    _report(10, "synthesis and relaxation", ok,
            f"final KL {rep.final_kl:.2e}, max transient-cov z {z:.2f} over {len(covs)} checkpoints, "
            f"Q invariance {inv:.1e}, {dt:.2f} s")


def test_criterion_11_fep_lemma():
    t0 = time.perf_counter()
    rep = fep_lemma_check(preset_system("blanket-4d"), preset_partition("blanket-4d"))
    dt = time.perf_counter() - t0
    _report(11, "FEP-lemma diagnostic", rep.alignment_chain_vs_sim > 0.95 and dt < 60.0,
            f"chain vs sim {rep.alignment_chain_vs_sim:.4f}, Ao vs sim {rep.alignment_ao_vs_sim:.4f} (reported), "
            f"{dt:.2f} s")


def _csv_valid(name, text):
    """Header row, rectangular body, numeric cells outside the header and key column."""
    if not text.endswith("\r\n"):
        return False
    if name == "results.csv":
        values = quantities_from_csv(text)
        return len(values) > 0
    if name == "trajectory.csv":
        trajectory_from_csv(text)
        return True
    if name == "decomposition.csv":
        decomposition_from_csv(text)
        return True
    rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].startswith("#")]
    if len(rows) < 2 or any(len(r) != len(rows[0]) for r in rows):
        return False
    for r in rows[1:]:
        [float(v) for v in r]
    return True


def _run_all(root):
    out = {}
    codes = {}
    for name in REGISTRY:
        target = Path(root) / name
        codes[name] = cli_main(["run", str(bundled_config_path(name)), "--out", str(target)])
        out[name] = {p.name: p.read_bytes() for p in sorted(target.iterdir())} if target.exists() else {}
    return codes, out


def test_criterion_12_cli():
    with tempfile.TemporaryDirectory() as a, tempfile.TemporaryDirectory() as b:
        codes_a, files_a = _run_all(a)
        codes_b, files_b = _run_all(b)
    bad_exit = [n for n in REGISTRY if codes_a[n] != 0 or codes_b[n] != 0]
    invalid = []
    for n, files in files_a.items():
        csvs = {k: v for k, v in files.items() if k.endswith(".csv")}
        if "results.csv" not in csvs:
            invalid.append(n)
        for k, v in csvs.items():
            try:
                if not _csv_valid(k, v.decode("utf-8")):
                    invalid.append(f"{n}/{k}")
            except ValueError:
                invalid.append(f"{n}/{k}")
    nondet = [n for n in REGISTRY if files_a[n] != files_b[n]]
    ok = not bad_exit and not invalid and not nondet
    _report(12, "CLI registry", ok,
            f"{len(REGISTRY)} experiments, nonzero exit {bad_exit or 'none'}, invalid CSV {invalid or 'none'}, "
            f"non-deterministic {nondet or 'none'}")


if __name__ == "__main__":
    failed = 0
    for fn in [v for k, v in sorted(globals().items()) if k.startswith("test_criterion_")]:
        try:
            fn()
        except AssertionError:
            failed += 1
    sys.exit(1 if failed else 0)
