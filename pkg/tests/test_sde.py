import os
import subprocess
import sys

import numpy as np
import pytest

from feplab import _backend
from feplab.core import LinearSystem
from feplab.errors import InsufficientSamples, NumericalBlowup
from feplab.presets import preset_system
from feplab.sde import (
    EnsembleStats,
    IntegratorConfig,
    _StreamFactory,
    batch_means,
    ergodicity_report,
    integrate_em,
    noise_factor,
    sample_ensemble,
    simulate_ensemble,
    stationary_variance,
    trajectory_rng,
)

from conftest import random_hurwitz, random_spd

needs_compiled = pytest.mark.skipif(_backend.compiled is None, reason="extension not built")


def test_noise_factor_squares_to_diffusion(rng):
    for G in (np.diag([0.5, 2.0]), random_spd(rng, 3)):
        L = noise_factor(G, 0.01)
        np.testing.assert_allclose(L @ L.T, 2 * 0.01 * G, atol=1e-14)


def test_streams_match_fresh_generators():
    f = _StreamFactory(7)
    for j in (0, 3, 1000):
        np.testing.assert_array_equal(f.normals(j, (5, 2)), trajectory_rng(7, j).standard_normal((5, 2)))


@needs_compiled
def test_backends_agree_on_path(rng):
    n, steps = 3, 500
    B = random_hurwitz(rng, n).drift
    L = np.linalg.cholesky(random_spd(rng, n)) * 0.1
    z = rng.standard_normal((steps, n))
    x0 = rng.standard_normal(n)
    outs = []
    for k in (_backend.compiled, _backend.fallback):
        out = np.empty((steps + 1, n))
        assert k.em_linear_path(x0, np.ascontiguousarray(B), np.ascontiguousarray(L), z, 1e-2, out, 1e300) == -1
        outs.append(out)
    np.testing.assert_allclose(outs[0], outs[1], rtol=1e-12, atol=1e-13)


@needs_compiled
def test_backends_agree_on_ensemble(rng):
    m, n, steps = 16, 2, 200
    B = random_hurwitz(rng, n).drift
    L = 0.1 * np.eye(n)
    Z = rng.standard_normal((m, steps, n))
    X0 = rng.standard_normal((m, n))
    record = np.array([0, 50, 200], dtype=np.intp)
    outs = []
    for k in (_backend.compiled, _backend.fallback):
        out = np.empty((3, m, n))
        assert k.em_linear_ensemble(X0, np.ascontiguousarray(B), L, Z, 1e-2, record, out, 1e300) == -1
        outs.append(out)
    np.testing.assert_allclose(outs[0], outs[1], rtol=1e-12, atol=1e-13)


def test_seed_determinism():
    s = preset_system("rotation-2d")
    cfg = IntegratorConfig(1e-2, 2000, seed=11)
    a = integrate_em(s, [1.0, 0.0], cfg)
    b = integrate_em(s, [1.0, 0.0], cfg)
    assert a.states.tobytes() == b.states.tobytes()
    c = integrate_em(s, [1.0, 0.0], IntegratorConfig(1e-2, 2000, seed=12))
    assert not np.array_equal(a.states, c.states)


def test_ensemble_paths_independent_of_batch_size_and_threads(monkeypatch):
    s = preset_system("rotation-2d")
    cfg = IntegratorConfig(1e-2, 300, seed=3)
    small = simulate_ensemble(s, [0.5, 0.5], cfg, 3)
    monkeypatch.setenv("FEPLAB_THREADS", "4")
    big = simulate_ensemble(s, [0.5, 0.5], cfg, 50)
    np.testing.assert_array_equal(small, big[:, :3])


def test_single_path_matches_ensemble_member():
    s = preset_system("ou-1d")
    cfg = IntegratorConfig(1e-2, 400, seed=5)
    path = integrate_em(s, [2.0], cfg)
    ens = simulate_ensemble(s, [2.0], cfg, 4)
    np.testing.assert_allclose(path.states[-1], ens[-1, 0], rtol=1e-12)


def test_antithetic_pairs_mirror_for_zero_start():
    s = preset_system("blanket-4d")
    cfg = IntegratorConfig(1e-2, 100, seed=1)
    X = simulate_ensemble(s, np.zeros(4), cfg, 6, antithetic=True)
    np.testing.assert_allclose(X[-1, 1::2], -X[-1, 0::2], atol=1e-14)


def test_brownian_variance_is_exact_for_em():
    # with B = 0 each step adds N(0, 2 Gamma dt), so Var x_T = 2 Gamma T
    s = LinearSystem(np.zeros((1, 1)), np.array([[0.5]]))
    cfg = IntegratorConfig(0.01, 100, seed=2)
    st = sample_ensemble(s, [0.0], cfg, 40_000)
    var = st.sample_covariance[0, 0]
    assert abs(var - 1.0) < 3 * st.variance_standard_errors[0]


def test_em_stationary_variance_bias_visible_at_large_dt():
    # the EM recursion x' = (1 - dt) x + sqrt(2 dt) z has variance 2 / (2 - dt)
    s = preset_system("ou-1d")
    dt = 0.1
    st = sample_ensemble(s, [0.0], IntegratorConfig(dt, 300, seed=4), 40_000)
    em_var = 2.0 / (2.0 - dt)
    se = st.variance_standard_errors[0]
    assert abs(st.sample_covariance[0, 0] - em_var) < 3 * se
    assert abs(st.sample_covariance[0, 0] - 1.0) > 3 * se


def test_weak_order_one_for_ou_mean():
    # E x_T = (1 - dt)^N x0 for EM against exp(-T) x0; error halves with dt
    s = preset_system("ou-1d")
    errs = []
    for dt in (0.1, 0.05, 0.025):
        mean = simulate_ensemble(s, [1.0], IntegratorConfig(dt, int(round(1 / dt)), seed=9), 2, antithetic=True)
        errs.append(abs(mean[-1, :, 0].mean() - np.exp(-1.0)))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(np.abs(rates - 1.0) < 0.1)


def test_stationary_variance_short_ou():
    traj = integrate_em(preset_system("ou-1d"), [0.0], IntegratorConfig(1e-2, 200_000, seed=1))
    var, se = stationary_variance(traj)
    assert var[0] == pytest.approx(1.0, abs=4 * se[0] + 0.01)


def test_batch_means_rejects_short_series():
    with pytest.raises(InsufficientSamples):
        batch_means(np.zeros((10, 1)), 50)


def test_ensemble_stats_requires_two_samples():
    with pytest.raises(InsufficientSamples):
        EnsembleStats.from_samples(np.zeros((1, 2)))


def test_blowup_is_reported():
    s = LinearSystem(np.array([[5.0]]), np.array([[1.0]]))
    with pytest.raises(NumericalBlowup):
        integrate_em(s, [1.0], IntegratorConfig(0.01, 20_000))
    with pytest.raises(NumericalBlowup):
        simulate_ensemble(s, [1.0], IntegratorConfig(0.01, 20_000), 4)


def test_callable_drift_matches_linear_system():
    s = preset_system("rotation-2d")
    cfg = IntegratorConfig(1e-2, 250, seed=8)
    a = integrate_em(s, [1.0, -1.0], cfg)
    b = integrate_em(lambda x: s.drift @ x, [1.0, -1.0], cfg, noise_amplitude=s.noise_amplitude)
    np.testing.assert_allclose(a.states, b.states, rtol=1e-12, atol=1e-14)


def test_ergodicity_report_flags_brownian_motion():
    ou = ergodicity_report(preset_system("ou-1d"), [0.0], IntegratorConfig(1e-2, 100_000, seed=0), 2000)
    assert not ou.non_stationary
    assert ou.max_rel_discrepancy < 0.15
    bm = ergodicity_report(preset_system("brownian-1d"), [0.0], IntegratorConfig(1e-2, 100_000, seed=0), 2000)
    assert bm.non_stationary


def test_config_validation():
    with pytest.raises(ValueError):
        IntegratorConfig(0.0, 10)
    with pytest.raises(ValueError):
        IntegratorConfig(0.1, 0)
    with pytest.raises(ValueError):
        IntegratorConfig(0.1, 10, burn_in=1.0)


def test_backend_env_forces_fallback():
    env = dict(os.environ, FEPLAB_BACKEND="python")
    res = subprocess.run([sys.executable, "-c", "import feplab._backend as b; print(b.BACKEND)"],
                         capture_output=True, text=True, env=env, check=True)
    assert res.stdout.strip() == "python"
