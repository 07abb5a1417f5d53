"""Euler-Maruyama integration of Langevin SDEs with additive noise.

Random numbers come from counter-based Philox streams: trajectory ``j`` of a
run seeded with ``seed`` uses key ``seed`` and counter block ``j``. A single
path from :func:`integrate_em` is therefore trajectory 0 of the ensemble with
the same seed, and results never depend on scheduling or thread count.
"""
from __future__ import annotations

import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Union

import numpy as np

from . import _backend
from .core import LinearSystem, Trajectory
from .errors import InsufficientSamples, NumericalBlowup

BLOWUP_NORM = 1e12
STABILITY_GUARD = 0.5
SCHEME = "euler-maruyama"
_CHUNK_DOUBLES = 1 << 22

System = Union[LinearSystem, Callable[[np.ndarray], np.ndarray]]


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float
    n_steps: int
    seed: int = 0
    burn_in: float = 0.1

    def __post_init__(self):
        if not (self.dt > 0 and np.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError(f"n_steps must be a positive integer, got {self.n_steps}")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ValueError("seed must be an unsigned integer")
        if not 0.0 <= self.burn_in < 1.0:
            raise ValueError("burn_in must lie in [0, 1)")
        object.__setattr__(self, "n_steps", int(self.n_steps))
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def horizon(self) -> float:
        return self.dt * self.n_steps

    @property
    def scheme(self) -> str:
        return SCHEME


@dataclass(frozen=True, eq=False)
class EnsembleStats:
    sample_mean: np.ndarray
    sample_covariance: np.ndarray
    n_samples: int
    standard_errors: np.ndarray
    variance_standard_errors: np.ndarray

    @classmethod
    def from_samples(cls, x: np.ndarray) -> "EnsembleStats":
        x = np.asarray(x, dtype=float)
        N = x.shape[0]
        if N < 2:
            raise InsufficientSamples("need at least two samples")
        mean = x.mean(axis=0)
        d = x - mean
        cov = d.T @ d / (N - 1)
        cov = 0.5 * (cov + cov.T)
        se = np.sqrt(np.diag(cov) / N)
        var_se = np.std(d * d, axis=0, ddof=1) / np.sqrt(N)
        return cls(mean, cov, N, se, var_se)


@dataclass(frozen=True, eq=False)
class ErgodicityReport:
    time_avg_cov: np.ndarray
    ensemble_cov: np.ndarray
    max_rel_discrepancy: float
    window_variances: tuple[float, float, float]
    non_stationary: bool


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get("FEPLAB_THREADS", "1")))
    except ValueError:
        return 1


def trajectory_rng(seed: int, index: int = 0) -> np.random.Generator:
    """Generator for trajectory ``index`` of a run keyed by ``seed``."""
    return np.random.Generator(np.random.Philox(key=int(seed), counter=int(index) << 128))


class _StreamFactory:
    """Re-keys one Philox instance per trajectory; equal to a fresh generator."""

    def __init__(self, seed: int):
        self._bg = np.random.Philox(key=int(seed))
        self._gen = np.random.Generator(self._bg)
        st = self._bg.state
        self._key = st["state"]["key"]
        self._buffer = st["buffer"]

    def normals(self, index: int, shape) -> np.ndarray:
        self._bg.state = {
            "bit_generator": "Philox",
            "state": {"counter": np.array([0, 0, index, 0], dtype=np.uint64), "key": self._key},
            "buffer": self._buffer,
            "buffer_pos": 4,
            "has_uint32": 0,
            "uinteger": 0,
        }
        return self._gen.standard_normal(shape)


def noise_factor(noise_amplitude, dt: float) -> np.ndarray:
    """Matrix ``L`` with ``L L^T = 2 Gamma dt`` (exact square root for diagonal Gamma)."""
    G = np.atleast_2d(np.asarray(noise_amplitude, dtype=float))
    C = 2.0 * dt * G
    if np.all(G == np.diag(np.diag(G))):
        return np.diag(np.sqrt(np.clip(np.diag(C), 0.0, None)))
    w, V = np.linalg.eigh(0.5 * (C + C.T))
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def _split(system: System, noise_amplitude, n: int):
    if isinstance(system, LinearSystem):
        return system.drift, system.noise_amplitude, None
    if not callable(system):
        raise TypeError("system must be a LinearSystem or a drift callable")
    G = np.zeros((n, n)) if noise_amplitude is None else np.atleast_2d(np.asarray(noise_amplitude, float))
    if G.shape != (n, n):
        raise ValueError("noise amplitude dimension mismatch")
    return None, G, system


def check_step_size(system: LinearSystem, dt: float) -> float:
    """Return ``dt * max|Re lambda|`` and warn when it exceeds the stability guard."""
    rate = dt * float(np.max(np.abs(system.eigenvalues().real))) if system.n else 0.0
    if rate >= STABILITY_GUARD:
        warnings.warn(
            f"dt * max|Re(eig(B))| = {rate:.3g} >= {STABILITY_GUARD}; Euler-Maruyama may be unstable",
            RuntimeWarning,
            stacklevel=3,
        )
    return rate


def integrate_em(system: System, x0, cfg: IntegratorConfig, noise_amplitude=None,
                 normals: np.ndarray | None = None) -> Trajectory:
    """Integrate one sample path of ``dx/dt = f(x) + w``.

    Parameters
    ----------
    system
        A :class:`LinearSystem`, or a drift callable mapping an ``(n,)`` state
        to its ``(n,)`` flow (``noise_amplitude`` then gives Gamma, default 0).
    x0
        Initial state.
    cfg
        Step size, step count and seed.
    normals
        Optional ``(n_steps, n)`` standard normals overriding the seeded
        stream (used to couple paths across step sizes).

    Raises
    ------
    NumericalBlowup
        If the state norm exceeds ``1e12`` (or becomes NaN).
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if not np.all(np.isfinite(x0)):
        raise ValueError("x0 must be finite")
    n = x0.shape[0]
    B, G, f = _split(system, noise_amplitude, n)
    if B is not None:
        if B.shape[0] != n:
            raise ValueError("x0 dimension does not match the system")
        check_step_size(system, cfg.dt)
    L = noise_factor(G, cfg.dt)
    if normals is None:
        z = trajectory_rng(cfg.seed, 0).standard_normal((cfg.n_steps, n))
    else:
        z = np.ascontiguousarray(normals, dtype=float).reshape(cfg.n_steps, n)
    out = np.empty((cfg.n_steps + 1, n))
    limit_sq = BLOWUP_NORM ** 2
    if f is None:
        bad = _backend.kernels.em_linear_path(
            x0, np.ascontiguousarray(B), np.ascontiguousarray(L), z, cfg.dt, out, limit_sq
        )
    else:
        bad = _integrate_callable(f, x0, L, z, cfg.dt, out, limit_sq)
    if bad >= 0:
        raise NumericalBlowup(f"state norm exceeded {BLOWUP_NORM:g} at step {bad}", step=bad)
    times = cfg.dt * np.arange(cfg.n_steps + 1)
    return Trajectory(times, out, cfg.seed)


def _integrate_callable(f, x0, L, z, dt, out, limit_sq) -> int:
    inc = z @ L.T
    x = x0.copy()
    out[0] = x
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(z.shape[0]):
            x = x + dt * np.asarray(f(x), dtype=float) + inc[k]
            out[k + 1] = x
            nsq = float(x @ x)
            if not nsq <= limit_sq:
                return k + 1
    return -1


def simulate_ensemble(system: System, x0, cfg: IntegratorConfig, n_traj: int,
                      record_steps=None, noise_amplitude=None, antithetic: bool = False) -> np.ndarray:
    """States of ``n_traj`` independent paths at the requested step indices.

    ``x0`` is either one state shared by all paths or an ``(n_traj, n)``
    array. Returns an array of shape ``(len(record_steps), n_traj, n)``;
    by default only the final state is recorded. With ``antithetic`` set,
    path ``2k + 1`` is driven by the negated normals of path ``2k``.
    """
    X0 = np.asarray(x0, dtype=float)
    if X0.ndim == 1:
        X0 = np.broadcast_to(X0, (n_traj, X0.shape[0]))
    if X0.shape[0] != n_traj:
        raise ValueError("x0 rows must match n_traj")
    if not np.all(np.isfinite(X0)):
        raise ValueError("x0 must be finite")
    n = X0.shape[1]
    record = np.array([cfg.n_steps] if record_steps is None else sorted(record_steps), dtype=np.intp)
    if record.size and (record[0] < 0 or record[-1] > cfg.n_steps):
        raise ValueError("record steps must lie in [0, n_steps]")
    B, G, f = _split(system, noise_amplitude, n)
    if B is None:
        drift_fn = f
        B = np.zeros((n, n))
    else:
        drift_fn = None
        check_step_size(system, cfg.dt)
    L = np.ascontiguousarray(noise_factor(G, cfg.dt))
    B = np.ascontiguousarray(B)
    noisy = bool(np.any(L))
    out = np.empty((record.size, n_traj, n))
    chunk = max(1, min(n_traj, _CHUNK_DOUBLES // max(1, cfg.n_steps * n)))
    bounds = [(lo, min(n_traj, lo + chunk)) for lo in range(0, n_traj, chunk)]
    limit_sq = BLOWUP_NORM ** 2

    def run(bound):
        lo, hi = bound
        streams = _StreamFactory(cfg.seed)
        if noisy:
            Z = np.empty((hi - lo, cfg.n_steps, n))
            for p in range(hi - lo):
                j = lo + p
                if antithetic:
                    Z[p] = streams.normals(j // 2, (cfg.n_steps, n))
                    if j % 2:
                        np.negative(Z[p], out=Z[p])
                else:
                    Z[p] = streams.normals(j, (cfg.n_steps, n))
        else:
            Z = np.zeros((hi - lo, cfg.n_steps, n))
        X = np.ascontiguousarray(X0[lo:hi])
        buf = np.empty((record.size, hi - lo, n))
        if drift_fn is None:
            bad = _backend.kernels.em_linear_ensemble(X, B, L, Z, cfg.dt, record, buf, limit_sq)
        else:
            bad = _ensemble_callable(drift_fn, X, L, Z, cfg.dt, record, buf, limit_sq)
        out[:, lo:hi, :] = buf
        return -1 if bad < 0 else lo + bad

    workers = min(thread_count(), len(bounds))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            failures = list(pool.map(run, bounds))
    else:
        failures = [run(b) for b in bounds]
    for bad in failures:
        if bad >= 0:
            raise NumericalBlowup(f"trajectory {bad} exceeded state norm {BLOWUP_NORM:g}", trajectory=bad)
    return out


def _ensemble_callable(f, X, L, Z, dt, record, out, limit_sq) -> int:
    r = 0
    rec = list(record)
    while r < len(rec) and rec[r] == 0:
        out[r] = X
        r += 1
    dead = np.zeros(X.shape[0], dtype=bool)
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(Z.shape[1]):
            X = X + dt * np.asarray(f(X), dtype=float) + Z[:, k, :] @ L.T
            dead |= ~(np.einsum("ij,ij->i", X, X) <= limit_sq)
            while r < len(rec) and rec[r] == k + 1:
                out[r] = X
                r += 1
    bad = np.flatnonzero(dead)
    return int(bad[0]) if bad.size else -1


def sample_ensemble(system: System, x0, cfg: IntegratorConfig, n_traj: int,
                    noise_amplitude=None) -> EnsembleStats:
    """Moments of the final states of ``n_traj`` independent paths."""
    if n_traj < 2:
        raise InsufficientSamples("sample_ensemble needs n_traj >= 2")
    final = simulate_ensemble(system, x0, cfg, n_traj, noise_amplitude=noise_amplitude)[-1]
    return EnsembleStats.from_samples(final)


def time_average_covariance(traj: Trajectory, burn_in: float = 0.1) -> np.ndarray:
    x = traj.states[int(np.floor(burn_in * len(traj))):]
    d = x - x.mean(axis=0)
    cov = d.T @ d / max(1, x.shape[0] - 1)
    return 0.5 * (cov + cov.T)


def batch_means(values: np.ndarray, n_batches: int = 50) -> tuple[np.ndarray, np.ndarray]:
    """Mean of a correlated series and its batch-means standard error."""
    v = np.asarray(values, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    size = v.shape[0] // n_batches
    if size < 1:
        raise InsufficientSamples("series shorter than the number of batches")
    b = v[: size * n_batches].reshape(n_batches, size, -1).mean(axis=1)
    return v.mean(axis=0), b.std(axis=0, ddof=1) / np.sqrt(n_batches)


def stationary_variance(traj: Trajectory, burn_in: float = 0.1, n_batches: int = 50):
    """Time-averaged variance per coordinate with a batch-means standard error."""
    x = traj.states[int(np.floor(burn_in * len(traj))):]
    d = x - x.mean(axis=0)
    var, se = batch_means(d * d, n_batches)
    n = x.shape[0]
    return var * n / (n - 1), se


def _relative_discrepancy(a: np.ndarray, b: np.ndarray, atol: float = 1e-12) -> float:
    sa = np.sqrt(np.abs(np.outer(np.diag(a), np.diag(a))))
    sb = np.sqrt(np.abs(np.outer(np.diag(b), np.diag(b))))
    scale = np.maximum(np.maximum(sa, sb), atol)
    return float(np.max(np.abs(a - b) / scale))


def ergodicity_report(system: System, x0, cfg: IntegratorConfig, n_traj: int,
                      ensemble_steps: int | None = None, noise_amplitude=None) -> ErgodicityReport:
    """Compare time-averaged and ensemble second moments.

    The time average uses one path of ``cfg.n_steps`` steps after discarding
    ``cfg.burn_in`` of it. The ensemble uses ``n_traj`` paths of
    ``ensemble_steps`` steps (default ``cfg.n_steps // 100``), keyed by
    ``cfg.seed + 1`` so the two estimators share no random numbers.
    """
    traj = integrate_em(system, x0, cfg, noise_amplitude=noise_amplitude)
    time_cov = time_average_covariance(traj, cfg.burn_in)
    steps = ensemble_steps if ensemble_steps is not None else max(1, cfg.n_steps // 100)
    ens_cfg = replace(cfg, n_steps=steps, seed=cfg.seed + 1)
    ens = sample_ensemble(system, x0, ens_cfg, n_traj, noise_amplitude=noise_amplitude)

    x = traj.states[int(np.floor(cfg.burn_in * len(traj))):]
    thirds = []
    for frac in (1 / 3, 2 / 3, 1.0):
        w = x[: max(2, int(round(frac * x.shape[0])))]
        thirds.append(float(np.trace(np.atleast_2d(np.cov(w, rowvar=False)))))
    v1, v2, v3 = thirds
    monotone = (v1 < v2 < v3 and v3 > 1.25 * v1) or (v1 > v2 > v3 and v1 > 1.25 * v3)
    return ErgodicityReport(
        time_avg_cov=time_cov,
        ensemble_cov=ens.sample_covariance,
        max_rel_discrepancy=_relative_discrepancy(time_cov, ens.sample_covariance),
        window_variances=(v1, v2, v3),
        non_stationary=bool(monotone),
    )
