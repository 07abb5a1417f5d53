"""Domain types shared by all modules.

Every type is immutable after construction: array fields are copied and
flagged read-only, so instances can be shared freely between threads.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import linalg

from .errors import (
    DimensionTooHigh,
    EmptyRole,
    IllConditioned,
    IncompleteCover,
    NotPositiveDefinite,
    OverlappingSets,
    SingularBlock,
)

MAX_GRID_DIM = 3
ROUNDTRIP_TOL = 1e-10
ROLES = ("external", "sensory", "active", "internal")


def _frozen(a, dtype=float) -> np.ndarray:
    out = np.array(a, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


def _as_index_tuple(idx) -> tuple[int, ...]:
    return tuple(int(k) for k in np.atleast_1d(np.asarray(idx, dtype=int)))


# ---------------------------------------------------------------------------
# Partition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PartitionSpec:
    """Assignment of state coordinates to the four roles.

    Derived sets (blanket, autonomous, particular) are always computed from
    the four primary sets and returned in ascending index order.
    """

    external: tuple[int, ...]
    sensory: tuple[int, ...]
    active: tuple[int, ...]
    internal: tuple[int, ...]

    def __post_init__(self):
        for role in ROLES:
            object.__setattr__(self, role, _as_index_tuple(getattr(self, role)))

    @classmethod
    def from_dict(cls, d) -> "PartitionSpec":
        return cls(**{role: d.get(role, ()) for role in ROLES})

    @staticmethod
    def _union(*sets) -> np.ndarray:
        return np.array(sorted(set().union(*sets)), dtype=int)

    @property
    def e(self) -> np.ndarray:
        return np.array(sorted(self.external), dtype=int)

    @property
    def s(self) -> np.ndarray:
        return np.array(sorted(self.sensory), dtype=int)

    @property
    def a(self) -> np.ndarray:
        return np.array(sorted(self.active), dtype=int)

    @property
    def i(self) -> np.ndarray:
        return np.array(sorted(self.internal), dtype=int)

    @property
    def blanket(self) -> np.ndarray:
        return self._union(self.sensory, self.active)

    @property
    def autonomous(self) -> np.ndarray:
        return self._union(self.active, self.internal)

    @property
    def particular(self) -> np.ndarray:
        return self._union(self.internal, self.sensory, self.active)

    @property
    def n(self) -> int:
        return sum(len(getattr(self, r)) for r in ROLES)

    def role_of(self, k: int) -> str:
        for role in ROLES:
            if k in getattr(self, role):
                return role
        raise KeyError(k)

    def permuted(self, perm: Sequence[int]) -> "PartitionSpec":
        """Partition after relabelling coordinate ``perm[k] -> k``."""
        inv = {int(old): new for new, old in enumerate(perm)}
        return PartitionSpec(**{r: tuple(inv[k] for k in getattr(self, r)) for r in ROLES})


def validate_partition(spec: PartitionSpec, n: int, require_nonempty: bool = True) -> PartitionSpec:
    """Return ``spec`` if it is a disjoint cover of ``{0..n-1}``.

    Raises
    ------
    OverlappingSets
        Two roles share an index (or a role repeats one).
    IncompleteCover
        Some index in ``0..n-1`` is unassigned or an index is out of range.
    EmptyRole
        External or internal set is empty while ``require_nonempty`` is set.
    """
    seen: dict[int, str] = {}
    for role in ROLES:
        idx = getattr(spec, role)
        if len(set(idx)) != len(idx):
            raise OverlappingSets(f"{role} repeats an index: {idx}")
        for k in idx:
            if k in seen:
                raise OverlappingSets(f"index {k} assigned to both {seen[k]} and {role}")
            seen[k] = role
    out_of_range = sorted(k for k in seen if k < 0 or k >= n)
    if out_of_range:
        raise IncompleteCover(f"indices {out_of_range} outside 0..{n - 1}")
    missing = sorted(set(range(n)) - set(seen))
    if missing:
        raise IncompleteCover(f"indices {missing} not assigned to any role")
    if require_nonempty:
        for role in ("external", "internal"):
            if not getattr(spec, role):
                raise EmptyRole(f"{role} set is empty")
    return spec


# ---------------------------------------------------------------------------
# Linear Langevin system
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LinearSystem:
    """Linear Langevin dynamics ``dx/dt = B x + w`` with ``Cov(w) = 2 Gamma``."""

    drift: np.ndarray
    noise_amplitude: np.ndarray

    def __post_init__(self):
        B = np.atleast_2d(np.asarray(self.drift, dtype=float))
        G = np.atleast_2d(np.asarray(self.noise_amplitude, dtype=float))
        if B.ndim != 2 or B.shape[0] != B.shape[1]:
            raise ValueError(f"drift must be square, got shape {B.shape}")
        if G.shape != B.shape:
            raise ValueError(f"noise amplitude shape {G.shape} != drift shape {B.shape}")
        if not (np.all(np.isfinite(B)) and np.all(np.isfinite(G))):
            raise ValueError("non-finite entries in system matrices")
        scale = max(1.0, float(np.max(np.abs(G))))
        if np.max(np.abs(G - G.T)) > 1e-12 * scale:
            raise ValueError("noise amplitude must be symmetric")
        G = 0.5 * (G + G.T)
        if np.min(np.linalg.eigvalsh(G)) < -1e-12 * scale:
            raise NotPositiveDefinite("noise amplitude must be positive semi-definite")
        object.__setattr__(self, "drift", _frozen(B))
        object.__setattr__(self, "noise_amplitude", _frozen(G))

    @property
    def n(self) -> int:
        return self.drift.shape[0]

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvals(self.drift)

    def spectral_abscissa(self) -> float:
        return float(np.max(self.eigenvalues().real))

    def is_hurwitz(self) -> bool:
        return self.spectral_abscissa() < 0.0

    def has_diagonal_noise(self) -> bool:
        G = self.noise_amplitude
        return bool(np.all(G == np.diag(np.diag(G))) and np.all(np.diag(G) > 0))

    def flow(self, x) -> np.ndarray:
        """Drift evaluated at one state or a stack of states (last axis = n)."""
        return np.asarray(x, dtype=float) @ self.drift.T


DriftFunction = Callable[[np.ndarray], np.ndarray]


# ---------------------------------------------------------------------------
# Gaussian density
# ---------------------------------------------------------------------------

def _check_spd(S: np.ndarray, what: str) -> np.ndarray:
    try:
        return linalg.cholesky(S, lower=True)
    except linalg.LinAlgError as exc:
        raise NotPositiveDefinite(f"{what} is not positive definite") from exc


@dataclass(frozen=True, eq=False)
class GaussianDensity:
    """Multivariate normal with the precision matrix cached at construction."""

    mean: np.ndarray
    covariance: np.ndarray
    precision: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mean, dtype=float))
        S = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        n = mu.shape[0]
        if mu.ndim != 1 or S.shape != (n, n):
            raise ValueError(f"mean shape {mu.shape} incompatible with covariance {S.shape}")
        scale = max(1e-300, float(np.max(np.abs(S))))
        if np.max(np.abs(S - S.T)) > 1e-8 * scale:
            raise ValueError("covariance must be symmetric")
        S = 0.5 * (S + S.T)
        chol = _check_spd(S, "covariance")
        if self.precision is None:
            P = linalg.cho_solve((chol, True), np.eye(n))
            P = 0.5 * (P + P.T)
        else:
            P = np.atleast_2d(np.asarray(self.precision, dtype=float))
            if P.shape != (n, n):
                raise ValueError("precision shape mismatch")
        err = float(np.max(np.abs(P @ S - np.eye(n))))
        if err >= ROUNDTRIP_TOL:
            raise IllConditioned(f"precision/covariance round-trip error {err:.3e}")
        object.__setattr__(self, "mean", _frozen(mu))
        object.__setattr__(self, "covariance", _frozen(S))
        object.__setattr__(self, "precision", _frozen(P))
        object.__setattr__(self, "_chol", chol)

    @classmethod
    def from_precision(cls, mean, precision) -> "GaussianDensity":
        """Build from a precision matrix, keeping its zero pattern exact."""
        P = np.atleast_2d(np.asarray(precision, dtype=float))
        P = 0.5 * (P + P.T)
        chol = _check_spd(P, "precision")
        S = linalg.cho_solve((chol, True), np.eye(P.shape[0]))
        return cls(mean, 0.5 * (S + S.T), precision=P)

    @classmethod
    def standard(cls, n: int) -> "GaussianDensity":
        return cls(np.zeros(n), np.eye(n))

    @property
    def n(self) -> int:
        return self.mean.shape[0]

    def log_det_cov(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self._chol))))

    def logpdf(self, x) -> np.ndarray | float:
        x = np.asarray(x, dtype=float)
        d = x - self.mean
        z = linalg.solve_triangular(self._chol, d.T if d.ndim > 1 else d, lower=True)
        maha = np.sum(z * z, axis=0)
        out = -0.5 * (maha + self.n * np.log(2 * np.pi) + self.log_det_cov())
        return float(out) if d.ndim == 1 else out

    def grad_log(self, x) -> np.ndarray:
        return -(np.asarray(x, dtype=float) - self.mean) @ self.precision

    def entropy(self) -> float:
        return 0.5 * (self.n * (1.0 + np.log(2 * np.pi)) + self.log_det_cov())

    def marginal(self, idx) -> "GaussianDensity":
        idx = np.asarray(idx, dtype=int)
        return GaussianDensity(self.mean[idx], self.covariance[np.ix_(idx, idx)])

    def conditional(self, target, given, value) -> "GaussianDensity":
        """Density of ``x[target]`` given ``x[given] = value`` (Schur complement)."""
        mean, cov = conditional_gaussian(self.mean, self.covariance, target, given, value)
        return GaussianDensity(mean, cov)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        z = rng.standard_normal((size, self.n))
        return self.mean + z @ self._chol.T


def conditional_gaussian(mean, cov, target, given, value):
    """Mean and covariance of ``x[target] | x[given] = value``."""
    t = np.asarray(target, dtype=int)
    g = np.asarray(given, dtype=int)
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    if g.size == 0:
        return mean[t].copy(), cov[np.ix_(t, t)].copy()
    S_gg = cov[np.ix_(g, g)]
    S_tg = cov[np.ix_(t, g)]
    try:
        chol = linalg.cho_factor(S_gg, lower=True)
    except linalg.LinAlgError as exc:
        raise SingularBlock("conditioning block is singular") from exc
    gain = linalg.cho_solve(chol, S_tg.T).T
    m = mean[t] + gain @ (np.asarray(value, dtype=float) - mean[g])
    C = cov[np.ix_(t, t)] - gain @ S_tg.T
    return m, 0.5 * (C + C.T)


def kl_gaussian(m0, S0, m1, S1) -> float:
    """KL[N(m0, S0) || N(m1, S1)] in nats."""
    m0, m1 = np.atleast_1d(m0).astype(float), np.atleast_1d(m1).astype(float)
    S0, S1 = np.atleast_2d(S0).astype(float), np.atleast_2d(S1).astype(float)
    n = m0.shape[0]
    try:
        c1 = linalg.cho_factor(S1, lower=True)
        c0 = linalg.cho_factor(S0, lower=True)
    except linalg.LinAlgError as exc:
        raise SingularBlock("KL argument covariance is singular") from exc
    d = m1 - m0
    tr = float(np.trace(linalg.cho_solve(c1, S0)))
    maha = float(d @ linalg.cho_solve(c1, d))
    logdet = 2.0 * (np.sum(np.log(np.diag(c1[0]))) - np.sum(np.log(np.diag(c0[0]))))
    return 0.5 * (tr - n + maha + float(logdet))


def gaussian_kl(p: GaussianDensity, q: GaussianDensity) -> float:
    return kl_gaussian(p.mean, p.covariance, q.mean, q.covariance)


# ---------------------------------------------------------------------------
# Grid density
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridAxis:
    lower: float
    upper: float
    step: float

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("grid step must be positive")
        if not self.upper > self.lower:
            raise ValueError("grid upper bound must exceed lower bound")
        cells = (self.upper - self.lower) / self.step
        if abs(cells - round(cells)) > 1e-6:
            raise ValueError(f"step {self.step} does not divide [{self.lower}, {self.upper}]")

    @property
    def count(self) -> int:
        return int(round((self.upper - self.lower) / self.step)) + 1

    def points(self) -> np.ndarray:
        return self.lower + self.step * np.arange(self.count)


@dataclass(frozen=True, eq=False)
class GridDensity:
    """Density tabulated on a regular grid of up to three dimensions."""

    axes: tuple[GridAxis, ...]
    values: np.ndarray
    normalization_tol: float = 1e-6

    def __post_init__(self):
        axes = tuple(self.axes)
        if len(axes) > MAX_GRID_DIM:
            raise DimensionTooHigh(f"grid densities are limited to {MAX_GRID_DIM} dimensions")
        v = np.asarray(self.values, dtype=float)
        shape = tuple(ax.count for ax in axes)
        if v.shape != shape:
            raise ValueError(f"values shape {v.shape} does not match axes {shape}")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError("grid values must be finite and non-negative")
        mass = float(v.sum()) * float(np.prod([ax.step for ax in axes]))
        if abs(mass - 1.0) > self.normalization_tol:
            raise ValueError(f"grid density mass {mass:.9f} is not 1")
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "values", _frozen(v))

    @classmethod
    def tabulate(cls, fn: Callable[[np.ndarray], np.ndarray], axes, normalize: bool = True):
        """Evaluate ``fn`` on an ``(N, d)`` array of grid points."""
        axes = tuple(axes)
        if len(axes) > MAX_GRID_DIM:
            raise DimensionTooHigh(f"grid densities are limited to {MAX_GRID_DIM} dimensions")
        pts = grid_points(axes)
        vals = np.asarray(fn(pts), dtype=float).reshape(tuple(ax.count for ax in axes))
        if normalize:
            vals = vals / (vals.sum() * np.prod([ax.step for ax in axes]))
        return cls(axes, vals)

    @classmethod
    def from_gaussian(cls, density: GaussianDensity, axes, normalize: bool = False):
        return cls.tabulate(lambda p: np.exp(density.logpdf(p)), axes, normalize=normalize)

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def steps(self) -> np.ndarray:
        return np.array([ax.step for ax in self.axes])

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.steps))

    def mass(self) -> float:
        return float(self.values.sum()) * self.cell_volume

    def renormalize(self) -> "GridDensity":
        return GridDensity(self.axes, self.values / self.mass(), self.normalization_tol)

    def points(self) -> np.ndarray:
        return grid_points(self.axes)


def grid_points(axes) -> np.ndarray:
    mesh = np.meshgrid(*[ax.points() for ax in axes], indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


# ---------------------------------------------------------------------------
# Trajectory
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    seed: int

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        x = np.asarray(self.states, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if t.ndim != 1 or x.shape[0] != t.shape[0]:
            raise ValueError("times and states must have the same length")
        if t.size > 1:
            dt = np.diff(t)
            if np.any(dt <= 0):
                raise ValueError("times must be strictly increasing")
            if np.max(np.abs(dt - dt[0])) > 1e-9 * max(1.0, abs(t[-1])):
                raise ValueError("times must be uniformly spaced")
        object.__setattr__(self, "times", _frozen(t))
        object.__setattr__(self, "states", _frozen(x))

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if self.times.size > 1 else 0.0

    @property
    def n(self) -> int:
        return self.states.shape[1]

    def __len__(self) -> int:
        return self.times.shape[0]
