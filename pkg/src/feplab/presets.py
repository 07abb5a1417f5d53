"""Named example systems used by the experiment harness and the tests."""
from __future__ import annotations

import numpy as np

from .core import GaussianDensity, LinearSystem, PartitionSpec

# Precision of a 4-state density with one coordinate per role
# (external 0, sensory 1, active 2, internal 3). Pi_03 = 0, so the
# blanket {1, 2} separates external from internal.
BLANKET_PRECISION = np.array([
    [1.0, 0.4, 0.0, 0.0],
    [0.4, 1.0, 0.3, 0.2],
    [0.0, 0.3, 1.0, 0.4],
    [0.0, 0.2, 0.4, 1.0],
])

ONE_PER_ROLE = PartitionSpec(external=(0,), sensory=(1,), active=(2,), internal=(3,))


def _coupled_q(strength: float = 0.5) -> np.ndarray:
    Q = np.zeros((4, 4))
    Q[0, 1], Q[1, 0] = strength, -strength
    return Q


def _from_decomposition(P, Q):
    return -(np.eye(P.shape[0]) - Q) @ P


PRESETS = {
    "rotation-2d": {
        "drift": np.array([[-1.0, -1.0], [1.0, -1.0]]),
        "noise": np.eye(2),
        "partition": None,
    },
    "ou-1d": {"drift": np.array([[-1.0]]), "noise": np.array([[1.0]]), "partition": None},
    "brownian-1d": {"drift": np.array([[0.0]]), "noise": np.array([[1.0]]), "partition": None},
    "blanket-4d": {
        "drift": _from_decomposition(BLANKET_PRECISION, np.zeros((4, 4))),
        "noise": np.eye(4),
        "partition": ONE_PER_ROLE,
    },
    "blanket-4d-coupled": {
        "drift": _from_decomposition(BLANKET_PRECISION, _coupled_q()),
        "noise": np.eye(4),
        "partition": ONE_PER_ROLE,
    },
    # e <-> s <-> a <-> i with asymmetric couplings
    "chain-4d": {
        "drift": np.array([
            [-1.0, 0.5, 0.0, 0.0],
            [-0.3, -1.0, 0.4, 0.0],
            [0.0, -0.2, -1.0, 0.6],
            [0.0, 0.0, -0.5, -1.0],
        ]),
        "noise": np.eye(4),
        "partition": ONE_PER_ROLE,
    },
}


def preset_names() -> list[str]:
    return sorted(PRESETS)


def preset_system(name: str) -> LinearSystem:
    try:
        p = PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; known: {', '.join(preset_names())}") from None
    return LinearSystem(p["drift"], p["noise"])


def preset_partition(name: str):
    return PRESETS[name]["partition"]


def blanket_density() -> GaussianDensity:
    return GaussianDensity.from_precision(np.zeros(4), BLANKET_PRECISION)
