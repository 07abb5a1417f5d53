"""Experiment configuration: a TOML document with a strict schema."""
from __future__ import annotations

import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..core import LinearSystem, PartitionSpec, ROLES, validate_partition
from ..errors import FeplabError
from ..presets import PRESETS, preset_partition, preset_system

REGISTRY = (
    "simulate",
    "stationary-check",
    "helmholtz-roundtrip",
    "blanket-report",
    "marginal-flow",
    "fep-lemma",
    "vfe-suite",
    "efe-suite",
    "agent-relax",
    "geometry-suite",
)

TOP_KEYS = {"experiment", "seed", "output_dir", "system", "partition", "numerics"}
SYSTEM_KEYS = {"preset", "drift", "noise"}
# numeric overrides and the type each must have
NUMERIC_KEYS = {
    "dt": float,
    "n_steps": int,
    "n_traj": int,
    "tolerance": float,
    "grid_step": float,
    "grid_half_width": float,
    "horizon": float,
    "n_eval": int,
    "n_samples": int,
    "n_models": int,
    "fd_step": float,
    "record_every": int,
    "tau_f": float,
    "tau_s": float,
    "x0": list,
}


class ConfigParse(FeplabError):
    pass


class ConfigSchema(FeplabError):
    pass


class ExperimentUnknown(FeplabError):
    pass


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    experiment: str
    system: Optional[LinearSystem]
    partition: Optional[PartitionSpec]
    seed: int
    output_dir: Path
    numerics: dict = field(default_factory=dict)
    preset: Optional[str] = None

    def get(self, key: str, default: Any) -> Any:
        return self.numerics.get(key, default)


def _matrix(value, what: str) -> np.ndarray:
    if not isinstance(value, list) or not value:
        raise ConfigSchema(f"{what} must be a non-empty list of rows")
    rows = [r if isinstance(r, list) else [r] for r in value]
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ConfigSchema(f"{what} is not rectangular")
    if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for r in rows for v in r):
        raise ConfigSchema(f"{what} entries must be numbers")
    return np.array(rows, dtype=float)


def _check_keys(d: dict, allowed: set, where: str):
    extra = sorted(set(d) - allowed)
    if extra:
        raise ConfigSchema(f"unknown key(s) in {where}: {', '.join(extra)}")


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a config document.

    Raises
    ------
    ConfigParse
        Not valid TOML.
    ConfigSchema
        Unknown keys, wrong types, or inconsistent dimensions.
    ExperimentUnknown
        ``experiment`` is not a registry name.
    """
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigParse(str(exc)) from exc
    _check_keys(raw, TOP_KEYS, "top level")
    name = raw.get("experiment")
    if not isinstance(name, str):
        raise ConfigSchema("'experiment' must be a string")
    if name not in REGISTRY:
        raise ExperimentUnknown(f"unknown experiment {name!r}")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigSchema("'seed' must be a non-negative integer")
    out = raw.get("output_dir", f"feplab-out/{name}")
    if not isinstance(out, str):
        raise ConfigSchema("'output_dir' must be a string")

    system = None
    partition = None
    preset = None
    sysd = raw.get("system")
    if sysd is not None:
        if not isinstance(sysd, dict):
            raise ConfigSchema("[system] must be a table")
        _check_keys(sysd, SYSTEM_KEYS, "[system]")
        if "preset" in sysd:
            if "drift" in sysd or "noise" in sysd:
                raise ConfigSchema("[system] takes either a preset or drift/noise, not both")
            preset = sysd["preset"]
            if preset not in PRESETS:
                raise ConfigSchema(f"unknown system preset {preset!r}")
            system = preset_system(preset)
            partition = preset_partition(preset)
        else:
            if "drift" not in sysd:
                raise ConfigSchema("[system] needs 'preset' or 'drift'")
            B = _matrix(sysd["drift"], "drift")
            G = _matrix(sysd["noise"], "noise") if "noise" in sysd else np.eye(B.shape[0])
            if B.shape[0] != B.shape[1] or G.shape != B.shape:
                raise ConfigSchema(f"drift {B.shape} and noise {G.shape} must be equal square shapes")
            try:
                system = LinearSystem(B, G)
            except (ValueError, FeplabError) as exc:
                raise ConfigSchema(str(exc)) from exc

    partd = raw.get("partition")
    if partd is not None:
        if not isinstance(partd, dict):
            raise ConfigSchema("[partition] must be a table")
        _check_keys(partd, set(ROLES), "[partition]")
        for role, idx in partd.items():
            if not isinstance(idx, list) or not all(isinstance(k, int) and not isinstance(k, bool) for k in idx):
                raise ConfigSchema(f"partition '{role}' must be a list of integers")
        partition = PartitionSpec.from_dict(partd)
    if partition is not None and system is not None:
        try:
            validate_partition(partition, system.n, require_nonempty=False)
        except ValueError as exc:
            raise ConfigSchema(f"partition does not fit the system: {exc}") from exc

    nums = raw.get("numerics", {})
    if not isinstance(nums, dict):
        raise ConfigSchema("[numerics] must be a table")
    _check_keys(nums, set(NUMERIC_KEYS), "[numerics]")
    clean = {}
    for k, v in nums.items():
        want = NUMERIC_KEYS[k]
        if isinstance(v, bool):
            raise ConfigSchema(f"numerics.{k} must be {want.__name__}")
        if want is float and isinstance(v, int):
            v = float(v)
        if not isinstance(v, want):
            raise ConfigSchema(f"numerics.{k} must be {want.__name__}")
        if want is list:
            v = _matrix(v, f"numerics.{k}").ravel()
            if system is not None and v.size != system.n:
                raise ConfigSchema(f"numerics.{k} has length {v.size}, system dimension is {system.n}")
        elif v <= 0:
            raise ConfigSchema(f"numerics.{k} must be positive")
        clean[k] = v
    return ExperimentConfig(name, system, partition, seed, Path(out), clean, preset)


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigParse(f"cannot read {path}: {exc}") from exc
    return parse_config(text)


def bundled_config_text(experiment: str) -> str:
    if experiment not in REGISTRY:
        raise ExperimentUnknown(f"unknown experiment {experiment!r}")
    return resources.files("feplab.cli").joinpath("presets", f"{experiment}.toml").read_text(encoding="utf-8")


def bundled_config_path(experiment: str) -> Path:
    if experiment not in REGISTRY:
        raise ExperimentUnknown(f"unknown experiment {experiment!r}")
    return Path(str(resources.files("feplab.cli").joinpath("presets", f"{experiment}.toml")))
