"""``feplab`` command line: run, validate and list registry experiments."""
from __future__ import annotations

import argparse
import json
import os
import shutil
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

from .. import errors
from ..io import quantities_to_csv
from .config import (
    REGISTRY,
    ConfigParse,
    ConfigSchema,
    ExperimentUnknown,
    bundled_config_path,
    bundled_config_text,
    load_config,
)

EXIT_OK = 0
EXIT_INTERNAL = 1
# most specific class wins: lookup walks the exception's MRO
EXIT_CODES = {
    ConfigParse: 2,
    ConfigSchema: 3,
    ExperimentUnknown: 4,
    errors.FeplabError: 9,
    errors.NumericalBlowup: 10,
    errors.InsufficientSamples: 11,
    errors.NotHurwitz: 12,
    errors.IllConditioned: 13,
    errors.NotPositiveDefinite: 14,
    errors.GridTooCoarse: 15,
    errors.DimensionTooHigh: 16,
    errors.SingularCovariance: 17,
    errors.AntisymmetryViolation: 18,
    errors.BlanketViolated: 19,
    errors.SingularBlock: 20,
    errors.SingularBlanketBlock: 21,
    errors.NonInjective: 22,
    errors.SupportMismatch: 23,
    errors.ZeroMarginal: 24,
    errors.NoDynamics: 25,
    errors.SynthesisFailure: 26,
    errors.ConsistencyError: 27,
    errors.OverlappingSets: 28,
    errors.IncompleteCover: 29,
    errors.EmptyRole: 30,
    errors.PartitionError: 31,
}


def exit_code_for(exc: BaseException) -> int:
    for cls in type(exc).__mro__:
        if cls in EXIT_CODES:
            return EXIT_CODES[cls]
    return EXIT_INTERNAL


def _fail(exc: BaseException) -> int:
    code = exit_code_for(exc)
    msg = {"error": type(exc).__name__, "exit_code": code, "message": " ".join(str(exc).split())}
    sys.stderr.write(json.dumps(msg, sort_keys=True) + "\n")
    return code


def write_atomically(out_dir: Path, files: dict[str, str]) -> None:
    """Write every file into a staging directory next to ``out_dir``, then swap it in."""
    out_dir = Path(out_dir).resolve()
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=f".{out_dir.name}.", dir=out_dir.parent))
    try:
        for name in sorted(files):
            with open(stage / name, "w", encoding="utf-8", newline="") as fh:
                fh.write(files[name])
        old = None
        if out_dir.exists():
            old = Path(tempfile.mkdtemp(prefix=f".{out_dir.name}.old.", dir=out_dir.parent))
            os.replace(out_dir, old / "prev")
        os.replace(stage, out_dir)
        if old is not None:
            shutil.rmtree(old, ignore_errors=True)
    except BaseException:
        shutil.rmtree(stage, ignore_errors=True)
        raise


def run_experiment(config_path, seed=None, out=None) -> int:
    from .experiments import EXPERIMENTS

    try:
        cfg = load_config(config_path)
        if seed is not None:
            cfg = replace(cfg, seed=int(seed))
        if out is not None:
            cfg = replace(cfg, output_dir=Path(out))
        art = EXPERIMENTS[cfg.experiment](cfg)
        files = dict(art.files)
        files["results.csv"] = quantities_to_csv(art.rows)
        write_atomically(cfg.output_dir, files)
    except errors.FeplabError as exc:
        return _fail(exc)
    except Exception as exc:  # noqa: BLE001 - reported as one machine-readable line
        return _fail(exc)
    return EXIT_OK


def _cmd_validate(path) -> int:
    try:
        cfg = load_config(path)
    except errors.FeplabError as exc:
        return _fail(exc)
    print(json.dumps({"experiment": cfg.experiment, "seed": cfg.seed, "valid": True}, sort_keys=True))
    return EXIT_OK


def _cmd_list() -> int:
    for name in REGISTRY:
        print(f"{name}\t{bundled_config_path(name)}")
    return EXIT_OK


def _cmd_show(name) -> int:
    try:
        sys.stdout.write(bundled_config_text(name))
    except errors.FeplabError as exc:
        return _fail(exc)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="feplab", description="Numerical checks for steady-state free-energy calculus.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment from a config file")
    r.add_argument("config")
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--out", default=None)
    v = sub.add_parser("validate", help="parse and schema-check a config file")
    v.add_argument("config")
    sub.add_parser("list-experiments", help="registry names and their bundled configs")
    s = sub.add_parser("show-config", help="print the bundled config of an experiment")
    s.add_argument("experiment")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        if args.seed is not None and args.seed < 0:
            return _fail(ConfigSchema("--seed must be non-negative"))
        return run_experiment(args.config, args.seed, args.out)
    if args.command == "validate":
        return _cmd_validate(args.config)
    if args.command == "list-experiments":
        return _cmd_list()
    return _cmd_show(args.experiment)


if __name__ == "__main__":
    sys.exit(main())
