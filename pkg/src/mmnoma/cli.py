"""Command line entry point: ``mmnoma run | oracle | codebook``.

Settings come from an optional INI file (sections ``[system]`` and
``[experiment]``, keys named like the dataclass fields) and are overridden by
flags with the same names. Output goes to ``--out`` or, if unset, to
``$MMNOMA_OUTPUT_DIR`` (default ``./results``).
"""
from __future__ import annotations

import argparse
import configparser
import dataclasses
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .baselines import SCHEMES
from .channel import SystemConfig, dft_codebook, steering_matrix, synthesize_beam_users
from .clustering import cluster_users, select_beams
from .errors import MmNomaError
from .harness import OBJECTIVES, OUTPUTS, ExperimentSpec, emit, run
from .maxmin import bisection, scheme2_runner
from .oracle import grid_maxmin_ee

OUTPUT_ENV = "MMNOMA_OUTPUT_DIR"
log = logging.getLogger("mmnoma")


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _parse_bool(text) -> bool:
    if isinstance(text, bool):
        return text
    lowered = str(text).strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _add_system_flags(parser):
    group = parser.add_argument_group("system")
    for f in dataclasses.fields(SystemConfig):
        kind = bool if f.type in ("bool", bool) else (int if f.type in ("int", int) else float)
        if kind is bool:
            group.add_argument(_flag(f.name), type=_parse_bool, default=None, metavar="BOOL")
        else:
            group.add_argument(_flag(f.name), type=kind, default=None)


def _system_config(args, ini) -> SystemConfig:
    values = {}
    if ini is not None and ini.has_section("system"):
        for f in dataclasses.fields(SystemConfig):
            if ini.has_option("system", f.name):
                raw = ini.get("system", f.name)
                kind = _parse_bool if f.type in ("bool", bool) else (int if f.type in ("int", int) else float)
                values[f.name] = kind(raw)
    for f in dataclasses.fields(SystemConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    return SystemConfig(**values)


def _load_ini(path):
    if path is None:
        return None
    ini = configparser.ConfigParser()
    if not ini.read(path):
        raise FileNotFoundError(f"config file not found: {path}")
    return ini


def _split(text, kind=str):
    return [kind(x) for x in str(text).replace(",", " ").split()]


def _experiment_spec(args, ini) -> ExperimentSpec:
    cfg = _system_config(args, ini)
    values = {}
    if ini is not None and ini.has_section("experiment"):
        sec = ini["experiment"]
        if "snr_db" in sec:
            values["snr_grid_db"] = _split(sec["snr_db"], float)
        if "scheme" in sec:
            values["schemes"] = _split(sec["scheme"])
        if "outputs" in sec:
            values["outputs"] = _split(sec["outputs"])
        for key, kind in (("n_drops", int), ("seed", int), ("workers", int), ("max_attempts", int), ("eps", float), ("objective", str)):
            if key in sec:
                values[key] = kind(sec[key])
    overrides = {
        "snr_grid_db": args.snr_db,
        "schemes": args.scheme,
        "outputs": args.outputs,
        "n_drops": args.n_drops,
        "seed": args.seed,
        "workers": args.workers,
        "max_attempts": args.max_attempts,
        "eps": args.eps,
        "objective": args.objective,
    }
    values.update({k: v for k, v in overrides.items() if v is not None})
    if args.traces:
        values["outputs"] = tuple(values.get("outputs", ExperimentSpec.outputs)) + ("traces",)
    return ExperimentSpec(config=cfg, **values)


def _out_dir(args) -> Path:
    return Path(args.out or os.environ.get(OUTPUT_ENV, "results"))


def cmd_run(args) -> int:
    spec = _experiment_spec(args, _load_ini(args.config))
    table = run(spec)
    out = _out_dir(args)
    for fmt in args.format:
        path = emit(table, fmt, out / f"{args.name}.{fmt}")
        print(f"wrote {path}")
    for snr, rej in table.rejections.items():
        if any(rej.values()):
            print(f"snr {snr:g} dB: rejections {rej}")
    return 0


def cmd_oracle(args) -> int:
    """Scheme 2 against the power-grid oracle on small drops."""
    cfg = _system_config(args, _load_ini(args.config))
    codebook = dft_codebook(cfg.n_antennas, cfg.codebook_size)
    beams = select_beams(cfg.codebook_size, cfg.n_rf, cfg.beam_family)
    print("instance,scheme2_min_ee,grid_min_ee,grid_upper,within")
    bad = 0
    for i in range(args.instances):
        try:
            plan = cluster_users(codebook, synthesize_beam_users(cfg, beams, [args.seed, i]).h, beams)
            runner = scheme2_runner(plan, cfg)
            sol = bisection(runner, args.eps)
            grid = grid_maxmin_ee(runner.V, plan.hbar, runner.model, cfg, args.grid_points)
        except MmNomaError as exc:
            print(f"{i},,,,rejected ({type(exc).__name__})")
            continue
        ok = grid.value - args.eps <= sol.min_ee <= grid.upper + args.eps
        bad += not ok
        print(f"{i},{sol.min_ee:.9g},{grid.value:.9g},{grid.upper:.9g},{ok}")
    return 1 if bad else 0


def cmd_codebook(args) -> int:
    """Beam gain |f_k^H a(theta)|^2 of every codebook column over an angle sweep."""
    cfg = _system_config(args, _load_ini(args.config))
    F = dft_codebook(cfg.n_antennas, cfg.codebook_size).F
    theta = np.linspace(-np.pi / 2, np.pi / 2, args.angles)
    gain = np.abs(steering_matrix(theta, cfg.n_antennas, cfg.antenna_spacing_ratio) @ F.conj()) ** 2
    out = Path(args.output) if args.output else _out_dir(args) / "codebook.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    header = "theta_rad," + ",".join(f"beam_{k + 1}" for k in range(F.shape[1]))
    np.savetxt(out, np.column_stack([theta, gain]), delimiter=",", header=header, comments="", fmt="%.12g")
    print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mmnoma", description="Max-min EE uplink NOMA experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="Monte-Carlo SNR sweep")
    p.add_argument("--config", help="INI file with [system] and [experiment] sections")
    p.add_argument("--snr-db", type=float, nargs="+")
    p.add_argument("--scheme", nargs="+", choices=SCHEMES)
    p.add_argument("--outputs", nargs="+", choices=OUTPUTS)
    p.add_argument("--objective", choices=OBJECTIVES)
    p.add_argument("--n-drops", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--max-attempts", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--traces", action="store_true", help="keep z and L traces (JSON only)")
    p.add_argument("--format", nargs="+", choices=("csv", "json"), default=["csv"])
    p.add_argument("--name", default="results", help="output file stem")
    p.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or ./results)")
    _add_system_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("oracle", help="check scheme 2 against the power-grid oracle")
    p.add_argument("--config")
    p.add_argument("--instances", type=int, default=5)
    p.add_argument("--grid-points", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eps", type=float, default=1e-3)
    _add_system_flags(p)
    p.set_defaults(func=cmd_oracle, n_antennas=8, codebook_size=8, n_rf=2)

    p = sub.add_parser("codebook", help="dump beam patterns as CSV")
    p.add_argument("--config")
    p.add_argument("--angles", type=int, default=361)
    p.add_argument("--output", help="CSV path")
    p.add_argument("--out", help="output directory")
    _add_system_flags(p)
    p.set_defaults(func=cmd_codebook)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (MmNomaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
