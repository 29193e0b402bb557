"""Command-line entry point.

Exit codes: 0 success, 1 a validation property failed, 2 configuration or
input error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import validation
from .cli_io import ConfigError, emit_plot_script, load_config, write_csv
from .experiments import (
    MFE,
    TRANSIENT_ABSORPTION,
    Scenario,
    builtin_scenarios,
    get_scenario,
    run_scenario,
)
from .model import as_field_vector
from .propagation import IntegrationError, TimeStepError, propagate
from .spin_algebra import ValidationError

log = logging.getLogger("zenochem")


def _field_tag(B: float) -> str:
    return f"{B:g}uT"


def _scenario_outputs(result, out: Path, tag: str = "") -> list[Path]:
    """Write per-field CSVs for one scenario run; returns the written paths."""
    scen = result.scenario
    multi = len(scen.theories) > 1
    written = []
    for th in scen.theories:
        prefix = f"{th}_" if multi else ""
        if TRANSIENT_ABSORPTION in scen.outputs:
            for B in scen.fields_uT:
                p = out / f"absorption_{prefix}{tag}{_field_tag(B)}.csv"
                written.append(write_csv(result.trajectories[(th, B)], p))
        if MFE in scen.outputs:
            for B in scen.fields_uT[1:]:
                curve = result.curves[(th, B)]
                p = out / f"mfe_{prefix}{tag}{_field_tag(B)}.csv"
                written.append(write_csv(result.trajectories[(th, B)], p, mfe=curve.values))
    return written


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.out)
    traj = propagate(cfg.spec, cfg.params, rho_stride=cfg.rho_sample_stride, cap=cfg.dim_cap)
    mfe = None
    if cfg.B_ref_uT is not None:
        ref_params = cfg.params.replace(B_field=tuple(as_field_vector(cfg.B_ref_uT)))
        if ref_params == cfg.params:
            ref = traj
        else:
            ref = propagate(cfg.spec, ref_params, cap=cfg.dim_cap)
        mfe = traj.absorption - ref.absorption
    path = write_csv(traj, out / cfg.csv_path, mfe=mfe)
    print(path)
    if cfg.emit_plot_script:
        print(emit_plot_script([path], out / "plot.gp"))
    return 0


def _resolve_scenario(args) -> tuple[Scenario, bool]:
    if args.scenario and args.config:
        raise ConfigError("give either --scenario or --config, not both")
    if args.scenario:
        return get_scenario(args.scenario), False
    if args.config:
        cfg = load_config(args.config)
        if cfg.scenario is None:
            raise ConfigError(f"{args.config}: no 'scenario' section")
        return cfg.scenario, cfg.emit_plot_script
    raise ConfigError("one of --scenario or --config is required")


def cmd_mfe(args) -> int:
    scen, emit = _resolve_scenario(args)
    out = Path(args.out)
    written = _scenario_outputs(run_scenario(scen), out)
    for p in written:
        print(p)
    if emit or args.plot:
        print(emit_plot_script(written, out / "plot.gp"))
    return 0


def _parse_ksr(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--ksr: expected comma-separated numbers, got {text!r}") from None


def cmd_sweep(args) -> int:
    scen, emit = _resolve_scenario(args)
    values = _parse_ksr(args.ksr) if args.ksr else list(scen.sweep_ksr)
    if not values:
        raise ConfigError(f"scenario {scen.name!r} defines no kSR sweep; pass --ksr")
    out = Path(args.out)
    written = []
    sweep_scen = Scenario(
        scen.name, scen.spec, scen.params, scen.fields_uT, scen.theories, (MFE,), scen.field_ksr
    )
    for k in values:
        written += _scenario_outputs(run_scenario(sweep_scen, kSR=k), out, tag=f"ksr{k:g}_")
    for p in written:
        print(p)
    if emit or args.plot:
        print(emit_plot_script(written, out / "plot.gp"))
    return 0


def cmd_validate(args) -> int:
    results = validation.run_all()
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail}")
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} properties passed")
    return 1 if failed else 0


def cmd_list(args) -> int:
    for name, scen in builtin_scenarios().items():
        print(f"{name:34s} {scen.description}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="zenochem", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="propagate one configuration")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_run)

    for name, func, helptext in (
        ("mfe", cmd_mfe, "run a scenario and write MFE/absorption CSVs"),
        ("sweep", cmd_sweep, "run a scenario over several spin-relaxation rates"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--scenario")
        p.add_argument("--config")
        p.add_argument("--out", default=".")
        p.add_argument("--plot", action="store_true", help="also write a gnuplot script")
        if name == "sweep":
            p.add_argument("--ksr", help="comma-separated kSR values in 1/us")
        p.set_defaults(func=func)

    p = sub.add_parser("validate", help="run the invariant and oracle checks")
    p.set_defaults(func=cmd_validate)
    p = sub.add_parser("list-scenarios", help="list built-in scenarios")
    p.set_defaults(func=cmd_list)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValidationError, TimeStepError, IntegrationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: I/O failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
