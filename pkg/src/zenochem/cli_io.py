"""YAML configuration, CSV serialization and gnuplot script emission.

CSV contract: header ``time_us,singlet,triplet,trace,population,absorption``
(plus ``mfe`` when a reference is available), one row per grid point,
values written with 17 significant digits, ``\\n`` line endings, UTF-8.
"""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .experiments import OUTPUT_KINDS, Scenario, get_scenario
from .model import SimParams
from .propagation import Trajectory
from .spin_algebra import DEFAULT_DIM_CAP, Nucleus, SystemSpec, ValidationError

CSV_COLUMNS = ("time_us", "singlet", "triplet", "trace", "population", "absorption")


class ConfigError(ValueError):
    """Malformed or unreadable configuration."""


_SECTIONS = {"system", "params", "scenario", "output"}
_SYSTEM_KEYS = {"nuclei", "dim_cap"}
_NUCLEUS_KEYS = {"spin", "hyperfine", "coupled_electron"}
_PARAM_KEYS = {"kS", "kT", "kSR", "kCR", "B_uT", "B_ref_uT", "theory", "t_max_us", "dt_us", "omega_scale"}
_SCENARIO_KEYS = {"name", "fields_uT", "theories", "outputs", "field_ksr", "sweep_ksr", "description"}
_OUTPUT_KEYS = {"csv_path", "emit_plot_script", "rho_sample_stride"}


@dataclass
class RunConfig:
    spec: SystemSpec
    params: SimParams
    B_ref_uT: object = None
    scenario: Scenario | None = None
    csv_path: str = "trajectory.csv"
    emit_plot_script: bool = False
    rho_sample_stride: int = 0
    dim_cap: int = DEFAULT_DIM_CAP


def _check_keys(where: str, mapping, allowed: set):
    if not isinstance(mapping, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(mapping).__name__}")
    unknown = sorted(set(map(str, mapping)) - allowed)
    if unknown:
        prefix = f"{where}." if where else ""
        raise ConfigError(f"unknown key '{prefix}{unknown[0]}'")


def _rate(value, name):
    if isinstance(value, str):
        if value.strip().lower() in ("inf", "infinity", "instantaneous"):
            return math.inf
        raise ConfigError(f"params.{name}: expected a number or 'inf', got {value!r}")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"params.{name}: expected a number, got {value!r}")
    return float(value)


def _number(value, where):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    return float(value)


def _field(value, where):
    if isinstance(value, (list, tuple)):
        if len(value) != 3:
            raise ConfigError(f"{where}: field vector must have 3 components")
        return tuple(_number(v, where) for v in value)
    return _number(value, where)


def _parse_system(raw) -> tuple[SystemSpec, int]:
    _check_keys("system", raw, _SYSTEM_KEYS)
    nuclei = []
    for i, nraw in enumerate(raw.get("nuclei") or []):
        where = f"system.nuclei[{i}]"
        _check_keys(where, nraw, _NUCLEUS_KEYS)
        if "spin" not in nraw:
            raise ConfigError(f"{where}: missing 'spin'")
        hf = nraw.get("hyperfine", [[0] * 3] * 3)
        try:
            arr = np.array(hf, dtype=float)
        except (TypeError, ValueError):
            raise ConfigError(f"{where}.hyperfine: not a numeric 3x3 matrix") from None
        nuclei.append(Nucleus(_number(nraw["spin"], f"{where}.spin"), arr, int(nraw.get("coupled_electron", 1))))
    cap = raw.get("dim_cap", DEFAULT_DIM_CAP)
    if isinstance(cap, bool) or not isinstance(cap, int) or cap < 4:
        raise ConfigError(f"system.dim_cap: expected an integer >= 4, got {cap!r}")
    return SystemSpec(tuple(nuclei)), cap


def _parse_params(raw) -> tuple[SimParams, object]:
    _check_keys("params", raw, _PARAM_KEYS)
    kw = {}
    for name in ("kS", "kT", "kSR", "kCR"):
        if name in raw:
            kw[name] = _rate(raw[name], name)
    if "B_uT" in raw:
        kw["B_field"] = _field(raw["B_uT"], "params.B_uT")
    if "theory" in raw:
        kw["theory"] = str(raw["theory"])
    if "t_max_us" in raw:
        kw["t_max"] = _number(raw["t_max_us"], "params.t_max_us")
    if "dt_us" in raw:
        kw["dt"] = _number(raw["dt_us"], "params.dt_us")
    if "omega_scale" in raw:
        kw["omega_scale"] = _number(raw["omega_scale"], "params.omega_scale")
    B_ref = _field(raw["B_ref_uT"], "params.B_ref_uT") if "B_ref_uT" in raw else None
    return SimParams(**kw), B_ref


def _parse_scenario(raw, spec: SystemSpec, params: SimParams) -> Scenario:
    if isinstance(raw, str):
        return get_scenario(raw)
    _check_keys("scenario", raw, _SCENARIO_KEYS)
    if "fields_uT" not in raw:
        raise ConfigError("scenario: inline definition needs 'fields_uT'")
    outputs = raw.get("outputs", ["mfe"])
    unknown = [o for o in outputs if o not in OUTPUT_KINDS]
    if unknown:
        raise ConfigError(f"scenario.outputs: unknown output kind {unknown[0]!r}")
    return Scenario(
        name=str(raw.get("name", "inline")),
        spec=spec,
        params=params,
        fields_uT=tuple(_number(b, "scenario.fields_uT") for b in raw["fields_uT"]),
        theories=tuple(raw.get("theories", [params.theory])),
        outputs=tuple(outputs),
        field_ksr={_number(k, "scenario.field_ksr"): _number(v, "scenario.field_ksr") for k, v in (raw.get("field_ksr") or {}).items()},
        sweep_ksr=tuple(_number(k, "scenario.sweep_ksr") for k in raw.get("sweep_ksr", [])),
        description=str(raw.get("description", "")),
    )


def parse_config(text: str) -> RunConfig:
    """Parse and validate a YAML configuration document."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML: {exc}") from None
    if raw is None:
        raw = {}
    _check_keys("", raw, _SECTIONS)
    try:
        spec, cap = _parse_system(raw.get("system") or {})
        params, B_ref = _parse_params(raw.get("params") or {})
        scenario = _parse_scenario(raw["scenario"], spec, params) if raw.get("scenario") is not None else None
    except ValidationError as exc:
        raise ConfigError(str(exc)) from None
    if spec.dim > cap:
        raise ConfigError(f"Hilbert dimension {spec.dim} exceeds system.dim_cap {cap}")
    out = raw.get("output") or {}
    _check_keys("output", out, _OUTPUT_KEYS)
    stride = out.get("rho_sample_stride", 0)
    if isinstance(stride, bool) or not isinstance(stride, int) or stride < 0:
        raise ConfigError(f"output.rho_sample_stride: expected an integer >= 0, got {stride!r}")
    emit = out.get("emit_plot_script", False)
    if not isinstance(emit, bool):
        raise ConfigError(f"output.emit_plot_script: expected true/false, got {emit!r}")
    return RunConfig(
        spec=spec,
        params=params,
        B_ref_uT=B_ref,
        scenario=scenario,
        csv_path=str(out.get("csv_path", "trajectory.csv")),
        emit_plot_script=emit,
        rho_sample_stride=stride,
        dim_cap=cap,
    )


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def trajectory_table(traj: Trajectory, mfe=None) -> tuple[tuple[str, ...], np.ndarray]:
    cols = [traj.times, traj.S, traj.T, traj.trace, traj.N, traj.absorption]
    header = CSV_COLUMNS
    if mfe is not None:
        cols.append(np.asarray(mfe))
        header = header + ("mfe",)
    return header, np.column_stack(cols)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


def write_csv(traj: Trajectory, path, mfe=None) -> Path:
    """Write one trajectory (and optional MFE column) in the CSV contract."""
    header, rows = trajectory_table(traj, mfe)
    if len(rows) == 0:
        raise ValueError("refusing to write an empty series")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(csv_text(header, rows))
    return path


def read_csv(path) -> dict[str, np.ndarray]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = [[float(v) for v in row] for row in reader]
    arr = np.array(data, dtype=float).reshape(-1, len(header))
    return {name: arr[:, i] for i, name in enumerate(header)}


def emit_plot_script(csv_paths, path, *, image: str = "figure.png") -> Path:
    """Write a gnuplot script with one panel per output kind.

    CSV paths are written relative to the script's directory; run the script
    from that directory.
    """
    path = Path(path)
    base = path.parent.resolve()
    absorption, mfe_files = [], []
    for p in csv_paths:
        p = Path(p)
        rel = os.path.relpath(p.resolve(), base)
        with open(p, encoding="utf-8") as fh:
            header = fh.readline().strip().split(",")
        absorption.append(rel)
        if "mfe" in header:
            mfe_files.append(rel)
    panels = [("transient absorption", "population", 6, absorption)]
    if mfe_files:
        panels.append(("magnetic field effect", "MFE", 7, mfe_files))

    lines = [
        "# gnuplot script generated by zenochem",
        "set datafile separator ','",
        "set key autotitle columnhead",
        "set terminal pngcairo size 900,%d enhanced" % (360 * len(panels)),
        f"set output '{image}'",
        "set multiplot layout %d,1" % len(panels),
        "set xlabel 'time (us)'",
    ]
    for title, ylabel, col, files in panels:
        plots = ", \\\n     ".join(f"'{f}' using 1:{col} with lines title '{Path(f).stem}'" for f in files)
        lines += [f"set title '{title}'", f"set ylabel '{ylabel}'", f"plot {plots}"]
    lines += ["unset multiplot", ""]
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines))
    return path
