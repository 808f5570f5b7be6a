"""Command-line front end: scenario files, run artifacts, tabular exports.

Scenario documents are YAML mappings whose keys match the Scenario
fields; decibel spellings (gamma_dbw, noise_dbw, kappa_db) are accepted
in place of the linear ones. Results are persisted as versioned JSON
artifacts (complex matrices stored as interleaved real/imag, so a read
back reproduces the design exactly) next to flat CSV exports that any
plotting tool can consume. User-facing powers are dBW; everything
internal stays in watts.
"""

from __future__ import annotations

import argparse
import csv
import json
import re
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from netisac import __version__, model, orchestrator
from netisac.beamforming import NumericalFailureError, SensingInfeasibleError
from netisac.model import ScenarioError

__all__ = [
    "ScenarioFormatError",
    "RUN_SCHEMA",
    "SWEEP_SCHEMA",
    "POWER_FLOOR_DBW",
    "beampattern_grid",
    "bundled_scenario_path",
    "design_from_jsonable",
    "design_to_jsonable",
    "load_scenario",
    "main",
    "read_run_artifact",
    "scenario_from_jsonable",
    "scenario_to_jsonable",
    "watts_to_dbw",
    "write_beampattern_csv",
    "write_beampattern_uavs_csv",
    "write_run_artifact",
    "write_slots_csv",
    "write_sweep_artifact",
    "write_sweep_csv",
]

RUN_SCHEMA = "netisac-run/1"
SWEEP_SCHEMA = "netisac-sweep/1"
POWER_FLOOR_DBW = -300.0


class ScenarioFormatError(ScenarioError):
    """A scenario document that cannot be turned into a Scenario."""


# -- scenario documents --------------------------------------------------------


class _StrictLoader(yaml.SafeLoader):
    """SafeLoader that rejects duplicate mapping keys."""


def _strict_mapping(loader, node, deep=False):
    mapping = {}
    for key_node, value_node in node.value:
        key = loader.construct_object(key_node, deep=deep)
        if key in mapping:
            raise ScenarioFormatError(f"duplicate key {key!r} (line {key_node.start_mark.line + 1})")
        mapping[key] = loader.construct_object(value_node, deep=deep)
    return mapping


_StrictLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _strict_mapping)

_DIRECT_KEYS = (
    "gbs_positions",
    "uav_initial",
    "uav_final",
    "uav_altitudes",
    "sensing_points",
    "sensing_altitude",
    "num_antennas",
    "num_slots",
    "slot_duration",
    "p_max",
    "v_max",
    "d_min",
)
# target field -> (linear key, decibel key, converter)
_ALTERNATE_KEYS = {
    "gamma": ("gamma", "gamma_dbw", model.dbw_to_watts),
    "noise_power": ("noise_power", "noise_dbw", model.dbw_to_watts),
    "kappa": ("kappa", "kappa_db", model.db_to_linear),
}
_OPTIONAL_KEYS = ("antenna_spacing_over_wavelength",)
_SCALAR_KEYS = (
    "sensing_altitude",
    "num_antennas",
    "num_slots",
    "slot_duration",
    "p_max",
    "v_max",
    "d_min",
    "antenna_spacing_over_wavelength",
)
_ALLOWED_KEYS = (
    set(_DIRECT_KEYS)
    | set(_OPTIONAL_KEYS)
    | {key for pair in _ALTERNATE_KEYS.values() for key in pair[:2]}
)


def load_scenario(path) -> model.Scenario:
    """Parse and validate a scenario document.

    Unknown and duplicate keys are rejected; for each of gamma,
    noise_power and kappa exactly one of the linear or decibel spellings
    must appear. Errors name the offending field or invariant.
    """
    path = Path(path)
    if not path.is_file():
        raise ScenarioFormatError(f"scenario file not found: {path}")
    try:
        doc = yaml.load(path.read_text(), Loader=_StrictLoader)
    except ScenarioFormatError:
        raise
    except yaml.YAMLError as exc:
        raise ScenarioFormatError(f"scenario parse error: {exc}") from None
    if not isinstance(doc, dict):
        raise ScenarioFormatError("scenario document must be a key-value mapping")

    unknown = sorted(str(k) for k in doc if k not in _ALLOWED_KEYS)
    if unknown:
        raise ScenarioFormatError("unknown field(s): " + ", ".join(unknown))

    fields = {}
    for target, (linear_key, db_key, convert) in _ALTERNATE_KEYS.items():
        present = [key for key in (linear_key, db_key) if key in doc]
        if not present:
            raise ScenarioFormatError(f"missing field: give either {linear_key} or {db_key}")
        if len(present) == 2:
            raise ScenarioFormatError(f"fields {linear_key} and {db_key} are mutually exclusive")
        raw = doc[present[0]]
        if isinstance(raw, bool) or not isinstance(raw, (int, float)):
            raise ScenarioFormatError(f"field {present[0]}: expected a real number")
        fields[target] = convert(float(raw)) if present[0] == db_key else float(raw)

    for key in _DIRECT_KEYS:
        if key not in doc:
            raise ScenarioFormatError(f"missing field: {key}")
        fields[key] = doc[key]
    for key in _OPTIONAL_KEYS:
        if key in doc:
            fields[key] = doc[key]
    for key in _SCALAR_KEYS:
        if key in fields:
            raw = fields[key]
            if isinstance(raw, bool) or not isinstance(raw, (int, float)):
                raise ScenarioFormatError(f"field {key}: expected a real number")

    return model.Scenario(**fields)


def bundled_scenario_path() -> Path:
    """Filesystem path of the packaged default deployment."""
    return Path(str(resources.files("netisac").joinpath("data/default.scenario")))


# -- artifacts -----------------------------------------------------------------


def watts_to_dbw(value: float) -> float:
    return 10.0 * float(np.log10(value)) if value > 0 else float("-inf")


def _complex_to_jsonable(arr: np.ndarray) -> dict:
    arr = np.asarray(arr, dtype=complex)
    flat = np.empty(arr.size * 2, dtype=float)
    flat[0::2] = arr.real.ravel()
    flat[1::2] = arr.imag.ravel()
    return {"dims": [int(d) for d in arr.shape], "re_im": flat.tolist()}


def _complex_from_jsonable(obj: dict) -> np.ndarray:
    dims = tuple(int(d) for d in obj["dims"])
    flat = np.asarray(obj["re_im"], dtype=float)
    return (flat[0::2] + 1j * flat[1::2]).reshape(dims)


def scenario_to_jsonable(scenario: model.Scenario) -> dict:
    return {
        "gbs_positions": scenario.gbs_positions.tolist(),
        "uav_initial": scenario.uav_initial.tolist(),
        "uav_final": scenario.uav_final.tolist(),
        "uav_altitudes": scenario.uav_altitudes.tolist(),
        "sensing_points": scenario.sensing_points.tolist(),
        "sensing_altitude": scenario.sensing_altitude,
        "num_antennas": scenario.num_antennas,
        "num_slots": scenario.num_slots,
        "slot_duration": scenario.slot_duration,
        "p_max": scenario.p_max,
        "gamma": scenario.gamma,
        "v_max": scenario.v_max,
        "d_min": scenario.d_min,
        "kappa": scenario.kappa,
        "noise_power": scenario.noise_power,
        "antenna_spacing_over_wavelength": scenario.antenna_spacing_over_wavelength,
    }


def scenario_from_jsonable(doc: dict) -> model.Scenario:
    return model.Scenario(**doc)


def design_to_jsonable(design: model.Design) -> dict:
    return {
        "w_cov": _complex_to_jsonable(design.w_cov),
        "r_cov": _complex_to_jsonable(design.r_cov),
        "trajectories": np.asarray(design.trajectories, dtype=float).tolist(),
        "association": np.asarray(design.association, dtype=int).tolist(),
    }


def design_from_jsonable(doc: dict) -> model.Design:
    return model.Design(
        w_cov=_complex_from_jsonable(doc["w_cov"]),
        r_cov=_complex_from_jsonable(doc["r_cov"]),
        trajectories=np.asarray(doc["trajectories"], dtype=float),
        association=np.asarray(doc["association"], dtype=np.int8),
    )


def _served_rates(design: model.Design, scenario: model.Scenario) -> np.ndarray:
    """(K, N) rate of every UAV through its serving station."""
    rates = model.rate_matrix(design, scenario)
    serving = design.associated_gbs()
    k_idx = np.arange(scenario.num_uavs)[:, None]
    n_idx = np.arange(scenario.num_slots)[None, :]
    return rates[serving, k_idx, n_idx]


def write_run_artifact(path, result: orchestrator.SolveResult, meta: dict | None = None) -> Path:
    """Persist a solve result as a versioned JSON document."""
    scenario, design = result.scenario, result.design
    payload = {
        "schema": RUN_SCHEMA,
        "meta": dict(meta or {}),
        "scenario": scenario_to_jsonable(scenario),
        "design": design_to_jsonable(design),
        "trace": result.trace.to_jsonable(),
        "rates": _served_rates(design, scenario).tolist(),
        "illumination": model.illumination_matrix(design, scenario, clamp=True).tolist(),
    }
    path = Path(path)
    path.write_text(json.dumps(payload, indent=1) + "\n")
    return path


def read_run_artifact(path):
    """Read a run artifact back as (scenario, design, payload)."""
    payload = json.loads(Path(path).read_text())
    if payload.get("schema") != RUN_SCHEMA:
        raise ValueError(f"not a {RUN_SCHEMA} artifact: {path}")
    scenario = scenario_from_jsonable(payload["scenario"])
    design = design_from_jsonable(payload["design"])
    return scenario, design, payload


def write_sweep_artifact(path, scenario: model.Scenario, sweep: orchestrator.SweepResult, meta: dict | None = None) -> Path:
    payload = {
        "schema": SWEEP_SCHEMA,
        "meta": dict(meta or {}),
        "scenario": scenario_to_jsonable(scenario),
        "entries": [entry.to_jsonable() for entry in sweep.entries],
    }
    path = Path(path)
    path.write_text(json.dumps(payload, indent=1) + "\n")
    return path


# -- tabular exports -----------------------------------------------------------


def _fmt(value: float) -> str:
    # repr round-trips float64 exactly and is stable across runs
    return repr(float(value))


def write_slots_csv(path, scenario: model.Scenario, design: model.Design) -> Path:
    """One row per (slot, UAV): position, serving station, achieved rate."""
    rates = _served_rates(design, scenario)
    serving = design.associated_gbs()
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["slot", "uav", "station", "x", "y", "rate_bps_hz"])
        for n in range(scenario.num_slots):
            for k in range(scenario.num_uavs):
                writer.writerow(
                    [
                        n,
                        k,
                        int(serving[k, n]),
                        _fmt(design.trajectories[k, n, 0]),
                        _fmt(design.trajectories[k, n, 1]),
                        _fmt(rates[k, n]),
                    ]
                )
    return path


def write_sweep_csv(path, sweep: orchestrator.SweepResult) -> Path:
    """One row per (threshold, method)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["gamma_dbw", "method", "feasible", "average_sum_rate", "note"])
        for entry in sweep.entries:
            writer.writerow(
                [
                    _fmt(entry.gamma_dbw),
                    entry.method,
                    "true" if entry.feasible else "false",
                    _fmt(entry.average_sum_rate) if entry.feasible else "",
                    entry.note,
                ]
            )
    return path


# -- beampattern grids ---------------------------------------------------------


def beampattern_grid(
    scenario: model.Scenario,
    design: model.Design,
    slot: int,
    altitude: float,
    xs: np.ndarray,
    ys: np.ndarray,
) -> np.ndarray:
    """Illumination power (watts) over a horizontal grid at one slot.

    Returns shape (len(ys), len(xs)); entry [j, i] is the power an
    object at (xs[i], ys[j], altitude) would receive.
    """
    if not 0 <= slot < scenario.num_slots:
        raise ValueError(f"slot {slot} out of range for {scenario.num_slots} slots")
    if altitude <= 0:
        raise ValueError("altitude must be positive")
    x_cov = design.transmit_covariances()[:, slot]  # (M, Na, Na)
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    gx, gy = np.meshgrid(xs, ys)
    points = np.stack([gx, gy], axis=-1)  # (ny, nx, 2)
    diff = points[None, :, :, :] - scenario.gbs_positions[:, None, None, :]
    d2 = np.sum(diff**2, axis=-1) + altitude**2  # (M, ny, nx)
    cos_t = altitude / np.sqrt(d2)
    p = np.arange(scenario.num_antennas)
    phase = 2.0 * np.pi * scenario.antenna_spacing_over_wavelength * cos_t[..., None] * p
    a = np.exp(1j * phase)  # (M, ny, nx, Na)
    forms = np.einsum("myxa,mab,myxb->myx", a.conj(), x_cov, a).real
    return np.maximum(forms / d2, 0.0).sum(axis=0)


def write_beampattern_csv(path, xs, ys, power_watts) -> Path:
    """Rows (x, y, power_dbw) in y-major order, floored at -300 dBW."""
    path = Path(path)
    power = np.asarray(power_watts, dtype=float)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "y", "power_dbw"])
        for j, y in enumerate(ys):
            for i, x in enumerate(xs):
                dbw = max(watts_to_dbw(power[j, i]), POWER_FLOOR_DBW)
                writer.writerow([_fmt(x), _fmt(y), _fmt(dbw)])
    return path


def write_beampattern_uavs_csv(path, scenario: model.Scenario, design: model.Design, slot: int) -> Path:
    """Companion table: UAV positions and rates at the plotted slot."""
    rates = _served_rates(design, scenario)
    serving = design.associated_gbs()
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["uav", "x", "y", "altitude", "station", "rate_bps_hz"])
        for k in range(scenario.num_uavs):
            writer.writerow(
                [
                    k,
                    _fmt(design.trajectories[k, slot, 0]),
                    _fmt(design.trajectories[k, slot, 1]),
                    _fmt(scenario.uav_altitudes[k]),
                    int(serving[k, slot]),
                    _fmt(rates[k, slot]),
                ]
            )
    return path


# -- commands ------------------------------------------------------------------


def _solve_options(args) -> orchestrator.SolveOptions:
    if getattr(args, "max_outer", None) is not None:
        if args.max_outer < 1:
            raise ScenarioFormatError("--max-outer must be at least 1")
        return orchestrator.SolveOptions(max_outer=args.max_outer)
    return orchestrator.SolveOptions()


def _scenario_for(args) -> model.Scenario:
    scenario = load_scenario(args.scenario)
    gamma = getattr(args, "gamma_dbw", None)
    if gamma is not None and not isinstance(gamma, list):
        scenario = scenario.with_updates(gamma=model.dbw_to_watts(gamma))
    return scenario


def _meta(args, command: str) -> dict:
    return {
        "command": command,
        "scenario_path": str(args.scenario),
        "seed": getattr(args, "seed", 0),
        "version": __version__,
        "created_unix": time.time(),
    }


def cmd_validate(args) -> int:
    scenario = load_scenario(args.scenario)
    limit = orchestrator.max_min_illumination(scenario)
    iso_limit = orchestrator.isotropic_feasibility_limit(scenario)
    print(
        f"scenario ok: {scenario.num_gbs} stations, {scenario.num_uavs} uavs, "
        f"{scenario.num_sensing} sensing points, {scenario.num_slots} slots"
    )
    print(f"max-min illumination: {watts_to_dbw(limit):.4f} dBW")
    print(f"isotropic feasibility limit: {watts_to_dbw(iso_limit):.4f} dBW")
    verdict = "reachable" if scenario.gamma <= limit * (1.0 + 1e-9) else "unreachable"
    print(f"threshold: {watts_to_dbw(scenario.gamma):.4f} dBW ({verdict})")
    return 0


def _run_and_write(args, method: str, command: str) -> int:
    scenario = _scenario_for(args)
    result = orchestrator.solve(scenario, _solve_options(args), method=method)
    meta = _meta(args, command)
    meta["method"] = method
    out = Path(args.out)
    artifact = write_run_artifact(out.parent / (out.name + ".json"), result, meta)
    slots = write_slots_csv(out.parent / (out.name + "_slots.csv"), scenario, result.design)
    report = model.check_constraints(result.design, scenario)
    print(f"method: {method}")
    print(f"threshold: {watts_to_dbw(scenario.gamma):.4f} dBW")
    print(f"average sum rate: {result.average_sum_rate:.6f} bps/Hz")
    print(f"outer iterations: {len(result.trace.outer)} (converged: {result.trace.converged})")
    print(f"constraints: {'ok' if report.feasible else report.describe()}")
    print(f"wrote {artifact} and {slots}")
    if result.trace.failure:
        print(f"numerical failure, result is the last feasible iterate: {result.trace.failure}", file=sys.stderr)
        return 3
    if not report.feasible:
        print("final design violates constraints", file=sys.stderr)
        return 3
    return 0


def cmd_solve(args) -> int:
    return _run_and_write(args, args.method, "solve")


def cmd_baseline(args) -> int:
    return _run_and_write(args, args.method, "baseline")


def cmd_sweep(args) -> int:
    scenario = load_scenario(args.scenario)
    gammas = [model.dbw_to_watts(g) for g in args.gamma_dbw]
    sweep = orchestrator.gamma_sweep(scenario, gammas, methods=args.methods, options=_solve_options(args))
    out = Path(args.out)
    meta = _meta(args, "sweep")
    meta["methods"] = list(args.methods)
    meta["gamma_dbw"] = list(args.gamma_dbw)
    artifact = write_sweep_artifact(out.parent / (out.name + ".json"), scenario, sweep, meta)
    table = write_sweep_csv(out.parent / (out.name + "_sweep.csv"), sweep)
    for entry in sweep.entries:
        rate = f"{entry.average_sum_rate:.6f}" if entry.feasible else "infeasible"
        print(f"gamma {entry.gamma_dbw:+8.2f} dBW  {entry.method:<10} {rate}")
    print(f"wrote {artifact} and {table}")
    return 0


def cmd_beampattern(args) -> int:
    scenario, design, _ = read_run_artifact(args.artifact)
    altitude = args.altitude if args.altitude is not None else scenario.sensing_altitude
    if args.bounds is not None:
        xmin, xmax, ymin, ymax = args.bounds
    else:
        anchor = np.vstack(
            [scenario.gbs_positions, scenario.uav_initial, scenario.uav_final, scenario.sensing_points]
        )
        margin = 0.05 * max(float(np.ptp(anchor[:, 0])), float(np.ptp(anchor[:, 1])), 1.0)
        xmin, xmax = float(anchor[:, 0].min()) - margin, float(anchor[:, 0].max()) + margin
        ymin, ymax = float(anchor[:, 1].min()) - margin, float(anchor[:, 1].max()) + margin
    xs = np.linspace(xmin, xmax, args.steps)
    ys = np.linspace(ymin, ymax, args.steps)
    power = beampattern_grid(scenario, design, args.slot, altitude, xs, ys)
    out = Path(args.out)
    grid_path = write_beampattern_csv(out.parent / (out.name + "_grid.csv"), xs, ys, power)
    uav_path = write_beampattern_uavs_csv(out.parent / (out.name + "_uavs.csv"), scenario, design, args.slot)
    peak = watts_to_dbw(float(power.max())) if power.size else POWER_FLOOR_DBW
    print(f"slot {args.slot}, altitude {altitude:g} m, grid {args.steps}x{args.steps}, peak {peak:.2f} dBW")
    print(f"wrote {grid_path} and {uav_path}")
    return 0


# -- argument parsing ----------------------------------------------------------


def _gamma_list(text: str) -> list:
    try:
        values = [float(part) for part in text.split(",") if part.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid dBW list: {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("empty dBW list")
    return values


def _method_list(text: str) -> tuple:
    methods = tuple(part.strip() for part in text.split(",") if part.strip() != "")
    for method in methods:
        if method not in orchestrator.METHODS:
            raise argparse.ArgumentTypeError(
                f"unknown method {method!r}; expected a subset of {','.join(orchestrator.METHODS)}"
            )
    if not methods:
        raise argparse.ArgumentTypeError("empty method list")
    return methods


def _bounds(text: str) -> tuple:
    parts = text.split(",")
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("bounds must be xmin,xmax,ymin,ymax")
    try:
        xmin, xmax, ymin, ymax = (float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid bounds: {text!r}")
    if xmax <= xmin or ymax <= ymin:
        raise argparse.ArgumentTypeError("bounds must satisfy xmin < xmax and ymin < ymax")
    return xmin, xmax, ymin, ymax


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="netisac",
        description="Joint beamforming, association and trajectory design for networked sensing-and-communication stations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a scenario file and print its illumination limits")
    p.add_argument("scenario", help="scenario file path")
    p.set_defaults(func=cmd_validate)

    def add_run_args(p, methods):
        p.add_argument("scenario", help="scenario file path")
        p.add_argument("--method", choices=methods, default=methods[0])
        p.add_argument("--gamma-dbw", type=float, default=None, help="override the scenario threshold (dBW)")
        p.add_argument("--out", default="run", help="output prefix (default: run)")
        p.add_argument("--seed", type=int, default=0, help="recorded in artifact metadata")
        p.add_argument("--max-outer", type=int, default=None, help="cap on outer alternating iterations")

    p = sub.add_parser("solve", help="run a full design pipeline")
    add_run_args(p, orchestrator.METHODS)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("baseline", help="run a benchmark pipeline")
    add_run_args(p, ("straight", "isotropic"))
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("sweep", help="rate versus illumination threshold, all methods")
    # let "--gamma-dbw -25,-20" parse: argparse only treats a leading-dash
    # token as a value when it looks like a bare negative number
    p._negative_number_matcher = re.compile(r"^-\d+(\.\d*)?(,-?\d+(\.\d*)?)*$")
    p.add_argument("scenario", help="scenario file path")
    p.add_argument("--gamma-dbw", type=_gamma_list, required=True, help="comma-separated thresholds in dBW")
    p.add_argument("--methods", type=_method_list, default=orchestrator.METHODS)
    p.add_argument("--out", default="sweep", help="output prefix (default: sweep)")
    p.add_argument("--seed", type=int, default=0, help="recorded in artifact metadata")
    p.add_argument("--max-outer", type=int, default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("beampattern", help="sample the illumination power of a saved design on a grid")
    p.add_argument("artifact", help="run artifact written by solve/baseline")
    p.add_argument("--slot", type=int, required=True)
    p.add_argument("--altitude", type=float, default=None, help="grid altitude in meters (default: sensing altitude)")
    p.add_argument("--bounds", type=_bounds, default=None, help="xmin,xmax,ymin,ymax in meters")
    p.add_argument("--steps", type=int, default=61, help="grid points per axis")
    p.add_argument("--out", default="beampattern", help="output prefix")
    p.set_defaults(func=cmd_beampattern)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as err:  # includes format errors
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (FileNotFoundError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except SensingInfeasibleError as err:
        print(f"infeasible: {err}", file=sys.stderr)
        return 1
    except NumericalFailureError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
