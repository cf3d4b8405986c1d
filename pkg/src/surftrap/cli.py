"""Command-line front end.

Every subcommand is a thin shell over a library operation; configuration
comes from an optional JSON file with flag overrides, and the fully resolved
configuration is echoed as a comment header into every CSV artifact so each
output is reproducible from its own header.

Exit codes: 0 on success; otherwise 1 with a single line
``error:<category>: <message>`` on stderr, where category is one of
config, layout, mesh, solver, analysis, integration, fit, io, usage.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .analysis import (AnalysisError, PseudoField, SWEEP_HEADER, analyze,
                       sweep_depth)
from .dynamics import IntegrationError, IntegratorConfig, VoltageTimeline
from .fieldsolver import SolverError, export_grid, solve_layout
from .fitting import FitError, ShotSeries, fit_target_decay
from .geometry import (DriveConfig, LayoutError, Species, default_drive,
                       default_layout, load_layout)
from .loading import (LoadResult, PlumeModel, ThermalSource,
                      min_loadable_depth, prepare_field_grid,
                      run_ablation_load, run_eimpact_load, threshold_ratio)
from .mesh import MeshError


class CliError(Exception):
    """Carries a machine-parseable error category alongside the message."""

    def __init__(self, category: str, message: str):
        super().__init__(message)
        self.category = category


# ---------------------------------------------------------------------------
# configuration

DEFAULTS = {
    "layout": None,                # path; None -> bundled default layout
    "resolution": 6,
    "cache_dir": None,
    "drive": None,                 # dict per DriveConfig.to_dict(); None -> bundled
    "species": {"mass_amu": 87.9056, "charge": 1},
    "plume": {},                   # PlumeModel field overrides
    "thermal_source": {},          # ThermalSource field overrides
    "timeline": {"short_us": 10.0, "t0_us": 40.0, "recovery": "exp",
                 "recovery_tau_us": 30.0},
    "integrator": {},              # IntegratorConfig field overrides
    "amplitudes": [100.0, 155.6, 211.1, 266.7, 322.2, 377.8, 433.3,
                   488.9, 544.4, 600.0],
    "seed": 11,
    "trials": 500,
    "workers": 1,
    "p_min": 0.12,
    "grid_shape": [72, 48, 48],
    "export_box": [[-2e-3, 2e-3], [-2e-3, 2e-3], [2e-4, 2e-3]],
    "export_spacing": 2e-4,
}


def _load_config(path) -> dict:
    cfg = {k: (dict(v) if isinstance(v, dict) else v)
           for k, v in DEFAULTS.items()}
    if path is not None:
        try:
            with open(path) as f:
                doc = json.load(f)
        except OSError as exc:
            raise CliError("io", f"cannot read config {path}: {exc}")
        except json.JSONDecodeError as exc:
            raise CliError("config", f"cannot parse config {path}: {exc}")
        unknown = sorted(set(doc) - set(DEFAULTS))
        if unknown:
            raise CliError("config", f"unknown config keys: {unknown}")
        for k, v in doc.items():
            if isinstance(DEFAULTS[k], dict) and isinstance(v, dict):
                merged = dict(DEFAULTS[k])
                merged.update(v)
                cfg[k] = merged
            else:
                cfg[k] = v
    return cfg


def _apply_flag_overrides(cfg: dict, args) -> dict:
    if getattr(args, "layout", None):
        cfg["layout"] = args.layout
    if getattr(args, "vrf", None) is not None:
        drive = cfg["drive"] or default_drive().to_dict()
        drive["rf_amplitude_volts"] = args.vrf
        cfg["drive"] = drive
    if getattr(args, "freq", None) is not None:
        drive = cfg["drive"] or default_drive().to_dict()
        drive["rf_frequency_hz"] = args.freq
        cfg["drive"] = drive
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    if getattr(args, "trials", None) is not None:
        cfg["trials"] = args.trials
    if getattr(args, "workers", None) is not None:
        cfg["workers"] = args.workers
    if getattr(args, "short_us", None) is not None:
        cfg["timeline"]["short_us"] = args.short_us
    if getattr(args, "recovery", None) is not None:
        spec = args.recovery
        if spec == "step":
            cfg["timeline"]["recovery"] = "step"
        elif spec.startswith("exp:"):
            try:
                tau = float(spec.split(":", 1)[1])
            except ValueError:
                raise CliError("usage",
                               f"bad --recovery value {spec!r}; "
                               "expected step or exp:TAU_US")
            cfg["timeline"]["recovery"] = "exp"
            cfg["timeline"]["recovery_tau_us"] = tau
        else:
            raise CliError("usage",
                           f"bad --recovery value {spec!r}; "
                           "expected step or exp:TAU_US")
    if getattr(args, "p_min", None) is not None:
        cfg["p_min"] = args.p_min
    return cfg


def _resolve(cfg: dict):
    """Build library objects from a resolved config dict."""
    if cfg["layout"] is None:
        layout = default_layout()
    else:
        layout = load_layout(cfg["layout"])
    if cfg["drive"] is None:
        drive = default_drive()
    else:
        drive = DriveConfig.from_dict(cfg["drive"])
    sp = cfg["species"]
    species = Species.from_amu(float(sp["mass_amu"]), int(sp["charge"]))
    tl = cfg["timeline"]
    timeline = VoltageTimeline(
        short_duration=float(tl["short_us"]) * 1e-6,
        t0=float(tl.get("t0_us", 0.0)) * 1e-6,
        recovery=tl["recovery"],
        recovery_tau=float(tl.get("recovery_tau_us", 0.0)) * 1e-6)
    plume = PlumeModel(**cfg["plume"])
    source = ThermalSource(**cfg["thermal_source"])
    integrator = IntegratorConfig(**cfg["integrator"])
    return layout, drive, species, timeline, plume, source, integrator


def _config_header(cfg: dict) -> str:
    lines = ["# resolved config"]
    for line in json.dumps(cfg, sort_keys=True, indent=1).splitlines():
        lines.append("# " + line)
    return "\n".join(lines) + "\n"


def _open_out(args):
    if getattr(args, "out", None):
        return open(args.out, "w")
    return sys.stdout


# ---------------------------------------------------------------------------
# subcommands

def _cmd_solve(cfg, args) -> int:
    layout, *_ = _resolve(cfg)
    basis = solve_layout(layout, cfg["resolution"], cache_dir=cfg["cache_dir"])
    print(f"solved layout {layout.name!r}: {basis.mesh.n_patches} patches, "
          f"residual {basis.residual:.3e} V")
    if args.out:
        basis.save(args.out)
        print(f"basis written to {args.out}")
    return 0


def _cmd_analyze(cfg, args) -> int:
    layout, drive, species, *_ = _resolve(cfg)
    basis = solve_layout(layout, cfg["resolution"], cache_dir=cfg["cache_dir"])
    pf = PseudoField(basis, drive, species, layout.rf_names())
    ta = analyze(pf, (0.0, 0.0, 8e-4))
    x, y, z = ta.minimum_position
    print(f"rf_amplitude_V = {drive.rf_amplitude:.6g}")
    print(f"minimum_m = {x:.6e} {y:.6e} {z:.6e}")
    print(f"height_mm = {z * 1e3:.4f}")
    fx, fy, fz = ta.secular_frequencies
    print(f"secular_Hz = {fx:.6e} {fy:.6e} {fz:.6e}")
    print(f"mathieu_q = " + " ".join(f"{q:.4f}" for q in ta.mathieu_q))
    print(f"stable = {ta.stable}")
    print(f"depth_eV = {ta.depth_ev:.6e}")
    ex, ey, ez = ta.escape_position
    print(f"escape_m = {ex:.6e} {ey:.6e} {ez:.6e}")
    return 0


def _cmd_sweep(cfg, args) -> int:
    layout, drive, species, *_ = _resolve(cfg)
    basis = solve_layout(layout, cfg["resolution"], cache_dir=cfg["cache_dir"])
    pf = PseudoField(basis, drive, species, layout.rf_names())
    rows = sweep_depth(pf, cfg["amplitudes"], (0.0, 0.0, 8e-4))
    f = _open_out(args)
    try:
        f.write(_config_header(cfg))
        f.write(SWEEP_HEADER + "\n")
        for row in rows:
            if isinstance(row[-1], str):
                f.write(f"{row[0]!r},{row[1]}\n")
            else:
                f.write(",".join(repr(float(v)) for v in row) + "\n")
    finally:
        if f is not sys.stdout:
            f.close()
    return 0


def _cmd_load(cfg, args) -> int:
    layout, drive, species, timeline, plume, source, integrator = _resolve(cfg)
    basis = solve_layout(layout, cfg["resolution"], cache_dir=cfg["cache_dir"])
    grid = prepare_field_grid(basis, layout, drive.dc_voltages,
                              integrator.escape_box,
                              tuple(cfg["grid_shape"]),
                              cache_dir=cfg["cache_dir"])
    common = dict(trials=cfg["trials"], workers=cfg["workers"], grid=grid)
    if args.channel == "ablation":
        result = run_ablation_load(basis, layout, drive, cfg["amplitudes"],
                                   plume, timeline, integrator, species,
                                   cfg["seed"], **common)
    else:
        result = run_eimpact_load(basis, layout, drive, cfg["amplitudes"],
                                  source, integrator, species, cfg["seed"],
                                  **common)
    out = args.out or f"load_{args.channel}.csv"
    result.to_csv(out)
    with open(out) as f:
        body = f.read()
    with open(out, "w") as f:
        f.write(_config_header(cfg))
        f.write(body)
    print(f"{args.channel} load table written to {out}")
    return 0


def _cmd_threshold(cfg, args) -> int:
    try:
        abl = LoadResult.from_csv(args.ablation)
        eim = LoadResult.from_csv(args.eimpact)
    except OSError as exc:
        raise CliError("io", str(exc))
    p_min = cfg["p_min"]
    da = min_loadable_depth(abl, p_min)
    de = min_loadable_depth(eim, p_min)
    print(f"p_min = {p_min}")
    print(f"ablation_min_depth_eV = {da}")
    print(f"eimpact_min_depth_eV = {de}")
    if da is None or de is None:
        raise CliError("analysis",
                       f"threshold undefined at p_min={p_min} "
                       f"(ablation={da}, eimpact={de})")
    print(f"threshold_ratio = {threshold_ratio(abl, eim, p_min):.6g}")
    return 0


def _cmd_fit_targets(cfg, args) -> int:
    f = _open_out(args)
    try:
        f.write("target,amplitude_photons_per_ms,durability_shots,"
                "baseline_photons_per_ms,residual_rms,non_decaying,"
                "estimated_ions\n")
        for path in args.series:
            try:
                series = ShotSeries.from_csv(path, target=Path(path).stem)
            except OSError as exc:
                raise CliError("io", str(exc))
            fit = fit_target_decay(series)
            f.write(",".join([
                series.target, repr(fit.amplitude), repr(fit.durability),
                repr(fit.baseline), repr(fit.residual_rms),
                str(fit.non_decaying).lower(), repr(fit.estimated_ions),
            ]) + "\n")
    finally:
        if f is not sys.stdout:
            f.close()
    return 0


def _cmd_export_field(cfg, args) -> int:
    layout, drive, species, *_ = _resolve(cfg)
    basis = solve_layout(layout, cfg["resolution"], cache_dir=cfg["cache_dir"])
    voltages = {name: drive.rf_amplitude for name in layout.rf_names()}
    voltages.update(drive.dc_voltages)
    out = args.out or "field.csv"
    tmp = out + ".part"
    n = export_grid(basis, voltages, cfg["export_box"],
                    cfg["export_spacing"], tmp)
    with open(tmp) as f:
        body = f.read()
    with open(out, "w") as f:
        f.write(_config_header(cfg))
        f.write(body)
    Path(tmp).unlink()
    print(f"{n} grid rows written to {out}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing

def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="surftrap",
        description="Surface-electrode trap field solver, pseudopotential "
                    "analysis, and loading Monte Carlo.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", metavar="PATH")
        sp.add_argument("--layout", metavar="PATH")
        sp.add_argument("--vrf", type=float, metavar="VOLTS")
        sp.add_argument("--freq", type=float, metavar="HZ")
        sp.add_argument("--seed", type=int, metavar="U64")
        sp.add_argument("--trials", type=int, metavar="N")
        sp.add_argument("--workers", type=int, metavar="N")
        sp.add_argument("--out", metavar="PATH")
        sp.add_argument("--short-us", type=float, dest="short_us",
                        metavar="FLOAT")
        sp.add_argument("--recovery", metavar="step|exp:TAU_US")
        return sp

    common(sub.add_parser("solve", help="mesh and solve the field basis"))
    common(sub.add_parser("analyze",
                          help="minimum, frequencies, q, depth for one drive"))
    common(sub.add_parser("sweep", help="depth table over rf amplitudes"))
    sp = common(sub.add_parser("load", help="Monte Carlo loading experiment"))
    sp.add_argument("channel", choices=["ablation", "eimpact"])
    sp = common(sub.add_parser("threshold",
                               help="minimum loadable depths and their ratio"))
    sp.add_argument("--ablation", required=True, metavar="CSV")
    sp.add_argument("--eimpact", required=True, metavar="CSV")
    sp.add_argument("--p-min", type=float, dest="p_min", metavar="P")
    sp = common(sub.add_parser("fit-targets",
                               help="fit shot-series CSVs to the decay model"))
    sp.add_argument("series", nargs="+", metavar="CSV")
    common(sub.add_parser("export-field",
                          help="sample potential and field on a grid"))
    return p


_HANDLERS = {
    "solve": _cmd_solve,
    "analyze": _cmd_analyze,
    "sweep": _cmd_sweep,
    "load": _cmd_load,
    "threshold": _cmd_threshold,
    "fit-targets": _cmd_fit_targets,
    "export-field": _cmd_export_field,
}

_CATEGORIES = [
    (LayoutError, "layout"),
    (MeshError, "mesh"),
    (SolverError, "solver"),
    (AnalysisError, "analysis"),
    (IntegrationError, "integration"),
    (FitError, "fit"),
    (OSError, "io"),
    (ValueError, "config"),
]


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args.config)
        cfg = _apply_flag_overrides(cfg, args)
        return _HANDLERS[args.command](cfg, args)
    except CliError as exc:
        print(f"error:{exc.category}: {exc}", file=sys.stderr)
        return 1
    except tuple(c for c, _ in _CATEGORIES) as exc:
        for cls, cat in _CATEGORIES:
            if isinstance(exc, cls):
                print(f"error:{cat}: {exc}", file=sys.stderr)
                return 1
        raise AssertionError  # unreachable


if __name__ == "__main__":
    sys.exit(main())
