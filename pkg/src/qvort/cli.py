"""Command-line driver: ``qvort <command> ...``.

Every command writes its resolved configuration as ``<stem>.config.json``
next to its outputs.  Exit status is 0 when all requested files were
written, 1 on runtime or I/O failures and 2 on invalid parameters.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analytic import (
    BesselPairParams,
    LocalVortexModel,
    bessel_k_for_box,
    bessel_pair_field,
    bessel_radii,
    bessel_vortex_positions,
    local_compression,
    local_phase,
    local_velocity,
    local_vortex_field,
    J1_FIRST_ZERO,
)
from .correlation import (
    InsufficientDataError,
    NoScreeningError,
    decade_fits,
    default_bins,
    fit_correlation_power_law,
    fit_gaussian_screening,
    line_correlation_3d,
    noise_crossing,
    point_correlation_2d,
    write_correlation_csv,
)
from .evolution import DEFAULT_DK, DEFAULT_S_RMS, InitialConditionParams, propagate_many, random_phase_ic, recurrence_time
from .flow import (
    band_energy,
    clip_velocity,
    equipartition_ratio,
    flow_spectra,
    fit_power_law,
    fluid_variables,
    write_spectrum_csv,
)
from .grid import GridSpec, SnapshotError, load_snapshot, save_snapshot
from .lines import lines_from_json, lines_to_json, line_velocity, pierced_face_counts, face_windings, trace_vortex_lines_3d
from .vortex import (
    FieldJet,
    TangentSurfacesError,
    biot_savart_2d,
    detect_vortices_2d,
    material_velocity,
    net_charge,
    refine_null,
    vortex_velocity,
    vortices_from_json,
    vortices_to_json,
)

log = logging.getLogger("qvort")


class UsageError(ValueError):
    """Invalid parameters; reported with exit status 2."""


# --- helpers --------------------------------------------------------------------


def _load_config(path) -> dict:
    if not path:
        return {}
    with open(path) as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise UsageError(f"{path}: config must be a JSON object")
    return cfg


def _resolve(args, cfg: dict, keys: dict) -> dict:
    """Merge defaults < config file < explicit flags."""
    out = {}
    for key, default in keys.items():
        flag = getattr(args, key, None)
        if flag is not None:
            out[key] = flag
        elif key in cfg:
            out[key] = cfg[key]
        else:
            out[key] = default
    return out


def _dump(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True, default=_jsonable)
        fh.write("\n")


def _jsonable(x):
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, Path):
        return str(x)
    raise TypeError(f"cannot serialise {type(x).__name__}")


def _sidecar(path: Path, cfg: dict) -> None:
    _dump({"qvort": __version__, **cfg}, path.with_name(path.stem + ".config.json"))


def _outdir(p) -> Path:
    d = Path(p)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _finite(x: float) -> float | None:
    return x if math.isfinite(x) else None


# --- commands -------------------------------------------------------------------


def cmd_init(args) -> int:
    cfg = _load_config(args.config)
    r = _resolve(args, cfg, {"dims": 2, "n": 512, "length": 1.0, "dk": None, "s_rms": DEFAULT_S_RMS,
                             "k_center": 0.0, "seed": 0, "out": "init.qtrb"})
    try:
        grid = GridSpec(int(r["dims"]), int(r["n"]), float(r["length"]))
        if r["dk"] is None:
            r["dk"] = DEFAULT_DK[grid.dims]
        params = InitialConditionParams(float(r["dk"]), float(r["s_rms"]), float(r["k_center"]), int(r["seed"]))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    f = random_phase_ic(grid, params)
    out = Path(r["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    save_snapshot(f, out)
    _sidecar(out, {"command": "init", **r})
    print(out)
    return 0


def cmd_evolve(args) -> int:
    cfg = _load_config(args.config)
    r = _resolve(args, cfg, {"times": [], "times_frac": [], "outdir": "evolved"})
    f = load_snapshot(args.input)
    trec = recurrence_time(f.grid)
    times = [float(t) for t in r["times"]] + [float(t) * trec for t in r["times_frac"]]
    if any(t < 0 or not math.isfinite(t) for t in times):
        raise UsageError("times must be finite and non-negative")
    if times != sorted(times):
        raise UsageError("times must be sorted")
    outdir = _outdir(r["outdir"])
    if not times:
        log.warning("no output times requested; nothing written")
        return 0
    written = []
    for i, g in enumerate(propagate_many(f, times)):
        path = outdir / f"snap_{i:04d}.qtrb"
        save_snapshot(g, path)
        written.append({"file": path.name, "t": g.t, "t_over_trec": g.t / trec})
    _dump({"command": "evolve", "input": str(args.input), "recurrence_time": trec,
           "snapshots": written, **r}, outdir / "evolve.config.json")
    for w in written:
        print(outdir / w["file"])
    return 0


def _fit_or_none(spec, lo, hi):
    try:
        return fit_power_law(spec, lo, hi).as_dict()
    except ValueError as exc:
        return {"error": str(exc)}


def cmd_flow(args) -> int:
    cfg = _load_config(args.config)
    r = _resolve(args, cfg, {"clip": 1.0, "fit_range": None, "band": None, "outdir": "flow"})
    f = load_snapshot(args.input)
    grid = f.grid
    lo, hi = r["fit_range"] or (4.0, grid.n / 8.0)
    band = r["band"] or (lo, hi)
    outdir = _outdir(r["outdir"])
    flow = fluid_variables(f)
    sets = {"unclipped": flow_spectra(flow.v, grid)}
    n_clipped = None
    if r["clip"] is not None and float(r["clip"]) > 0:
        cflow, n_clipped = clip_velocity(flow, float(r["clip"]))
        sets["clipped"] = flow_spectra(cflow.v, grid)
    diag = {"t": f.t, "t_over_trec": f.t / recurrence_time(grid), "dims": grid.dims, "n": grid.n,
            "fit_range": [lo, hi], "band": list(band), "n_clipped": n_clipped,
            "flagged_points": int(np.count_nonzero(flow.flagged))}
    for label, spectra in sets.items():
        entry = {}
        for part, spec in spectra.items():
            write_spectrum_csv(spec, outdir / f"{label}_{part}.csv")
            entry[f"fit_{part}"] = _fit_or_none(spec, lo, hi)
            entry[f"band_energy_{part}"] = band_energy(spec, *band)
            entry[f"energy_{part}"] = spec.total()
        ep, er = spectra["potential"].total(), spectra["rotational"].total()
        entry["rotational_fraction"] = er / (ep + er) if ep + er > 0 else 0.0
        try:
            entry["equipartition_ratio"] = equipartition_ratio(spectra["potential"], spectra["rotational"], *band)
        except (ZeroDivisionError, ValueError):
            entry["equipartition_ratio"] = None
        top = _fit_or_none(spectra["total"], grid.n / 4.0, grid.n / 2.0 - 1)
        entry["top_octave_fit"] = top
        diag[label] = entry
    _dump(diag, outdir / "flow.json")
    _sidecar(outdir / "flow.json", {"command": "flow", "input": str(args.input), **r})
    print(outdir / "flow.json")
    return 0


def cmd_vortices(args) -> int:
    cfg = _load_config(args.config)
    r = _resolve(args, cfg, {"out": "vortices.json", "velocities": False})
    f = load_snapshot(args.input)
    out = Path(r["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    if f.grid.dims == 2:
        vort = detect_vortices_2d(f)
        net = net_charge(vort)
        extra = {"net_charge": net, "count": len(vort), "n": f.grid.n, "length": f.grid.length}
        columns = None
        if r["velocities"] and vort:
            jet = FieldJet(f)
            pos, _ = refine_null(jet, np.array([p.position for p in vort]))
            columns = {"w": [], "vbar": [], "biot_savart": []}
            for i, x in enumerate(pos):
                for key, fn in (("w", vortex_velocity), ("vbar", material_velocity)):
                    try:
                        columns[key].append(fn(f, x, jet=jet))
                    except TangentSurfacesError:
                        columns[key].append(None)
                columns["biot_savart"].append(
                    biot_savart_2d(vort, x, exclude_index=i, length=f.grid.length) if len(vort) > 1 else np.zeros(2))
        vortices_to_json(vort, f.t, out, extra, columns)
        if net != 0:
            log.error("net charge %d on a periodic snapshot", net)
            return 1
    else:
        lines = trace_vortex_lines_3d(f)
        counts = pierced_face_counts(face_windings(f))
        extra = {"total_length": lines.total_length, "count": len(lines),
                 "max_pierced_faces": int(counts.max()) if counts.size else 0,
                 "all_even": bool(np.all(counts % 2 == 0))}
        if r["velocities"] and lines.lines:
            vel = line_velocity(f, lines)
            extra["velocities"] = [v.tolist() for v in vel]
        lines_to_json(lines, out, extra)
    _sidecar(out, {"command": "vortices", "input": str(args.input), **r})
    print(out)
    return 0


def cmd_correlate(args) -> int:
    cfg = _load_config(args.config)
    r = _resolve(args, cfg, {"nbins": 64, "fit_range": None, "outdir": "correlation"})
    with open(args.input) as fh:
        doc = json.load(fh)
    outdir = _outdir(r["outdir"])
    dims = doc.get("dims")
    summary = {"input": str(args.input), "dims": dims}
    if dims == 2:
        if "n" not in doc:
            raise UsageError("vortex document lacks grid size 'n'")
        grid = GridSpec(2, int(doc["n"]), float(doc.get("length", 1.0)))
        vort, _ = vortices_from_json(doc, grid)
        if len(vort) < 2:
            raise InsufficientDataError(f"need at least 2 vortices, have {len(vort)}")
        bins = default_bins(grid, int(r["nbins"]))
        eta = point_correlation_2d(vort, grid, bins, signed=True)
        xi = point_correlation_2d(vort, grid, bins)
        try:
            g = fit_gaussian_screening(eta)
            eta.fits["gaussian"] = g
            summary["sigma"] = g.sigma
            summary["gaussian"] = g.as_dict()
        except (NoScreeningError, InsufficientDataError, RuntimeError) as exc:
            summary["gaussian"] = {"error": str(exc)}
        summary["noise_crossing"] = noise_crossing(eta)
        fits, skipped = decade_fits(xi)
        summary["xi_decade_max_r2"] = max((f.r2 for f in fits), default=None)
        summary["xi_decades_rejected"] = skipped
        write_correlation_csv(eta, outdir / "signed.csv")
        write_correlation_csv(xi, outdir / "unsigned.csv")
    elif dims == 3:
        lines = lines_from_json(doc)
        grid = lines.grid
        if lines.total_length <= 0:
            raise InsufficientDataError("empty line set")
        bins = default_bins(grid, int(r["nbins"]))
        xi = line_correlation_3d(lines, grid, bins)
        eta = line_correlation_3d(lines, grid, bins, directed=True)
        lo, hi = r["fit_range"] or (2 * grid.dx, grid.length / 8)
        try:
            fit = fit_correlation_power_law(xi, lo, hi)
            xi.fits["power_law"] = fit
            summary["xi_slope"] = fit.slope
            summary["power_law"] = fit.as_dict()
        except ValueError as exc:
            summary["power_law"] = {"error": str(exc)}
        write_correlation_csv(xi, outdir / "undirected.csv")
        write_correlation_csv(eta, outdir / "directed.csv")
    else:
        raise UsageError("input is not a vortex document")
    _dump(summary, outdir / "correlation.json")
    _sidecar(outdir / "correlation.json", {"command": "correlate", **r})
    print(outdir / "correlation.json")
    return 0


def cmd_analytic(args) -> int:
    cfg = _load_config(args.config)
    if args.kind == "bessel":
        r = _resolve(args, cfg, {"c0": 0.3, "k": 1.0, "n": 256, "length": None, "t": 0.0, "out": "bessel.qtrb"})
        length = r["length"] or 4.0 * J1_FIRST_ZERO / float(r["k"])
        try:
            grid = GridSpec(2, int(r["n"]), float(length))
            c = 0.5 * length + 0.37 * grid.dx
            params = BesselPairParams(float(r["c0"]), float(r["k"]), (c, c))
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        f = bessel_pair_field(params, grid, float(r["t"]))
        out = Path(r["out"])
        out.parent.mkdir(parents=True, exist_ok=True)
        save_snapshot(f, out)
        radii = bessel_radii(params)
        rows = [{"x": p.x, "y": p.y, "charge": p.charge, "radius": rad}
                for p, rad in zip(bessel_vortex_positions(params, float(r["t"])), radii)]
        table = {"c0": params.c0, "k": params.k, "t": float(r["t"]), "center": list(params.center),
                 "angular_velocity": 0.5 * params.k**2, "vortices": rows, "length": length}
        _dump(table, out.with_suffix(".table.json"))
        _sidecar(out, {"command": "analytic", "kind": "bessel", **r, "length": length})
    else:
        r = _resolve(args, cfg, {"a": 1.0, "b": 2.0, "n": 128, "length": 1.0, "out": "local.qtrb"})
        try:
            grid = GridSpec(2, int(r["n"]), float(r["length"]))
            x0 = 0.5 * grid.length + 0.37 * grid.dx
            model = LocalVortexModel(float(r["a"]), float(r["b"]), (x0, x0))
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        f = local_vortex_field(model, grid)
        out = Path(r["out"])
        out.parent.mkdir(parents=True, exist_ok=True)
        save_snapshot(f, out)
        phis = np.linspace(0.0, 2.0 * np.pi, 17)[:-1]
        s, _, sp = local_phase(model.a, model.b, phis)
        vel = local_velocity(model.a, model.b, 1.0, phis)
        comp = local_compression(model.a, model.b, 1.0, phis)
        rows = [{"phi": float(p), "S": float(a), "S_p": float(b), "vx": float(v[0]), "vy": float(v[1]),
                 "lap_S": float(c)} for p, a, b, v, c in zip(phis, s, sp, vel, comp)]
        _dump({"a": model.a, "b": model.b, "r": 1.0, "x0": list(model.x0), "table": rows},
              out.with_suffix(".table.json"))
        _sidecar(out, {"command": "analytic", "kind": "local", **r})
    print(out)
    return 0


# --- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qvort", description="Free-particle quantum turbulence toolkit")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON file with defaults; flags override it")

    sp = sub.add_parser("init", help="random-phase initial snapshot")
    common(sp)
    sp.add_argument("--dims", type=int)
    sp.add_argument("--n", type=int)
    sp.add_argument("--length", type=float)
    sp.add_argument("--dk", type=float, help="phase spectrum width, units of 2pi/L")
    sp.add_argument("--s-rms", dest="s_rms", type=float)
    sp.add_argument("--k-center", dest="k_center", type=float)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", "-o")
    sp.set_defaults(func=cmd_init)

    sp = sub.add_parser("evolve", help="exact jumps to the requested times")
    common(sp)
    sp.add_argument("input")
    sp.add_argument("--times", type=float, nargs="*")
    sp.add_argument("--times-frac", dest="times_frac", type=float, nargs="*",
                    help="times as fractions of the recurrence time")
    sp.add_argument("--outdir", "-o")
    sp.set_defaults(func=cmd_evolve)

    sp = sub.add_parser("flow", help="spectra, equipartition and fits")
    common(sp)
    sp.add_argument("input")
    sp.add_argument("--clip", type=float, help="clip |v| at clip/dx; 0 disables")
    sp.add_argument("--fit-range", dest="fit_range", type=float, nargs=2)
    sp.add_argument("--band", type=float, nargs=2)
    sp.add_argument("--outdir", "-o")
    sp.set_defaults(func=cmd_flow)

    sp = sub.add_parser("vortices", help="detect point vortices (2D) or trace lines (3D)")
    common(sp)
    sp.add_argument("input")
    sp.add_argument("--out", "-o")
    sp.add_argument("--velocities", action="store_const", const=True)
    sp.set_defaults(func=cmd_vortices)

    sp = sub.add_parser("correlate", help="two-point statistics of a vortex document")
    common(sp)
    sp.add_argument("input")
    sp.add_argument("--nbins", type=int)
    sp.add_argument("--fit-range", dest="fit_range", type=float, nargs=2)
    sp.add_argument("--outdir", "-o")
    sp.set_defaults(func=cmd_correlate)

    sp = sub.add_parser("analytic", help="reference fields")
    asub = sp.add_subparsers(dest="kind", required=True)
    b = asub.add_parser("bessel")
    common(b)
    b.add_argument("--c0", type=float)
    b.add_argument("--k", type=float)
    b.add_argument("--n", type=int)
    b.add_argument("--length", type=float, help="default: first J1 zero at L/4")
    b.add_argument("--t", type=float)
    b.add_argument("--out", "-o")
    b.set_defaults(func=cmd_analytic)
    loc = asub.add_parser("local")
    common(loc)
    loc.add_argument("--a", type=float)
    loc.add_argument("--b", type=float)
    loc.add_argument("--n", type=int)
    loc.add_argument("--length", type=float)
    loc.add_argument("--out", "-o")
    loc.set_defaults(func=cmd_analytic)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="qvort: %(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, InsufficientDataError, NoScreeningError) as exc:
        log.error("%s", exc)
        return 2
    except (SnapshotError, OSError, json.JSONDecodeError, TangentSurfacesError, RuntimeError) as exc:
        log.error("%s", exc)
        return 1
    except ValueError as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
