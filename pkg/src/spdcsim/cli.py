"""
Command-line front end.

    spdcsim <command> CONFIG [flags]

Each command writes its tables (CSV, or JSON with --format json) and a
summary JSON into the output directory, plus ``<command>.manifest.json``
holding the effective configuration, its hash, the seed and the library
versions. Exit codes: 0 success, 1 usage, 2 validation, 3 solver failure,
4 IO.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import platform
import sys
import tempfile
from importlib import metadata

import numpy as np

from . import __version__
from . import config as cfgmod
from .epmf import (cw_slice, decorrelation_scan, default_axes, epmf_grid, joint_spectrum,
                   metrics)
from .errors import ConfigError, DomainError, ModelError, UsageError
from .montecarlo import EventRecords, default_gate_delay, histogram, simulate
from .phasematching import (angle_for_wavelength, conjugate_wavelength, degeneracy_angle, tuning_curve,
                            with_pump_axis_angle)
from .spectrometer import (CalibrationFit, TimingHistogram, arrival_time, calibrate, reconstruct_spectrum,
                           resolution, timing_uncertainty)

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_SOLVER, EXIT_IO = 0, 1, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------- IO helpers


def atomic_write(path, text):
    """Write ``text`` to ``path`` through a temporary file in the same directory and a rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _num(x):
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if x is None:
        return None
    x = float(x)
    return None if not np.isfinite(x) else x


def table_text(columns, rows, fmt):
    rows = [[_num(v) for v in r] for r in rows]
    if fmt == "json":
        return cfgmod.dumps([dict(zip(columns, r)) for r in rows])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    w.writerows([["" if v is None else v for v in r] for r in rows])
    return buf.getvalue()


def read_text(path):
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def _malformed(path, exc):
    return OSError(f"malformed input {path}: {exc!r}")


def read_table(path):
    text = read_text(path)
    try:
        if text.lstrip().startswith("["):
            return json.loads(text)
        return list(csv.DictReader(io.StringIO(text)))
    except (ValueError, csv.Error) as exc:
        raise _malformed(path, exc) from exc


class Run:
    def __init__(self, args, cfg, out):
        self.args, self.cfg, self.out = args, cfg, out
        self.files = []

    def write(self, name, text):
        atomic_write(os.path.join(self.out, name), text)
        self.files.append(name)

    def table(self, stem, columns, rows):
        self.write(f"{stem}.{self.args.format}", table_text(columns, rows, self.args.format))

    def summary(self, stem, data):
        self.write(f"{stem}.json", cfgmod.dumps(data))

    def path(self, name):
        return os.path.join(self.out, name)


def _versions():
    out = {"spdcsim": __version__, "python": platform.python_version()}
    for pkg in ("numpy", "scipy", "jsonschema"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


# ---------------------------------------------------------------- helpers


def _axes(cfg):
    g = cfg.grid
    return default_axes(g["center"], g["half_width"], tuple(g["size"]))


def _metrics_dict(m):
    return {k: _num(getattr(m, k)) for k in
            ("pearson", "schmidt_number", "purity", "fwhm_signal", "fwhm_idler", "ridge_angle",
             "center_signal", "center_idler")}


def _slice_axis(cfg, pump_wavelength):
    g = cfg.grid
    return np.linspace(2 * pump_wavelength - g["half_width"], 2 * pump_wavelength + g["half_width"], g["size"][0])


def _spectrum(cfg):
    if cfg.pump.kind == "cw":
        lp = cfg.pump.center_wavelength
        return cw_slice(cfg.crystal, cfg.geometry, lp, _slice_axis(cfg, lp), method=cfg.grid["method"])
    s, i = _axes(cfg)
    return joint_spectrum(cfg.crystal, cfg.geometry, cfg.pump, s, i, method=cfg.grid["method"])


def _gate_delay(cfg):
    det_b = cfg.detectors[1]
    if det_b.gate_delay is not None:
        return det_b.gate_delay
    return default_gate_delay(cfg.fibers[0], cfg.fibers[1], det_b.gate_width, 2 * cfg.pump.center_wavelength)


def _window(cfg):
    if cfg.analysis["window"] is not None:
        return tuple(cfg.analysis["window"])
    # gate span in ps, aligned down to the bin grid
    res, bw = cfg.tagger_resolution, cfg.analysis["bin_width"]
    lo = np.floor(_gate_delay(cfg) * 1e3 / res) * res
    width = cfg.detectors[1].gate_width * 1e3
    return float(lo), float(lo + np.ceil((width + res) / bw) * bw)


def _e_branch_delay(cfg, lambda_o):
    """Noiseless gated-minus-trigger delay (ps) with the e photon triggering."""
    fa, fb = cfg.fibers
    lambda_e = conjugate_wavelength(cfg.pump.center_wavelength, lambda_o)
    return arrival_time(fb, lambda_o) - arrival_time(fa, lambda_e)


# ---------------------------------------------------------------- commands


def cmd_tuning_curve(run):
    lo, hi, n = run.cfg.analysis["tuning_range"]
    tc = tuning_curve(run.cfg.crystal, run.cfg.geometry, np.linspace(lo, hi, n))
    rows = [(p.internal_pump_axis_angle, p.lambda_o, p.lambda_e, p.residual_mismatch) for p in tc]
    run.table("tuning_curve", ["theta_deg", "lambda_o_nm", "lambda_e_nm", "residual_mismatch"], rows)
    run.summary("tuning_curve_summary", {"points": len(tc), "skipped": [[t, r] for t, r in tc.skipped]})
    print(f"{len(tc)} points, {len(tc.skipped)} skipped")


def cmd_degeneracy(run):
    c, g = run.cfg.crystal, run.cfg.geometry
    theta = degeneracy_angle(c, g)
    tilt = with_pump_axis_angle(c, theta, g.pump_wavelength).tilt
    run.summary("degeneracy", {"cut_angle_deg": c.cut_angle, "degeneracy_angle_deg": theta,
                               "emission_plane": g.emission_plane, "pump_wavelength_nm": g.pump_wavelength,
                               "tilt_deg": tilt})
    print(f"degeneracy angle {theta:.4f} deg (external tilt from cut {tilt:+.4f} deg)")


def cmd_epmf_grid(run):
    s, i = _axes(run.cfg)
    grid = epmf_grid(run.cfg.crystal, run.cfg.geometry, s, i, method=run.cfg.grid["method"])
    S, I = np.meshgrid(s, i, indexing="ij")
    a = grid.amplitude
    rows = zip(S.ravel(), I.ravel(), a.real.ravel(), a.imag.ravel(), grid.intensity.ravel())
    run.table("epmf_grid", ["lambda_s_nm", "lambda_i_nm", "amplitude_re", "amplitude_im", "intensity"], rows)
    m = metrics(grid)
    run.summary("epmf_metrics", _metrics_dict(m))
    print(f"EPMF {a.shape[0]}x{a.shape[1]}, ridge angle {m.ridge_angle:.2f} deg")


def cmd_cw_slice(run):
    cfg = run.cfg
    summary, spectra = [], []
    for lp in cfg.analysis["cw_pumps"]:
        sl = cw_slice(cfg.crystal, cfg.geometry, lp, _slice_axis(cfg, lp), method=cfg.grid["method"])
        summary.append((lp, sl.center, sl.center_idler, sl.fwhm))
        spectra += list(zip(np.full(sl.signal_axis.size, lp), sl.signal_axis, sl.idler_axis, sl.intensity))
        print(f"pump {lp:.1f} nm: center {sl.center:.2f} / {sl.center_idler:.2f} nm, FWHM {sl.fwhm:.2f} nm")
    run.table("cw_slices", ["pump_nm", "center_o_nm", "center_e_nm", "fwhm_nm"], summary)
    run.table("cw_slice_spectra", ["pump_nm", "lambda_o_nm", "lambda_e_nm", "intensity"], spectra)


def cmd_metrics(run):
    cfg = run.cfg
    s, i = _axes(cfg)
    if cfg.pump.kind == "pulsed":
        grid = joint_spectrum(cfg.crystal, cfg.geometry, cfg.pump, s, i, method=cfg.grid["method"])
        source = "joint_spectrum"
    else:
        grid = epmf_grid(cfg.crystal, cfg.geometry, s, i, method=cfg.grid["method"])
        source = "epmf"
    m = metrics(grid)
    run.summary("metrics", {"source": source, **_metrics_dict(m)})
    print(f"{source}: pearson {m.pearson:+.4f}, K {m.schmidt_number:.4f}, purity {m.purity:.4f}")


def cmd_decorrelation_scan(run):
    cfg = run.cfg
    s, i = _axes(cfg)
    res = decorrelation_scan(cfg.crystal, cfg.geometry, tuple(cfg.analysis["bandwidth_range"]), 9, s, i,
                             pump_wavelength=cfg.pump.center_wavelength, method=cfg.grid["method"])
    run.summary("decorrelation", {"bandwidth_nm": res.bandwidth, "at_boundary": res.at_boundary,
                                  "metrics": _metrics_dict(res.metrics),
                                  "coarse": [[b, _num(p)] for b, p in res.coarse]})
    print(f"bandwidth {res.bandwidth:.3f} nm: pearson {res.metrics.pearson:+.4f}, purity {res.metrics.purity:.4f}")


def cmd_resolution(run):
    cfg = run.cfg
    fa, fb = cfg.fibers
    da, db = cfg.detectors
    lam = 2 * cfg.pump.center_wavelength
    value = resolution(fa, fb, da, db, cfg.tagger_resolution, lam)
    run.summary("resolution", {"resolution_nm": value, "wavelength_nm": lam,
                               "timing_uncertainty_ps": timing_uncertainty(da, db, cfg.tagger_resolution),
                               "fiber_lengths_m": [fa.length, fb.length]})
    print(f"resolution {value:.3f} nm at {lam:.1f} nm")


def cmd_simulate(run):
    cfg = run.cfg
    acq = cfg.acquisition
    fa, fb = cfg.fibers
    da, db = cfg.detectors
    delay = _gate_delay(cfg)
    rec = simulate(_spectrum(cfg), fa, fb, da, db, acq["coupling_efficiency"], acq["pair_rate"], acq["duration"],
                   cfg.tagger_resolution, acq["polarizer"], acq["asymmetry"], cfg.seed,
                   chunk_duration=acq["chunk_duration"], workers=acq["workers"], gate_delay=delay,
                   pump_wavelength=cfg.pump.center_wavelength)
    run.write("timetags.csv", rec.to_csv())
    n_trig, n_gated = int((rec.channel == 0).sum()), int((rec.channel == 1).sum())
    run.summary("simulate", {"duration_s": acq["duration"], "gate_delay_ns": delay, "gated_records": n_gated,
                             "polarizer": acq["polarizer"], "trigger_records": n_trig})
    print(f"{n_trig} trigger and {n_gated} gated records")


def cmd_histogram(run):
    cfg = run.cfg
    path = run.args.input or run.path("timetags.csv")
    try:
        rec = EventRecords.from_csv(read_text(path), cfg.tagger_resolution)
    except (ValueError, IndexError) as exc:
        raise _malformed(path, exc) from exc
    h = histogram(rec, cfg.analysis["bin_width"], _window(cfg))
    run.table("histogram", ["bin_start_ps", "count"], zip(h.edges[:-1], h.counts))
    print(f"{h.total} coincidences in {h.counts.size} bins")


def cmd_calibrate(run):
    cfg = run.cfg
    refs = [(w, _e_branch_delay(cfg, w)) for w in cfg.analysis["calibration_wavelengths"]]
    fit = calibrate(refs, cfg.analysis["calibration_order"])
    run.write("calibration.json", fit.to_json())
    print(f"order-{fit.order} fit through {len(refs)} references, max residual "
          f"{max(abs(r) for r in fit.residuals):.3g} nm")


def cmd_reconstruct(run):
    cfg = run.cfg
    path = run.args.input or run.path(f"histogram.{run.args.format}")
    rows = read_table(path)
    if not rows:
        raise UsageError("empty histogram")
    try:
        starts = np.array([float(r["bin_start_ps"]) for r in rows])
        counts = np.array([int(r["count"]) for r in rows])
    except (KeyError, ValueError, TypeError) as exc:
        raise _malformed(path, exc) from exc
    bw = float(starts[1] - starts[0]) if starts.size > 1 else cfg.analysis["bin_width"]
    h = TimingHistogram(bw, float(starts[0]), counts)
    cal = run.args.calibration or run.path("calibration.json")
    try:
        fit = CalibrationFit.from_json(read_text(cal))
    except (KeyError, ValueError, TypeError) as exc:
        raise _malformed(cal, exc) from exc
    lp = cfg.pump.center_wavelength if cfg.pump.kind == "cw" else None
    spec = reconstruct_spectrum(h, fit, lp)
    li = spec.lambda_i if spec.lambda_i is not None else np.full(spec.lambda_s.size, np.nan)
    run.table("reconstructed", ["lambda_s_nm", "lambda_i_nm", "density", "extrapolated"],
              zip(spec.lambda_s, li, spec.density, spec.extrapolated))
    print(f"{spec.lambda_s.size} points, {int(spec.extrapolated.sum())} flagged as extrapolated")


COMMANDS = {
    "tuning-curve": cmd_tuning_curve,
    "degeneracy": cmd_degeneracy,
    "epmf-grid": cmd_epmf_grid,
    "cw-slice": cmd_cw_slice,
    "metrics": cmd_metrics,
    "decorrelation-scan": cmd_decorrelation_scan,
    "resolution": cmd_resolution,
    "simulate": cmd_simulate,
    "histogram": cmd_histogram,
    "calibrate": cmd_calibrate,
    "reconstruct": cmd_reconstruct,
}


def _grid_size(text):
    try:
        n, m = (int(x) for x in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected NxM, got {text!r}") from None
    return [n, m]


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("config", help="experiment JSON (the bundled paper.json is found by name)")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--grid", type=_grid_size, metavar="NxM")
    common.add_argument("--polarizer", choices=("e", "o", "none"))
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--lambda-o", type=float, metavar="NM", help="retune the crystal tilt to emit the o photon at NM")
    common.add_argument("--bandwidth", type=float, metavar="NM", help="use a pulsed pump with this FWHM")
    common.add_argument("--input", help="input table for histogram/reconstruct")
    common.add_argument("--calibration", help="calibration JSON for reconstruct")

    parser = _Parser(prog="spdcsim", description="Fiber-coupled SPDC source and fiber spectrometer simulator")
    parser.add_argument("--version", action="version", version=f"spdcsim {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def apply_overrides(cfg, args):
    """Fold command-line flags into the raw config and revalidate."""
    raw = cfg.to_dict()
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.grid is not None:
        raw["grid"]["size"] = args.grid
    if args.polarizer is not None:
        raw["acquisition"]["polarizer"] = args.polarizer
    if args.bandwidth is not None:
        raw["pump"]["kind"] = "pulsed"
        raw["pump"]["bandwidth_fwhm"] = args.bandwidth
    cfg = cfgmod.from_dict(raw)
    if args.lambda_o is not None:
        lp = cfg.pump.center_wavelength
        if not args.lambda_o > lp:
            raise DomainError(f"--lambda-o {args.lambda_o} nm is not a down-conversion wavelength for {lp} nm")
        theta = angle_for_wavelength(cfg.crystal, cfg.geometry, args.lambda_o)
        raw["crystal"]["tilt"] = with_pump_axis_angle(cfg.crystal, theta, lp).tilt
        cfg = cfgmod.from_dict(raw)
    return cfg


def run(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return EXIT_OK if exc.code in (None, 0) else EXIT_USAGE
    try:
        cfg = apply_overrides(cfgmod.load(args.config), args)
        out = args.out or cfg.outputs["directory"]
        os.makedirs(out, exist_ok=True)
        r = Run(args, cfg, out)
        COMMANDS[args.command](r)
        manifest = {"argv": argv, "command": args.command, "config": cfg.to_dict(),
                    "config_sha256": cfg.sha256(), "outputs": r.files, "seed": cfg.seed,
                    "versions": _versions()}
        atomic_write(os.path.join(out, f"{args.command}.manifest.json"), cfgmod.dumps(manifest))
    except ConfigError as exc:
        for path, msg in exc.errors:
            print(f"config error: {path}: {msg}", file=sys.stderr)
        return EXIT_VALIDATION
    except DomainError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ModelError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
