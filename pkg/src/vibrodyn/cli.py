"""Command-line front end: run, sweep, validate, presets."""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
import time
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import DivergentEstimate, estimate_collapse_time, sigma_collapse_revival, sweep
from .fockbasis import TruncationError, min_truncation
from .integrate import IntegrationError
from .liouvillian import ConfigurationError, DissipatorConfig
from .model import HBAR_EV_FS, PumpSchedule, SystemParams
from .observables import find_peaks, spectrum
from .propagate import NumericalAbort, simulate

log = logging.getLogger("vibrodyn")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_CONVERGENCE, EXIT_ABORT = 0, 1, 2, 3, 4

FLOAT_KEYS = {
    "omega_sigma_eV": "omega_sigma", "omega_v_eV": "omega_v", "g_eV": "g",
    "Omega_eV": "Omega", "omega_drive_eV": "omega_drive", "gamma_D_eV": "gamma_D",
    "gamma_deph_eV": "gamma_deph", "gamma_v_eV": "gamma_v", "n_v": "n_v",
}
CHOICES = {
    "mode": ("lindblad", "pure", "both"),
    "decay_grouping": ("secular", "collective"),
    "spectrum_window": ("hann", "half-hann", "none"),
    "sweep_parameter": ("g", "omega_v"),
}
OTHER_KEYS = ("pump_gamma_p0_eV", "pump_t0", "N", "t_end", "grid_points", "output_dir",
              "sweep_values")
ALL_KEYS = tuple(FLOAT_KEYS) + tuple(CHOICES) + OTHER_KEYS

TRAJECTORY_COLUMNS = ("time_hbar_per_eV", "time_fs", "re_sigma", "im_sigma", "abs_sigma",
                      "D", "re_b", "im_b")
SWEEP_COLUMNS = ("value", "t_col_num", "t_col_analytic", "t_rev_num", "t_rev_analytic",
                 "t_col_secondary", "N", "status")
CONVERGENCE_TOL = 1e-4


class ConfigError(ValueError):
    pass


@dataclass
class RunSpec:
    params: SystemParams
    mode: str = "lindblad"
    decay_grouping: str = "secular"
    t_end: float = 8000.0
    grid_points: int = 4096
    spectrum_window: str = "hann"
    output_dir: str = "vibrodyn_out"
    sweep_parameter: str | None = None
    sweep_values: tuple = ()
    N_auto: bool = True
    name: str = "run"
    resolved: dict = field(default_factory=dict)


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.12g}"


def auto_truncation(g: float, omega_v: float, n_v: float) -> int:
    alpha = g / omega_v
    n = min_truncation(alpha) if alpha > 0 else 1
    if n_v > 0:
        # thermal tail below 1e-8
        q = n_v / (1 + n_v)
        n = max(n, int(math.ceil(math.log(1e-8) / math.log(q))))
    return n


def parse_config(text: str, name: str = "run") -> RunSpec:
    """Parse ``key = value`` lines; errors carry the offending line number."""
    values: dict = {}
    lines: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in ALL_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r} (first set on line {lines[key]})")
        if not val:
            raise ConfigError(f"line {lineno}: empty value for {key!r}")
        values[key], lines[key] = val, lineno

    def num(key, cast=float, lo=None, allow_zero=True):
        try:
            v = cast(values[key])
        except ValueError:
            raise ConfigError(f"line {lines[key]}: {key} must be a number, got {values[key]!r}") from None
        if isinstance(v, float) and not math.isfinite(v):
            raise ConfigError(f"line {lines[key]}: {key} must be finite")
        if lo is not None and (v < lo or (not allow_zero and v == lo)):
            raise ConfigError(f"line {lines[key]}: {key} out of range ({v})")
        return v

    kw = {}
    for key, attr in FLOAT_KEYS.items():
        if key in values:
            kw[attr] = num(key, lo=0.0, allow_zero=key not in ("omega_v_eV",))
    for key, choices in CHOICES.items():
        if key in values and values[key] not in choices:
            raise ConfigError(f"line {lines[key]}: {key} must be one of {', '.join(choices)}")

    gp = num("pump_gamma_p0_eV", lo=0.0) if "pump_gamma_p0_eV" in values else 0.0
    if "pump_t0" in values:
        if values["pump_t0"] in ("inf", "infinity"):
            t0 = math.inf
        else:
            t0 = num("pump_t0", lo=0.0)
    else:
        t0 = math.inf
    if gp > 0:
        pump = PumpSchedule(gp, 0.0, "constant") if math.isinf(t0) else PumpSchedule(gp, t0, "rectangular")
    else:
        pump = PumpSchedule()
    kw["pump"] = pump

    base = SystemParams()
    g = kw.get("g", base.g)
    wv = kw.get("omega_v", base.omega_v)
    nv = kw.get("n_v", base.n_v)
    N_auto = True
    if "N" in values and values["N"] != "auto":
        kw["N"] = num("N", int, lo=1, allow_zero=False)
        N_auto = False
    else:
        kw["N"] = auto_truncation(g, wv, nv)
    try:
        params = SystemParams(**kw)
    except ValueError as exc:
        raise ConfigError(f"invalid parameters: {exc}") from None

    spec = RunSpec(params, name=name, N_auto=N_auto)
    for key in ("mode", "decay_grouping", "spectrum_window", "sweep_parameter"):
        if key in values:
            setattr(spec, key, values[key])
    if "t_end" in values:
        spec.t_end = num("t_end", lo=0.0, allow_zero=False)
    if "grid_points" in values:
        spec.grid_points = num("grid_points", int, lo=16)
    if "output_dir" in values:
        spec.output_dir = values["output_dir"]
    if "sweep_values" in values:
        try:
            spec.sweep_values = tuple(float(v) for v in values["sweep_values"].replace(",", " ").split())
        except ValueError:
            raise ConfigError(f"line {lines['sweep_values']}: sweep_values must be numbers") from None
    if spec.mode in ("pure", "both") and params.n_v != 0:
        raise ConfigError("pure-state mode needs n_v = 0")
    spec.resolved = resolved_config(spec)
    return spec


def resolved_config(spec: RunSpec) -> dict:
    p = spec.params
    out = {
        "omega_sigma_eV": p.omega_sigma, "omega_v_eV": p.omega_v, "g_eV": p.g,
        "Omega_eV": p.Omega, "omega_drive_eV": p.omega_drive, "gamma_D_eV": p.gamma_D,
        "gamma_deph_eV": p.gamma_deph, "gamma_v_eV": p.gamma_v, "n_v": p.n_v,
        "pump_gamma_p0_eV": p.pump.gamma_p0,
        "pump_t0": None if p.pump.shape == "constant" else p.pump.t0,
        "pump_shape": p.pump.shape,
        "N": p.N, "N_auto": spec.N_auto, "mode": spec.mode,
        "decay_grouping": spec.decay_grouping, "t_end": spec.t_end,
        "grid_points": spec.grid_points, "spectrum_window": spec.spectrum_window,
        "output_dir": spec.output_dir,
    }
    if spec.sweep_parameter:
        out["sweep_parameter"] = spec.sweep_parameter
        out["sweep_values"] = list(spec.sweep_values)
    return out


def preset_names() -> list[str]:
    root = resources.files("vibrodyn") / "presets"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".cfg"))


def read_preset(name: str) -> str:
    return (resources.files("vibrodyn") / "presets" / f"{name}.cfg").read_text(encoding="utf-8")


def load_spec(path_or_preset: str) -> RunSpec:
    path = Path(path_or_preset)
    if path.is_file():
        text = path.read_text(encoding="utf-8")
        name = path.stem
    elif path_or_preset in preset_names():
        text = read_preset(path_or_preset)
        name = path_or_preset
    else:
        raise ConfigError(f"no such config file or preset: {path_or_preset}")
    return parse_config(text, name)


def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def trajectory_csv(traj) -> str:
    s = traj.records["sigma"]
    D = traj.records["D"].real
    b = traj.records["b"]
    rows = ((fmt(t), fmt(t * HBAR_EV_FS), fmt(z.real), fmt(z.imag), fmt(abs(z)), fmt(d),
             fmt(bb.real), fmt(bb.imag))
            for t, z, d, bb in zip(traj.times, s, D, b))
    return _csv_text(TRAJECTORY_COLUMNS, rows)


def _truncation_check(spec: RunSpec, mode: str, ref_traj) -> dict:
    """Short-horizon comparison against a run with a larger truncation."""
    p = spec.params
    if p.g == 0 and p.n_v == 0:
        return {"checked": False, "reason": "no vibron excitation possible", "converged": True}
    horizon = min(spec.t_end, math.pi / p.omega_v)
    pts = int(np.searchsorted(ref_traj.times, horizon, side="right"))
    t_grid = ref_traj.times[:pts]
    big = p.with_(N=p.N + 4)
    cfg = DissipatorConfig(decay_grouping=spec.decay_grouping)
    from .liouvillian import assemble
    from .model import build_basis, model_fc_table
    from .propagate import evolve_density, evolve_pure, initial_state, pure_ground_state, standard_observables
    basis, fc = build_basis(big), model_fc_table(big)
    obs = {"sigma": standard_observables(basis, fc)["sigma"]}
    if mode == "lindblad":
        tr = evolve_density(initial_state(big), assemble(big, basis, fc, cfg), t_grid[-1],
                            observables=obs, t_grid=t_grid)
    else:
        tr = evolve_pure(pure_ground_state(big.N), big, basis, fc, t_grid[-1],
                         grid_points=t_grid.size, observables=obs)
    a = ref_traj.records["sigma"][:pts]
    b = tr.records["sigma"]
    scale = float(np.abs(b).max()) or 1.0
    diff = float(np.abs(a - b).max()) / scale
    return {"checked": True, "N": p.N, "N_ref": big.N, "horizon": float(t_grid[-1]),
            "relative_difference": diff, "tolerance": CONVERGENCE_TOL,
            "converged": diff < CONVERGENCE_TOL}


def analyse(spec: RunSpec, traj, basis, fc) -> dict:
    p = spec.params
    sp = spectrum(traj.records["sigma"], traj.times, window=spec.spectrum_window,
                  frequency_shift=p.omega_drive)
    lo = min(p.omega_drive, basis.electronic_origin) - 10 * p.omega_v
    hi = max(p.omega_drive, p.omega_sigma) + 10 * p.omega_v
    band = sp.band(lo, hi)
    # peaks near the molecular lines; the Rayleigh line has been removed
    peaks = find_peaks(band, band=(basis.electronic_origin - 5 * p.omega_v, hi))
    _, cr = sigma_collapse_revival(traj, p, basis)
    return {"spectrum": band, "peaks": peaks, "collapse": cr}


def _estimates(p: SystemParams) -> dict:
    try:
        return {k: v for k, v in estimate_collapse_time(p).as_dict().items()}
    except DivergentEstimate as exc:
        return {"divergent": True, "reason": str(exc), "t_rev_analytic": 2 * math.pi / p.omega_v}


def _run_one(spec: RunSpec, mode: str, out: Path, suffix: str) -> dict:
    cfg = DissipatorConfig(decay_grouping=spec.decay_grouping)
    traj, basis, fc = simulate(spec.params, spec.t_end, mode=mode, grid_points=spec.grid_points,
                               cfg=cfg)
    res = analyse(spec, traj, basis, fc)
    conv = _truncation_check(spec, mode, traj)
    _atomic_write(out / f"{spec.name}{suffix}_trajectory.csv", trajectory_csv(traj))
    band = res["spectrum"]
    _atomic_write(out / f"{spec.name}{suffix}_spectrum.csv",
                  _csv_text(("omega_eV", "power"),
                            ((fmt(w), fmt(a)) for w, a in zip(band.frequencies, band.amplitude))))
    cr = res["collapse"]
    return {
        "mode": mode,
        "frame": traj.frame,
        "rayleigh_weight": band.rayleigh_weight,
        "peaks": [{"center_eV": pk.center, "width_eV": pk.width, "height": pk.height}
                  for pk in res["peaks"]],
        "t_col": cr.t_col,
        "collapse_status": cr.status,
        "revivals": list(cr.revivals),
        "diagnostics": {k: (float(v) if isinstance(v, (float, np.floating)) else v)
                        for k, v in traj.diagnostics.items()},
        "convergence": conv,
    }


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(type(o))


def _round_floats(obj):
    if isinstance(obj, float):
        return float(fmt(obj)) if math.isfinite(obj) else str(obj)
    if isinstance(obj, dict):
        return {k: _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    return obj


def cmd_run(args) -> int:
    spec = load_spec(args.config)
    if args.output_dir:
        spec.output_dir = args.output_dir
        spec.resolved["output_dir"] = args.output_dir
    out = Path(spec.output_dir)
    modes = ["lindblad", "pure"] if spec.mode == "both" else [spec.mode]
    record = {"version": __version__, "config": spec.resolved,
              "analytic": _estimates(spec.params), "runs": {}}
    status = EXIT_OK
    for mode in modes:
        suffix = "" if mode == modes[0] else f"_{mode}"
        t0 = time.perf_counter()
        res = _run_one(spec, mode, out, suffix)
        log.info("%s run finished in %.1f s", mode, time.perf_counter() - t0)
        record["runs"][mode] = res
        if not res["convergence"]["converged"]:
            status = EXIT_CONVERGENCE
    # top-level fields mirror the primary run
    primary = record["runs"][modes[0]]
    for key in ("rayleigh_weight", "peaks", "t_col", "revivals", "convergence"):
        record[key] = primary[key]
    _atomic_write(out / f"{spec.name}.json",
                  json.dumps(_round_floats(record), indent=2, sort_keys=True, default=_json_default) + "\n")
    print(f"wrote {out / spec.name}.json")
    if status == EXIT_CONVERGENCE:
        print("truncation not converged; increase N", file=sys.stderr)
    return status


def cmd_sweep(args) -> int:
    spec = load_spec(args.config)
    if args.output_dir:
        spec.output_dir = args.output_dir
        spec.resolved["output_dir"] = args.output_dir
    if not spec.sweep_parameter or not spec.sweep_values:
        raise ConfigError("sweep needs sweep_parameter and sweep_values")
    mode = "lindblad" if spec.mode == "lindblad" else "pure"
    rows = sweep(spec.params, spec.sweep_parameter, spec.sweep_values, mode=mode,
                 workers=args.workers)
    out = Path(spec.output_dir)
    for i, row in enumerate(rows):
        _atomic_write(out / "points" / f"{spec.name}_{i:03d}.json",
                      json.dumps(_round_floats(asdict(row)), indent=2, sort_keys=True) + "\n")
    table = [[fmt(getattr(r, c)) if c != "status" else r.status for c in SWEEP_COLUMNS] for r in rows]
    _atomic_write(out / f"{spec.name}_sweep.csv", _csv_text(SWEEP_COLUMNS, table))
    record = {"version": __version__, "config": spec.resolved, "mode": mode,
              "rows": [asdict(r) for r in rows]}
    _atomic_write(out / f"{spec.name}_sweep.json",
                  json.dumps(_round_floats(record), indent=2, sort_keys=True) + "\n")
    for r in rows:
        print(f"{spec.sweep_parameter}={fmt(r.value):>10}  t_col={fmt(r.t_col_num):>14}  "
              f"t_col_est={fmt(r.t_col_analytic):>14}  t_rev={fmt(r.t_rev_num):>14}  {r.status}")
    return EXIT_OK


def cmd_validate(args) -> int:
    from .validation import run_checks
    results = run_checks()
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<{width}}  {r.detail}")
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_FAIL


def cmd_presets(args) -> int:
    for name in preset_names():
        first = read_preset(name).splitlines()[0].lstrip("# ").strip()
        print(f"{name:<8} {first}")
    if args.show:
        print(read_preset(args.show), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vibrodyn",
                                     description="Driven exciton-vibron master-equation simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="single run from a config file or preset name")
    p.add_argument("config")
    p.add_argument("--output-dir")
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("sweep", help="collapse/revival sweep over g or omega_v")
    p.add_argument("config")
    p.add_argument("--output-dir")
    p.add_argument("--workers", type=int, default=None,
                   help="worker processes (default: VIBRODYN_THREADS or CPU count)")
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("validate", help="oracle and invariant checks at small N")
    p.set_defaults(func=cmd_validate)
    p = sub.add_parser("presets", help="list bundled figure presets")
    p.add_argument("--show", metavar="NAME", help="print one preset")
    p.set_defaults(func=cmd_presets)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ConfigurationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TruncationError as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (NumericalAbort, IntegrationError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())
