"""Collapse/revival estimates and parameter sweeps."""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .fockbasis import max_overlap, min_truncation
from .model import SystemParams
from .observables import CollapseRevival, detect_collapse_revival, envelope
from .propagate import simulate

log = logging.getLogger(__name__)


class DivergentEstimate(ValueError):
    """The analytic collapse time diverges (no exciton-vibron coupling)."""


@dataclass(frozen=True)
class CollapseEstimate:
    t_col_analytic: float
    t_rev_analytic: float
    M_alpha: float
    alpha: float
    t_col_secondary: float   # 1 / (g alpha M^2), same scaling without the constant

    def as_dict(self) -> dict:
        return asdict(self)


def estimate_collapse_time(params: SystemParams) -> CollapseEstimate:
    """Inverse effective relaxation rate ``w_v / (pi g^2 M^2)`` and revival ``2 pi / w_v``."""
    g, wv = params.g, params.omega_v
    if g <= 0:
        raise DivergentEstimate("collapse time diverges for g = 0")
    alpha = g / wv
    M, _ = max_overlap(alpha, min_truncation(alpha))
    t_col = wv / (math.pi * g**2 * M**2)
    return CollapseEstimate(t_col, 2 * math.pi / wv, M, alpha, 1.0 / (g * alpha * M**2))


def transient_cutoff(params: SystemParams, origin: float) -> float:
    """Frequency below which the rotating-frame sigma holds only the Rayleigh part."""
    return 0.5 * abs(origin - params.omega_drive)


def sigma_collapse_revival(traj, params: SystemParams, basis, **kw) -> tuple[np.ndarray, CollapseRevival]:
    """Envelope of the sigma transient and its collapse/revival times."""
    s = traj.records["sigma"]
    env = envelope(s, traj.times, cutoff=transient_cutoff(params, basis.electronic_origin))
    return env, detect_collapse_revival(env, traj.times, period=2 * math.pi / params.omega_v, **kw)


def sampling_points(params: SystemParams, t_end: float, N: int) -> int:
    """Grid size putting the Nyquist frequency above every retained transition."""
    origin = params.omega_sigma - params.g**2 / params.omega_v
    fmax = abs(origin + params.omega_v * (N - 1) - params.omega_drive)
    fmax = max(fmax, abs(origin - params.omega_drive))
    dt = math.pi / (1.25 * fmax)
    return int(math.ceil(t_end / dt)) + 1


@dataclass
class SweepRow:
    value: float
    t_col_num: float | None
    t_col_analytic: float | None
    t_rev_num: float | None
    t_rev_analytic: float | None
    t_col_secondary: float | None
    N: int
    status: str = "ok"


def run_point(params: SystemParams, *, mode: str = "pure", t_end: float | None = None,
              N: int | None = None, grid_points: int | None = None) -> SweepRow:
    """Numeric and analytic collapse/revival times for one parameter set."""
    value = float("nan")
    wv = params.omega_v
    try:
        est = estimate_collapse_time(params)
    except DivergentEstimate:
        est = None
    alpha = params.alpha
    N = N if N is not None else (min_truncation(alpha) if alpha > 0 else params.N)
    params = params.with_(N=N)
    t_end = t_end if t_end is not None else 1.5 * 2 * math.pi / wv
    grid = grid_points or sampling_points(params, t_end, N)
    traj, basis, _ = simulate(params, t_end, mode=mode, grid_points=grid)
    _, cr = sigma_collapse_revival(traj, params, basis)
    status = "ok" if cr.collapsed else cr.status
    if est is None:
        status = "divergent"
    return SweepRow(value, cr.t_col, est.t_col_analytic if est else None,
                    cr.revivals[0] if cr.revivals else None,
                    est.t_rev_analytic if est else 2 * math.pi / wv,
                    est.t_col_secondary if est else None, N, status)


def _point_task(args):
    params, vary, value, mode, t_end, grid_points = args
    try:
        row = run_point(params, mode=mode, t_end=t_end, grid_points=grid_points)
    except Exception as exc:  # one bad point must not sink the sweep
        log.warning("sweep point %s=%g failed: %s", vary, value, exc)
        row = SweepRow(value, None, None, None, None, None, params.N, f"error: {exc}")
    row.value = value
    return row


def worker_count(requested: int | None = None) -> int:
    if requested:
        return max(1, int(requested))
    env = os.environ.get("VIBRODYN_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


SWEEP_KEYS = {"g": "g", "omega_v": "omega_v"}


def sweep(base_params: SystemParams, vary: str, values, *, mode: str = "pure",
          workers: int | None = None, t_end: float | None = None,
          grid_points: int | None = None) -> list[SweepRow]:
    """Collapse and revival times over a list of g or omega_v values.

    Rows come back in input order regardless of completion order. A point
    with g = 0 is marked divergent; failures are captured per row.
    """
    if vary not in SWEEP_KEYS:
        raise ValueError(f"can only sweep over {sorted(SWEEP_KEYS)}")
    values = [float(v) for v in values]
    if any(v < 0 for v in values) or (vary == "omega_v" and any(v == 0 for v in values)):
        raise ValueError("sweep values must be positive")
    tasks = []
    for v in values:
        p = base_params.with_(**{SWEEP_KEYS[vary]: v})
        # each point gets its own revival horizon
        te = t_end if t_end is not None else 1.5 * 2 * math.pi / p.omega_v
        tasks.append((p, vary, v, mode, te, grid_points))
    n = min(worker_count(workers), len(tasks))
    if n <= 1:
        return [_point_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(_point_task, tasks))


def loglog_slope(x, y) -> float:
    x, y = np.asarray(x, float), np.asarray(y, float)
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])
