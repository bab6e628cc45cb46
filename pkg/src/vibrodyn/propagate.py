"""Initial states and time propagation (density matrix and pure state)."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .fockbasis import FranckCondonTable
from .integrate import dopri5
from .liouvillian import Generator
from .model import EigenBasis, OperatorRep, SystemParams, hamiltonian_rotating

log = logging.getLogger(__name__)

DEFAULT_RTOL = 1e-8
DEFAULT_ATOL = 1e-12
TRACE_ABORT = 1e-6


class NumericalAbort(RuntimeError):
    """Trace drift beyond tolerance; the generator or step control is broken."""


@dataclass(frozen=True)
class DensityMatrix:
    matrix: np.ndarray
    frame: str = "rotating"
    time: float = 0.0


@dataclass(frozen=True)
class StateVector:
    amplitudes: np.ndarray
    frame: str = "rotating"
    time: float = 0.0


@dataclass
class Trajectory:
    """Uniform-grid record of observables.

    ``records[name]`` holds Tr(rho A) in the integration frame. ``parts[name]``
    keeps the block-diagonal, ground-excited and excited-ground contributions
    separately so lab-frame values can be rebuilt from rotating-frame data.
    """

    times: np.ndarray
    records: dict
    frame: str
    drive_frequency: float = 0.0
    parts: dict = field(default_factory=dict)
    states: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)


def _as_matrix(op) -> np.ndarray:
    return op.matrix if isinstance(op, OperatorRep) else np.asarray(op)


def _block_parts(op: np.ndarray, N: int):
    diag = np.zeros_like(op)
    diag[:N, :N] = op[:N, :N]
    diag[N:, N:] = op[N:, N:]
    upper = np.zeros_like(op)
    upper[:N, N:] = op[:N, N:]
    lower = np.zeros_like(op)
    lower[N:, :N] = op[N:, :N]
    return diag, upper, lower


def thermal_weights(n_v: float, N: int) -> tuple[np.ndarray, float]:
    """Normalised truncated Bose weights and the discarded tail weight."""
    if n_v == 0:
        w = np.zeros(N)
        w[0] = 1.0
        return w, 0.0
    q = n_v / (1.0 + n_v)
    w = (1 - q) * q ** np.arange(N)
    tail = q**N
    return w / w.sum(), tail


def initial_state(params: SystemParams) -> DensityMatrix:
    """Electronic ground state times a thermal vibron state at occupation n_v."""
    N = params.N
    w, tail = thermal_weights(params.n_v, N)
    if tail > 1e-8:
        warnings.warn(f"thermal tail beyond N={N} carries weight {tail:.2e}", stacklevel=2)
    rho = np.zeros((2 * N, 2 * N), dtype=complex)
    rho[np.arange(N), np.arange(N)] = w
    return DensityMatrix(rho, "rotating", 0.0)


def default_grid(t_end: float, grid_points: int) -> np.ndarray:
    return np.linspace(0.0, t_end, grid_points)


def evolve_density(rho0, generator: Generator, t_end: float, *,
                   grid_points: int = 4096, observables: Mapping | None = None,
                   rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL,
                   store_states: bool = False, positivity_checks: int = 32,
                   t_grid: np.ndarray | None = None) -> Trajectory:
    """Integrate the master equation and sample observables on a uniform grid.

    The integrator restarts exactly at every generator switch time. Trace,
    Hermiticity and the smallest eigenvalue of rho are monitored; a trace
    drift above 1e-6 aborts with NumericalAbort.
    """
    if t_end <= 0:
        raise ValueError("t_end must be positive")
    rho0 = rho0.matrix if isinstance(rho0, DensityMatrix) else np.asarray(rho0, dtype=complex)
    d = generator.dim
    if rho0.shape != (d, d):
        raise ValueError(f"state shape {rho0.shape} does not match generator dimension {d}")
    N = d // 2
    times = default_grid(t_end, grid_points) if t_grid is None else np.asarray(t_grid, float)
    observables = dict(observables or {})
    parts = {name: _block_parts(_as_matrix(op).astype(complex), N)
             for name, op in observables.items()}
    values = {name: np.zeros((3, times.size), dtype=complex) for name in parts}
    states = np.zeros((times.size, d, d), dtype=complex) if store_states else None
    check_idx = set(np.linspace(0, times.size - 1, min(positivity_checks, times.size)).astype(int))
    diag = {"max_trace_drift": 0.0, "max_hermiticity": 0.0, "min_eigenvalue": np.inf,
            "accepted_steps": 0, "rejected_steps": 0, "evaluations": 0}
    tr0 = np.trace(rho0).real

    def record(i, t, rho):
        drift = abs(np.trace(rho) - tr0)
        herm = float(np.abs(rho - rho.conj().T).max())
        diag["max_trace_drift"] = max(diag["max_trace_drift"], float(drift))
        diag["max_hermiticity"] = max(diag["max_hermiticity"], herm)
        if drift > TRACE_ABORT:
            raise NumericalAbort(f"trace drift {drift:.3e} at t={t:.6g}")
        if i in check_idx:
            ev = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0]
            diag["min_eigenvalue"] = min(diag["min_eigenvalue"], float(ev))
        for name, (pd, pu, pl) in parts.items():
            # Tr(rho A) = sum_ij rho_ij A_ji
            v = values[name]
            v[0, i] = np.sum(rho * pd.T)
            v[1, i] = np.sum(rho * pu.T)
            v[2, i] = np.sum(rho * pl.T)
        if states is not None:
            states[i] = rho

    def rhs(t, rho):
        return generator.apply(rho, t)

    # segment boundaries at generator switches
    edges = [0.0] + [s for s in generator.switch_times if 0.0 < s < times[-1]] + [times[-1]]
    rho, h = rho0.astype(complex), None
    for seg, (a, b) in enumerate(zip(edges[:-1], edges[1:])):
        mid = 0.5 * (a + b)
        frozen = _Frozen(generator, mid) if generator.switch_times else None
        f = frozen if frozen is not None else rhs
        last = seg == len(edges) - 2
        sel_idx = np.flatnonzero((times >= a) & ((times <= b) if last else (times < b)))
        out_t = times[sel_idx] if last else np.append(times[sel_idx], b)

        def on_output(j, t, y, _idx=sel_idx):
            if j < _idx.size:
                record(_idx[j], t, y)

        rho, h, stats = dopri5(f, a, rho, out_t, rtol=rtol, atol=atol, h0=h,
                               on_output=on_output)
        diag["accepted_steps"] += stats.accepted
        diag["rejected_steps"] += stats.rejected
        diag["evaluations"] += stats.evaluations
        log.debug("segment [%g, %g]: %d steps", a, b, stats.accepted)

    records = {name: v.sum(axis=0) for name, v in values.items()}
    return Trajectory(times, records, generator.frame, generator.drive_frequency,
                      parts=values, states=states, diagnostics=diag)


class _Frozen:
    """Generator evaluated with its piecewise-constant terms frozen at t_ref."""

    def __init__(self, generator: Generator, t_ref: float):
        self.generator = generator
        self.t_ref = t_ref

    def __call__(self, t, rho):
        out = None
        for term in self.generator.terms:
            # only jump terms carry a schedule; time enters other terms directly
            tt = self.t_ref if hasattr(term, "rate") else t
            d = term.apply(rho, tt)
            out = d if out is None else out + d
        return out


def evolve_pure(psi0, params: SystemParams, basis: EigenBasis, fc: FranckCondonTable,
                t_end: float, *, grid_points: int = 4096, observables: Mapping | None = None,
                rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL,
                store_states: bool = False) -> Trajectory:
    """Schrodinger propagation under the rotating-frame Hamiltonian."""
    psi0 = psi0.amplitudes if isinstance(psi0, StateVector) else np.asarray(psi0, dtype=complex)
    if abs(np.vdot(psi0, psi0) - 1) > 1e-8:
        raise ValueError("psi0 must be normalised")
    h = hamiltonian_rotating(params, basis, fc).matrix
    N = basis.N
    times = default_grid(t_end, grid_points)
    observables = dict(observables or {})
    parts = {name: _block_parts(_as_matrix(op).astype(complex), N)
             for name, op in observables.items()}
    values = {name: np.zeros((3, times.size), dtype=complex) for name in parts}
    states = np.zeros((times.size, 2 * N), dtype=complex) if store_states else None
    diag = {"max_norm_drift": 0.0}

    def record(i, t, psi):
        diag["max_norm_drift"] = max(diag["max_norm_drift"], abs(np.vdot(psi, psi).real - 1))
        for name, (pd, pu, pl) in parts.items():
            v = values[name]
            v[0, i] = np.vdot(psi, pd @ psi)
            v[1, i] = np.vdot(psi, pu @ psi)
            v[2, i] = np.vdot(psi, pl @ psi)
        if states is not None:
            states[i] = psi

    mh = -1j * h
    _, _, stats = dopri5(lambda t, y: mh @ y, 0.0, psi0.astype(complex), times,
                         rtol=rtol, atol=atol, on_output=record)
    diag.update(accepted_steps=stats.accepted, rejected_steps=stats.rejected)
    records = {name: v.sum(axis=0) for name, v in values.items()}
    return Trajectory(times, records, "rotating", params.omega_drive, parts=values,
                      states=states, diagnostics=diag)


def pure_ground_state(N: int) -> StateVector:
    psi = np.zeros(2 * N, dtype=complex)
    psi[0] = 1.0
    return StateVector(psi)


def standard_observables(basis: EigenBasis, fc: FranckCondonTable) -> dict:
    from .model import op_D, op_b, op_sigma
    return {"sigma": op_sigma(basis, fc), "D": op_D(basis), "b": op_b(basis)}


def simulate(params: SystemParams, t_end: float, *, mode: str = "lindblad",
             grid_points: int = 4096, cfg=None, frame: str = "rotating",
             rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL,
             store_states: bool = False):
    """Build basis, overlap table and generator for ``params`` and run them.

    Returns ``(trajectory, basis, fc)``; sigma, D and b are recorded.
    """
    from .liouvillian import assemble
    from .model import build_basis, model_fc_table
    basis = build_basis(params)
    fc = model_fc_table(params)
    obs = standard_observables(basis, fc)
    if mode == "lindblad":
        gen = assemble(params, basis, fc, cfg, frame=frame)
        traj = evolve_density(initial_state(params), gen, t_end, grid_points=grid_points,
                              observables=obs, rtol=rtol, atol=atol, store_states=store_states)
    elif mode == "pure":
        if params.n_v != 0:
            raise ValueError("pure-state propagation needs n_v = 0")
        traj = evolve_pure(pure_ground_state(params.N), params, basis, fc, t_end,
                           grid_points=grid_points, observables=obs, rtol=rtol, atol=atol,
                           store_states=store_states)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return traj, basis, fc


@dataclass
class ConvergenceReport:
    N_list: list
    max_abs_diff: list      # max_t |sigma_N - sigma_Nmax|
    successive: list        # max_t |sigma_N - sigma_prev| / max_t |sigma_Nmax|, from the second entry
    tolerance: float
    converged: bool
    N_converged: int | None


def converge_in_truncation(params: SystemParams, N_list, t_end: float, *,
                           mode: str = "lindblad", grid_points: int = 1024, cfg=None,
                           tolerance: float = 1e-4) -> ConvergenceReport:
    """Repeat a run over increasing truncations and compare sigma(t).

    Successive differences are measured relative to the peak |sigma| of the
    largest run; the first N whose difference to its predecessor drops below
    ``tolerance`` is reported as converged.
    """
    N_list = [int(n) for n in N_list]
    if any(b <= a for a, b in zip(N_list[:-1], N_list[1:])):
        raise ValueError("N_list must be increasing")
    series = []
    for n in N_list:
        traj, _, _ = simulate(params.with_(N=n), t_end, mode=mode, grid_points=grid_points, cfg=cfg)
        series.append(traj.records["sigma"])
    ref = series[-1]
    scale = float(np.abs(ref).max()) or 1.0
    diffs = [float(np.abs(s - ref).max()) for s in series]
    succ = [float(np.abs(b - a).max()) / scale for a, b in zip(series[:-1], series[1:])]
    n_conv = next((N_list[i + 1] for i, d in enumerate(succ) if d < tolerance), None)
    return ConvergenceReport(N_list, diffs, succ, tolerance, n_conv is not None, n_conv)
