"""Small-N oracle and invariant checks behind ``vibrodyn validate``."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .fockbasis import build_fc_table
from .liouvillian import DissipatorConfig, assemble
from .model import PumpSchedule, SystemParams, build_basis, model_fc_table, op_D, op_sigma
from .observables import expval
from .oracle import diag_bare, element_ode_rhs, expm_propagate
from .propagate import evolve_density, initial_state


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str


def _random_density(rng, d):
    x = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    r = x @ x.conj().T
    return r / np.trace(r).real


def check_fc_against_displacement() -> Check:
    N, alpha = 40, 1.0
    b = np.diag(np.sqrt(np.arange(1, N + 10)), 1)
    D = scipy.linalg.expm(alpha * (b.T - b))[:N, :N]
    err = float(np.abs(build_fc_table(N, alpha).entries[:20, :20] - D[:20, :20]).max())
    return Check("overlaps vs exp(alpha(b+ - b))", err < 1e-12, f"max diff {err:.2e}")


def check_bare_spectrum() -> Check:
    s = diag_bare(SystemParams(g=0.025), 60)
    origin_err = abs(s.excited[0] - 2.375)
    spacing = float(np.abs(np.diff(s.excited[:20]) - 0.025).max())
    ok = origin_err < 1e-6 and spacing < 1e-8
    return Check("bare diagonalisation", ok, f"origin err {origin_err:.1e}, spacing err {spacing:.1e}")


def check_element_equations(samples: int = 20) -> Check:
    rng = np.random.default_rng(7)
    p = SystemParams(g=0.025, N=4, Omega=0.01, pump=PumpSchedule(2e-3, 0.0, "constant"))
    basis, fc = build_basis(p), model_fc_table(p)
    gen = assemble(p, basis, fc, DissipatorConfig(decay_grouping="collective"), frame="lab")
    worst = 0.0
    for _ in range(samples):
        rho = _random_density(rng, basis.dim)
        t = rng.uniform(0, 100)
        worst = max(worst, float(np.abs(gen.apply(rho, t) - element_ode_rhs(rho, p, fc, t)).max()))
    return Check("generator vs element equations", worst < 1e-12, f"max diff {worst:.2e}")


def check_expm(t_end: float = 50.0) -> Check:
    p = SystemParams(g=0.025, N=5)
    basis, fc = build_basis(p), model_fc_table(p)
    gen = assemble(p, basis, fc)
    rho0 = initial_state(p)
    grid = np.linspace(0, t_end, 11)
    tr = evolve_density(rho0, gen, t_end, t_grid=grid, store_states=True)
    err = max(float(np.abs(tr.states[i] - expm_propagate(rho0, gen, t)).max())
              for i, t in enumerate(grid))
    return Check("adaptive vs dense exponential", err < 1e-7, f"max diff {err:.2e}")


def check_cptp() -> Check:
    p = SystemParams(g=0.025, N=8, pump=PumpSchedule(1e-2, 30.0, "rectangular"))
    basis, fc = build_basis(p), model_fc_table(p)
    tr = evolve_density(initial_state(p), assemble(p, basis, fc), 120.0, grid_points=121)
    d = tr.diagnostics
    ok = d["max_trace_drift"] < 1e-8 and d["max_hermiticity"] < 1e-9 and d["min_eigenvalue"] > -1e-6
    return Check("trace, hermiticity, positivity", ok,
                 f"drift {d['max_trace_drift']:.1e}, herm {d['max_hermiticity']:.1e}, "
                 f"min eig {d['min_eigenvalue']:.1e}")


def check_frames() -> Check:
    p = SystemParams(g=0.0125, N=8)
    basis, fc = build_basis(p), model_fc_table(p)
    obs = {"sigma": op_sigma(basis, fc)}
    kw = dict(grid_points=101, observables=obs, rtol=1e-10, atol=1e-14)
    lab = evolve_density(initial_state(p), assemble(p, basis, fc, frame="lab"), 10.0, **kw)
    rot = evolve_density(initial_state(p), assemble(p, basis, fc), 10.0, **kw)
    err = float(np.abs(expval(lab, "sigma") - expval(rot, "sigma", lab=True)).max())
    return Check("lab vs rotating frame", err < 1e-6, f"max diff {err:.2e}")


def check_grouping_populations() -> Check:
    p = SystemParams(g=0.025, N=8, Omega=0.0)
    basis, fc = build_basis(p), model_fc_table(p)
    rho0 = np.zeros((basis.dim, basis.dim), dtype=complex)
    rho0[basis.N + 1, basis.N + 1] = 0.6
    rho0[basis.N, basis.N] = 0.4
    pops = []
    for grouping in ("secular", "collective"):
        gen = assemble(p, basis, fc, DissipatorConfig(decay_grouping=grouping))
        tr = evolve_density(rho0, gen, 300.0, grid_points=31, store_states=True,
                            rtol=1e-11, atol=1e-15)
        pops.append(np.real(np.einsum("tii->ti", tr.states)))
    err = float(np.abs(pops[0] - pops[1]).max())
    return Check("secular vs collective populations", err < 1e-10, f"max diff {err:.2e}")


def check_decay_only() -> Check:
    p = SystemParams(g=0.0, N=1, Omega=0.0, gamma_deph=0.0, gamma_v=0.0)
    basis, fc = build_basis(p), model_fc_table(p)
    rho0 = np.diag([0.0, 1.0]).astype(complex)
    tr = evolve_density(rho0, assemble(p, basis, fc), 500.0, grid_points=11,
                        observables={"D": op_D(basis)})
    exact = 2 * np.exp(-p.gamma_D * tr.times) - 1
    err = float(np.abs(tr.records["D"].real - exact).max())
    return Check("exciton decay", err < 1e-7, f"max diff {err:.2e}")


CHECKS = (check_fc_against_displacement, check_bare_spectrum, check_element_equations,
          check_expm, check_cptp, check_frames, check_grouping_populations, check_decay_only)


def run_checks() -> list[Check]:
    out = []
    for fn in CHECKS:
        try:
            out.append(fn())
        except Exception as exc:
            out.append(Check(fn.__name__, False, f"raised {type(exc).__name__}: {exc}"))
    return out
