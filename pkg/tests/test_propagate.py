import math

import numpy as np
import pytest

from vibrodyn.liouvillian import DissipatorConfig, assemble
from vibrodyn.model import PumpSchedule, SystemParams, build_basis, model_fc_table, op_D
from vibrodyn.propagate import (converge_in_truncation, evolve_density, initial_state, simulate,
                                thermal_weights)

QUIET = dict(gamma_D=0.0, gamma_deph=0.0, gamma_v=0.0)


def test_initial_state_is_thermal_ground():
    p = SystemParams(N=40, n_v=1.0)
    rho = initial_state(p).matrix
    assert np.trace(rho).real == pytest.approx(1.0)
    pops = np.diag(rho).real
    assert np.all(pops[40:] == 0)
    assert np.dot(np.arange(40), pops[:40]) == pytest.approx(1.0, rel=1e-9)


def test_truncated_thermal_tail_is_reported():
    _, tail = thermal_weights(1.0, 12)
    assert tail == pytest.approx(0.5**12, rel=1e-12)
    with pytest.warns(UserWarning, match="thermal tail"):
        initial_state(SystemParams(N=12, n_v=1.0))


def test_D_starts_at_minus_one():
    traj, _, _ = simulate(SystemParams(g=0.025, N=8), 10.0, grid_points=11)
    assert traj.records["D"][0].real == pytest.approx(-1.0, abs=1e-15)


def test_zero_generator_keeps_state():
    p = SystemParams(N=2, Omega=0.0, **QUIET)
    basis = build_basis(p)
    gen = assemble(p, basis, model_fc_table(p))
    traj = evolve_density(initial_state(p), gen, 50.0, grid_points=6,
                          observables={"D": op_D(basis)}, store_states=True)
    assert np.abs(traj.states - traj.states[0]).max() < 1e-14


@pytest.mark.parametrize("mode", ["lindblad", "pure"])
def test_resonant_rabi_oscillation(mode):
    # two-level limit: D(t) = -cos(Omega t)
    p = SystemParams(N=1, g=0.0, Omega=0.01, omega_drive=2.4, **QUIET)
    traj, _, _ = simulate(p, 1000.0, mode=mode, grid_points=201)
    assert np.abs(traj.records["D"].real + np.cos(0.01 * traj.times)).max() < 1e-7


def test_pure_state_norm_conserved():
    traj, _, _ = simulate(SystemParams(g=0.025, N=22), 300.0, mode="pure", grid_points=64)
    assert traj.diagnostics["max_norm_drift"] < 1e-9


def test_pure_mode_needs_zero_temperature():
    with pytest.raises(ValueError):
        simulate(SystemParams(n_v=0.1, N=4), 1.0, mode="pure")


def test_lindblad_diagnostics_stay_physical():
    p = SystemParams(g=0.025, N=14, n_v=0.2, pump=PumpSchedule(1e-2, 30.0, "rectangular"))
    traj, _, _ = simulate(p, 100.0, grid_points=101)
    d = traj.diagnostics
    assert d["max_trace_drift"] < 1e-10
    assert d["min_eigenvalue"] > -1e-9


def test_pump_switch_lands_on_grid():
    # D must turn at t0 exactly: rising before, falling after
    p = SystemParams(g=0.0, N=1, Omega=0.0, pump=PumpSchedule(1e-2, 50.0, "rectangular"))
    traj, _, _ = simulate(p, 100.0, grid_points=101)
    D = traj.records["D"].real
    assert np.all(np.diff(D[:51]) > 0) and np.all(np.diff(D[50:]) < 0)
    # pump (rate P) against decay (rate G): D relaxes to (P - G)/(P + G)
    P, G = 1e-2, 1e-3
    expect = (P - G) / (P + G) + (-1 - (P - G) / (P + G)) * math.exp(-(P + G) * 50)
    assert D[50] == pytest.approx(expect, rel=1e-7)


def test_truncation_convergence_harder_with_larger_coupling():
    base = dict(N_list=[8, 12, 16, 20, 24], t_end=150.0, mode="pure", grid_points=256)
    weak = converge_in_truncation(SystemParams(g=0.025), **base)
    strong = converge_in_truncation(SystemParams(g=0.05), **base)
    assert weak.converged
    assert weak.N_converged < (strong.N_converged or 10**6)
    assert weak.successive == sorted(weak.successive, reverse=True)


def test_convergence_needs_increasing_list():
    with pytest.raises(ValueError):
        converge_in_truncation(SystemParams(), [10, 8], 1.0)


def test_frames_agree():
    p = SystemParams(g=0.025, N=6)
    rot, _, _ = simulate(p, 200.0, grid_points=101)
    lab, _, _ = simulate(p, 200.0, grid_points=101, frame="lab")
    from vibrodyn.observables import expval
    assert np.abs(expval(rot, "sigma", lab=True) - lab.records["sigma"]).max() < 1e-8


def test_collective_grouping_runs():
    p = SystemParams(g=0.025, N=6)
    traj, _, _ = simulate(p, 50.0, grid_points=11, cfg=DissipatorConfig(decay_grouping="collective"))
    assert np.isfinite(traj.records["sigma"]).all()
