"""Brute-force reference computations.

Nothing here reuses the operator assembly of ``model``/``liouvillian``: the
bare Hamiltonian is rebuilt from scratch, and the element equations are
written out one matrix element at a time.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .fockbasis import FranckCondonTable
from .model import SystemParams

MAX_EXPM_N = 5


@dataclass(frozen=True)
class BareSpectrum:
    ground: np.ndarray          # sorted eigenvalues of the ground manifold
    excited: np.ndarray         # sorted eigenvalues of the excited manifold
    ground_vectors: np.ndarray  # columns: eigenvectors in the bare vibron basis
    excited_vectors: np.ndarray


def diag_bare(params: SystemParams, N: int) -> BareSpectrum:
    """Dense diagonalisation of the undriven molecular Hamiltonian.

    The Hamiltonian is block diagonal in the electronic state, so the two
    manifolds are diagonalised separately.
    """
    if N > 200:
        raise ValueError("dense diagonalisation limited to N <= 200")
    n = np.arange(N, dtype=float)
    hg = np.diag(params.omega_v * n)
    off = params.g * np.sqrt(n[1:])
    he = np.diag(params.omega_sigma + params.omega_v * n) + np.diag(off, 1) + np.diag(off, -1)
    eg, vg = np.linalg.eigh(hg)
    ee, ve = np.linalg.eigh(he)
    return BareSpectrum(eg, ee, vg, ve)


def element_ode_rhs(rho: np.ndarray, params: SystemParams, fc: FranckCondonTable, t: float,
                    *, origin: float | None = None, as_printed: bool = False) -> np.ndarray:
    """Right-hand side of the lab-frame element equations, one element at a time.

    The decay feeding and pump sums run over all pairs unrestricted (a single
    collective jump operator). With ``as_printed=False`` three corrections are
    made so the equations follow from the commutator with the Hamiltonian:
    the intra-manifold Bohr terms carry -i, the drive enters as -i Omega/2, and
    the ground-excited frequency uses the polaron-shifted origin instead of
    omega_sigma. ``as_printed=True`` keeps the printed signs, the printed drive
    prefactor and omega_sigma.
    """
    N = fc.dim
    F = np.asarray(fc.entries)
    wv, W = params.omega_v, params.Omega
    w = params.omega_drive
    gD, gdeph, gv, nv = params.gamma_D, params.gamma_deph, params.gamma_v, params.n_v
    gp = params.pump.rate(t)
    if as_printed:
        w_eg = params.omega_sigma
        bohr = 1j          # printed: +i w_v (n1 - n2)
        drive = 1j * W     # printed: +i Omega
    else:
        w_eg = origin if origin is not None else params.omega_sigma - params.g**2 / wv
        bohr = -1j
        drive = -0.5j * W
    ep, em = np.exp(1j * w * t), np.exp(-1j * w * t)

    gg = lambda a, b: rho[a, b] if 0 <= a < N and 0 <= b < N else 0.0
    ee = lambda a, b: rho[N + a, N + b] if 0 <= a < N and 0 <= b < N else 0.0
    ge = lambda a, b: rho[a, N + b]
    eg = lambda a, b: rho[N + a, b]

    out = np.zeros_like(rho, dtype=complex)

    for m1 in range(N):
        for m2 in range(N):
            v = bohr * wv * (m1 - m2) * ee(m1, m2)
            v += drive * em * sum(F[n1, m1] * ge(n1, m2) for n1 in range(N))
            v += -drive * ep * sum(F[n2, m2] * eg(m1, n2) for n2 in range(N))
            v += -gD * ee(m1, m2)
            v += gp * sum(F[n1, m1] * F[n2, m2] * gg(n1, n2)
                          for n1 in range(N) for n2 in range(N))
            v += gv * (nv + 1) / 2 * (2 * np.sqrt((m1 + 1) * (m2 + 1)) * ee(m1 + 1, m2 + 1)
                                      - (m1 + m2) * ee(m1, m2))
            v += gv * nv / 2 * (2 * np.sqrt(m1 * m2) * ee(m1 - 1, m2 - 1)
                                - (m1 + m2 + 2) * ee(m1, m2))
            out[N + m1, N + m2] = v

    for n in range(N):
        for m in range(N):
            v = 1j * w_eg * ge(n, m) + 1j * wv * (m - n) * ge(n, m)
            v += drive * ep * sum(F[n, m1] * ee(m1, m) for m1 in range(N))
            v += -drive * ep * sum(F[n2, m] * gg(n, n2) for n2 in range(N))
            v += -(gp + gD + gdeph) / 2 * ge(n, m)
            out[n, N + m] = v

            v = -1j * w_eg * eg(m, n) + 1j * wv * (n - m) * eg(m, n)
            v += drive * em * sum(F[n1, m] * gg(n1, n) for n1 in range(N))
            v += -drive * em * sum(F[n, m2] * ee(m, m2) for m2 in range(N))
            v += -(gp + gD + gdeph) / 2 * eg(m, n)
            out[N + m, n] = v

    for n1 in range(N):
        for n2 in range(N):
            v = bohr * wv * (n1 - n2) * gg(n1, n2)
            v += drive * ep * sum(F[n1, m1] * eg(m1, n2) for m1 in range(N))
            v += -drive * em * sum(F[n2, m2] * ge(n1, m2) for m2 in range(N))
            v += -gp * gg(n1, n2)
            v += gD * sum(F[n1, m1] * F[n2, m2] * ee(m1, m2)
                          for m1 in range(N) for m2 in range(N))
            v += gv * (nv + 1) / 2 * (2 * np.sqrt((n1 + 1) * (n2 + 1)) * gg(n1 + 1, n2 + 1)
                                      - (n1 + n2) * gg(n1, n2))
            v += gv * nv / 2 * (2 * np.sqrt(n1 * n2) * gg(n1 - 1, n2 - 1)
                                - (n1 + n2 + 2) * gg(n1, n2))
            out[n1, n2] = v
    return out


def expm_propagate(rho0: np.ndarray, generator, t: float) -> np.ndarray:
    """Propagate by dense exponentials of the vectorised generator.

    Piecewise-constant generators are exponentiated segment by segment.
    """
    rho0 = np.asarray(getattr(rho0, "matrix", rho0), dtype=complex)
    d = rho0.shape[0]
    if d > 2 * MAX_EXPM_N:
        raise ValueError(f"expm oracle limited to N <= {MAX_EXPM_N}")
    if generator.frame == "lab" and generator.time_dependent and not generator.switch_times:
        raise ValueError("expm oracle needs a piecewise-constant generator")
    edges = [0.0] + [s for s in generator.switch_times if 0 < s < t] + [t]
    vec = rho0.reshape(-1)
    for a, b in zip(edges[:-1], edges[1:]):
        L = generator.superoperator(0.5 * (a + b))
        vec = scipy.linalg.expm((b - a) * L) @ vec
    return vec.reshape(d, d)
