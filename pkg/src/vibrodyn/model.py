"""System parameters, the polaron eigenbasis and operators expressed in it.

Units: hbar = 1, energies in eV, times in hbar/eV (1 hbar/eV = 0.6582 fs).

Basis ordering is ``[(g, 0) .. (g, N-1), (e, 0) .. (e, N-1)]``. The excited
states are displaced number states of the shifted vibron ``b + alpha s^+ s``
with the phase convention

    |g, n>  =  (-1)^n |g>|n>
    |e, m>  =  |e> P D(alpha) |m>,      P = (-1)^(b^+ b)

which is the choice for which ``<g, n| s |e, m>`` equals the tabulated overlap
``<n|D(alpha)|m>`` exactly. The zero-point energy omega_v/2 is dropped from
both manifolds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .fockbasis import FranckCondonTable, build_fc_table

HBAR_EV_FS = 0.6582119569  # hbar in eV*fs
K_B_EV = 8.617333262e-5    # Boltzmann constant in eV/K

PUMP_SHAPES = ("off", "constant", "rectangular")


@dataclass(frozen=True)
class PumpSchedule:
    """Incoherent pump rate: off, constant, or gamma_p0 on [0, t0] then 0."""

    gamma_p0: float = 0.0
    t0: float = 0.0
    shape: str = "off"

    def __post_init__(self):
        if self.shape not in PUMP_SHAPES:
            raise ValueError(f"unknown pump shape {self.shape!r}")
        if self.gamma_p0 < 0:
            raise ValueError("pump rate must be non-negative")

    def rate(self, t: float) -> float:
        if self.shape == "off":
            return 0.0
        if self.shape == "constant":
            return self.gamma_p0
        return self.gamma_p0 if 0.0 <= t <= self.t0 else 0.0

    @property
    def switch_times(self) -> tuple[float, ...]:
        if self.shape == "rectangular" and self.gamma_p0 > 0:
            return (self.t0,)
        return ()


@dataclass(frozen=True)
class SystemParams:
    omega_sigma: float = 2.4
    omega_v: float = 0.025
    g: float = 0.0
    Omega: float = 1e-3
    omega_drive: float = 1.5
    gamma_D: float = 1e-3
    gamma_deph: float = 5e-3
    gamma_v: float = 2e-4
    n_v: float = 0.0
    pump: PumpSchedule = field(default_factory=PumpSchedule)
    N: int = 20
    # reproduce the printed excited-manifold origin omega_sigma*(1 - alpha^2)
    printed_origin: bool = False

    def __post_init__(self):
        rates = (self.gamma_D, self.gamma_deph, self.gamma_v, self.n_v)
        if min(rates) < 0:
            raise ValueError("rates and n_v must be non-negative")
        if self.omega_v <= 0:
            raise ValueError("omega_v must be positive")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError("N must be a positive integer")

    @property
    def alpha(self) -> float:
        return self.g / self.omega_v

    def with_(self, **changes) -> "SystemParams":
        return replace(self, **changes)


def occupation_from_temperature(omega_v: float, temperature_K: float) -> float:
    """Bose occupation 1/(exp(omega_v/kT) - 1) of the vibron bath."""
    if temperature_K <= 0:
        return 0.0
    return 1.0 / math.expm1(omega_v / (K_B_EV * temperature_K))


@dataclass(frozen=True)
class EigenBasis:
    N: int
    alpha: float
    omega_v: float
    electronic_origin: float
    labels: tuple
    energies: np.ndarray

    @property
    def dim(self) -> int:
        return 2 * self.N

    @property
    def excited(self) -> np.ndarray:
        """Boolean mask of excited-manifold states."""
        return np.arange(2 * self.N) >= self.N

    def vibron_index(self) -> np.ndarray:
        return np.tile(np.arange(self.N), 2)


@dataclass(frozen=True)
class OperatorRep:
    matrix: np.ndarray
    name: str = ""

    def dag(self) -> "OperatorRep":
        return OperatorRep(self.matrix.conj().T, self.name + "^+")


def build_basis(params: SystemParams) -> EigenBasis:
    N, wv = params.N, params.omega_v
    alpha = params.alpha
    if params.printed_origin:
        origin = params.omega_sigma * (1.0 - alpha**2)
    else:
        origin = params.omega_sigma - params.g**2 / wv
    n = np.arange(N, dtype=float)
    energies = np.concatenate([wv * n, origin + wv * n])
    energies.setflags(write=False)
    labels = tuple(("g", k) for k in range(N)) + tuple(("e", k) for k in range(N))
    return EigenBasis(N, alpha, wv, origin, labels, energies)


def model_fc_table(params: SystemParams) -> FranckCondonTable:
    """Closed (orthogonal) overlap table used to assemble the dynamics."""
    return build_fc_table(params.N, params.alpha).closed()


def _check(basis: EigenBasis, fc: FranckCondonTable):
    if fc.dim != basis.N:
        raise ValueError(f"FC table dimension {fc.dim} != basis N {basis.N}")
    if not math.isclose(fc.alpha, basis.alpha, rel_tol=1e-12, abs_tol=1e-15):
        raise ValueError(f"FC table alpha {fc.alpha} != basis alpha {basis.alpha}")


def op_sigma(basis: EigenBasis, fc: FranckCondonTable) -> OperatorRep:
    """Exciton lowering operator, ``sum <n|m_alpha> |g,n><e,m|``."""
    _check(basis, fc)
    N = basis.N
    mat = np.zeros((2 * N, 2 * N), dtype=complex)
    mat[:N, N:] = fc.entries
    return OperatorRep(mat, "sigma")


def op_D(basis: EigenBasis) -> OperatorRep:
    return OperatorRep(np.diag(np.where(basis.excited, 1.0, -1.0)).astype(complex), "D")


def op_number_vibron(basis: EigenBasis) -> OperatorRep:
    """Bare vibron number b^+ b."""
    b = op_b(basis).matrix
    return OperatorRep(b.conj().T @ b, "b^+b")


def _ladder(N: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, N, dtype=float)), 1)


def op_b(basis: EigenBasis) -> OperatorRep:
    """Bare vibron annihilation ``b = b~ - alpha s^+ s``.

    In the phase convention of this basis the ladder enters with a minus sign
    in both manifolds; expectation values are unaffected.
    """
    N = basis.N
    mat = np.zeros((2 * N, 2 * N), dtype=complex)
    lad = _ladder(N)
    mat[:N, :N] = -lad
    mat[N:, N:] = -lad - basis.alpha * np.eye(N)
    return OperatorRep(mat, "b")


def hamiltonian_rotating(params: SystemParams, basis: EigenBasis,
                         fc: FranckCondonTable) -> OperatorRep:
    """Driven Hamiltonian in the frame rotating at the drive frequency."""
    shift = np.where(basis.excited, params.omega_drive, 0.0)
    s = op_sigma(basis, fc).matrix
    h = np.diag(basis.energies - shift).astype(complex)
    h += 0.5 * params.Omega * (s + s.conj().T)
    return OperatorRep(h, "H_rot")


def hamiltonian_bare(params: SystemParams, N: int | None = None) -> OperatorRep:
    """Undriven molecular Hamiltonian in the product basis ``|g/e> x |n>``."""
    N = params.N if N is None else N
    n = np.arange(N, dtype=float)
    b = _ladder(N)
    h = np.zeros((2 * N, 2 * N))
    h[:N, :N] = np.diag(params.omega_v * n)
    h[N:, N:] = (np.diag(params.omega_sigma + params.omega_v * n)
                 + params.g * (b + b.T))
    return OperatorRep(h.astype(complex), "H_mol")


def eigenbasis_in_bare(basis: EigenBasis, fc: FranckCondonTable) -> np.ndarray:
    """Columns are the eigenbasis kets written in the bare product basis."""
    _check(basis, fc)
    N = basis.N
    parity = (-1.0) ** np.arange(N)
    u = np.zeros((2 * N, 2 * N))
    u[:N, :N] = np.diag(parity)
    u[N:, N:] = parity[:, None] * fc.entries
    return u
