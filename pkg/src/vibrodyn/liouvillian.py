"""Lindblad generator in the polaron eigenbasis.

The generator is kept as a list of terms, each able to act on a density
matrix directly (the fast path used by the integrator) and to produce its
dense superoperator (used by the exponential oracle and spectral checks).
Superoperators act on row-major vectorised density matrices, for which
``vec(A X B) = kron(A, B.T) vec(X)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .fockbasis import FranckCondonTable
from .model import EigenBasis, SystemParams, op_D, op_sigma

ALL_TERMS = frozenset({"decay", "pump", "dephasing", "vibron"})


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class DissipatorConfig:
    decay_grouping: str = "secular"       # or "collective"
    grouping_tol: float = 1e-9            # eV
    include: frozenset = ALL_TERMS
    # Damp ground-excited coherences through the vibron channel as a plain
    # Lindblad dissipator would. Off by default: the element equations leave
    # those coherences untouched by gamma_v.
    vibron_coherence_damping: bool = False

    def __post_init__(self):
        if self.decay_grouping not in ("secular", "collective"):
            raise ConfigurationError(f"unknown decay grouping {self.decay_grouping!r}")
        unknown = set(self.include) - ALL_TERMS
        if unknown:
            raise ConfigurationError(f"unknown dissipator terms {sorted(unknown)}")
        if self.grouping_tol <= 0:
            raise ConfigurationError("grouping_tol must be positive")


def _eye(n):
    return np.eye(n, dtype=complex)


def _dissipator_super(a: np.ndarray, rate: float) -> np.ndarray:
    n = a.shape[0]
    ada = a.conj().T @ a
    return rate * (np.kron(a, a.conj()) - 0.5 * np.kron(ada, _eye(n))
                   - 0.5 * np.kron(_eye(n), ada.T))


class HamiltonianTerm:
    """``-i[H(t), rho]`` with ``H = diag(E) + C e^{i w t} + C^+ e^{-i w t}``."""

    def __init__(self, energies: np.ndarray, coupling: np.ndarray, drive_frequency: float):
        self.energies = np.asarray(energies, dtype=float)
        self.coupling = np.asarray(coupling, dtype=complex)
        self.drive_frequency = float(drive_frequency)
        self._bohr = -1j * (self.energies[:, None] - self.energies[None, :])

    def hamiltonian(self, t: float) -> np.ndarray:
        ph = np.exp(1j * self.drive_frequency * t)
        c = self.coupling * ph
        return np.diag(self.energies).astype(complex) + c + c.conj().T

    def apply(self, rho: np.ndarray, t: float) -> np.ndarray:
        ph = np.exp(1j * self.drive_frequency * t)
        c = self.coupling * ph
        v = c + c.conj().T
        return self._bohr * rho - 1j * (v @ rho - rho @ v)

    def superoperator(self, t: float) -> np.ndarray:
        h = self.hamiltonian(t)
        n = h.shape[0]
        return -1j * (np.kron(h, _eye(n)) - np.kron(_eye(n), h.T))


class DephasingTerm:
    """``(gamma/4)(D rho D - rho)``: damps ground-excited coherences at gamma/2."""

    def __init__(self, basis: EigenBasis, gamma: float):
        self.gamma = gamma
        self.D = op_D(basis).matrix
        exc = basis.excited
        self._mask = -(gamma / 2) * (exc[:, None] != exc[None, :])

    def apply(self, rho, t):
        return self._mask * rho

    def superoperator(self, t):
        n = self.D.shape[0]
        return (self.gamma / 4) * (np.kron(self.D, self.D.conj()) - np.kron(_eye(n), _eye(n)))


class VibronTerm:
    """Thermal ladder dissipators acting inside the ground and excited blocks.

    The bare ladder b acts on rho_gg and the shifted ladder b~ on rho_ee, at
    rates gamma_v (1 + n_v) down and gamma_v n_v up. Unless
    ``coherence_damping`` is set the anticommutators are restricted to their
    own block, leaving rho_ge unchanged.
    """

    def __init__(self, basis: EigenBasis, gamma_v: float, n_v: float,
                 coherence_damping: bool = False):
        N = basis.N
        self.N = N
        self.down = gamma_v * (1 + n_v)
        self.up = gamma_v * n_v
        self.coherence_damping = coherence_damping
        sq = np.sqrt(np.arange(1, N, dtype=float))
        self._feed = np.outer(sq, sq)
        n = np.arange(N, dtype=float)
        bbdag = np.append(n[1:], 0.0)       # b b^+ of the truncated ladder
        k = self.down * n + self.up * bbdag
        self._k = k
        half = -0.5 * (k[:, None] + k[None, :])
        rates = np.zeros((2 * N, 2 * N))
        rates[:N, :N] = half
        rates[N:, N:] = half
        if coherence_damping:
            rates[:N, N:] = half
            rates[N:, :N] = half
        self._rates = rates

    def _block_feed(self, x, out):
        if self.N == 1:
            return
        out[:-1, :-1] += self.down * self._feed * x[1:, 1:]
        out[1:, 1:] += self.up * self._feed * x[:-1, :-1]

    def apply(self, rho, t):
        N = self.N
        out = self._rates * rho
        self._block_feed(rho[:N, :N], out[:N, :N])
        self._block_feed(rho[N:, N:], out[N:, N:])
        return out

    def superoperator(self, t):
        N = self.N
        lad = np.diag(np.sqrt(np.arange(1, N, dtype=float)), 1)
        total = np.zeros(((2 * N) ** 2,) * 2, dtype=complex)
        for block in (slice(0, N), slice(N, 2 * N)):
            proj = np.zeros((2 * N, 2 * N), dtype=complex)
            proj[block, block] = np.eye(N)
            for rate, j in ((self.down, lad), (self.up, lad.T)):
                if rate == 0:
                    continue
                a = np.zeros((2 * N, 2 * N), dtype=complex)
                a[block, block] = j
                if self.coherence_damping:
                    total += _dissipator_super(a, rate)
                    continue
                ada = a.conj().T @ a
                total += rate * (np.kron(a, a.conj())
                                 - 0.5 * np.kron(ada, proj.T)
                                 - 0.5 * np.kron(proj, ada.T))
        return total


def group_transitions(basis: EigenBasis, tol: float) -> list[list[tuple[int, int]]]:
    """Cluster (n, m) pairs of |g,n> <- |e,m> transitions by equal frequency.

    Raises ConfigurationError when one cluster mixes different m - n.
    """
    N = basis.N
    eg, ee = basis.energies[:N], basis.energies[N:]
    pairs = [(n, m) for n in range(N) for m in range(N)]
    freqs = np.array([ee[m] - eg[n] for n, m in pairs])
    order = np.argsort(freqs, kind="stable")
    clusters, current, last = [], [], None
    for i in order:
        if last is not None and freqs[i] - last > tol:
            clusters.append(current)
            current = []
        current.append(pairs[i])
        last = freqs[i]
    clusters.append(current)
    for c in clusters:
        if len({m - n for n, m in c}) > 1:
            raise ConfigurationError(
                f"transition frequencies within grouping_tol={tol} eV come from "
                "different vibron changes; reduce grouping_tol")
    return clusters


def _secular_map(fc: np.ndarray, clusters) -> sp.csr_matrix:
    """Sparse map vec(rho_ee) -> vec(sum_c A_c rho_ee A_c^+) on the ground block."""
    N = fc.shape[0]
    rows, cols, vals = [], [], []
    for c in clusters:
        n = np.array([p[0] for p in c])
        m = np.array([p[1] for p in c])
        w = fc[n, m]
        rows.append((n[:, None] * N + n[None, :]).ravel())
        cols.append((m[:, None] * N + m[None, :]).ravel())
        vals.append((w[:, None] * w[None, :]).ravel())
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(N * N, N * N))


class ExcitonJumpTerm:
    """Exciton decay (e -> g) or incoherent pump (g -> e) between eigenstates.

    ``grouping="secular"`` uses one jump operator per transition frequency,
    ``"collective"`` the single operator sigma (or sigma^+ for the pump).
    """

    def __init__(self, basis: EigenBasis, fc: FranckCondonTable, rate: Callable[[float], float],
                 kind: str, grouping: str, grouping_tol: float):
        if kind not in ("decay", "pump"):
            raise ValueError(kind)
        self.N = basis.N
        self.kind = kind
        self.grouping = grouping
        self.rate = rate
        F = np.asarray(fc.entries, dtype=float)
        self.F = F
        self._sigma = op_sigma(basis, fc).matrix
        if grouping == "secular":
            self.clusters = group_transitions(basis, grouping_tol)
            self._map = _secular_map(F, self.clusters)
            if kind == "pump":
                self._map = self._map.T.tocsr()
            # sum_c A_c^+ A_c is diagonal: column (decay) or row (pump) norms
            k = np.sum(F**2, axis=0 if kind == "decay" else 1)
            self._k = k
        else:
            self.clusters = None
            k = F.T @ F if kind == "decay" else F @ F.T
            off = k - np.diag(np.diag(k))
            self._k = np.diag(k).copy() if np.abs(off).max(initial=0) < 1e-14 else k
        N = self.N
        self._src = slice(N, 2 * N) if kind == "decay" else slice(0, N)
        self._dst = slice(0, N) if kind == "decay" else slice(N, 2 * N)

    def apply(self, rho, t):
        gamma = self.rate(t)
        out = np.zeros_like(rho)
        if gamma == 0.0:
            return out
        N, src, dst = self.N, self._src, self._dst
        block = rho[src, src]
        if self.grouping == "secular":
            out[dst, dst] = (self._map @ block.reshape(-1)).reshape(N, N)
        elif self.kind == "decay":
            out[dst, dst] = self.F @ block @ self.F.T
        else:
            out[dst, dst] = self.F.T @ block @ self.F
        k = self._k
        if k.ndim == 1:
            out[src, :] -= 0.5 * k[:, None] * rho[src, :]
            out[:, src] -= 0.5 * rho[:, src] * k[None, :]
        else:
            out[src, :] -= 0.5 * (k @ rho[src, :])
            out[:, src] -= 0.5 * (rho[:, src] @ k)
        return gamma * out

    def jump_operators(self) -> list[np.ndarray]:
        N = self.N
        if self.grouping == "collective":
            ops = [self._sigma]
        else:
            ops = []
            for c in self.clusters:
                a = np.zeros((2 * N, 2 * N), dtype=complex)
                for n, m in c:
                    a[n, N + m] = self.F[n, m]
                ops.append(a)
        if self.kind == "pump":
            ops = [a.conj().T for a in ops]
        return ops

    def superoperator(self, t):
        gamma = self.rate(t)
        dim = (2 * self.N) ** 2
        total = np.zeros((dim, dim), dtype=complex)
        if gamma == 0.0:
            return total
        for a in self.jump_operators():
            total += _dissipator_super(a, gamma)
        return total


def dissipator_vibron(params: SystemParams, basis: EigenBasis,
                      cfg: DissipatorConfig | None = None) -> VibronTerm:
    cfg = cfg or DissipatorConfig()
    return VibronTerm(basis, params.gamma_v, params.n_v, cfg.vibron_coherence_damping)


def dissipator_dephasing(params: SystemParams, basis: EigenBasis) -> DephasingTerm:
    return DephasingTerm(basis, params.gamma_deph)


def dissipator_decay(params: SystemParams, basis: EigenBasis, fc: FranckCondonTable,
                     cfg: DissipatorConfig | None = None) -> ExcitonJumpTerm:
    cfg = cfg or DissipatorConfig()
    gamma = params.gamma_D
    return ExcitonJumpTerm(basis, fc, lambda t: gamma, "decay",
                           cfg.decay_grouping, cfg.grouping_tol)


def dissipator_pump(params: SystemParams, basis: EigenBasis, fc: FranckCondonTable,
                    cfg: DissipatorConfig | None = None) -> ExcitonJumpTerm:
    cfg = cfg or DissipatorConfig()
    return ExcitonJumpTerm(basis, fc, params.pump.rate, "pump",
                           cfg.decay_grouping, cfg.grouping_tol)


@dataclass
class Generator:
    """Sum of generator terms in a given frame.

    ``switch_times`` lists the instants where a piecewise-constant term
    (the rectangular pump) changes value; integrators restart there.
    """

    terms: Sequence
    frame: str
    dim: int
    switch_times: tuple = ()
    time_dependent: bool = False
    drive_frequency: float = 0.0
    meta: dict = field(default_factory=dict)

    def apply(self, rho: np.ndarray, t: float = 0.0) -> np.ndarray:
        out = self.terms[0].apply(rho, t)
        for term in self.terms[1:]:
            out = out + term.apply(rho, t)
        return out

    def superoperator(self, t: float = 0.0) -> np.ndarray:
        if self.dim > 24:
            raise ValueError(f"dense superoperator refused for dimension {self.dim}")
        total = self.terms[0].superoperator(t)
        for term in self.terms[1:]:
            total = total + term.superoperator(t)
        return total

    def term(self, cls):
        return next(t for t in self.terms if isinstance(t, cls))


def assemble(params: SystemParams, basis: EigenBasis, fc: FranckCondonTable,
             cfg: DissipatorConfig | None = None, frame: str = "rotating") -> Generator:
    cfg = cfg or DissipatorConfig()
    if basis.N != params.N or fc.dim != basis.N:
        raise ValueError("params, basis and FC table disagree on N")
    sigma = op_sigma(basis, fc).matrix
    if frame == "rotating":
        energies = basis.energies - np.where(basis.excited, params.omega_drive, 0.0)
        wdrive = 0.0
    elif frame == "lab":
        energies = np.array(basis.energies)
        wdrive = params.omega_drive
    else:
        raise ValueError(f"unknown frame {frame!r}")
    terms = [HamiltonianTerm(energies, 0.5 * params.Omega * sigma, wdrive)]
    if "dephasing" in cfg.include and params.gamma_deph > 0:
        terms.append(dissipator_dephasing(params, basis))
    if "vibron" in cfg.include and params.gamma_v > 0:
        terms.append(dissipator_vibron(params, basis, cfg))
    if "decay" in cfg.include and params.gamma_D > 0:
        terms.append(dissipator_decay(params, basis, fc, cfg))
    switches = ()
    if "pump" in cfg.include and params.pump.shape != "off" and params.pump.gamma_p0 > 0:
        terms.append(dissipator_pump(params, basis, fc, cfg))
        switches = params.pump.switch_times
    time_dep = (frame == "lab" and params.Omega != 0) or bool(switches)
    return Generator(terms, frame, basis.dim, switches, time_dep, params.omega_drive,
                     meta={"decay_grouping": cfg.decay_grouping,
                           "include": sorted(cfg.include),
                           "vibron_coherence_damping": cfg.vibron_coherence_damping})
