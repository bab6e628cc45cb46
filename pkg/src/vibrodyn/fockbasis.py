"""Displaced Fock state overlaps (Franck-Condon factors).

The overlaps ``<n|D(alpha)|m>`` between bare and displaced number states are
evaluated from associated Laguerre polynomials, with factorial ratios taken in
log space so tables stay finite for truncations of a few hundred levels.
Only real displacements ``alpha >= 0`` are supported.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "TruncationError",
    "FranckCondonTable",
    "laguerre_assoc",
    "franck_condon",
    "build_fc_table",
    "max_overlap",
    "min_truncation",
    "unitarity_margin",
]

# relative tolerance used to call two overlaps degenerate
TIE_RTOL = 1e-12


class TruncationError(RuntimeError):
    """Raised when a vibron truncation is too small for the requested quantity."""


def laguerre_assoc(n: int, k: int, x: float) -> float:
    """Associated Laguerre polynomial L_n^(k)(x) by upward recurrence in n."""
    if n < 0 or k < 0:
        raise ValueError("n and k must be non-negative")
    prev, cur = 1.0, 1.0 + k - x
    if n == 0:
        return prev
    for m in range(1, n):
        prev, cur = cur, ((2 * m + 1 + k - x) * cur - (m + k) * prev) / (m + 1)
        if not math.isfinite(cur):
            raise OverflowError(f"L_{n}^({k})({x}) overflows double precision")
    return cur


def _laguerre_grid(nmax: int, x: float) -> np.ndarray:
    """L[m, k] = L_m^(k)(x) for 0 <= m, k < nmax, recurrence vectorised over k."""
    k = np.arange(nmax, dtype=float)
    out = np.empty((nmax, nmax))
    out[0] = 1.0
    if nmax > 1:
        out[1] = 1.0 + k - x
    for m in range(1, nmax - 1):
        out[m + 1] = ((2 * m + 1 + k - x) * out[m] - (m + k) * out[m - 1]) / (m + 1)
    if not np.all(np.isfinite(out)):
        raise OverflowError(f"Laguerre table overflows for nmax={nmax}, x={x}")
    return out


def _log_prefactor(lo: int, hi: int, alpha: float) -> float:
    # log of alpha^(hi-lo) sqrt(lo!/hi!) exp(-alpha^2/2), alpha > 0
    return ((hi - lo) * math.log(alpha)
            + 0.5 * (math.lgamma(lo + 1) - math.lgamma(hi + 1))
            - 0.5 * alpha * alpha)


def franck_condon(n: int, m: int, alpha: float) -> float:
    """Overlap ``<n|m_alpha>`` of bare state n with displaced state m.

    For ``m >= n`` the value is ``(-alpha)^(m-n) sqrt(n!/m!) L_n^(m-n)(alpha^2)
    exp(-alpha^2/2)``; for ``m < n`` it is ``alpha^(n-m) sqrt(m!/n!)
    L_m^(n-m)(alpha^2) exp(-alpha^2/2)``. Results may underflow to 0.
    """
    if n < 0 or m < 0:
        raise ValueError("indices must be non-negative")
    if alpha < 0:
        raise ValueError("only real alpha >= 0 is supported")
    if alpha == 0.0:
        return 1.0 if n == m else 0.0
    lo, hi = min(n, m), max(n, m)
    lag = laguerre_assoc(lo, hi - lo, alpha * alpha)
    sign = -1.0 if (m > n and (m - n) % 2) else 1.0
    return sign * lag * math.exp(_log_prefactor(lo, hi, alpha))


@dataclass(frozen=True)
class FranckCondonTable:
    """Truncated overlap matrix, ``entries[n, m] = <n|m_alpha>``."""

    alpha: float
    entries: np.ndarray

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def column_norms(self) -> np.ndarray:
        return np.sum(self.entries**2, axis=0)

    def gram_defect(self) -> np.ndarray:
        """``F^T F - 1``; small in the block of well-converged columns."""
        return self.entries.T @ self.entries - np.eye(self.dim)

    def closed(self) -> "FranckCondonTable":
        """Nearest orthogonal matrix to the truncated table (polar factor).

        Closing the truncated space makes the exciton jump operators partial
        isometries, so decay and pump conserve trace exactly. Entries in the
        converged block move by roughly the column-norm defect.
        """
        u, _, vt = np.linalg.svd(self.entries)
        return FranckCondonTable(self.alpha, u @ vt)


def build_fc_table(N: int, alpha: float) -> FranckCondonTable:
    if N < 1:
        raise ValueError("N must be >= 1")
    if alpha < 0:
        raise ValueError("only real alpha >= 0 is supported")
    if alpha == 0.0:
        return FranckCondonTable(0.0, np.eye(N))

    lag = _laguerre_grid(N, alpha * alpha)
    idx = np.arange(N)
    n, m = np.meshgrid(idx, idx, indexing="ij")
    lo, hi = np.minimum(n, m), np.maximum(n, m)
    lgam = np.array([math.lgamma(i + 1) for i in range(N)])
    logpref = ((hi - lo) * math.log(alpha) + 0.5 * (lgam[lo] - lgam[hi])
               - 0.5 * alpha * alpha)
    sign = np.where((m > n) & ((m - n) % 2 == 1), -1.0, 1.0)
    entries = sign * lag[lo, hi - lo] * np.exp(logpref)
    entries.setflags(write=False)
    return FranckCondonTable(float(alpha), entries)


def min_truncation(alpha: float) -> int:
    """Smallest vibron cutoff keeping all used FC columns normalised to 1e-8."""
    return int(math.ceil(alpha * alpha + 6 * alpha + 15))


def unitarity_margin(alpha: float, N: int) -> int:
    """Columns m <= N - margin of an N-level table are orthonormal to ~1e-9.

    A displaced state D(alpha)|m> spreads over roughly alpha*sqrt(2m+1) bare
    levels, so the margin has to grow with the cutoff.
    """
    return int(math.ceil(alpha * alpha + 2.5 * alpha * math.sqrt(2 * N + 1) + 10))


def max_overlap(alpha: float, N: int) -> tuple[float, int]:
    """``M(alpha) = max_m |<0|m_alpha>|`` and the maximising m (ties go low)."""
    row = np.abs(build_fc_table(N, alpha).entries[0])
    best = float(row.max())
    arg = int(np.flatnonzero(row >= best * (1 - TIE_RTOL))[0])
    if arg >= N - 1:
        raise TruncationError(
            f"max overlap sits at the truncation boundary (m={arg}, N={N})")
    return float(row[arg]), arg
