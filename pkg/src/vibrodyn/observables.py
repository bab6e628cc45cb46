"""Expectation values, emission spectra, peak fitting and collapse/revival detection.

Sign conventions: a component ``c e^{-i nu t}`` of a series appears in the
spectrum at frequency ``+nu``. Rotating-frame series are shifted to lab
frequencies by adding the drive frequency.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

WINDOWS = ("half-hann", "hann", "none")
COLLAPSE_THRESHOLD = math.exp(-1.0)
REVIVAL_FRACTION = 0.15
DWELL_FRACTION = 0.25


@dataclass(frozen=True)
class Spectrum:
    frequencies: np.ndarray   # eV
    amplitude: np.ndarray     # |sum s w e^{i nu t} dt|^2
    rayleigh_weight: float
    rayleigh_amplitude: complex = 0j
    window: str = "hann"
    resolution: float = 0.0

    def band(self, lo: float, hi: float) -> "Spectrum":
        sel = (self.frequencies >= lo) & (self.frequencies <= hi)
        return Spectrum(self.frequencies[sel], self.amplitude[sel], self.rayleigh_weight,
                        self.rayleigh_amplitude, self.window, self.resolution)


@dataclass(frozen=True)
class Peak:
    center: float
    width: float    # half-width at half maximum
    height: float


@dataclass(frozen=True)
class PeakSet:
    peaks: tuple = ()

    def __len__(self):
        return len(self.peaks)

    def __iter__(self):
        return iter(self.peaks)

    def __getitem__(self, i):
        return self.peaks[i]

    @property
    def centers(self) -> np.ndarray:
        return np.array([p.center for p in self.peaks])

    @property
    def heights(self) -> np.ndarray:
        return np.array([p.height for p in self.peaks])

    def near(self, lo: float, hi: float) -> "PeakSet":
        return PeakSet(tuple(p for p in self.peaks if lo <= p.center <= hi))

    def strongest(self) -> Peak:
        return max(self.peaks, key=lambda p: p.height)


@dataclass(frozen=True)
class CollapseRevival:
    t_col: float | None
    revivals: tuple = ()
    revival_heights: tuple = ()
    initial_max: float = 0.0
    status: str = "ok"      # "ok", "no collapse" or "no transient"

    @property
    def collapsed(self) -> bool:
        return self.t_col is not None


def expval(traj, op, lab: bool = False) -> np.ndarray:
    """Time series of Tr(rho A).

    ``op`` is the name of a recorded observable or, for trajectories that
    stored their states, an operator matrix. With ``lab=True`` a
    rotating-frame record is converted to the lab frame: the ground-excited
    block picks up ``e^{-i w t}`` and the excited-ground block ``e^{+i w t}``.
    """
    if isinstance(op, str):
        if op not in traj.records:
            raise KeyError(f"observable {op!r} was not recorded")
        parts = traj.parts.get(op)
        if not lab or traj.frame == "lab":
            return np.asarray(traj.records[op])
    else:
        mat = getattr(op, "matrix", op)
        mat = np.asarray(mat)
        if traj.states is None:
            raise ValueError("trajectory has no stored states; record the observable instead")
        states = traj.states
        d = mat.shape[0]
        if states.ndim == 2:     # pure states
            if states.shape[1] != d:
                raise ValueError("operator dimension does not match the states")
            full = np.einsum("ti,ij,tj->t", states.conj(), mat, states)
        else:
            if states.shape[1] != d:
                raise ValueError("operator dimension does not match the states")
            full = np.einsum("tij,ji->t", states, mat)
        if not lab or traj.frame == "lab":
            return full
        N = d // 2
        up = np.zeros_like(mat)
        up[:N, N:] = mat[:N, N:]
        lo = np.zeros_like(mat)
        lo[N:, :N] = mat[N:, :N]
        pu = expval(traj, up)
        pl = expval(traj, lo)
        parts = np.stack([full - pu - pl, pu, pl])
    w = traj.drive_frequency
    t = traj.times
    return parts[0] + parts[1] * np.exp(-1j * w * t) + parts[2] * np.exp(1j * w * t)


def _check_uniform(times: np.ndarray) -> float:
    times = np.asarray(times, dtype=float)
    if times.size < 4:
        raise ValueError("need at least 4 samples")
    dt = np.diff(times)
    if np.any(dt <= 0) or np.ptp(dt) > 1e-9 * dt.mean():
        raise ValueError("spectrum requires a uniform time grid")
    return float(dt.mean())


def window_function(kind: str, n: int) -> np.ndarray:
    if kind == "none":
        return np.ones(n)
    x = np.arange(n) / (n - 1)
    if kind == "hann":
        return 0.5 * (1 - np.cos(2 * np.pi * x))
    if kind == "half-hann":
        # falls from 1 at the start of the record to 0 at the end; leaves the
        # onset of a causal transient untouched
        return np.cos(0.5 * np.pi * x) ** 2
    raise ValueError(f"unknown window {kind!r}; choose from {WINDOWS}")


def fit_rayleigh(series: np.ndarray, times: np.ndarray, frequency: float = 0.0) -> complex:
    """Least-squares amplitude A of ``A e^{-i f t}`` over the final quarter."""
    series = np.asarray(series)
    times = np.asarray(times, dtype=float)
    tail = times >= times[0] + 0.75 * (times[-1] - times[0])
    return complex(np.mean(series[tail] * np.exp(1j * frequency * times[tail])))


def spectrum(series, times, window: str = "hann", rayleigh_handling: str = "subtract", *,
             rayleigh_frequency: float = 0.0, frequency_shift: float = 0.0,
             pad_factor: int = 8, use_modulus: bool = False) -> Spectrum:
    """Windowed power spectrum of a complex series.

    Parameters
    ----------
    rayleigh_handling : {"subtract", "keep"}
        ``subtract`` fits the steady component ``A e^{-i f t}`` with
        f = ``rayleigh_frequency`` over the last quarter of the record, removes
        it and reports ``|A|^2`` as ``rayleigh_weight``.
    frequency_shift : float
        Added to the frequency axis, e.g. the drive frequency for a
        rotating-frame series.
    use_modulus : bool
        Analyse ``|s(t)|`` (mean removed) instead of the complex series.
    """
    dt = _check_uniform(times)
    times = np.asarray(times, dtype=float)
    s = np.asarray(series, dtype=complex)
    if use_modulus:
        s = np.abs(s).astype(complex)
        s = s - s.mean()
    A = 0j
    if rayleigh_handling == "subtract":
        A = fit_rayleigh(s, times, rayleigh_frequency)
        s = s - A * np.exp(-1j * rayleigh_frequency * times)
    elif rayleigh_handling != "keep":
        raise ValueError(f"unknown rayleigh handling {rayleigh_handling!r}")
    x = s * window_function(window, s.size)
    M = 1 << int(math.ceil(math.log2(max(pad_factor, 1) * s.size)))
    # sum_k x_k e^{+i nu t_k} evaluated on the FFT grid, t measured from times[0]
    X = np.fft.ifft(x, n=M) * M * dt
    nu = 2 * np.pi * np.fft.fftfreq(M, dt)
    X = X * np.exp(1j * nu * times[0])
    order = np.argsort(nu)
    return Spectrum(nu[order] + frequency_shift, np.abs(X[order]) ** 2, float(abs(A) ** 2), A,
                    window, float(2 * np.pi / (M * dt)))


def _lorentz3(nu, S, i, k) -> Peak | None:
    x = nu[[i - k, i, i + k]]
    y = 1.0 / S[[i - k, i, i + k]]
    a, b, c = np.polyfit(x - x[1], y, 2)
    if a <= 0 or not np.all(np.isfinite((a, b, c))):
        return None
    x0 = -b / (2 * a)
    if abs(x0) > k * (nu[1] - nu[0]):
        return None
    inv_h = c - b * b / (4 * a)
    if inv_h <= 0:
        return None
    h = 1.0 / inv_h
    return Peak(float(x[1] + x0), float(math.sqrt(1.0 / (h * a))), float(h))


def find_peaks(spec: Spectrum, min_prominence: float | None = None, *,
               rel_prominence: float = 1e-3, band: tuple | None = None) -> PeakSet:
    """Local maxima above a prominence threshold, refined by Lorentzian fits.

    The threshold is ``min_prominence`` if given, else ``rel_prominence``
    times the spectral maximum. Each maximum is fitted with a Lorentzian
    through three points placed symmetrically about the grid maximum at
    roughly the half-height distance.
    """
    if band is not None:
        spec = spec.band(*band)
    S, nu = spec.amplitude, spec.frequencies
    if S.size < 3 or not np.any(S > 0):
        return PeakSet()
    thr = min_prominence if min_prominence is not None else rel_prominence * S.max()
    if thr <= 0 or np.ptp(S) <= 0:
        return PeakSet()
    idx, props = signal.find_peaks(S, prominence=thr)
    peaks = []
    for i in idx:
        half = 0.5 * S[i]
        left = i
        while left > 0 and S[left] > half and S[left - 1] <= S[left]:
            left -= 1
        right = i
        while right < S.size - 1 and S[right] > half and S[right + 1] <= S[right]:
            right += 1
        k = max(1, min(i - left, right - i))
        k = min(k, i, S.size - 1 - i)
        p = _lorentz3(nu, S, i, k) if k >= 1 else None
        if p is None:
            p = Peak(float(nu[i]), float(max(k, 1) * (nu[1] - nu[0])), float(S[i]))
        peaks.append(p)
    peaks.sort(key=lambda p: p.center)
    return PeakSet(tuple(peaks))


def envelope(series, times, *, detrend: bool = True, cutoff: float = 0.0,
             rayleigh_frequency: float = 0.0) -> np.ndarray:
    """Envelope of the oscillatory part of a series.

    The series is optionally detrended by the fitted Rayleigh component, then
    reduced to one side of its spectrum (the side carrying more power, with
    ``|nu| <= cutoff`` also discarded) and transformed back. The modulus of
    this analytic signal is the envelope. Real series use the usual factor
    of two so that a cosine of unit amplitude has unit envelope.
    """
    _check_uniform(times)
    s = np.asarray(series)
    is_real = not np.iscomplexobj(s) or np.all(np.imag(s) == 0)
    s = s.astype(complex)
    times = np.asarray(times, dtype=float)
    if detrend:
        if is_real:
            s = s - s[times >= times[0] + 0.75 * (times[-1] - times[0])].mean().real
        else:
            A = fit_rayleigh(s, times, rayleigh_frequency)
            s = s - A * np.exp(-1j * rayleigh_frequency * times)
    X = np.fft.fft(s)
    nu = -2 * np.pi * np.fft.fftfreq(s.size, times[1] - times[0])   # e^{-i nu t} convention
    pos = nu > cutoff
    neg = nu < -cutoff
    keep = pos if np.sum(np.abs(X[pos]) ** 2) >= np.sum(np.abs(X[neg]) ** 2) else neg
    Y = np.where(keep, X, 0.0)
    if is_real:
        Y = 2 * Y
    return np.abs(np.fft.ifft(Y))


def detect_collapse_revival(env, times, *, period: float | None = None,
                            threshold: float = COLLAPSE_THRESHOLD,
                            dwell: float | None = None,
                            revival_fraction: float = REVIVAL_FRACTION,
                            transient_floor: float = 1e-12) -> CollapseRevival:
    """Collapse time and revival times of an envelope.

    Collapse is the first time the envelope drops below ``threshold`` times
    its initial maximum and stays below for ``dwell`` (default a quarter of
    ``period``, or 2% of the record without a period). Revivals are later
    envelope maxima above ``revival_fraction`` of the initial maximum,
    separated by at least the dwell.
    """
    env = np.asarray(env, dtype=float)
    times = np.asarray(times, dtype=float)
    span = times[-1] - times[0]
    if dwell is None:
        dwell = DWELL_FRACTION * period if period else 0.02 * span
    dt = times[1] - times[0]
    early = times <= times[0] + max(dwell, dt)
    m0 = float(env[early].max())
    if m0 <= transient_floor:
        return CollapseRevival(None, (), (), m0, "no transient")
    below = env < threshold * m0
    n_dwell = max(1, int(round(dwell / dt)))
    t_col, i_col = None, None
    start = int(np.argmax(env[early]))
    i = start
    while i < env.size:
        if below[i]:
            j = i
            while j < env.size and below[j]:
                j += 1
            if j - i >= n_dwell:
                # interpolate the crossing between samples i-1 and i
                if i > 0:
                    a, b = env[i - 1], env[i]
                    frac = (a - threshold * m0) / (a - b) if a != b else 0.0
                    t_col = float(times[i - 1] + frac * dt)
                else:
                    t_col = float(times[0])
                i_col = i
                break
            i = j
        i += 1
    if t_col is None:
        return CollapseRevival(None, (), (), m0, "no collapse")
    tail = env[i_col:]
    idx, _ = signal.find_peaks(tail, height=revival_fraction * m0, distance=n_dwell,
                               prominence=0.05 * m0)
    revs, heights = [], []
    for k in idx:
        g = i_col + k
        # parabolic refinement of the maximum
        if 0 < g < env.size - 1:
            a, b, c = env[g - 1], env[g], env[g + 1]
            den = a - 2 * b + c
            off = 0.5 * (a - c) / den if den != 0 else 0.0
        else:
            off = 0.0
        revs.append(float(times[g] + off * dt))
        heights.append(float(env[g]))
    return CollapseRevival(t_col, tuple(revs), tuple(heights), m0, "ok")


def revival_decay_rate(result: CollapseRevival, t0: float = 0.0) -> float:
    """Exponential decay rate of the revival heights (initial maximum at t0 included)."""
    if not result.revivals:
        raise ValueError("no revivals to fit")
    t = np.array((t0,) + tuple(result.revivals))
    h = np.array((result.initial_max,) + tuple(result.revival_heights))
    slope = np.polyfit(t, np.log(h), 1)[0]
    return float(-slope)


def beat_period(series, times, lo: float, hi: float) -> float:
    """Period of the strongest modulation of a real series in the band [lo, hi] (eV)."""
    x = np.asarray(series, dtype=float)
    sp = spectrum(x - x.mean(), times, rayleigh_handling="keep")
    pk = find_peaks(sp, band=(lo, hi))
    if not len(pk):
        raise ValueError("no modulation found in the band")
    return 2 * np.pi / pk.strongest().center
