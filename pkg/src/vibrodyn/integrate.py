"""Dormand-Prince 5(4) integrator with embedded error control.

Works on arbitrary-shaped complex arrays. Output times are hit exactly by
shortening the step that would cross them, so no interpolation is involved.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
B = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
B_LOW = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40)
E = tuple(b - bl for b, bl in zip(B, B_LOW))

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 5.0


class IntegrationError(RuntimeError):
    pass


@dataclass
class StepStats:
    accepted: int = 0
    rejected: int = 0
    evaluations: int = 0


def _error_norm(err, y, y_new, rtol, atol):
    scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
    return float(np.sqrt(np.mean(np.abs(err / scale) ** 2)))


def _initial_step(f, t0, y0, f0, rtol, atol, direction_span):
    scale = atol + np.abs(y0) * rtol
    d0 = np.sqrt(np.mean(np.abs(y0 / scale) ** 2))
    d1 = np.sqrt(np.mean(np.abs(f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, direction_span)
    f1 = f(t0 + h0, y0 + h0 * f0)
    d2 = np.sqrt(np.mean(np.abs((f1 - f0) / scale) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, direction_span)


def dopri5(f: Callable, t0: float, y0: np.ndarray, t_out: np.ndarray, *,
           rtol: float = 1e-8, atol: float = 1e-12, h0: float | None = None,
           max_steps: int = 10_000_000,
           on_output: Callable[[int, float, np.ndarray], None] | None = None,
           on_step: Callable[[float, np.ndarray], None] | None = None):
    """Integrate ``y' = f(t, y)`` from t0 through the increasing times ``t_out``.

    ``on_output(i, t, y)`` is called at every output time (including t0 if it
    is the first entry); ``on_step(t, y)`` after every accepted step. Returns
    the final state, the last step size and the step statistics.
    """
    t_out = np.asarray(t_out, dtype=float)
    if np.any(np.diff(t_out) < 0) or (t_out.size and t_out[0] < t0):
        raise ValueError("output times must be increasing and start at or after t0")
    stats = StepStats()
    y = np.array(y0, copy=True)
    t = float(t0)
    k1 = f(t, y)
    stats.evaluations += 1
    idx = 0
    while idx < t_out.size and t_out[idx] <= t:
        if on_output:
            on_output(idx, t, y)
        idx += 1
    if idx == t_out.size:
        return y, h0 or 0.0, stats

    span = t_out[-1] - t
    h = h0 if h0 is not None else _initial_step(f, t, y, k1, rtol, atol, span)
    stats.evaluations += 1

    while idx < t_out.size:
        if stats.accepted + stats.rejected > max_steps:
            raise IntegrationError(f"exceeded {max_steps} steps at t={t}")
        target = t_out[idx]
        h_step = min(h, target - t)
        clipped = h_step < h
        if h_step <= 1e-14 * max(1.0, abs(t)):
            raise IntegrationError(f"step size underflow at t={t} (h={h_step:g})")

        ks = [k1]
        for i in range(1, 7):
            yi = y
            for a, k in zip(A[i], ks):
                if a != 0.0:
                    yi = yi + (h_step * a) * k
            ks.append(f(t + C[i] * h_step, yi))
        stats.evaluations += 6
        y_new = yi  # stage 7 abscissa coincides with the 5th-order solution
        err = h_step * sum(e * k for e, k in zip(E, ks) if e != 0.0)
        norm = _error_norm(err, y, y_new, rtol, atol)

        if norm <= 1.0:
            t = target if clipped or abs(target - (t + h_step)) < 1e-12 * max(1.0, abs(t)) else t + h_step
            y = y_new
            k1 = ks[6]
            stats.accepted += 1
            if on_step:
                on_step(t, y)
            while idx < t_out.size and t_out[idx] <= t:
                if on_output:
                    on_output(idx, t, y)
                idx += 1
            factor = MAX_FACTOR if norm == 0 else min(MAX_FACTOR, SAFETY * norm ** -0.2)
            # a clipped step says nothing about how large the next one may be
            if not clipped:
                h = h_step * factor
            else:
                h = max(h, h_step * factor)
        else:
            stats.rejected += 1
            h = h_step * max(MIN_FACTOR, SAFETY * norm ** -0.2)
    return y, h, stats
