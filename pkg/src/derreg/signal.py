"""
Uniformly sampled power traces and the target-signal pipeline.

Trace files are CSV with header ``t_s,value`` and strictly increasing,
uniformly spaced times.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "SignalTrace",
    "TraceFormatError",
    "read_trace",
    "write_trace",
    "interpolate_2x",
    "compose_target",
    "stair_step",
    "normalize_inf",
    "synthetic_regd",
    "synthetic_pv",
    "synthetic_building",
]

DEFAULT_BETA = 0.75


class TraceFormatError(ValueError):
    pass


@dataclass(frozen=True)
class SignalTrace:
    values: np.ndarray
    period: float = 1.0
    start: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if not np.all(np.isfinite(v)):
            raise TraceFormatError("trace values must be finite")
        if not self.period > 0:
            raise TraceFormatError("sample period must be positive")
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.size

    @property
    def times(self) -> np.ndarray:
        return self.start + self.period * np.arange(self.values.size)

    def with_values(self, values) -> "SignalTrace":
        return SignalTrace(values, self.period, self.start)


def read_trace(path) -> SignalTrace:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != ["t_s", "value"]:
        raise TraceFormatError(f"{path}: expected header 't_s,value'")
    try:
        data = np.array([[float(r[0]), float(r[1])] for r in rows[1:] if r], dtype=float)
    except (ValueError, IndexError) as exc:
        raise TraceFormatError(f"{path}: {exc}") from None
    if data.shape[0] < 1:
        raise TraceFormatError(f"{path}: no samples")
    t = data[:, 0]
    if t.size == 1:
        return SignalTrace(data[:, 1], 1.0, t[0])
    dt = np.diff(t)
    if np.any(dt <= 0):
        raise TraceFormatError(f"{path}: times must be strictly increasing")
    if np.ptp(dt) > 1e-9 * max(1.0, dt[0]):
        raise TraceFormatError(f"{path}: times must be uniformly spaced")
    return SignalTrace(data[:, 1], float(dt[0]), float(t[0]))


def write_trace(trace: SignalTrace, path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["t_s", "value"])
        for t, v in zip(trace.times, trace.values):
            out.writerow([f"{t:g}", repr(float(v))])


def interpolate_2x(trace: SignalTrace) -> SignalTrace:
    """Linear midpoint interpolation: ``m`` samples become ``2m - 1``."""
    v = trace.values
    if v.size < 2:
        raise ValueError("need at least two samples to interpolate")
    out = np.empty(2 * v.size - 1)
    out[0::2] = v
    out[1::2] = 0.5 * (v[:-1] + v[1:])
    return SignalTrace(out, trace.period / 2.0, trace.start)


def normalize_inf(trace: SignalTrace) -> SignalTrace:
    peak = float(np.max(np.abs(trace.values)))
    if peak == 0.0:
        return trace
    return trace.with_values(trace.values / peak)


def compose_target(
    regd: SignalTrace,
    total_capacity: float,
    pv: SignalTrace | None = None,
    building: SignalTrace | None = None,
    beta: float = DEFAULT_BETA,
) -> SignalTrace:
    """Scale ``regd + pv - building`` so its peak magnitude is ``beta * capacity``.

    Passive traces default to zero. The combined trace is normalized by its
    own infinity norm, so any positive rescaling of the inputs gives the same
    result.
    """
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must lie in (0, 1)")
    combined = regd.values.copy()
    for extra, sign in ((pv, 1.0), (building, -1.0)):
        if extra is None:
            continue
        if len(extra) != len(regd):
            raise ValueError(f"trace lengths differ: {len(regd)} vs {len(extra)}")
        combined += sign * extra.values
    peak = float(np.max(np.abs(combined)))
    if peak == 0.0:
        raise ValueError("combined signal is identically zero")
    return regd.with_values(beta * total_capacity * (combined / peak))


def stair_step(trace: SignalTrace, period: float, offset: float = 0.0) -> SignalTrace:
    """Hold values between update instants ``t = offset (mod period)``.

    Samples before the first update instant hold the first sample.
    """
    if period < trace.period:
        raise ValueError("update period shorter than the sample period")
    step = round(period / trace.period)
    if abs(step * trace.period - period) > 1e-9 * period:
        raise ValueError("update period must be a multiple of the sample period")
    shift = round(offset / trace.period) % step
    k = np.arange(len(trace))
    idx = k - ((k - shift) % step)
    idx[idx < 0] = 0
    return trace.with_values(trace.values[idx])


def _band_limited(rng, n, period_s, periods, amplitudes):
    t = np.arange(n) * period_s
    horizon = (n - 1) * period_s
    out = np.zeros(n)
    for per, amp in zip(periods, amplitudes):
        # whole cycles over the horizon keep the trace energy-neutral
        cycles = max(1, round(horizon / per))
        out += amp * np.sin(2 * np.pi * cycles * t / horizon + rng.uniform(0, 2 * np.pi))
    return out


def synthetic_regd(seed: int = 0, n: int = 1201, period: float = 2.0) -> SignalTrace:
    """RegD-like test signal: zero mean, peak magnitude 1, 0.5 Hz.

    Sum of sinusoids with whole numbers of cycles over the 40 min horizon
    (periods 4 to 20 min, amplitude proportional to period), so the mean is
    zero up to rounding.
    """
    rng = np.random.default_rng(seed)
    periods = np.array([1200.0, 800.0, 600.0, 480.0, 400.0, 300.0, 240.0])
    amps = rng.uniform(0.5, 1.0, periods.size) * (periods / periods.max())
    v = _band_limited(rng, n, period, periods, amps)
    v -= v.mean()
    v /= np.max(np.abs(v))
    return SignalTrace(v, period)


def synthetic_pv(seed: int = 1, n: int = 2401, period: float = 1.0) -> SignalTrace:
    """Daytime PV proxy: high plateau with slow cloud dips, normalized."""
    rng = np.random.default_rng(seed)
    base = 0.8 + 0.1 * np.linspace(-1, 1, n)
    dips = _band_limited(rng, n, period, [800.0, 480.0], [0.05, 0.04])
    return normalize_inf(SignalTrace(np.clip(base + dips, 0.0, None), period))


def synthetic_building(seed: int = 2, n: int = 2401, period: float = 1.0) -> SignalTrace:
    """Aggregate building load proxy: near-flat with slow drift, normalized."""
    rng = np.random.default_rng(seed)
    v = 1.0 + _band_limited(rng, n, period, [2400.0, 600.0], [0.04, 0.02])
    return normalize_inf(SignalTrace(v, period))
