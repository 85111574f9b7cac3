"""
Cleaning of measured power traces: hold-last outlier removal followed by a
trailing moving average.

A sample is an outlier when it jumps from the last retained sample by more
than half the mean magnitude of the whole trace within one sample period.
The mean of magnitudes is used because a regulation trace is close to zero
mean, which would make a signed mean meaningless as a scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from derreg._jit import njit
from derreg.signal import SignalTrace

OUTLIER_FRACTION = 0.5


@dataclass(frozen=True)
class FilterSpec:
    window: int = 4  # samples
    outlier_fraction: float = OUTLIER_FRACTION

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window must be at least one sample")
        if not self.outlier_fraction > 0:
            raise ValueError("outlier fraction must be positive")


@njit(cache=True)
def _hold_last(x, threshold, out):
    kept = x[0]
    out[0] = kept
    changed = 0
    for k in range(1, x.shape[0]):
        if abs(x[k] - kept) > threshold:
            out[k] = kept
            changed += 1
        else:
            kept = x[k]
            out[k] = kept
    return changed


@njit(cache=True)
def _trailing_mean(x, window, out):
    for k in range(x.shape[0]):
        start = k - window + 1
        if start < 0:
            start = 0
        # offsets from x[k] keep constant windows exact
        acc = 0.0
        for j in range(start, k + 1):
            acc += x[j] - x[k]
        out[k] = x[k] + acc / (k + 1 - start)
    return out


def _values(trace) -> tuple[np.ndarray, SignalTrace | None]:
    if isinstance(trace, SignalTrace):
        return trace.values, trace
    return np.asarray(trace, dtype=float).ravel(), None


def _wrap(values, like):
    return like.with_values(values) if like is not None else values


def remove_outliers(trace, fraction: float = OUTLIER_FRACTION):
    """Replace one-step jumps larger than ``fraction * mean(|x|)`` by the last kept value.

    Applied until nothing changes (normally one or two passes), so the
    result is a fixed point and a second call is a no-op.
    """
    x, like = _values(trace)
    if x.size == 0:
        raise ValueError("empty trace")
    cur = x.copy()
    out = np.empty_like(cur)
    for _ in range(x.size):
        threshold = fraction * float(np.mean(np.abs(cur)))
        if _hold_last(cur, threshold, out) == 0:
            break
        cur, out = out.copy(), cur
    return _wrap(cur, like)


def moving_average(trace, window: int):
    """Trailing mean over ``window`` samples; the first samples average the prefix."""
    x, like = _values(trace)
    if x.size == 0:
        raise ValueError("empty trace")
    window = int(window)
    if window < 1:
        raise ValueError("window must be at least one sample")
    if window > x.size:
        raise ValueError("window longer than the trace")
    out = _trailing_mean(x, window, np.empty_like(x))
    np.clip(out, x.min(), x.max(), out=out)
    return _wrap(out, like)


def clean(trace, spec: FilterSpec = FilterSpec()):
    return moving_average(remove_outliers(trace, spec.outlier_fraction), spec.window)
