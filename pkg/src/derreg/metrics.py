"""
Tracking and scoring metrics.

``provided`` is the measured power and ``target`` the commanded regulation
power, both sampled at 1 Hz. Shifts are in samples: a shift ``d`` compares
``provided[t + d]`` with ``target[t]`` over the overlapping part.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from derreg.signal import SignalTrace

PJM_WINDOW = 300  # s
ELIGIBILITY = 0.75


def _arr(x) -> np.ndarray:
    return x.values if isinstance(x, SignalTrace) else np.asarray(x, dtype=float)


def _pair(provided, target):
    p, t = _arr(provided).ravel(), _arr(target).ravel()
    if p.shape != t.shape:
        raise ValueError(f"length mismatch: {p.size} vs {t.size}")
    return p, t


def rmse(provided, target) -> float:
    """sqrt(sum (prov - tar)^2 / sum tar^2)."""
    p, t = _pair(provided, target)
    energy = float(np.dot(t, t))
    if energy == 0.0:
        raise ValueError("target has zero energy")
    err = p - t
    return float(np.sqrt(np.dot(err, err) / energy))


def _shifted(p, t, d):
    return p[d:], t[: t.size - d]


def _check_shift(n, max_shift):
    if not 0 <= max_shift < n:
        raise ValueError(f"max_shift must lie in [0, {n - 1}]")


def shift_rmse(provided, target, max_shift: int = PJM_WINDOW) -> np.ndarray:
    p, t = _pair(provided, target)
    _check_shift(p.size, max_shift)
    out = np.full(max_shift + 1, np.inf)
    for d in range(max_shift + 1):
        pp, tt = _shifted(p, t, d)
        energy = float(np.dot(tt, tt))
        if energy > 0:
            out[d] = np.sqrt(np.dot(pp - tt, pp - tt) / energy)
    return out


def tracking_delay(provided, target, max_shift: int = PJM_WINDOW) -> int:
    """Shift in ``[0, max_shift]`` with the lowest RMSE; ties go to the smaller shift."""
    return int(np.argmin(shift_rmse(provided, target, max_shift)))


def shift_correlation(provided, target, max_shift: int = PJM_WINDOW) -> np.ndarray:
    p, t = _pair(provided, target)
    _check_shift(p.size, max_shift)
    out = np.full(max_shift + 1, -np.inf)
    for d in range(max_shift + 1):
        pp, tt = _shifted(p, t, d)
        if pp.size > 1 and np.std(pp) > 0 and np.std(tt) > 0:
            out[d] = np.corrcoef(pp, tt)[0, 1]
    return out


def delay_score(delay: float, clip: bool = False) -> float:
    """|delay - 5 min| / 5 min, optionally clipped to [0, 1]."""
    s = abs(delay - PJM_WINDOW) / PJM_WINDOW
    return min(s, 1.0) if clip else s


def performance_score(s_c: float, s_d: float, s_p: float) -> float:
    return (s_c + s_d + s_p) / 3.0


def precision_score(provided, target) -> float:
    p, t = _pair(provided, target)
    mu = float(np.mean(t))
    if mu == 0.0:
        raise ValueError("target mean is zero; precision score undefined")
    return 1.0 - float(np.mean(np.abs(p - t))) / abs(mu)


@dataclass
class PjmScore:
    s_c: float
    s_d: float
    s_p: float
    delay: int  # shift maximizing the correlation
    rmse_delay: int  # shift minimizing the RMSE

    @property
    def s(self) -> float:
        return performance_score(self.s_c, self.s_d, self.s_p)

    @property
    def eligible(self) -> bool:
        return self.s >= ELIGIBILITY


def pjm_score(provided, target, max_shift: int = PJM_WINDOW, clip_delay: bool = False) -> PjmScore:
    p, t = _pair(provided, target)
    if np.std(p) == 0 or np.std(t) == 0:
        raise ValueError("degenerate trace: zero standard deviation")
    corr = shift_correlation(p, t, max_shift)
    d = int(np.argmax(corr))
    return PjmScore(
        s_c=float(corr[d]),
        s_d=delay_score(d, clip_delay),
        s_p=precision_score(p, t),
        delay=d,
        rmse_delay=tracking_delay(p, t, max_shift),
    )


def normalized_mse(distributed, centralized, columns=None) -> float:
    """mean((p_dist - p_true)^2) / mean(p_true^2), optionally over a column subset."""
    d = np.asarray(distributed, dtype=float)
    c = np.asarray(centralized, dtype=float)
    if d.shape != c.shape:
        raise ValueError(f"shape mismatch: {d.shape} vs {c.shape}")
    if columns is not None:
        d, c = d[..., columns], c[..., columns]
    denom = float(np.mean(c * c))
    if denom == 0.0:
        raise ValueError("reference solutions have zero energy")
    return float(np.mean((d - c) ** 2)) / denom


@dataclass
class ScoreReport:
    rmse: float
    delay_s: int
    pjm: PjmScore
    groups: dict = field(default_factory=dict)  # group -> (rmse, delay_s)
    normalized_mse: dict = field(default_factory=dict)  # solver -> {group: value}
    rmse_raw_target: float | None = None

    def text(self) -> str:
        lines = [
            f"total RMSE          {self.rmse:.4f}",
            f"total delay (s)     {self.delay_s}",
            f"S_c                 {self.pjm.s_c:.4f}",
            f"S_d                 {self.pjm.s_d:.4f}  (delay {self.pjm.delay} s)",
            f"S_p                 {self.pjm.s_p:.4f}",
            f"performance score S {self.pjm.s:.4f}",
            f"eligible            {'yes' if self.pjm.eligible else 'no'}",
        ]
        if self.rmse_raw_target is not None:
            lines.append(f"RMSE vs raw target  {self.rmse_raw_target:.4f}")
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["metric", "value"])
            rows = [
                ("rmse", self.rmse), ("delay_s", self.delay_s), ("s_c", self.pjm.s_c),
                ("s_d", self.pjm.s_d), ("s_p", self.pjm.s_p), ("s", self.pjm.s),
                ("eligible", int(self.pjm.eligible)),
            ]
            if self.rmse_raw_target is not None:
                rows.append(("rmse_raw_target", self.rmse_raw_target))
            for name, value in rows:
                out.writerow([name, f"{value:.10g}"])
