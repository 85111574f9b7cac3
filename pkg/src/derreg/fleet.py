"""
DER fleet model: device ratings and baselines, on/off discretization,
response dynamics and the two-stage actuation helpers.

All setpoints handled here are deviations from a device's baseline (kW);
``baseline + setpoint`` is the absolute power draw.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from derreg._jit import njit
from derreg.problem import AllocationProblem
from derreg.signal import SignalTrace

log = logging.getLogger(__name__)

DER_TYPES = ("AHU", "V1G", "V2G", "BESS")
FAST_TYPES = ("V2G", "BESS")
V1G_MIN_RATE = 1.6  # kW, lowest SAE J1772 charging rate

# measured group delays (s) the Test-2 fleet is calibrated to, and signal update periods (s)
TEST2_DELAYS = {"AHU": 105.0, "V1G": 10.0, "V2G": 3.0, "BESS": 0.0}
UPDATE_PERIODS = {"AHU": 60, "V1G": 60, "V2G": 1, "BESS": 20}


class FleetError(ValueError):
    pass


@dataclass(frozen=True)
class ResponseModel:
    """Pure delay, first-order lag, optional ramp limit and meter spikes."""

    pure_delay: float = 0.0
    settle_time: float = 0.0
    ramp_limit: float = float("inf")  # kW/s
    spike_rate: float = 0.0  # expected spikes per second
    spike_min: float = 15.0
    spike_max: float = 30.0

    def __post_init__(self):
        if self.pure_delay < 0 or self.settle_time < 0:
            raise FleetError("delay and settle time must be nonnegative")
        if not self.ramp_limit > 0:
            raise FleetError("ramp limit must be positive")
        if self.spike_rate < 0 or self.spike_min > self.spike_max:
            raise FleetError("invalid spike parameters")


@dataclass(frozen=True)
class DeviceSpec:
    der_type: str
    rating: float
    update_period: int = 1
    offset: int = 0
    response: ResponseModel = field(default_factory=ResponseModel)
    node: int = 0
    device_id: str = ""
    integer_kw: bool = False

    def __post_init__(self):
        if self.der_type not in DER_TYPES:
            raise FleetError(f"unknown DER type {self.der_type!r}")
        if self.rating < 0:
            raise FleetError("rating must be nonnegative")
        if self.update_period < 1:
            raise FleetError("update period must be at least 1 s")
        if self.der_type == "V1G" and 0 < self.rating < V1G_MIN_RATE:
            raise FleetError(f"V1G rating below the {V1G_MIN_RATE} kW minimum charging rate")

    @property
    def discrete(self) -> bool:
        return self.der_type == "AHU"

    @property
    def fast(self) -> bool:
        return self.der_type in FAST_TYPES


def baseline(spec: DeviceSpec) -> float:
    """Operating point the regulation range is centred on (kW)."""
    if spec.der_type in ("V2G", "BESS"):
        return 0.0
    if spec.der_type == "V1G":
        return 0.5 * (V1G_MIN_RATE + spec.rating)
    return 0.5 * spec.rating


def bounds_from_spec(spec: DeviceSpec) -> tuple[float, float]:
    """Regulation box around the baseline."""
    if spec.rating == 0:
        return 0.0, 0.0
    if spec.der_type in ("V2G", "BESS"):
        half = spec.rating
    elif spec.der_type == "V1G":
        half = spec.rating - baseline(spec)
    else:
        half = 0.5 * spec.rating
    return -half, half


@dataclass
class Fleet:
    devices: list

    def __post_init__(self):
        if not self.devices:
            raise FleetError("empty fleet")
        nodes = sorted({d.node for d in self.devices})
        if nodes[0] < 0:
            raise FleetError("node indices must be nonnegative")
        self.n_nodes = nodes[-1] + 1
        missing = set(range(self.n_nodes)) - set(nodes)
        if missing:
            raise FleetError(f"computing nodes without devices: {sorted(missing)}")
        self.devices = [
            d if d.device_id else replace(d, device_id=f"{d.der_type}{k:02d}") for k, d in enumerate(self.devices)
        ]
        ids = [d.device_id for d in self.devices]
        if len(set(ids)) != len(ids):
            raise FleetError("duplicate device ids")

    def __len__(self) -> int:
        return len(self.devices)

    @property
    def node_map(self) -> dict:
        out = {i: [] for i in range(self.n_nodes)}
        for k, d in enumerate(self.devices):
            out[d.node].append(k)
        return out

    @property
    def node_types(self) -> list:
        types = []
        for i in range(self.n_nodes):
            kinds = {self.devices[k].der_type for k in self.node_map[i]}
            types.append(kinds.pop() if len(kinds) == 1 else "mixed")
        return types

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = zip(*(bounds_from_spec(d) for d in self.devices))
        return np.array(lo), np.array(hi)

    def baselines(self) -> np.ndarray:
        return np.array([baseline(d) for d in self.devices])

    def capacity(self, types: Sequence[str] | None = None) -> float:
        """Sum of regulation ranges ``upper - lower`` (kW)."""
        lo, hi = self.bounds()
        mask = self.mask(types)
        return float(np.sum((hi - lo)[mask]))

    def rated_capacity(self) -> float:
        """Sum of nameplate ratings (kW), the market-facing capacity."""
        return float(sum(d.rating for d in self.devices))

    def mask(self, types: Sequence[str] | None = None) -> np.ndarray:
        if types is None:
            return np.ones(len(self.devices), dtype=bool)
        return np.array([d.der_type in types for d in self.devices])

    def counts(self) -> dict:
        out = {t: 0 for t in DER_TYPES}
        for d in self.devices:
            out[d.der_type] += 1
        return out


def ahu_discretize(setpoints, unit_half: float, previous=None) -> np.ndarray:
    """On/off state per AHU closest to the group's continuous setpoint.

    Each unit contributes ``+unit_half`` when on and ``-unit_half`` when off.
    The ON count ``k`` minimizes ``|sum(setpoints) - (2k - m) unit_half|``
    with ties going to fewer ON units. Given the ``previous`` states, only
    ``|k - k_prev|`` units switch; among candidates the ones whose
    continuous setpoint points hardest in the switching direction go first.
    """
    sp = np.asarray(setpoints, dtype=float)
    m = sp.size
    if m == 0:
        return np.zeros(0, dtype=bool)
    total = float(sp.sum())
    levels = (2 * np.arange(m + 1) - m) * unit_half
    k = int(np.argmin(np.abs(total - levels)))  # argmin returns the first, i.e. fewest ON
    prev = np.zeros(m, dtype=bool) if previous is None else np.asarray(previous, dtype=bool).copy()
    if previous is None:
        order = np.lexsort((np.arange(m), -sp))
        on = np.zeros(m, dtype=bool)
        on[order[:k]] = True
        return on
    k_prev = int(prev.sum())
    on = prev
    if k > k_prev:
        cand = np.flatnonzero(~prev)
        pick = cand[np.lexsort((cand, -sp[cand]))][: k - k_prev]
        on[pick] = True
    elif k < k_prev:
        cand = np.flatnonzero(prev)
        pick = cand[np.lexsort((cand, sp[cand]))][: k_prev - k]
        on[pick] = False
    return on


def integer_setpoints(setpoints, base: float, lo: float, hi: float) -> np.ndarray:
    """Round absolute charging rates to whole kW, matching the group total.

    Largest-remainder rounding of ``base + setpoint`` inside the integer
    levels available in ``[base + lo, base + hi]``.
    """
    sp = np.asarray(setpoints, dtype=float)
    absolute = base + sp
    lo_i = np.ceil(base + lo - 1e-9)
    hi_i = np.floor(base + hi + 1e-9)
    if lo_i > hi_i:  # no whole-kW level in the box (idle charger)
        return np.clip(sp, lo, hi)
    out = np.clip(np.floor(absolute), lo_i, hi_i)
    # total to hit: the rounded request, limited to what the levels can reach
    total = min(max(round(float(np.sum(absolute))), sp.size * lo_i), sp.size * hi_i)
    want = int(total - out.sum())
    frac = absolute - np.floor(absolute)
    while want:
        step = 1 if want > 0 else -1
        # largest remainders go up first, smallest come down first
        order = np.lexsort((np.arange(sp.size), -step * frac))
        before = want
        for k in order:
            if want and lo_i <= out[k] + step <= hi_i:
                out[k] += step
                want -= step
        if want == before:
            break
    return out - base


def upscale_fast(problem: AllocationProblem, fast, factor: float) -> AllocationProblem:
    """Widen the boxes of fast agents by ``factor`` before solving."""
    if factor < 1:
        raise ValueError("upscaling factor must be at least 1")
    fast = np.asarray(fast, dtype=bool)
    scale = np.where(fast, factor, 1.0)
    return problem.with_bounds(problem.lower * scale, problem.upper * scale)


@njit(cache=True)
def _lag(u, alpha, ramp, lo, hi, out):
    y = 0.0
    for k in range(u.shape[0]):
        if alpha >= 1.0:
            nxt = u[k]
        elif k == 0:
            nxt = y
        else:
            nxt = y + alpha * (u[k - 1] - y)
        if nxt - y > ramp:
            nxt = y + ramp
        elif nxt - y < -ramp:
            nxt = y - ramp
        if nxt < lo:
            nxt = lo
        elif nxt > hi:
            nxt = hi
        y = nxt
        out[k] = y
    return out


def respond(
    commanded: SignalTrace,
    model: ResponseModel,
    seed=0,
    limits: tuple[float, float] = (-np.inf, np.inf),
) -> SignalTrace:
    """Simulated device output (deviation from baseline) for a command trace.

    Pure delay (output stays at baseline until the first command arrives),
    then an exact zero-order-hold first-order lag with time constant
    ``settle_time`` (none when zero), an optional ramp-rate limit and
    saturation at the physical ``limits``. Meter spikes are added last:
    Bernoulli arrivals per sample with probability ``spike_rate * dt``.
    """
    u = commanded.values
    dt = commanded.period
    d = int(round(model.pure_delay / dt))
    delayed = np.zeros_like(u)
    if d < u.size:
        delayed[d:] = u[: u.size - d]
    alpha = 1.0 if model.settle_time == 0 else 1.0 - np.exp(-dt / model.settle_time)
    ramp = model.ramp_limit * dt
    out = _lag(delayed, float(alpha), float(ramp), float(limits[0]), float(limits[1]), np.empty_like(u))
    if model.spike_rate > 0:
        rng = np.random.default_rng(seed)
        hits = rng.random(u.size) < model.spike_rate * dt
        mags = rng.uniform(model.spike_min, model.spike_max, u.size)
        out = out + np.where(hits, mags, 0.0)
    return commanded.with_values(out)


def two_stage(target: SignalTrace, stage1_measured: SignalTrace, lower: float, upper: float):
    """Stage-2 target: what stage 1 failed to deliver, within stage-2 range.

    Returns the trace and the list of ``(index, wanted, clamped)`` events
    where the residual target exceeded ``[lower, upper]``.
    """
    if len(target) != len(stage1_measured):
        raise ValueError("target and stage-1 measurement lengths differ")
    want = target.values - stage1_measured.values
    got = np.clip(want, lower, upper)
    events = [(int(k), float(want[k]), float(got[k])) for k in np.flatnonzero(got != want)]
    if events:
        log.warning("stage-2 target clamped at %d samples", len(events))
    return target.with_values(got), events


def check_two_stage(stage1_capacity: float, stage2_capacity: float, stage1_rmse: float | None = None) -> list:
    """Rules of thumb for splitting a fleet into two actuation stages."""
    warnings = []
    if stage1_capacity > stage2_capacity:
        warnings.append(
            f"stage-1 capacity {stage1_capacity:.1f} kW exceeds stage-2 capacity {stage2_capacity:.1f} kW"
        )
    if stage1_rmse is not None and stage1_rmse >= 0.5:
        warnings.append(f"stage-1 RMSE {stage1_rmse:.2f} is not below 0.5")
    for w in warnings:
        log.warning(w)
    return warnings


FLEET_COLUMNS = [
    "device_id", "der_type", "rating_kw", "update_period_s", "offset_s", "node",
    "pure_delay_s", "settle_time_s", "ramp_limit_kw_s", "spike_rate_hz", "spike_min_kw", "spike_max_kw",
    "integer_kw",
]


def read_fleet(path) -> Fleet:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not set(FLEET_COLUMNS[:6]) <= set(reader.fieldnames):
            raise FleetError(f"{path}: header must include {', '.join(FLEET_COLUMNS[:6])}")
        devices = []
        for line, row in enumerate(reader, start=2):
            try:
                resp = ResponseModel(
                    pure_delay=float(row.get("pure_delay_s") or 0),
                    settle_time=float(row.get("settle_time_s") or 0),
                    ramp_limit=float(row.get("ramp_limit_kw_s") or "inf"),
                    spike_rate=float(row.get("spike_rate_hz") or 0),
                    spike_min=float(row.get("spike_min_kw") or 15),
                    spike_max=float(row.get("spike_max_kw") or 30),
                )
                devices.append(
                    DeviceSpec(
                        der_type=row["der_type"].strip(),
                        rating=float(row["rating_kw"]),
                        update_period=int(row["update_period_s"]),
                        offset=int(row["offset_s"]),
                        response=resp,
                        node=int(row["node"]),
                        device_id=row["device_id"].strip(),
                        integer_kw=(row.get("integer_kw") or "0").strip().lower() in ("1", "true", "yes"),
                    )
                )
            except (ValueError, KeyError, TypeError) as exc:
                raise FleetError(f"{path}:{line}: {exc}") from None
    return Fleet(devices)


def _num(x: float) -> str:
    """Shortest text that reads back as the same float."""
    text = repr(float(x))
    return text[:-2] if text.endswith(".0") else text


def write_fleet(fleet: Fleet, path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(FLEET_COLUMNS)
        for d in fleet.devices:
            r = d.response
            out.writerow([
                d.device_id, d.der_type, _num(d.rating), d.update_period, d.offset, d.node,
                _num(r.pure_delay), _num(r.settle_time), _num(r.ramp_limit), _num(r.spike_rate),
                _num(r.spike_min), _num(r.spike_max), int(d.integer_kw),
            ])


def testbed_fleet(test: int) -> Fleet:
    """Device population of Tests 0, 1 and 2 mapped onto nine computing nodes.

    Nodes 0-1 run the AHUs, node 2 the V1G EVs, nodes 3-7 the V2G EVs and
    node 8 the battery.
    """
    counts = {0: (7, 4, 5, 1), 1: (34, 29, 5, 1), 2: (34, 17, 6, 1)}[test]
    v1g_rating = 4.9 if test == 2 else 3.3
    v1g_period = 60 if test == 2 else 300
    if test == 2:
        # dead times chosen so that dead time + lag + meter filtering
        # reproduce the measured delays in TEST2_DELAYS
        resp = {
            "AHU": ResponseModel(pure_delay=100, ramp_limit=0.25, spike_rate=1 / 3000),
            "V1G": ResponseModel(pure_delay=7, settle_time=1.0),
            "V2G": ResponseModel(pure_delay=2, settle_time=0.5),
            "BESS": ResponseModel(),
        }
    else:
        resp = {
            "AHU": ResponseModel(pure_delay=4, ramp_limit=0.25, spike_rate=1 / 1500),
            "V1G": ResponseModel(pure_delay=40, settle_time=5.0, ramp_limit=10.0, spike_rate=1 / 1500),
            "V2G": ResponseModel(pure_delay=5, settle_time=1.0),
            "BESS": ResponseModel(),
        }
    n_ahu, n_v1g, n_v2g, n_bess = counts
    devices = []
    for k in range(n_ahu):
        # the two AHU nodes refresh half a period apart
        devices.append(
            DeviceSpec("AHU", 2.0, 60, 30 * (k % 2), resp["AHU"], node=k % 2, device_id=f"AHU{k + 1:02d}")
        )
    for k in range(n_v1g):
        # Test 1 staggers three manually operated groups one minute apart
        offset = 60 * (k % 3) if test == 1 else 0
        devices.append(
            DeviceSpec("V1G", v1g_rating, v1g_period, offset, resp["V1G"], node=2,
                       device_id=f"V1G{k + 1:02d}", integer_kw=(test == 2))
        )
    for k in range(n_v2g):
        devices.append(DeviceSpec("V2G", 5.0, 1, 0, resp["V2G"], node=3 + k % 5, device_id=f"V2G{k + 1:02d}"))
    for k in range(n_bess):
        devices.append(DeviceSpec("BESS", 3.0, 20, 0, resp["BESS"], node=8, device_id=f"BESS{k + 1:02d}"))
    return Fleet(devices)
