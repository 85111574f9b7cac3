"""
Scenario files and the end-to-end run: build the target, schedule the
fleet, simulate device responses, clean the measurements, score.

A scenario is an INI file. Relative paths resolve against the file's
directory; ``bundled:`` paths resolve against the package data directory.
"""

from __future__ import annotations

import configparser
import csv
import logging
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from derreg import fleet as fl
from derreg.graph import CommGraph, GraphError, parse_topology
from derreg.market import MarketInputs, estimate_revenue
from derreg.measure import FilterSpec, clean
from derreg.metrics import PjmScore, ScoreReport, normalized_mse, pjm_score, rmse, shift_rmse, tracking_delay
from derreg.problem import CostFunction
from derreg.schedule import ScheduleResult, schedule
from derreg.signal import (
    SignalTrace, compose_target, interpolate_2x, read_trace, write_trace,
)
from derreg.solvers.runner import ALGORITHMS, SolverConfig

log = logging.getLogger(__name__)

DATA_DIR = Path(__file__).parent / "data"
STAGES = ("single", "two")
SOLVER_CHOICES = ALGORITHMS + ("all",)


class ConfigError(ValueError):
    pass


class InfeasibleScenarioError(RuntimeError):
    """Every second of the run had to be clamped."""


@dataclass
class Scenario:
    name: str
    fleet_path: Path
    regd_path: Path
    pv_path: Path | None = None
    building_path: Path | None = None
    beta: float = 0.75
    regd_interpolate: bool = True
    topology: str = "ring"
    solver: str = "all"
    solver_config: SolverConfig = field(default_factory=SolverConfig)
    costs: dict = field(default_factory=dict)  # type -> (a, b)
    upscale: float = 1.0
    stage: str = "single"
    stage1_types: tuple = ("AHU",)
    filter_spec: FilterSpec = field(default_factory=FilterSpec)
    filtered_types: tuple = ("AHU", "V1G")
    max_shift: int = 300
    clip_delay: bool = False
    market: dict = field(default_factory=dict)
    seed: int = 0


_DEFAULT_COSTS = {"AHU": (0.05, 0.0), "V1G": (0.1, 0.0), "V2G": (1.0, 0.0), "BESS": (1.0, 0.0)}


def _key_lines(path: Path) -> dict:
    """(section, key) -> line number, for diagnostics."""
    lines = {}
    section = None
    for no, raw in enumerate(path.read_text().splitlines(), start=1):
        s = raw.strip()
        m = re.match(r"\[([^\]]+)\]", s)
        if m:
            section = m.group(1).strip()
            lines[(section, None)] = no
        elif section and "=" in s and not s.startswith(("#", ";")):
            lines[(section, s.split("=", 1)[0].strip().lower())] = no
    return lines


def _resolve(base: Path, value: str) -> Path:
    if value.startswith("bundled:"):
        return DATA_DIR / value[len("bundled:"):]
    p = Path(value)
    return p if p.is_absolute() else base / p


def load_scenario(path) -> Scenario:
    path = Path(path)
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str.lower
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read scenario: {exc.strerror}") from None
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(str(exc).replace("\n", " ")) from None
    lines = _key_lines(path)

    def where(section, key=None):
        no = lines.get((section, key)) or lines.get((section, None))
        return f"{path}:{no}" if no else str(path)

    def get(section, key, conv=str, default=None, required=False):
        if not parser.has_option(section, key):
            if required:
                raise ConfigError(f"{where(section)}: missing required key '{key}' in [{section}]")
            return default
        raw = parser.get(section, key).strip()
        try:
            return conv(raw)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{where(section, key)}: bad value for '{key}': {raw!r} ({exc})") from None

    def as_bool(raw):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError("expected a boolean")

    def as_list(raw):
        return tuple(x.strip() for x in raw.split(",") if x.strip())

    def as_pair(raw):
        vals = tuple(float(x) for x in as_list(raw))
        if len(vals) != 2:
            raise ValueError("expected 'a, b'")
        return vals

    if not parser.has_section("scenario"):
        raise ConfigError(f"{path}: missing [scenario] section")
    base = path.parent
    opt_path = lambda raw: _resolve(base, raw) if raw else None  # noqa: E731
    sc = Scenario(
        name=get("scenario", "name", default=path.stem),
        fleet_path=get("scenario", "fleet", opt_path, required=True),
        regd_path=get("scenario", "regd", opt_path, required=True),
        pv_path=get("scenario", "pv", opt_path),
        building_path=get("scenario", "building", opt_path),
        beta=get("scenario", "beta", float, 0.75),
        regd_interpolate=get("scenario", "regd_interpolate", as_bool, True),
        seed=get("scenario", "seed", int, 0),
    )
    if not 0.0 < sc.beta < 1.0:
        raise ConfigError(f"{where('scenario', 'beta')}: beta must lie in (0, 1)")
    for key in ("fleet_path", "regd_path", "pv_path", "building_path"):
        p = getattr(sc, key)
        if p is not None and not p.exists():
            short = key[: -len("_path")]
            raise ConfigError(f"{where('scenario', short)}: file not found: {p}")

    informed = get("solver", "informed", lambda r: tuple(int(x) for x in as_list(r)))
    sc.solver_config = SolverConfig(
        budget=get("solver", "budget", int, sc.solver_config.budget),
        pd_step=get("solver", "pd_step", float, sc.solver_config.pd_step),
        dana_step=get("solver", "dana_step", float, sc.solver_config.dana_step),
        dana_depth=get("solver", "dana_depth", int, sc.solver_config.dana_depth),
        informed=informed,
    )
    if sc.solver_config.budget < 1:
        raise ConfigError(f"{where('solver', 'budget')}: budget must be at least 1 round")
    sc.solver = get("solver", "algorithm", str.lower, "all")
    if sc.solver not in SOLVER_CHOICES:
        raise ConfigError(f"{where('solver', 'algorithm')}: algorithm must be one of {', '.join(SOLVER_CHOICES)}")
    sc.topology = get("solver", "topology", str, "ring")

    costs = dict(_DEFAULT_COSTS)
    if parser.has_section("costs"):
        for key in parser.options("costs"):
            kind = key.upper()
            if kind not in fl.DER_TYPES:
                raise ConfigError(f"{where('costs', key)}: unknown DER type '{key}'")
            a, b = get("costs", key, as_pair)
            if a <= 0:
                raise ConfigError(f"{where('costs', key)}: curvature must be positive")
            costs[kind] = (a, b)
    sc.costs = costs

    sc.upscale = get("fleet", "upscale", float, 1.0)
    if sc.upscale < 1.0:
        raise ConfigError(f"{where('fleet', 'upscale')}: upscaling factor must be at least 1")
    sc.stage = get("fleet", "stage", str.lower, "single")
    if sc.stage not in STAGES:
        raise ConfigError(f"{where('fleet', 'stage')}: stage must be 'single' or 'two'")
    sc.stage1_types = get("fleet", "stage1", lambda r: tuple(x.upper() for x in as_list(r)), ("AHU",))

    try:
        sc.filter_spec = FilterSpec(
            window=get("measure", "window", int, 4),
            outlier_fraction=get("measure", "outlier_fraction", float, 0.5),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{where('measure')}: {exc}") from None
    sc.filtered_types = get("measure", "filtered", lambda r: tuple(x.upper() for x in as_list(r)), ("AHU", "V1G"))
    sc.max_shift = get("metrics", "max_shift", int, 300)
    sc.clip_delay = get("metrics", "clip_delay", as_bool, False)

    if parser.has_section("market"):
        sc.market = {k: get("market", k, float) for k in parser.options("market")}
        allowed = {"capability_price", "performance_price", "capability_credit", "performance_credit"}
        extra = set(sc.market) - allowed
        if extra:
            raise ConfigError(f"{where('market', sorted(extra)[0])}: unknown market key '{sorted(extra)[0]}'")
    return sc


@dataclass
class RunOutputs:
    scenario: Scenario
    fleet: fl.Fleet
    target: SignalTrace  # raw target from the signal pipeline
    scheduled: SignalTrace  # target limited to the physical fleet range
    commanded: np.ndarray  # (T, devices)
    measured: np.ndarray  # (T, devices) raw simulated device outputs
    group_commanded: dict
    group_measured: dict  # cleaned
    total_commanded: SignalTrace
    total_measured: SignalTrace
    report: ScoreReport
    revenue: dict | None
    schedules: list
    events: list


def _group_names(fleet):
    return [t for t in fl.DER_TYPES if fleet.counts()[t] > 0]


def _simulate(fleet, commanded, seed):
    """Raw per-device outputs; each device has its own child seed."""
    lo, hi = fleet.bounds()
    seeds = np.random.SeedSequence(seed).spawn(len(fleet))
    out = np.empty_like(commanded)
    for d, dev in enumerate(fleet.devices):
        tr = fl.respond(SignalTrace(commanded[:, d]), dev.response, seeds[d], (lo[d], hi[d]))
        out[:, d] = tr.values
    return out


def _clean_group(fleet, measured, mask, kind, sc):
    """Cleaned group deviation.

    Each computing node's devices share one meter; filtering runs on that
    meter's absolute power and the baseline is subtracted afterwards.
    """
    raw = measured[:, mask].sum(axis=1)
    if kind not in sc.filtered_types:
        return raw
    baselines = fleet.baselines()
    nodes = np.array([d.node for d in fleet.devices])
    out = np.zeros(measured.shape[0])
    for node in np.unique(nodes[mask]):
        meter = mask & (nodes == node)
        base = float(baselines[meter].sum())
        out += clean(measured[:, meter].sum(axis=1) + base, sc.filter_spec) - base
    return out


def _solver_errors(fleet, schedules):
    """Normalized MSE per solver and DER group over all solved instants."""
    types = fleet.node_types
    out = {}
    for alg in ALGORITHMS:
        rows = [(d, r) for res in schedules for (k, a, d, r) in res.solves if a == alg]
        if not rows:
            continue
        dist = np.array([d for d, _ in rows])
        ref = np.array([r for _, r in rows])
        entry = {}
        for kind in _group_names(fleet):
            cols = [i for i, t in enumerate(types) if t == kind]
            try:
                entry[kind] = normalized_mse(dist, ref, cols)
            except ValueError:
                entry[kind] = float("nan")
        entry["total"] = normalized_mse(dist, ref)
        out[alg] = entry
    return out


def _pjm(measured, target, sc) -> PjmScore:
    try:
        return pjm_score(measured, target, sc.max_shift, sc.clip_delay)
    except ValueError as exc:
        log.warning("performance score undefined: %s", exc)
        nan = float("nan")
        return PjmScore(nan, nan, nan, -1, -1)


def run_scenario(sc: Scenario, solver: str | None = None, stage: str | None = None,
                 seed: int | None = None, budget: int | None = None) -> RunOutputs:
    solver = (solver or sc.solver).lower()
    stage = (stage or sc.stage).lower()
    seed = sc.seed if seed is None else seed
    cfg = sc.solver_config if budget is None else replace(sc.solver_config, budget=budget)

    fleet = fl.read_fleet(sc.fleet_path)
    try:
        graph = parse_topology(sc.topology, fleet.n_nodes)
    except GraphError as exc:
        raise ConfigError(f"topology: {exc}") from None
    regd = read_trace(sc.regd_path)
    if sc.regd_interpolate:
        regd = interpolate_2x(regd)
    pv = read_trace(sc.pv_path) if sc.pv_path else None
    building = read_trace(sc.building_path) if sc.building_path else None
    target = compose_target(regd, fleet.capacity(), pv, building, sc.beta)

    costs = []
    for kind in fleet.node_types:
        if kind not in sc.costs:
            raise ConfigError(f"no cost coefficients for node type {kind}")
        a, b = sc.costs[kind]
        costs.append(CostFunction("quadratic", a, b))

    groups = _group_names(fleet)
    masks = {g: fleet.mask([g]) for g in groups}
    first = schedule(fleet, target, graph, costs, solver, cfg, upscale=sc.upscale)
    schedules = [first]
    # the regulation power asked of the fleet: the target limited to what the
    # fleet can physically deliver with every device free; seconds the
    # scheduler clamps further because of held devices count as tracking error
    lo_all, hi_all = fleet.bounds()
    scheduled = target.with_values(np.clip(target.values, lo_all.sum(), hi_all.sum()))
    events = [("stage1", e.k, e.requested, e.applied) for e in first.events]
    if np.all(scheduled.values != target.values):
        raise InfeasibleScenarioError("the target lies outside the fleet range at every second")

    if stage == "two":
        s1 = fleet.mask(sc.stage1_types)
        if not s1.any() or s1.all():
            raise ConfigError("two-stage mode needs devices in both stages")
        commanded = np.where(s1, first.commanded, 0.0)
        measured1 = _simulate(fleet, commanded, seed)
        stage1_meas = np.zeros(len(target))
        for g in groups:
            if masks[g][s1].any() and (masks[g] <= s1).all():
                stage1_meas += _clean_group(fleet, measured1, masks[g], g, sc)
        s2_lo, s2_hi = float(lo_all[~s1].sum()), float(hi_all[~s1].sum())
        fl.check_two_stage(fleet.capacity(sc.stage1_types),
                           fleet.capacity([t for t in fl.DER_TYPES if t not in sc.stage1_types]))
        stage2_target, s2_events = fl.two_stage(scheduled, SignalTrace(stage1_meas), s2_lo, s2_hi)
        events += [("stage2", k, w, g) for k, w, g in s2_events]
        second = schedule(fleet, stage2_target, graph, costs, solver, cfg, active=~s1, upscale=sc.upscale)
        schedules.append(second)
        events += [("stage2", e.k, e.requested, e.applied) for e in second.events]
        commanded = np.where(s1, first.commanded, second.commanded)
        measured = _simulate(fleet, commanded, seed)
    else:
        commanded = first.commanded
        measured = _simulate(fleet, commanded, seed)

    group_cmd = {g: commanded[:, masks[g]].sum(axis=1) for g in groups}
    group_meas = {g: _clean_group(fleet, measured, masks[g], g, sc) for g in groups}
    total_meas = np.sum([group_meas[g] for g in groups], axis=0)
    total_tar = scheduled.values

    group_scores = {}
    for g in groups:
        # per-group error is reported at the group's optimal shift
        try:
            curve = shift_rmse(group_meas[g], group_cmd[g], sc.max_shift)
            d = int(np.argmin(curve))
            group_scores[g] = (float(curve[d]), d)
        except ValueError:
            group_scores[g] = (float("nan"), -1)
    report = ScoreReport(
        rmse=rmse(total_meas, total_tar),
        delay_s=tracking_delay(total_meas, total_tar, sc.max_shift),
        pjm=_pjm(total_meas, total_tar, sc),
        groups=group_scores,
        normalized_mse=_solver_errors(fleet, schedules),
        rmse_raw_target=rmse(total_meas, target.values),
    )
    revenue = None
    if sc.market:
        score = min(max(report.pjm.s, 0.0), 1.0) if np.isfinite(report.pjm.s) else 0.0
        revenue = estimate_revenue(MarketInputs(fleet.rated_capacity(), score, **sc.market))
    return RunOutputs(
        scenario=sc, fleet=fleet, target=target, scheduled=scheduled,
        commanded=commanded, measured=measured,
        group_commanded=group_cmd, group_measured=group_meas,
        total_commanded=target.with_values(commanded.sum(axis=1)),
        total_measured=target.with_values(total_meas),
        report=report, revenue=revenue, schedules=schedules, events=events,
    )


def _fmt(v) -> str:
    return repr(float(v))


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(header)
        out.writerows(rows)


def emit_plot_data(run: RunOutputs, out_dir) -> list:
    """Per-group target and measured series, with measured shifted by the group's delay."""
    if run is None or run.commanded.size == 0:
        raise ValueError("nothing to plot: empty run")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    series = {g: (run.group_commanded[g], run.group_measured[g], run.report.groups[g][1])
              for g in run.group_commanded}
    series["total"] = (run.scheduled.values, run.total_measured.values, run.report.delay_s)
    written = []
    for name, (tar, meas, delay) in series.items():
        d = max(int(delay), 0)
        shifted = np.full(tar.size, np.nan)
        shifted[: tar.size - d] = meas[d:]
        path = out_dir / f"{name.lower()}.csv"
        _write_rows(path, ["t_s", "target", "measured", "measured_shifted"],
                    [[k, _fmt(tar[k]), _fmt(meas[k]), _fmt(shifted[k])] for k in range(tar.size)])
        written.append(path)
    return written


def write_outputs(run: RunOutputs, out_dir) -> None:
    out = Path(out_dir)
    for sub in ("commanded", "measured", "groups", "plot"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    for d, dev in enumerate(run.fleet.devices):
        write_trace(SignalTrace(run.commanded[:, d]), out / "commanded" / f"{dev.device_id}.csv")
        write_trace(SignalTrace(run.measured[:, d]), out / "measured" / f"{dev.device_id}.csv")
    for g in run.group_commanded:
        write_trace(SignalTrace(run.group_commanded[g]), out / "groups" / f"{g.lower()}_commanded.csv")
        write_trace(SignalTrace(run.group_measured[g]), out / "groups" / f"{g.lower()}_measured.csv")
    write_trace(run.target, out / "target.csv")
    write_trace(run.scheduled, out / "scheduled_target.csv")
    write_trace(run.total_commanded, out / "total_commanded.csv")
    write_trace(run.total_measured, out / "total_measured.csv")

    rep = run.report
    algs = [a for a in ALGORITHMS if a in rep.normalized_mse]
    rows = []
    for g in list(run.group_commanded) + ["total"]:
        rows.append([g] + [f"{rep.normalized_mse[a].get(g, float('nan')):.6g}" for a in algs])
    _write_rows(out / "normalized_mse.csv", ["der_type"] + algs, rows)
    rows = [[g, f"{r:.6g}", d] for g, (r, d) in rep.groups.items()]
    rows.append(["total", f"{rep.rmse:.6g}", rep.delay_s])
    _write_rows(out / "tracking.csv", ["der_type", "rmse", "delay_s"], rows)
    rep.write_csv(out / "score.csv")
    text = rep.text()
    if run.revenue is not None:
        rv = run.revenue
        text += (f"daily capability credit {rv['capability']:.2f}\n"
                 f"daily performance credit {rv['performance']:.2f}\n"
                 f"annual revenue         {rv['annual']:.2f}\n")
        _write_rows(out / "revenue.csv", ["item", "value"],
                    [[k, f"{float(v):.10g}"] for k, v in rv.items()])
    (out / "score.txt").write_text(text)
    _write_rows(out / "events.csv", ["stage", "t_s", "requested", "applied"],
                [[s, k, _fmt(w), _fmt(g)] for s, k, w, g in run.events])
    emit_plot_data(run, out / "plot")
