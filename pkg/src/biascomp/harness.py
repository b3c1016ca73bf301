"""Scenario scripts, twin simulation, metrics and run reports.

A scenario fixes a truth cell, an OCV table, a current script, a bias
schedule, a noise level, a seed and the estimator settings. The current
script is::

    initial charge (0.1C from soc0, 1 s)
    high-frequency injection window (0.1 s): rest, then sinusoid
    medium-frequency injection window (0.1 s): rest, then sinusoid
    rest, charge to soc_top (1 s)
    N x [discharge soc_top -> soc_bottom, charge back]  (1 s)

The estimator sees the whole record at 1 s (injection windows decimated)
and the two windows at their native 0.1 s for parameter identification.
Cycle ``c >= 1`` spans from its discharge start to the next discharge start;
cycle 0 is the initial stage.
"""

from __future__ import annotations

import json
import math
import time
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .ecm import REFERENCE_CELLS, BiasSchedule, CellParams, CellState, TimeSeries, simulate
from .errors import BiasCompError, ConfigError, FormatError, InvalidInputError
from .filters import InjectionSpec, gen_injection
from .ocv import OcvCurve, classify_zone, fit, load_anchors
from .pipeline import (PipelineConfig, Trajectory, initial_state, run, run_baseline,
                       run_param_id)

# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def rmse_soc(est, truth) -> float:
    """Root-mean-square SOC error in percent."""
    est = np.asarray(est, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if est.shape != truth.shape or est.ndim != 1:
        raise InvalidInputError(f"length mismatch: {est.shape} vs {truth.shape}")
    if len(est) == 0:
        raise InvalidInputError("empty series")
    return 100.0 * math.sqrt(float(np.mean((truth - est) ** 2)))


def re_capacity(qb_hat: float, qb_true: float) -> float:
    """Absolute relative capacity error in percent."""
    if not qb_true > 0:
        raise InvalidInputError("qb_true must be positive")
    return 100.0 * abs(qb_hat - qb_true) / qb_true


# ---------------------------------------------------------------------------
# Scenario
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InjectionWindow:
    amplitude_c: float  # amplitude as a C-rate of the true capacity
    freq_hz: float
    duration_s: float
    rest_s: float = 300.0


@dataclass(frozen=True)
class ProfileScript:
    soc0: float = 0.01
    c_rate: float = 0.1
    initial_charge_s: float = 14400.0
    hf: InjectionWindow = InjectionWindow(0.5, 0.5, 300.0)
    mf: InjectionWindow = InjectionWindow(0.5, 0.01, 2400.0)
    fine_ts_s: float = 0.1
    ts_s: float = 1.0
    rest_after_s: float = 600.0
    soc_top: float = 0.70
    soc_bottom: float = 0.01
    cycles: int = 4

    def __post_init__(self):
        for name in ("soc0", "soc_top", "soc_bottom"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must be within [0, 1]")
        if not self.soc_bottom < self.soc_top:
            raise ConfigError("soc_bottom must be below soc_top")
        if not (self.c_rate > 0 and self.ts_s > 0 and self.fine_ts_s > 0):
            raise ConfigError("c_rate and sampling periods must be positive")
        if self.initial_charge_s < 0 or self.rest_after_s < 0 or self.cycles < 0:
            raise ConfigError("durations and cycle count must be non-negative")
        ratio = self.ts_s / self.fine_ts_s
        if abs(ratio - round(ratio)) > 1e-9:
            raise ConfigError("ts_s must be an integer multiple of fine_ts_s")
        for w in (self.hf, self.mf):
            for v in (w.duration_s, w.rest_s):
                if abs(v / self.ts_s - round(v / self.ts_s)) > 1e-9:
                    raise ConfigError("window durations must be whole multiples of ts_s")

    @classmethod
    def from_dict(cls, d: dict) -> "ProfileScript":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown profile keys {sorted(unknown)}")
        for k in ("hf", "mf"):
            if k in d:
                try:
                    d[k] = InjectionWindow(**d[k])
                except TypeError as exc:
                    raise ConfigError(f"bad {k} window: {exc}") from exc
        if "cycles" in d:
            d["cycles"] = int(d["cycles"])
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class EstimatorSetup:
    soc0: float = 0.10
    qb0_frac: float = 0.8  # initial capacity guess as a fraction of truth
    params_frac: float = 0.8  # initial Rs, Rt, tau guesses as a fraction of truth
    dv0: float = 0.0
    config: PipelineConfig = PipelineConfig()

    @classmethod
    def from_dict(cls, d: dict) -> "EstimatorSetup":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown estimator keys {sorted(unknown)}")
        if "config" in d:
            d["config"] = PipelineConfig.from_dict(d["config"])
        return cls(**d)

    def to_dict(self) -> dict:
        return {"soc0": self.soc0, "qb0_frac": self.qb0_frac, "params_frac": self.params_frac,
                "dv0": self.dv0, "config": self.config.to_dict()}


@dataclass(frozen=True)
class Scenario:
    name: str
    cell: CellParams
    ocv_table: Optional[str] = None  # anchor CSV, relative to base_dir; None = shipped table
    profile: ProfileScript = ProfileScript()
    bias: tuple = ((0.0, 0.0),)  # (start, dv) pairs; start may be "cycle:N"
    noise_std: float = 0.001
    seed: int = 0
    estimator: EstimatorSetup = EstimatorSetup()
    base_dir: Optional[str] = None

    def __post_init__(self):
        if not (self.noise_std >= 0 and math.isfinite(self.noise_std)):
            raise ConfigError("noise_std must be finite and >= 0")
        if not self.bias:
            raise ConfigError("bias schedule is empty")

    @classmethod
    def from_dict(cls, d: dict, base_dir=None) -> "Scenario":
        d = dict(d)
        known = set(cls.__dataclass_fields__) - {"base_dir"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown scenario keys {sorted(unknown)}")
        try:
            cell = d["cell"]
            if isinstance(cell, str):
                if cell not in REFERENCE_CELLS:
                    raise ConfigError(f"unknown cell {cell!r}; known: {sorted(REFERENCE_CELLS)}")
                cell = REFERENCE_CELLS[cell]
            else:
                cell = CellParams.from_dict(cell)
            return cls(
                name=str(d.get("name", "scenario")),
                cell=cell,
                ocv_table=d.get("ocv_table"),
                profile=ProfileScript.from_dict(d.get("profile", {})),
                bias=tuple(tuple(s) for s in d.get("bias", [[0.0, 0.0]])),
                noise_std=float(d.get("noise_std", 0.001)),
                seed=int(d.get("seed", 0)),
                estimator=EstimatorSetup.from_dict(d.get("estimator", {})),
                base_dir=None if base_dir is None else str(base_dir),
            )
        except KeyError as exc:
            raise ConfigError(f"scenario is missing {exc}") from exc
        except (TypeError, ValueError) as exc:
            if isinstance(exc, BiasCompError):
                raise
            raise ConfigError(f"bad scenario: {exc}") from exc

    @classmethod
    def load(cls, path) -> "Scenario":
        path = Path(path)
        try:
            d = json.loads(path.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read scenario {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: {exc}") from exc
        s = cls.from_dict(d, base_dir=path.parent)
        s.ocv_curve()  # referenced files must exist and parse
        return s

    def to_dict(self) -> dict:
        return {"name": self.name, "cell": self.cell.to_dict(), "ocv_table": self.ocv_table,
                "profile": self.profile.to_dict(), "bias": [list(b) for b in self.bias],
                "noise_std": self.noise_std, "seed": self.seed,
                "estimator": self.estimator.to_dict()}

    def ocv_curve(self) -> OcvCurve:
        if self.ocv_table is None:
            return _shipped_curve()
        path = Path(self.ocv_table)
        if not path.is_absolute() and self.base_dir is not None:
            path = Path(self.base_dir) / path
        if not path.exists():
            raise ConfigError(f"OCV table {path} does not exist")
        return fit(load_anchors(path)).curve

    def rng(self, consumer: str) -> np.random.Generator:
        """Independent stream per named consumer, all derived from ``seed``."""
        key = zlib.crc32(consumer.encode())
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(key,)))


def _shipped_curve() -> OcvCurve:
    from .ocv import default_curve
    return default_curve()


# ---------------------------------------------------------------------------
# Profile
# ---------------------------------------------------------------------------


@dataclass
class Profile:
    """Current script split into contiguous chunks.

    ``chunks`` are ``(name, TimeSeries)`` pairs; each chunk's first sample
    repeats the previous chunk's last time. ``t_switch`` is where parameter
    identification ends; ``cycle_starts[c-1]`` is the discharge start of
    cycle ``c``.
    """

    chunks: list
    t_switch: float
    cycle_starts: list
    t_end: float
    fine_names: tuple = ("hf", "mf")


def _const(t0, duration, ts, i):
    n = int(round(duration / ts))
    return TimeSeries(t0 + np.arange(n + 1) * ts, np.full(n + 1, float(i)))


def _window(t0, w: InjectionWindow, ts, amplitude_a):
    rest = _const(t0, w.rest_s, ts, 0.0)
    inj = gen_injection(InjectionSpec(amplitude_a, w.freq_hz, w.duration_s), ts,
                        t0=t0 + w.rest_s)
    t = np.concatenate([rest.t_s, inj.t_s[1:]])
    n = len(t)
    t = t0 + np.arange(n) * ts  # exact grid
    return TimeSeries(t, np.concatenate([rest.i_a, inj.i_a[1:]]))


def build_profile(scn: Scenario) -> Profile:
    pr = scn.profile
    cell = scn.cell
    i_c = pr.c_rate * cell.qb_ah  # 0.1C in amps
    hours_per_soc = 1.0 / pr.c_rate  # at this rate
    soc_after_init = pr.soc0 + pr.initial_charge_s / 3600.0 / hours_per_soc * cell.eta
    if soc_after_init > 1.0:
        raise ConfigError("initial charge overshoots full charge")
    if pr.cycles > 0 and soc_after_init > pr.soc_top:
        raise ConfigError(f"initial charge reaches SOC {soc_after_init:.3f}, above soc_top")
    chunks = []
    t = 0.0
    chunks.append(("initial_charge", _const(t, pr.initial_charge_s, pr.ts_s, -i_c)))
    t += pr.initial_charge_s
    for name, w in (("hf", pr.hf), ("mf", pr.mf)):
        c = _window(t, w, pr.fine_ts_s, w.amplitude_c * cell.qb_ah)
        chunks.append((name, c))
        t = float(c.t_s[-1])
    t_switch = t

    def charge_time(delta_soc):
        return round(delta_soc * hours_per_soc * 3600.0 / cell.eta / pr.ts_s) * pr.ts_s

    cycle_starts = []
    if pr.cycles > 0:
        rest = _const(t, pr.rest_after_s, pr.ts_s, 0.0)
        top_up = charge_time(pr.soc_top - soc_after_init)
        if top_up > 0:
            charge = _const(t + pr.rest_after_s, top_up, pr.ts_s, -i_c)
            rest = TimeSeries(np.concatenate([rest.t_s, charge.t_s[1:]]),
                              np.concatenate([rest.i_a, charge.i_a[1:]]))
        chunks.append(("top_up", rest))
        t = float(rest.t_s[-1])
        half = charge_time(pr.soc_top - pr.soc_bottom)
        for c in range(1, pr.cycles + 1):
            cycle_starts.append(t)
            dis = _const(t, half, pr.ts_s, i_c)
            ch = _const(t + half, half, pr.ts_s, -i_c)
            chunks.append((f"cycle{c}", TimeSeries(np.concatenate([dis.t_s, ch.t_s[1:]]),
                                                   np.concatenate([dis.i_a, ch.i_a[1:]]))))
            t = float(ch.t_s[-1])
    return Profile(chunks, t_switch, cycle_starts, t)


def bias_schedule(scn: Scenario, prof: Profile) -> BiasSchedule:
    """Resolve ``"cycle:N"`` start markers against the profile."""
    segs = []
    for start, dv in scn.bias:
        if isinstance(start, str):
            if not start.startswith("cycle:"):
                raise ConfigError(f"bad bias start {start!r}")
            c = int(start.split(":", 1)[1])
            if not 1 <= c <= len(prof.cycle_starts):
                raise ConfigError(f"bias starts at cycle {c}, profile has {len(prof.cycle_starts)}")
            start = prof.cycle_starts[c - 1]
        segs.append((float(start), float(dv)))
    try:
        return BiasSchedule(tuple(segs))
    except InvalidInputError as exc:
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------


@dataclass
class SimData:
    coarse: TimeSeries  # full record at ts_s
    fine: dict  # window name -> TimeSeries at fine_ts_s
    profile: Profile
    bias: BiasSchedule


def simulate_scenario(scn: Scenario, ocv: Optional[OcvCurve] = None) -> SimData:
    ocv = ocv or scn.ocv_curve()
    prof = build_profile(scn)
    bias = bias_schedule(scn, prof)
    state = CellState(scn.profile.soc0, 0.0)
    pieces, fine = [], {}
    step_ratio = int(round(scn.profile.ts_s / scn.profile.fine_ts_s))
    for k, (name, cur) in enumerate(prof.chunks):
        rng = scn.rng(f"noise/{name}") if scn.noise_std > 0 else None
        sim = simulate(state, cur, scn.cell, ocv, bias, scn.noise_std, rng)
        state = CellState(float(sim.soc_true[-1]), float(sim.vc_true[-1]))
        if name in prof.fine_names:
            fine[name] = sim
            idx = np.arange(0, len(sim), step_ratio)
            sel = sim.select(idx)
            sel.t_s = sim.t_s[0] + np.arange(len(idx)) * scn.profile.ts_s
            sim = sel
        # a later chunk's first sample duplicates the previous chunk's last one
        pieces.append(sim if k == 0 else sim.select(slice(1, None)))
    coarse = TimeSeries.concat(pieces)
    coarse.t_s = np.arange(len(coarse)) * scn.profile.ts_s
    return SimData(coarse, fine, prof, bias)


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------


@dataclass
class CycleMetrics:
    cycle: int
    t_start_s: float
    t_end_s: float
    rmse_soc_pct: float
    qb_hat_ah: float
    qb_re_pct: float
    dv_hat_mv: float


@dataclass
class RunReport:
    scenario: str
    seed: int
    params_true: dict
    params_hat: dict
    param_err_pct: dict
    cycles: list
    baseline_cycles: Optional[list] = None
    runtime_s: float = field(default=0.0, compare=False)

    def __post_init__(self):
        for c in list(self.cycles) + list(self.baseline_cycles or []):
            if c.rmse_soc_pct < 0 or c.qb_re_pct < 0:
                raise InvalidInputError("metrics must be non-negative")

    @property
    def final(self) -> CycleMetrics:
        return self.cycles[-1]

    @property
    def final_baseline(self) -> Optional[CycleMetrics]:
        return self.baseline_cycles[-1] if self.baseline_cycles else None

    def to_dict(self) -> dict:
        d = asdict(self)
        if self.baseline_cycles is not None:
            d["comparison"] = {"final_rmse_soc_pct": {
                "compensated": self.final.rmse_soc_pct,
                "baseline": self.final_baseline.rmse_soc_pct}}
        return d

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        d = dict(d)
        d.pop("comparison", None)
        d["cycles"] = [CycleMetrics(**c) for c in d["cycles"]]
        if d.get("baseline_cycles") is not None:
            d["baseline_cycles"] = [CycleMetrics(**c) for c in d["baseline_cycles"]]
        return cls(**d)


def cycle_windows(prof: Profile, t_end: float) -> list[tuple[int, float, float]]:
    bounds = [0.0] + list(prof.cycle_starts) + [t_end + 1.0]
    return [(c, bounds[c], bounds[c + 1]) for c in range(len(bounds) - 1)]


def cycle_metrics(traj: Trajectory, prof: Profile, qb_true: float) -> list[CycleMetrics]:
    out = []
    t = traj.t_s
    for c, t0, t1 in cycle_windows(prof, float(t[-1])):
        m = (t >= t0) & (t < t1)
        if not m.any():
            continue
        last = np.nonzero(m)[0][-1]
        out.append(CycleMetrics(c, float(t0), float(t[last]),
                                rmse_soc(traj.soc_hat[m], traj.soc_true[m]),
                                float(traj.qb_hat[last]), re_capacity(traj.qb_hat[last], qb_true),
                                1e3 * float(traj.dv_hat[last])))
    return out


def _pct_err(est: float, true: float) -> float:
    return 100.0 * (est - true) / true


@dataclass
class ScenarioRun:
    report: RunReport
    sim: SimData
    trajectory: Trajectory
    baseline: Optional[Trajectory]
    param_id: object
    ocv: OcvCurve


class StageError(BiasCompError):
    """Wraps a failure with the name of the scenario stage that raised it."""

    def __init__(self, stage: str, cause: BiasCompError):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except BiasCompError as exc:
        raise StageError(name, exc) from exc


def execute(scn: Scenario, *, compare: bool = False, sim: Optional[SimData] = None) -> ScenarioRun:
    """Simulate, identify parameters, estimate, and score one scenario."""
    t_start = time.perf_counter()
    ocv = _stage("ocv", scn.ocv_curve)
    if sim is None:
        sim = _stage("simulate", simulate_scenario, scn, ocv)
    est = scn.estimator
    cfg = est.config
    truth = scn.cell
    guess = truth.with_(rs_ohm=est.params_frac * truth.rs_ohm,
                        rt_ohm=est.params_frac * truth.rt_ohm,
                        tau_s=est.params_frac * truth.tau_s,
                        qb_ah=est.qb0_frac * truth.qb_ah)
    pid = _stage("param_id", run_param_id, sim.fine.get("hf"), sim.fine.get("mf"), guess, cfg)
    init = _stage("init", initial_state, est.soc0, guess.qb_ah, guess, cfg, dv0=est.dv0)
    traj = _stage("estimate", run, sim.coarse, init, ocv, cfg,
                  switch=(sim.profile.t_switch, pid.params), qb_true=truth.qb_ah)
    base = None
    if compare:
        binit = initial_state(est.soc0, guess.qb_ah, truth, cfg)
        base = _stage("baseline", run_baseline, sim.coarse, binit, truth, ocv, cfg,
                      qb_true=truth.qb_ah)
    hat = pid.params
    report = RunReport(
        scenario=scn.name, seed=scn.seed,
        params_true={k: getattr(truth, k) for k in ("rs_ohm", "rt_ohm", "tau_s", "qb_ah")},
        params_hat={"rs_ohm": hat.rs_ohm, "rt_ohm": hat.rt_ohm, "tau_s": hat.tau_s,
                    "qb_ah": float(traj.qb_hat[-1])},
        param_err_pct={"rs_ohm": _pct_err(hat.rs_ohm, truth.rs_ohm),
                       "rt_ohm": _pct_err(hat.rt_ohm, truth.rt_ohm),
                       "tau_s": _pct_err(hat.tau_s, truth.tau_s),
                       "qb_ah": _pct_err(float(traj.qb_hat[-1]), truth.qb_ah)},
        cycles=cycle_metrics(traj, sim.profile, truth.qb_ah),
        baseline_cycles=None if base is None else cycle_metrics(base, sim.profile, truth.qb_ah),
        runtime_s=time.perf_counter() - t_start,
    )
    return ScenarioRun(report, sim, traj, base, pid, ocv)


def run_baseline_only(scn: Scenario) -> tuple[list[CycleMetrics], Trajectory, SimData]:
    ocv = _stage("ocv", scn.ocv_curve)
    sim = _stage("simulate", simulate_scenario, scn, ocv)
    est = scn.estimator
    binit = initial_state(est.soc0, est.qb0_frac * scn.cell.qb_ah, scn.cell, est.config)
    base = _stage("baseline", run_baseline, sim.coarse, binit, scn.cell, ocv, est.config,
                  qb_true=scn.cell.qb_ah)
    return cycle_metrics(base, sim.profile, scn.cell.qb_ah), base, sim


# ---------------------------------------------------------------------------
# Artifacts
# ---------------------------------------------------------------------------


def write_columns(path, cols: dict) -> None:
    names = list(cols)
    arrays = [np.asarray(cols[n]) for n in names]
    with open(path, "w") as fh:
        fh.write(",".join(names) + "\n")
        for row in zip(*(a.tolist() for a in arrays)):
            fh.write(",".join(v if isinstance(v, str) else repr(v) for v in row) + "\n")


def write_simulation(sim: SimData, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "measurements.csv"]
    sim.coarse.to_csv(paths[0])
    for name, s in sim.fine.items():
        p = out / f"injection_{name}.csv"
        s.to_csv(p)
        paths.append(p)
    return paths


def write_plot_data(r: ScenarioRun, out_dir, zone_cfg, every: int = 10) -> list[Path]:
    """Small CSVs with the series behind the usual result figures."""
    out = Path(out_dir)
    paths = []
    grid = np.linspace(0.0, 1.0, 1001)
    zones = [classify_zone(zone_cfg, s).value for s in grid]
    p = out / "plot_ocv.csv"
    write_columns(p, {"soc": grid, "v_ocv": r.ocv.eval(grid), "slope": r.ocv.slope(grid),
                       "zone": zones})
    paths.append(p)
    tr = r.trajectory
    sl = slice(None, None, every)
    cols = {"t_s": tr.t_s[sl], "soc_true": tr.soc_true[sl], "soc_hat": tr.soc_hat[sl],
            "soc_err": tr.soc_error()[sl], "qb_hat": tr.qb_hat[sl]}
    if r.baseline is not None:
        cols["soc_hat_baseline"] = r.baseline.soc_hat[sl]
        cols["soc_err_baseline"] = r.baseline.soc_error()[sl]
        cols["qb_hat_baseline"] = r.baseline.qb_hat[sl]
    p = out / "plot_estimates.csv"
    write_columns(p, cols)
    paths.append(p)
    p = out / "plot_bias.csv"
    write_columns(p, {"t_s": tr.t_s[sl], "dv_true": r.sim.bias.at(tr.t_s[sl]),
                       "dv_hat": tr.dv_hat[sl], "zone": tr.zone[sl]})
    paths.append(p)
    rep = r.report
    cols = {"cycle": [c.cycle for c in rep.cycles],
            "rmse_soc_pct": [c.rmse_soc_pct for c in rep.cycles],
            "qb_re_pct": [c.qb_re_pct for c in rep.cycles],
            "dv_hat_mv": [c.dv_hat_mv for c in rep.cycles]}
    if rep.baseline_cycles:
        cols["rmse_soc_pct_baseline"] = [c.rmse_soc_pct for c in rep.baseline_cycles]
        cols["qb_re_pct_baseline"] = [c.qb_re_pct for c in rep.baseline_cycles]
    p = out / "plot_cycle_metrics.csv"
    write_columns(p, cols)
    paths.append(p)
    return paths


def run_scenario(scn: Scenario, out_dir, *, compare: bool = False) -> RunReport:
    """Execute a scenario and write report, trajectories, traces and plot data."""
    r = execute(scn, compare=compare)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    r.report.to_json(out / "report.json")
    r.trajectory.to_csv(out / "trajectory.csv")
    if r.baseline is not None:
        r.baseline.to_csv(out / "baseline_trajectory.csv")
    r.param_id.rs_trace.to_csv(out / "trace_rs.csv")
    r.param_id.rt_tau_trace.to_csv(out / "trace_rt_tau.csv")
    write_plot_data(r, out, scn.estimator.config.zones)
    return r.report
