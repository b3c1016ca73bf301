"""Bias-compensated SOC/capacity estimation.

Step 1 identifies ``Rs`` then ``(Rt, tau)`` from high-pass filtered data
recorded under two sinusoidal injections. Step 2 is a zone-driven state
machine keyed on the previous SOC estimate:

* H zone (steep OCV): dual EKF over SOC and capacity, with the latest bias
  estimate subtracted inside the measurement model.
* L zone (flat OCV), discharge only: coulomb counting for SOC while a scalar
  EKF estimates the voltage-sensor bias. Errors in the counted SOC barely
  move the predicted voltage here, so the bias is observable in isolation.
* M zone, and L zone while charging: coulomb counting only.

Capacity only changes in H, the bias only in L. :func:`run_baseline` is the
reference method that runs the dual EKF on every sample with no bias
handling.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .ecm import CellParams, Sample, TimeSeries, ah_to_coulombs, step_vc
from .errors import IdentifiabilityError, InvalidInputError, NumericalFailure
from .filters import filter_pair
from .kalman import (DEFAULT_Q_DV, DEFAULT_Q_QB, DEFAULT_Q_RS, DEFAULT_Q_RT_TAU,
                     DEFAULT_Q_SOC, DEFAULT_R_MEAS, INIT_REL_ERR, P0_FACTOR, QB_FLOOR_AH,
                     DekfState, EkfState, FilterTrace, ThetaRc, dekf_step, estimate_dv,
                     estimate_rs, estimate_rt_tau)
from .ocv import Zone, ZoneConfig, classify_zone


class Stage(str, enum.Enum):
    PARAM_ID = "ParamId"
    STATE_EST = "StateEst"


@dataclass(frozen=True)
class PipelineConfig:
    zones: ZoneConfig = field(default_factory=ZoneConfig)
    tc_hf_s: float = 10.0
    tc_mf_s: float = 300.0
    prime_filters: bool = True
    r_meas: float = DEFAULT_R_MEAS
    q_soc: float = DEFAULT_Q_SOC
    q_qb: float = DEFAULT_Q_QB
    q_rs: float = DEFAULT_Q_RS
    q_rt_tau: tuple[float, float] = DEFAULT_Q_RT_TAU
    q_dv: float = DEFAULT_Q_DV
    soc0_err: float = 0.10  # expected initial SOC error, sets its prior variance
    dv0_err: float = 0.03  # expected initial bias error [V]
    qb0_err_frac: float = INIT_REL_ERR  # expected initial capacity error, relative to the guess
    dv_on_charge: bool = False
    qb_floor_ah: float = QB_FLOOR_AH
    qb_jacobian: str = "one_step"
    qb_in_param_id: bool = False  # adapt capacity before parameters are identified
    tau_sensitivity: str = "one_step"

    def __post_init__(self):
        for name in ("tc_hf_s", "tc_mf_s", "r_meas", "soc0_err", "dv0_err", "qb0_err_frac",
                     "qb_floor_ah"):
            if not getattr(self, name) > 0:
                raise InvalidInputError(f"{name} must be positive")
        for name in ("q_soc", "q_qb", "q_rs", "q_dv"):
            if not getattr(self, name) >= 0:
                raise InvalidInputError(f"{name} must be >= 0")
        object.__setattr__(self, "q_rt_tau", tuple(float(v) for v in self.q_rt_tau))
        if self.qb_jacobian not in ("one_step", "recursive"):
            raise InvalidInputError(f"unknown qb_jacobian {self.qb_jacobian!r}")
        if self.tau_sensitivity not in ("one_step", "recursive"):
            raise InvalidInputError(f"unknown tau_sensitivity {self.tau_sensitivity!r}")

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "zones"}
        d["q_rt_tau"] = list(self.q_rt_tau)
        d["zones"] = self.zones.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidInputError(f"unknown estimator settings {sorted(unknown)}")
        if "zones" in d:
            d["zones"] = ZoneConfig.from_dict(d["zones"])
        if "q_rt_tau" in d:
            d["q_rt_tau"] = tuple(d["q_rt_tau"])
        return cls(**d)


# ---------------------------------------------------------------------------
# Step 1
# ---------------------------------------------------------------------------


@dataclass
class ParamIdResult:
    params: CellParams
    rs_trace: FilterTrace
    rt_tau_trace: FilterTrace
    tau_projected: bool = False


def run_param_id(stage1: Optional[TimeSeries], stage2: Optional[TimeSeries], init: CellParams,
                 cfg: PipelineConfig = PipelineConfig()) -> ParamIdResult:
    """Identify ``(Rs, Rt, tau)`` from the high- and medium-frequency segments.

    Each segment gets fresh filters. ``qb_ah`` and ``eta`` pass through from
    ``init``.
    """
    if stage1 is None or len(stage1) < 2:
        raise IdentifiabilityError("high-frequency injection segment is missing")
    if stage2 is None or len(stage2) < 2:
        raise IdentifiabilityError("medium-frequency injection segment is missing")
    vf, if_ = filter_pair(stage1, cfg.tc_hf_s, prime=cfg.prime_filters)
    rs = estimate_rs(vf, if_, init.rs_ohm, t_s=stage1.t_s, q=cfg.q_rs, r_meas=cfg.r_meas)
    vf, if_ = filter_pair(stage2, cfg.tc_mf_s, prime=cfg.prime_filters)
    rt = estimate_rt_tau(vf, if_, rs.rs_ohm, ThetaRc(init.rt_ohm, init.tau_s), stage2.ts,
                         t_s=stage2.t_s, q=cfg.q_rt_tau, r_meas=cfg.r_meas,
                         sensitivity=cfg.tau_sensitivity)
    params = init.with_(rs_ohm=rs.rs_ohm, rt_ohm=rt.theta.rt_ohm, tau_s=rt.theta.tau_s)
    return ParamIdResult(params, rs.trace, rt.trace, rt.tau_projected)


# ---------------------------------------------------------------------------
# Step 2
# ---------------------------------------------------------------------------


@dataclass
class PipelineState:
    stage: Stage
    zone: Zone
    t_s: float
    soc_hat: float
    qb_hat: float
    dv_hat: float
    vc_hat: float
    params_hat: CellParams
    cycle_index: int
    dekf: DekfState
    dv_filter: EkfState
    last_sign: int = 0  # sign of the last nonzero current, for cycle counting


def initial_state(soc0: float, qb0_ah: float, params_guess: CellParams,
                  cfg: PipelineConfig = PipelineConfig(), *, t0_s: float = 0.0,
                  dv0: float = 0.0, stage: Stage = Stage.PARAM_ID) -> PipelineState:
    if not 0.0 <= soc0 <= 1.0:
        raise InvalidInputError(f"soc0 must be in [0, 1], got {soc0}")
    if not qb0_ah > 0:
        raise InvalidInputError("qb0_ah must be positive")
    dekf = DekfState.create(
        soc0, qb0_ah, p_soc=P0_FACTOR * cfg.soc0_err**2,
        p_qb=P0_FACTOR * (cfg.qb0_err_frac * qb0_ah) ** 2,
        q_soc=cfg.q_soc, q_qb=cfg.q_qb, r_meas=cfg.r_meas, delta_v_comp=dv0)
    dv_filter = EkfState.scalar(dv0, P0_FACTOR * cfg.dv0_err**2, cfg.q_dv, cfg.r_meas)
    return PipelineState(stage, classify_zone(cfg.zones, soc0), t0_s, soc0, qb0_ah, dv0, 0.0,
                         params_guess, 0, dekf, dv_filter)


def _counted_soc(soc: float, i: float, qb: float, eta: float, ts: float) -> float:
    s = soc - eta * ts * i / ah_to_coulombs(qb)
    return min(max(s, 0.0), 1.0)


def step(p: PipelineState, sample: Sample, ocv,
         cfg: PipelineConfig = PipelineConfig()) -> PipelineState:
    """Advance the estimator by one sample.

    The zone is taken from ``p.soc_hat``, the estimate at the previous
    sample. In the ParamId stage the same machine runs with the guessed
    parameters but never touches the bias estimate.
    """
    ts = sample.t_s - p.t_s
    if not ts > 0:
        raise InvalidInputError(f"sample at t={sample.t_s} does not advance time (prev {p.t_s})")
    i, v = sample.i_a, sample.v_v
    zone = classify_zone(cfg.zones, p.soc_hat)
    params = p.params_hat
    dekf, dv_filter = p.dekf, p.dv_filter
    soc, qb, dv = p.soc_hat, p.qb_hat, p.dv_hat
    try:
        if zone is Zone.H:
            d = replace(dekf, vc_v=p.vc_hat, delta_v_comp=dv)
            dekf = dekf_step(d, i, v, params, ocv, ts, qb_floor=cfg.qb_floor_ah,
                             qb_jacobian=cfg.qb_jacobian,
                             update_qb=cfg.qb_in_param_id or p.stage is Stage.STATE_EST)
            soc, qb, vc = dekf.soc, dekf.qb_ah, dekf.vc_v
        else:
            vc = step_vc(p.vc_hat, i, params, ts)
            soc = _counted_soc(soc, i, qb, params.eta, ts)
            sf = dekf.state_filter
            sf = EkfState._trusted(np.array([soc]), sf.p + sf.q, sf.q, sf.r_meas)
            sens = dekf.dsoc_dqb
            if cfg.qb_jacobian == "recursive":
                # counted SOC keeps accumulating sensitivity to the capacity used
                sens += params.eta * ts * i / (ah_to_coulombs(qb) * qb)
            dekf = replace(dekf, state_filter=sf, vc_v=vc, dsoc_dqb=sens)
            estimating = (zone is Zone.L and p.stage is Stage.STATE_EST
                          and (i > 0 or cfg.dv_on_charge))
            if estimating:
                dv_filter = estimate_dv(dv_filter, soc, i, v, params, ocv, vc)
                dv = float(dv_filter.x[0])
    except NumericalFailure as exc:
        raise NumericalFailure(f"t={sample.t_s:g} s, zone {zone.value}: {exc}") from exc
    sign = p.last_sign
    cycle = p.cycle_index
    if i != 0.0:
        new_sign = 1 if i > 0 else -1
        if p.stage is Stage.STATE_EST and sign < 0 < new_sign:
            cycle += 1
        sign = new_sign
    return PipelineState(p.stage, zone, sample.t_s, soc, qb, dv, vc, params, cycle, dekf,
                         dv_filter, sign)


def begin_state_estimation(p: PipelineState, params: CellParams) -> PipelineState:
    """Switch to the StateEst stage with the identified parameters."""
    return replace(p, stage=Stage.STATE_EST, params_hat=params)


_COLS = ("t_s", "soc_hat", "qb_hat", "dv_hat", "vc_hat")


@dataclass
class Trajectory:
    """Per-sample estimator output aligned with the input series."""

    t_s: np.ndarray
    zone: np.ndarray  # "H" / "L" / "M"
    stage: np.ndarray  # "ParamId" / "StateEst"
    soc_hat: np.ndarray
    qb_hat: np.ndarray
    dv_hat: np.ndarray
    vc_hat: np.ndarray
    cycle_index: np.ndarray
    soc_true: Optional[np.ndarray] = None
    qb_true: Optional[float] = None
    final: Optional[PipelineState] = None

    def __len__(self):
        return len(self.t_s)

    def soc_error(self) -> np.ndarray:
        if self.soc_true is None:
            raise InvalidInputError("trajectory carries no SOC truth")
        return self.soc_hat - self.soc_true

    def to_csv(self, path) -> None:
        qb_true = "" if self.qb_true is None else repr(float(self.qb_true))
        soc_true = self.soc_true if self.soc_true is not None else [None] * len(self)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t_s", "zone", "soc_hat", "qb_hat", "dv_hat", "vc_hat", "soc_true",
                        "qb_true"])
            for k in range(len(self)):
                st = "" if soc_true[k] is None else repr(float(soc_true[k]))
                w.writerow([repr(float(self.t_s[k])), self.zone[k],
                            *(repr(float(getattr(self, c)[k])) for c in _COLS[1:]), st, qb_true])


class _Recorder:
    def __init__(self, n: int):
        self.t = np.empty(n)
        self.zone = np.empty(n, dtype="<U1")
        self.stage = np.empty(n, dtype="<U8")
        self.vals = np.empty((4, n))
        self.cycle = np.empty(n, dtype=int)

    def put(self, k: int, p: PipelineState):
        self.t[k] = p.t_s
        self.zone[k] = p.zone.value
        self.stage[k] = p.stage.value
        self.vals[:, k] = (p.soc_hat, p.qb_hat, p.dv_hat, p.vc_hat)
        self.cycle[k] = p.cycle_index

    def result(self, data: TimeSeries, qb_true, final) -> Trajectory:
        return Trajectory(self.t, self.zone, self.stage, *self.vals, self.cycle,
                          soc_true=data.soc_true, qb_true=qb_true, final=final)


def run(data: TimeSeries, init: PipelineState, ocv, cfg: PipelineConfig = PipelineConfig(), *,
        switch: Optional[tuple[float, CellParams]] = None,
        qb_true: Optional[float] = None) -> Trajectory:
    """Fold :func:`step` over ``data``.

    Sample 0 only records ``init`` (its time must match). ``switch=(t, params)``
    moves to the StateEst stage at the first sample with ``t_s >= t``, using
    ``params``; without it the stage of ``init`` is kept throughout.
    """
    if data.v_v is None:
        raise InvalidInputError("series has no voltage channel")
    if len(data) == 0:
        raise InvalidInputError("empty series")
    if abs(data.t_s[0] - init.t_s) > 1e-9:
        raise InvalidInputError("initial state time does not match the first sample")
    rec = _Recorder(len(data))
    p = init
    rec.put(0, p)
    for k, s in enumerate(data.samples()):
        if k == 0:
            continue
        if switch is not None and p.stage is Stage.PARAM_ID and s.t_s >= switch[0]:
            p = begin_state_estimation(p, switch[1])
        p = step(p, s, ocv, cfg)
        rec.put(k, p)
    return rec.result(data, qb_true, p)


def run_baseline(data: TimeSeries, init: PipelineState, true_params: CellParams, ocv,
                 cfg: PipelineConfig = PipelineConfig(), *,
                 qb_true: Optional[float] = None) -> Trajectory:
    """Continuous dual EKF on every sample with the true ECM parameters and
    no bias estimation or compensation."""
    if data.v_v is None:
        raise InvalidInputError("series has no voltage channel")
    rec = _Recorder(len(data))
    p = replace(init, stage=Stage.STATE_EST, params_hat=true_params, dv_hat=0.0)
    d = replace(p.dekf, delta_v_comp=0.0)
    rec.put(0, p)
    for k, s in enumerate(data.samples()):
        if k == 0:
            continue
        ts = s.t_s - p.t_s
        try:
            d = dekf_step(d, s.i_a, s.v_v, true_params, ocv, ts, qb_floor=cfg.qb_floor_ah,
                          qb_jacobian=cfg.qb_jacobian)
        except NumericalFailure as exc:
            raise NumericalFailure(f"t={s.t_s:g} s (baseline): {exc}") from exc
        p = PipelineState(p.stage, classify_zone(cfg.zones, p.soc_hat), s.t_s, d.soc, d.qb_ah,
                          0.0, d.vc_v, true_params, p.cycle_index, d, p.dv_filter, p.last_sign)
        rec.put(k, p)
    return rec.result(data, qb_true, p)
