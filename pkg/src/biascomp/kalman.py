"""Extended Kalman filtering: the generic update and its specializations.

* :func:`estimate_rs` -- ohmic resistance from high-pass filtered data under
  a high-frequency injection.
* :func:`estimate_rt_tau` -- diffusion resistance and time constant from
  filtered data under a medium-frequency injection, with Rs known.
* :func:`dekf_step` -- dual EKF over SOC (state filter) and capacity (weight
  filter) against the raw, bias-compensated terminal voltage.
* :func:`estimate_dv` -- voltage-sensor bias with SOC taken as known.
* :func:`verify_bias_law` -- Monte-Carlo check that a constant sensor bias
  ``dv`` on a linear OCV of slope ``a`` shifts the converged SOC estimate by
  ``dv / a``.

All measurement models are scalar. Each ``*_measurement`` helper returns the
predicted measurement together with its Jacobian row so the derivatives can
be checked against finite differences.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .ecm import CellParams, ah_to_coulombs, step_vc
from .errors import IdentifiabilityError, InvalidInputError, NumericalFailure

PSD_TOL = 1e-10

DEFAULT_R_MEAS = 1e-3**2
DEFAULT_Q_SOC = 1e-5**2
DEFAULT_Q_QB = 1e-4**2
DEFAULT_Q_RS = 1e-5**2
DEFAULT_Q_RT_TAU = (1e-5**2, 1e-2**2)
DEFAULT_Q_DV = 1e-5**2
INIT_REL_ERR = 0.25  # a guess at 80 % of truth is 25 % below it
P0_FACTOR = 10.0
TAU_MIN_S = 1e-3
RT_MIN_OHM = 1e-6
MIN_EXCITATION = 1e-6  # sum of squared filtered current [A^2]


@dataclass
class EkfState:
    """Mean ``x``, covariance ``p``, process noise ``q``, measurement variance ``r_meas``.

    ``innovation`` and ``gain`` describe the most recent update (diagnostics).
    """

    x: np.ndarray
    p: np.ndarray
    q: np.ndarray
    r_meas: float
    innovation: float = math.nan
    gain: Optional[np.ndarray] = None

    def __post_init__(self):
        self.x = np.atleast_1d(np.asarray(self.x, dtype=float))
        n = len(self.x)
        self.p = np.asarray(self.p, dtype=float).reshape(n, n)
        self.q = np.asarray(self.q, dtype=float).reshape(n, n)
        if not (self.r_meas > 0 or self.r_meas == math.inf):
            raise InvalidInputError(f"r_meas must be positive, got {self.r_meas}")

    @classmethod
    def scalar(cls, x: float, p: float, q: float, r_meas: float) -> "EkfState":
        return cls(np.array([x]), np.array([[p]]), np.array([[q]]), r_meas)

    @classmethod
    def diag(cls, x: Sequence[float], p: Sequence[float], q: Sequence[float],
             r_meas: float) -> "EkfState":
        return cls(np.asarray(x, float), np.diag(p), np.diag(q), r_meas)

    @classmethod
    def _trusted(cls, x, p, q, r_meas, innovation=math.nan, gain=None) -> "EkfState":
        """Build from already-validated arrays (hot path)."""
        obj = cls.__new__(cls)
        obj.x, obj.p, obj.q, obj.r_meas = x, p, q, r_meas
        obj.innovation, obj.gain = innovation, gain
        return obj

    @property
    def dim(self) -> int:
        return len(self.x)

    @property
    def variance(self) -> np.ndarray:
        return np.diag(self.p).copy()

    def copy(self) -> "EkfState":
        return replace(self, x=self.x.copy(), p=self.p.copy(),
                       gain=None if self.gain is None else self.gain.copy())


TransitionFn = Callable[[np.ndarray, object], tuple]
MeasurementFn = Callable[[np.ndarray, object], tuple]


def _clean_covariance(p: np.ndarray) -> np.ndarray:
    p = 0.5 * (p + p.T)
    if p.shape == (1, 1):
        v = p[0, 0]
        if v < -PSD_TOL:
            raise NumericalFailure(f"covariance became negative ({v:.3g})")
        if v < 0.0:
            p[0, 0] = 0.0
        return p
    w, vecs = np.linalg.eigh(p)
    if w[0] < -PSD_TOL:
        raise NumericalFailure(f"covariance lost positive semi-definiteness (min eig {w[0]:.3g})")
    if w[0] < 0.0:
        p = (vecs * np.maximum(w, 0.0)) @ vecs.T
        p = 0.5 * (p + p.T)
    return p


def ekf_predict(s: EkfState, f: TransitionFn, u=None) -> EkfState:
    """Time update only (no measurement)."""
    x_pred, F = f(s.x, u)
    F = np.atleast_2d(F)
    p_pred = _clean_covariance(F @ s.p @ F.T + s.q)
    return replace(s, x=np.atleast_1d(np.asarray(x_pred, float)), p=p_pred,
                   innovation=math.nan, gain=None)


def ekf_update(s: EkfState, f: TransitionFn, h: MeasurementFn, u, z: float) -> EkfState:
    """One predict/update cycle with a scalar measurement ``z``.

    ``f(x, u) -> (x_pred, F)`` and ``h(x_pred, u) -> (z_pred, H)``. The
    covariance update uses the Joseph form, then is symmetrized and checked
    for positive semi-definiteness.
    """
    if s.x.shape == (1,):
        return _ekf_update_scalar(s, f, h, u, z)
    x_pred, F = f(s.x, u)
    x_pred = np.atleast_1d(np.asarray(x_pred, float))
    F = np.atleast_2d(F)
    p_pred = F @ s.p @ F.T + s.q
    z_pred, H = h(x_pred, u)
    H = np.atleast_1d(np.asarray(H, float))
    innov = float(z) - float(z_pred)
    if math.isinf(s.r_meas):
        return replace(s, x=x_pred, p=_clean_covariance(p_pred), innovation=innov,
                       gain=np.zeros_like(x_pred))
    ph = p_pred @ H
    sv = float(H @ ph) + s.r_meas
    if not (sv > 0.0 and math.isfinite(sv)):
        raise NumericalFailure(f"innovation variance is not positive ({sv!r})")
    k = ph / sv
    x_new = x_pred + k * innov
    a = np.eye(len(x_pred)) - np.outer(k, H)
    p_new = a @ p_pred @ a.T + s.r_meas * np.outer(k, k)
    if not (np.all(np.isfinite(x_new)) and np.all(np.isfinite(p_new))):
        raise NumericalFailure("EKF update produced non-finite values")
    return replace(s, x=x_new, p=_clean_covariance(p_new), innovation=innov, gain=k)


def _as_float(v) -> float:
    return v if type(v) is float else float(np.asarray(v).reshape(-1)[0])


def _ekf_update_scalar(s: EkfState, f, h, u, z) -> EkfState:
    # same operation order as the matrix path, in plain floats
    x_pred, F = f(s.x, u)
    xp = _as_float(x_pred)
    fv = _as_float(F)
    pp = fv * s.p[0, 0] * fv + s.q[0, 0]
    x_arr = np.array([xp])
    z_pred, H = h(x_arr, u)
    hv = _as_float(H)
    innov = float(z) - _as_float(z_pred)
    r = s.r_meas
    if math.isinf(r):
        if pp < -PSD_TOL:
            raise NumericalFailure(f"covariance became negative ({pp:.3g})")
        return EkfState._trusted(x_arr, np.array([[max(pp, 0.0)]]), s.q, r, innov, np.zeros(1))
    ph = pp * hv
    sv = hv * ph + r
    if not (sv > 0.0 and math.isfinite(sv)):
        raise NumericalFailure(f"innovation variance is not positive ({sv!r})")
    k = ph / sv
    xn = xp + k * innov
    a = 1.0 - k * hv
    pn = a * pp * a + r * (k * k)
    if not (math.isfinite(xn) and math.isfinite(pn)):
        raise NumericalFailure("EKF update produced non-finite values")
    if pn < 0.0:
        if pn < -PSD_TOL:
            raise NumericalFailure(f"covariance became negative ({pn:.3g})")
        pn = 0.0
    return EkfState._trusted(np.array([xn]), np.array([[pn]]), s.q, r, innov, np.array([k]))


def _random_walk(x, u):
    return x, np.eye(len(x))


# ---------------------------------------------------------------------------
# Per-step traces
# ---------------------------------------------------------------------------


@dataclass
class FilterTrace:
    """Per-step history of one filter, exportable as CSV."""

    names: tuple[str, ...]
    t_s: list = field(default_factory=list)
    estimate: list = field(default_factory=list)
    variance: list = field(default_factory=list)
    innovation: list = field(default_factory=list)
    gain: list = field(default_factory=list)

    def record(self, t: float, s: EkfState) -> None:
        self.t_s.append(t)
        self.estimate.append(s.x.copy())
        self.variance.append(s.variance)
        self.innovation.append(s.innovation)
        self.gain.append(np.zeros(s.dim) if s.gain is None else s.gain.copy())

    def as_arrays(self) -> dict:
        return {"t_s": np.asarray(self.t_s), "estimate": np.asarray(self.estimate),
                "variance": np.asarray(self.variance),
                "innovation": np.asarray(self.innovation), "gain": np.asarray(self.gain)}

    def __len__(self):
        return len(self.t_s)

    def to_csv(self, path) -> None:
        cols = (["t_s"] + list(self.names) + [f"var_{n}" for n in self.names]
                + ["innovation"] + [f"gain_{n}" for n in self.names])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for t, x, v, nu, g in zip(self.t_s, self.estimate, self.variance,
                                      self.innovation, self.gain):
                w.writerow([repr(float(t))] + [repr(float(a)) for a in (*x, *v, nu, *g)])


def _init_p(guess: float, p0: Optional[float]) -> float:
    return P0_FACTOR * (INIT_REL_ERR * guess) ** 2 if p0 is None else p0


def _prepare(vf, if_, t_s):
    vf = np.asarray(vf, dtype=float)
    if_ = np.asarray(if_, dtype=float)
    if vf.shape != if_.shape or vf.ndim != 1:
        raise InvalidInputError("filtered voltage and current must be aligned 1-D series")
    if not (np.all(np.isfinite(vf)) and np.all(np.isfinite(if_))):
        raise InvalidInputError("filtered series contain non-finite values")
    t = np.arange(len(vf), dtype=float) if t_s is None else np.asarray(t_s, dtype=float)
    return vf, if_, t


# ---------------------------------------------------------------------------
# Rs from the high-frequency stage
# ---------------------------------------------------------------------------


def rs_measurement(rs: float, i_f: float) -> tuple[float, np.ndarray]:
    """Filtered-voltage model ``V_f = -Rs * I_f``."""
    return -rs * i_f, np.array([-i_f])


@dataclass
class RsResult:
    rs_ohm: float
    state: EkfState
    trace: FilterTrace


def estimate_rs(vf, if_, init_rs: float, *, t_s=None, q: float = DEFAULT_Q_RS,
                r_meas: float = DEFAULT_R_MEAS, p0: Optional[float] = None,
                min_excitation: float = MIN_EXCITATION) -> RsResult:
    """Scalar random-walk EKF over Rs with measurement ``V_f = -Rs * I_f``."""
    vf, if_, t = _prepare(vf, if_, t_s)
    if not init_rs > 0:
        raise InvalidInputError("init_rs must be positive")
    if float(np.sum(if_**2)) < min_excitation:
        raise IdentifiabilityError("filtered current carries no excitation for Rs")
    s = EkfState.scalar(init_rs, _init_p(init_rs, p0), q, r_meas)
    trace = FilterTrace(("rs_ohm",))

    def h(x, u):
        return rs_measurement(x[0], u)

    for tk, zk, uk in zip(t.tolist(), vf.tolist(), if_.tolist()):
        s = ekf_update(s, _random_walk, h, uk, zk)
        trace.record(tk, s)
    return RsResult(float(s.x[0]), s, trace)


# ---------------------------------------------------------------------------
# (Rt, tau) from the medium-frequency stage
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ThetaRc:
    rt_ohm: float
    tau_s: float

    def __post_init__(self):
        if not (self.rt_ohm > 0 and self.tau_s > 0):
            raise InvalidInputError(f"Rt and tau must be positive, got {self}")


def rt_tau_measurement(rt: float, tau: float, i_f: float, i_f_prev: float, i2_prev: float,
                       rs: float, ts: float, di2_prev: float = 0.0):
    """Filtered-voltage model ``V_f = -Rs*I_f - Rt*I2`` with the Tustin RC
    recursion ``I2 = Ts/(Ts+2tau)*(I_f + I_f_prev) - (Ts-2tau)/(Ts+2tau)*I2_prev``.

    Returns ``(v_f, H, i2, di2_dtau)``. ``di2_prev`` is the sensitivity of
    ``i2_prev`` to tau; pass 0 for the one-step derivative that holds the
    previous recursion state fixed.
    """
    den = ts + 2.0 * tau
    a = ts / den
    c = (ts - 2.0 * tau) / den
    i2 = a * (i_f + i_f_prev) - c * i2_prev
    da = -2.0 * ts / den**2
    dc = -4.0 * ts / den**2
    di2 = da * (i_f + i_f_prev) - dc * i2_prev - c * di2_prev
    v = -rs * i_f - rt * i2
    return v, np.array([-i2, -rt * di2]), i2, di2


@dataclass
class RtTauResult:
    theta: ThetaRc
    state: EkfState
    trace: FilterTrace
    tau_projected: bool = False


def estimate_rt_tau(vf, if_, rs_known: float, init: ThetaRc, ts: float, *, t_s=None,
                    q: Sequence[float] = DEFAULT_Q_RT_TAU, r_meas: float = DEFAULT_R_MEAS,
                    p0: Optional[Sequence[float]] = None, sensitivity: str = "one_step",
                    min_excitation: float = MIN_EXCITATION) -> RtTauResult:
    """Two-state random-walk EKF over ``(Rt, tau)``.

    ``sensitivity="one_step"`` differentiates the I2 recursion one step with
    its previous state frozen; ``"recursive"`` carries the full sensitivity
    ``dI2/dtau`` along the recursion.
    """
    if sensitivity not in ("one_step", "recursive"):
        raise InvalidInputError(f"unknown sensitivity mode {sensitivity!r}")
    vf, if_, t = _prepare(vf, if_, t_s)
    if not ts > 0:
        raise InvalidInputError("ts must be positive")
    if float(np.sum(if_**2)) < min_excitation:
        raise IdentifiabilityError("filtered current carries no excitation for Rt/tau")
    if p0 is None:
        p0 = (_init_p(init.rt_ohm, None), _init_p(init.tau_s, None))
    s = EkfState.diag([init.rt_ohm, init.tau_s], p0, q, r_meas)
    trace = FilterTrace(("rt_ohm", "tau_s"))
    recursive = sensitivity == "recursive"
    i_f_prev = 0.0
    i2_prev = 0.0
    di2_prev = 0.0
    projected = False
    out = {}

    def h(x, u):
        v, H, i2, di2 = rt_tau_measurement(x[0], x[1], u, i_f_prev, i2_prev, rs_known, ts,
                                           di2_prev if recursive else 0.0)
        out["i2"], out["di2"] = i2, di2
        return v, H

    for tk, zk, uk in zip(t.tolist(), vf.tolist(), if_.tolist()):
        s = ekf_update(s, _random_walk, h, uk, zk)
        i_f_prev, i2_prev, di2_prev = uk, out["i2"], out["di2"]
        if s.x[1] < TAU_MIN_S or s.x[0] < RT_MIN_OHM:
            projected = True
            s.x = np.array([max(s.x[0], RT_MIN_OHM), max(s.x[1], TAU_MIN_S)])
        trace.record(tk, s)
    theta = ThetaRc(float(s.x[0]), float(s.x[1]))
    return RtTauResult(theta, s, trace, projected)


# ---------------------------------------------------------------------------
# Dual EKF over SOC and capacity
# ---------------------------------------------------------------------------

QB_FLOOR_AH = 0.1


def soc_prior(soc_prev: float, i: float, qb_ah: float, eta: float, ts: float) -> float:
    return soc_prev - eta * ts * i / ah_to_coulombs(qb_ah)


def dekf_soc_measurement(soc: float, i: float, vc: float, dv: float, params: CellParams, ocv):
    """``V = OCV(soc) - Rs*i - vc + dv`` and its derivative in SOC."""
    return ocv.eval(soc) - params.rs_ohm * i - vc + dv, np.array([ocv.slope(soc)])


def dekf_qb_measurement(qb: float, soc_prev: float, i: float, vc: float, dv: float,
                        params: CellParams, ocv, ts: float):
    """The same voltage seen as a function of capacity through the coulomb
    counting prior; derivative by the chain rule."""
    soc_m = soc_prior(soc_prev, i, qb, params.eta, ts)
    v = ocv.eval(soc_m) - params.rs_ohm * i - vc + dv
    dsoc_dqb = params.eta * ts * i / (ah_to_coulombs(qb) * qb)
    return v, np.array([ocv.slope(soc_m) * dsoc_dqb])


@dataclass
class DekfState:
    state_filter: EkfState
    weight_filter: EkfState
    vc_v: float = 0.0
    delta_v_comp: float = 0.0
    dsoc_dqb: float = 0.0  # carried sensitivity, used by qb_jacobian="recursive"

    @property
    def soc(self) -> float:
        return float(self.state_filter.x[0])

    @property
    def qb_ah(self) -> float:
        return float(self.weight_filter.x[0])

    @classmethod
    def create(cls, soc0: float, qb0_ah: float, *, p_soc: float, p_qb: float,
               q_soc: float = DEFAULT_Q_SOC, q_qb: float = DEFAULT_Q_QB,
               r_meas: float = DEFAULT_R_MEAS, vc0: float = 0.0,
               delta_v_comp: float = 0.0) -> "DekfState":
        return cls(EkfState.scalar(soc0, p_soc, q_soc, r_meas),
                   EkfState.scalar(qb0_ah, p_qb, q_qb, r_meas), vc0, delta_v_comp)


def dekf_step(d: DekfState, i: float, v_meas: float, params: CellParams, ocv, ts: float, *,
              qb_floor: float = QB_FLOOR_AH, qb_jacobian: str = "one_step",
              update_qb: bool = True) -> DekfState:
    """One joint SOC/capacity update.

    ``params`` supplies the identified ``rs_ohm, rt_ohm, tau_s`` and ``eta``
    (its ``qb_ah`` is ignored). The RC voltage is advanced first; both
    filters then update against the same innovation, computed from the
    priors and the compensated bias ``d.delta_v_comp``.

    ``qb_jacobian="one_step"`` differentiates the voltage through one
    coulomb-counting step; ``"recursive"`` carries the total derivative of
    SOC with respect to capacity. ``update_qb=False`` gives the weight
    filter its time update only.
    """
    vc = step_vc(d.vc_v, i, params, ts)
    soc_prev = d.soc
    qb_prev = d.qb_ah
    dv = d.delta_v_comp
    eta = params.eta
    cap_dt = eta * ts * i / ah_to_coulombs(qb_prev)

    def f_soc(x, u):
        return x - cap_dt, np.ones((1, 1))

    def h_soc(x, u):
        return dekf_soc_measurement(x[0], i, vc, dv, params, ocv)

    sens_prior = 0.0
    if qb_jacobian == "recursive":
        # d soc^-(k)/dQ = d soc^+(k-1)/dQ + d(prior)/dQ
        sens_prior = d.dsoc_dqb + eta * ts * i / (ah_to_coulombs(qb_prev) * qb_prev)
    elif qb_jacobian != "one_step":
        raise InvalidInputError(f"unknown qb_jacobian mode {qb_jacobian!r}")

    def h_qb(x, u):
        if qb_jacobian == "one_step":
            return dekf_qb_measurement(x[0], soc_prev, i, vc, dv, params, ocv, ts)
        soc_m = soc_prior(soc_prev, i, x[0], eta, ts)
        v = ocv.eval(soc_m) - params.rs_ohm * i - vc + dv
        return v, np.array([ocv.slope(soc_m) * sens_prior])

    sf = ekf_update(d.state_filter, f_soc, h_soc, None, v_meas)
    if update_qb:
        wf = ekf_update(d.weight_filter, _random_walk, h_qb, None, v_meas)
    else:
        wf = ekf_predict(d.weight_filter, _random_walk)
    soc = min(max(float(sf.x[0]), 0.0), 1.0)
    if soc != sf.x[0]:
        sf.x = np.array([soc])
    if wf.x[0] < qb_floor:
        wf.x = np.array([qb_floor])
    sens = 0.0
    if qb_jacobian == "recursive":
        slope = ocv.slope(soc_prev - cap_dt)
        sens = sens_prior - float(sf.gain[0]) * slope * sens_prior
    return DekfState(sf, wf, vc, dv, sens)


# ---------------------------------------------------------------------------
# Sensor bias with known SOC
# ---------------------------------------------------------------------------


def dv_measurement(dv: float, soc_known: float, i: float, vc: float, params: CellParams, ocv):
    return ocv.eval(soc_known) - params.rs_ohm * i - vc + dv, np.array([1.0])


def estimate_dv(e: EkfState, soc_known: float, i: float, v_meas: float, params: CellParams,
                ocv, vc: float) -> EkfState:
    """Random-walk EKF step on the voltage bias; ``vc`` is the RC voltage at this sample."""

    def h(x, u):
        return dv_measurement(x[0], soc_known, i, vc, params, ocv)

    return ekf_update(e, _random_walk, h, None, v_meas)


# ---------------------------------------------------------------------------
# Bias law
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BiasLawResult:
    """``empirical_mean`` is the Monte-Carlo mean of (estimated - true) SOC at
    the last step; ``predicted`` is ``dv / a``; ``mc_sigma`` is the standard
    error of that mean."""

    empirical_mean: float
    predicted: float
    mc_sigma: float
    n_mc: int
    steps: int

    def agrees(self, rel: float = 0.05, n_sigma: float = 3.0) -> bool:
        tol = rel * abs(self.predicted) + n_sigma * self.mc_sigma
        return abs(self.empirical_mean - self.predicted) <= tol


def verify_bias_law(a: float, dv: float, n_mc: int = 200, steps: int = 2000, seed: int = 0, *,
                    b: float = 3.2, soc0: float = 0.5, current_a: float = 0.1935,
                    params: CellParams | None = None, ts: float = 1.0,
                    q_soc: float = DEFAULT_Q_SOC, r_meas: float = DEFAULT_R_MEAS,
                    p0: float = 1e-4) -> BiasLawResult:
    """Monte-Carlo EKF runs on the linear-OCV system with known capacity.

    Truth: ``soc(k) = soc(k-1) - eta*Ts*I/Qb + w``, ``V = a*soc + b - Rs*I - Vc + dv + v``.
    Each trajectory draws its own initial error, process and measurement
    noise; the filter is :func:`ekf_update` with the nominal model (no bias).
    """
    if not a > 0:
        raise InvalidInputError("a must be positive")
    if n_mc < 2 or steps < 1:
        raise InvalidInputError("need n_mc >= 2 and steps >= 1")
    params = params or CellParams(0.069, 0.047, 33.0, 1.935)
    root = np.random.SeedSequence(seed)
    drift = params.eta * ts * current_a / ah_to_coulombs(params.qb_ah)
    vc_trace = np.empty(steps)
    vc = 0.0
    for k in range(steps):
        vc = step_vc(vc, current_a, params, ts)
        vc_trace[k] = vc
    known = params.rs_ohm * current_a
    rs_i = known

    def f(x, u):
        return x - drift, np.ones((1, 1))

    def h(x, u):
        return a * x[0] + b - rs_i - u, np.array([a])

    errors = np.empty(n_mc)
    for m, child in enumerate(root.spawn(n_mc)):
        rng = np.random.default_rng(child)
        w = rng.normal(0.0, math.sqrt(q_soc), steps)
        v = rng.normal(0.0, math.sqrt(r_meas), steps)
        soc = soc0
        s = EkfState.scalar(soc0 + rng.normal(0.0, math.sqrt(p0)), p0, q_soc, r_meas)
        for k in range(steps):
            soc = soc - drift + w[k]
            z = a * soc + b - rs_i - vc_trace[k] + dv + v[k]
            s = ekf_update(s, f, h, vc_trace[k], z)
        errors[m] = s.x[0] - soc
    return BiasLawResult(float(errors.mean()), dv / a,
                         float(errors.std(ddof=1) / math.sqrt(n_mc)), n_mc, steps)
