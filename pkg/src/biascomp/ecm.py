"""First-order equivalent-circuit cell model and ground-truth simulator.

Sign convention throughout: positive current is discharge. Terminal voltage
is ``V_ocv(soc) - Rs*i - vc``; the sensor reads that plus a bias and noise.

Discrete-time convention: sample ``k`` carries the current that flowed over
``(t[k-1], t[k]]``. Both SOC and the RC voltage at ``k`` are propagated from
``k-1`` with ``i[k]``; the RC update is the exact zero-order-hold solution.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np

from .errors import FormatError, InvalidInputError

UNIFORM_TOL_S = 1e-9


def ah_to_coulombs(qb_ah: float) -> float:
    """The single place where Ah becomes A*s."""
    return qb_ah * 3600.0


@dataclass(frozen=True)
class CellParams:
    """ECM parameters. ``tau_s = rt_ohm * Ct``; ``eta`` scales charge throughput."""

    rs_ohm: float
    rt_ohm: float
    tau_s: float
    qb_ah: float
    eta: float = 1.0

    def __post_init__(self):
        for name in ("rs_ohm", "rt_ohm", "tau_s", "qb_ah", "eta"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v)):
                raise InvalidInputError(f"{name} must be a finite number, got {v!r}")
        if not (self.rs_ohm > 0 and self.rt_ohm > 0 and self.tau_s > 0 and self.qb_ah > 0):
            raise InvalidInputError(f"resistances, tau and capacity must be positive: {self}")
        if not (0 < self.eta <= 1):
            raise InvalidInputError(f"eta must be in (0, 1], got {self.eta}")

    @property
    def ct_farad(self) -> float:
        return self.tau_s / self.rt_ohm

    def with_(self, **changes) -> "CellParams":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {"rs_ohm": self.rs_ohm, "rt_ohm": self.rt_ohm, "tau_s": self.tau_s,
                "qb_ah": self.qb_ah, "eta": self.eta}

    @classmethod
    def from_dict(cls, d: dict) -> "CellParams":
        try:
            return cls(**{k: float(v) for k, v in d.items()})
        except TypeError as exc:
            raise InvalidInputError(f"bad cell parameters: {exc}") from exc


# Characterized truth values for the two test cells at two temperatures.
REFERENCE_CELLS = {
    "cell1_25c": CellParams(rs_ohm=0.069, rt_ohm=0.047, tau_s=33.0, qb_ah=1.935),
    "cell2_25c": CellParams(rs_ohm=0.095, rt_ohm=0.050, tau_s=33.0, qb_ah=1.896),
    "cell1_5c": CellParams(rs_ohm=0.127, rt_ohm=0.087, tau_s=30.0, qb_ah=1.881),
    "cell2_5c": CellParams(rs_ohm=0.144, rt_ohm=0.090, tau_s=30.0, qb_ah=1.811),
}


@dataclass(frozen=True)
class CellState:
    soc: float
    vc_v: float = 0.0


@dataclass(frozen=True)
class Sample:
    t_s: float
    i_a: float
    v_v: float


def _check_finite(**values):
    for name, v in values.items():
        if not math.isfinite(v):
            raise InvalidInputError(f"{name} must be finite, got {v!r}")


def step_vc(vc_prev: float, i: float, params: CellParams, ts: float) -> float:
    """RC-pair voltage after one step of length ``ts`` with constant current ``i``."""
    _check_finite(vc_prev=vc_prev, i=i, ts=ts)
    if not ts > 0:
        raise InvalidInputError(f"ts must be positive, got {ts}")
    decay = math.exp(-ts / params.tau_s)
    return decay * vc_prev + params.rt_ohm * (1.0 - decay) * i


def step_soc(soc_prev: float, i: float, params: CellParams, ts: float) -> tuple[float, bool]:
    """Coulomb-counting update. Returns ``(soc, clamped)``; soc is kept in [0, 1]."""
    _check_finite(soc_prev=soc_prev, i=i, ts=ts)
    if not ts > 0:
        raise InvalidInputError(f"ts must be positive, got {ts}")
    soc = soc_prev - params.eta * ts * i / ah_to_coulombs(params.qb_ah)
    if soc < 0.0:
        return 0.0, True
    if soc > 1.0:
        return 1.0, True
    return soc, False


def terminal_voltage(state: CellState, i: float, params: CellParams, ocv) -> float:
    return ocv.eval(state.soc) - params.rs_ohm * i - state.vc_v


@dataclass(frozen=True)
class BiasSchedule:
    """Piecewise-constant voltage-sensor bias: ``((start_s, dv_volts), ...)``."""

    segments: tuple[tuple[float, float], ...] = ((0.0, 0.0),)

    def __post_init__(self):
        segs = tuple((float(t), float(dv)) for t, dv in self.segments)
        if not segs or segs[0][0] != 0.0:
            raise InvalidInputError("bias schedule must start at t=0")
        if any(b[0] <= a[0] for a, b in zip(segs, segs[1:])):
            raise InvalidInputError("bias segment start times must be strictly increasing")
        if not all(math.isfinite(dv) for _, dv in segs):
            raise InvalidInputError("bias values must be finite")
        object.__setattr__(self, "segments", segs)

    @classmethod
    def constant(cls, dv: float) -> "BiasSchedule":
        return cls(((0.0, dv),))

    def at(self, t):
        """Bias [V] in force at time(s) ``t``."""
        starts = np.array([s for s, _ in self.segments])
        values = np.array([dv for _, dv in self.segments])
        idx = np.searchsorted(starts, t, side="right") - 1
        if np.ndim(idx) == 0:
            return float(values[max(int(idx), 0)])
        return values[np.maximum(idx, 0)]

    def to_list(self) -> list:
        return [list(s) for s in self.segments]


@dataclass
class TimeSeries:
    """Timestamped current/voltage record, optionally with hidden truth traces.

    ``v_v`` is ``None`` for a pure current profile.
    """

    t_s: np.ndarray
    i_a: np.ndarray
    v_v: Optional[np.ndarray] = None
    soc_true: Optional[np.ndarray] = None
    vc_true: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t_s = np.asarray(self.t_s, dtype=float)
        self.i_a = np.asarray(self.i_a, dtype=float)
        n = len(self.t_s)
        for name in ("i_a", "v_v", "soc_true", "vc_true"):
            arr = getattr(self, name)
            if arr is None:
                continue
            arr = np.asarray(arr, dtype=float)
            setattr(self, name, arr)
            if arr.shape != (n,):
                raise FormatError(f"{name} has shape {arr.shape}, expected ({n},)")
        if n > 1 and np.any(np.diff(self.t_s) <= 0):
            raise FormatError("timestamps must be strictly increasing")

    def __len__(self):
        return len(self.t_s)

    @property
    def ts(self) -> float:
        """Uniform sampling period; raises :class:`FormatError` if not uniform."""
        if len(self) < 2:
            raise FormatError("need at least two samples to define a sampling period")
        d = np.diff(self.t_s)
        ts = float(d[0])
        if np.max(np.abs(d - ts)) > UNIFORM_TOL_S:
            raise FormatError("time series is not uniformly sampled")
        return ts

    def samples(self) -> Iterator[Sample]:
        v = self.v_v if self.v_v is not None else np.full(len(self), np.nan)
        for t, i, vv in zip(self.t_s.tolist(), self.i_a.tolist(), v.tolist()):
            yield Sample(t, i, vv)

    def select(self, mask_or_index) -> "TimeSeries":
        def pick(a):
            return None if a is None else a[mask_or_index]
        return TimeSeries(self.t_s[mask_or_index], self.i_a[mask_or_index], pick(self.v_v),
                          pick(self.soc_true), pick(self.vc_true), dict(self.meta))

    @staticmethod
    def concat(parts: Sequence["TimeSeries"]) -> "TimeSeries":
        def cat(name):
            arrs = [getattr(p, name) for p in parts]
            if any(a is None for a in arrs):
                return None
            return np.concatenate(arrs)
        return TimeSeries(cat("t_s"), cat("i_a"), cat("v_v"), cat("soc_true"), cat("vc_true"))

    def columns(self) -> list[str]:
        cols = ["t_s", "i_a"]
        cols += [c for c in ("v_v", "soc_true", "vc_true") if getattr(self, c) is not None]
        return cols

    def to_csv(self, path) -> None:
        cols = self.columns()
        data = [getattr(self, c) for c in cols]
        with open(path, "w", newline="") as fh:
            fh.write(",".join(cols) + "\n")
            for row in zip(*(a.tolist() for a in data)):
                fh.write(",".join(repr(v) for v in row) + "\n")

    @classmethod
    def from_csv(cls, path) -> "TimeSeries":
        path = Path(path)
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise FormatError(f"{path}: empty file")
            header = [h.strip() for h in header]
            if header[:2] != ["t_s", "i_a"]:
                raise FormatError(f"{path}: header must start with 't_s,i_a', got {header}")
            known = {"t_s", "i_a", "v_v", "soc_true", "vc_true"}
            unknown = set(header) - known
            if unknown:
                raise FormatError(f"{path}: unknown columns {sorted(unknown)}")
            try:
                rows = [[float(x) for x in row] for row in reader if row]
            except ValueError as exc:
                raise FormatError(f"{path}: {exc}") from exc
        if any(len(r) != len(header) for r in rows):
            raise FormatError(f"{path}: ragged rows")
        arr = np.array(rows, dtype=float).reshape(-1, len(header))
        cols = {name: arr[:, k] for k, name in enumerate(header)}
        return cls(cols["t_s"], cols["i_a"], cols.get("v_v"), cols.get("soc_true"),
                   cols.get("vc_true"))


def simulate(initial: CellState, current_profile: TimeSeries, params: CellParams, ocv,
             bias: BiasSchedule | None = None, noise_std: float = 0.001,
             rng: np.random.Generator | None = None) -> TimeSeries:
    """Run the twin over ``current_profile`` and return measured voltages.

    Sample 0 reports ``initial`` as is; later samples are propagated with
    their own current. The returned series carries ``soc_true`` and
    ``vc_true``; the measured voltage is ``Vb + bias(t) + N(0, noise_std**2)``.
    ``meta['clamped']`` records whether SOC ever hit 0 or 1.
    """
    ts = current_profile.ts
    bias = bias or BiasSchedule()
    if noise_std < 0 or not math.isfinite(noise_std):
        raise InvalidInputError(f"noise_std must be finite and >= 0, got {noise_std}")
    if noise_std > 0 and rng is None:
        raise InvalidInputError("a seeded rng is required when noise_std > 0")
    i = current_profile.i_a
    if not np.all(np.isfinite(i)):
        raise InvalidInputError("current profile contains non-finite values")
    n = len(i)
    soc = np.empty(n)
    vc = np.empty(n)
    soc[0], vc[0] = initial.soc, initial.vc_v
    clamped = False
    cap = ah_to_coulombs(params.qb_ah)
    decay = math.exp(-ts / params.tau_s)
    gain = params.rt_ohm * (1.0 - decay)
    eta_ts = params.eta * ts
    s_k, v_k = float(initial.soc), float(initial.vc_v)
    il = i.tolist()
    for k in range(1, n):
        ik = il[k]
        s_k = s_k - eta_ts * ik / cap
        if s_k < 0.0:
            s_k, clamped = 0.0, True
        elif s_k > 1.0:
            s_k, clamped = 1.0, True
        v_k = decay * v_k + gain * ik
        soc[k], vc[k] = s_k, v_k
    vb = ocv.eval(soc) - params.rs_ohm * i - vc
    v = vb + bias.at(current_profile.t_s)
    if noise_std > 0:
        v = v + rng.normal(0.0, noise_std, size=n)
    out = TimeSeries(current_profile.t_s.copy(), i.copy(), v, soc, vc)
    out.meta["clamped"] = clamped
    return out
