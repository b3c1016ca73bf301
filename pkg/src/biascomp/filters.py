"""First-order high-pass filter and sinusoidal current injection.

The filter is the Tustin discretization of ``Tc*s / (1 + Tc*s)``::

    y[k] = g * (u[k] - u[k-1]) + c * y[k-1]
    g = 2Tc / (2Tc + ts),  c = (2Tc - ts) / (2Tc + ts)

It removes constant offsets (initial-SOC level, sensor bias) with time
constant ~Tc while passing frequencies well above 1/Tc.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ecm import TimeSeries
from .errors import InvalidInputError


@dataclass
class HighPassFilter:
    tc_s: float
    u_prev: float = 0.0
    y_prev: float = 0.0

    def __post_init__(self):
        if not (self.tc_s > 0 and math.isfinite(self.tc_s)):
            raise InvalidInputError(f"tc_s must be positive, got {self.tc_s}")

    def coefficients(self, ts: float) -> tuple[float, float]:
        den = 2.0 * self.tc_s + ts
        return 2.0 * self.tc_s / den, (2.0 * self.tc_s - ts) / den

    def prime(self, u0: float) -> "HighPassFilter":
        """Put the filter in steady state for a constant input ``u0`` (output 0)."""
        self.u_prev, self.y_prev = float(u0), 0.0
        return self

    def step(self, u: float, ts: float) -> float:
        if not ts > 0:
            raise InvalidInputError(f"ts must be positive, got {ts}")
        g, c = self.coefficients(ts)
        y = g * (u - self.u_prev) + c * self.y_prev
        self.u_prev, self.y_prev = u, y
        return y


def hp_step(f: HighPassFilter, u: float, ts: float) -> float:
    return f.step(u, ts)


def hp_filter(u, tc_s: float, ts: float, prime: bool = False) -> np.ndarray:
    """Filter a whole array with a fresh filter.

    ``prime=True`` starts from steady state on ``u[0]`` (as if the input had
    been constant at that value forever); otherwise from zero state.
    """
    u = np.asarray(u, dtype=float)
    f = HighPassFilter(tc_s)
    if prime and len(u):
        f.prime(u[0])
    g, c = f.coefficients(ts)
    out = np.empty_like(u)
    up, yp = f.u_prev, f.y_prev
    for k, uk in enumerate(u.tolist()):
        yp = g * (uk - up) + c * yp
        up = uk
        out[k] = yp
    return out


def filter_pair(series: TimeSeries, tc_s: float, prime: bool = True):
    """Apply identical high-pass filters to voltage and current.

    Returns ``(v_f, i_f)``.
    """
    if series.v_v is None:
        raise InvalidInputError("series has no voltage channel")
    ts = series.ts
    return (hp_filter(series.v_v, tc_s, ts, prime=prime),
            hp_filter(series.i_a, tc_s, ts, prime=prime))


@dataclass(frozen=True)
class InjectionSpec:
    amplitude_a: float
    freq_hz: float
    duration_s: float
    offset_a: float = 0.0

    def __post_init__(self):
        if not self.amplitude_a >= 0:
            raise InvalidInputError("amplitude_a must be >= 0")
        if not self.freq_hz > 0:
            raise InvalidInputError("freq_hz must be > 0")
        if not self.duration_s > 0:
            raise InvalidInputError("duration_s must be > 0")


def gen_injection(spec: InjectionSpec, ts: float, t0: float = 0.0) -> TimeSeries:
    """Current profile ``offset + amplitude*sin(2*pi*f*(t - t0))`` on
    ``t0, t0+ts, ..., t0+duration`` (both ends included)."""
    if not ts > 0:
        raise InvalidInputError(f"ts must be positive, got {ts}")
    if not spec.freq_hz < 0.5 / ts:
        raise InvalidInputError(
            f"{spec.freq_hz} Hz is not below the Nyquist limit {0.5 / ts} Hz for ts={ts} s")
    n = int(round(spec.duration_s / ts))
    k = np.arange(n + 1)
    tau = k * ts
    i = spec.offset_a + spec.amplitude_a * np.sin(2.0 * np.pi * spec.freq_hz * tau)
    return TimeSeries(t0 + tau, i)
