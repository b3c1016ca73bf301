"""OCV-SOC curve: 12th-order polynomial, its slope, local linearization,
fitting from anchor points, and slope-zone classification.

The power-basis coefficients of a 12th-order fit to an LFP curve are large
and alternate in sign (|A_n| ~ 1e5), so plain Horner loses about 1e-10 V to
cancellation. Evaluation uses compensated Horner (error-free transformations,
Graillat et al. 2005), which returns the polynomial value as if computed in
doubled precision. That keeps finite differences of :meth:`OcvCurve.eval`
consistent with :meth:`OcvCurve.slope` to ~1e-8 relative.
"""

from __future__ import annotations

import csv
import enum
import functools
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from importlib import resources
from math import comb
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from numpy.polynomial import chebyshev

from .errors import FitError, FormatError, InvalidInputError

DEGREE = 12
MONOTONE_GRID_STEP = 1e-3
DEFAULT_MAX_CONDITION = 1e8

_SPLITTER = 134217729.0  # 2**27 + 1, Dekker split constant for binary64


def _two_sum(a, b):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


def _split(a):
    c = _SPLITTER * a
    hi = c - (c - a)
    return hi, a - hi


def _two_prod(a, b):
    p = a * b
    ah, al = _split(a)
    bh, bl = _split(b)
    return p, al * bl - (((p - ah * bh) - al * bh) - ah * bl)


def comp_horner(coeffs: Sequence[float], x):
    """Compensated Horner evaluation of ``sum(coeffs[n] * x**n)``.

    Works elementwise on floats and numpy arrays alike.
    """
    r = coeffs[-1] + 0.0 * x
    err = 0.0 * x
    for a in coeffs[-2::-1]:
        p, pi = _two_prod(r, x)
        r, sigma = _two_sum(p, a)
        err = err * x + (pi + sigma)
    return r + err


def _comp_horner_scalar(coeffs: tuple, x: float) -> float:
    """Same arithmetic as :func:`comp_horner`, inlined for a single float."""
    r = coeffs[-1]
    err = 0.0
    c = _SPLITTER * x
    xh = c - (c - x)
    xl = x - xh
    for a in coeffs[-2::-1]:
        p = r * x
        c = _SPLITTER * r
        rh = c - (c - r)
        rl = r - rh
        pi = rl * xl - (((p - rh * xh) - rl * xh) - rh * xl)
        s = p + a
        bb = s - p
        sigma = (p - (s - bb)) + (a - bb)
        r = s
        err = err * x + (pi + sigma)
    return r + err


class Zone(str, enum.Enum):
    H = "H"
    L = "L"
    M = "M"


@dataclass(frozen=True)
class LinearOcv:
    """Local model ``V_ocv = a * soc + b``."""

    a: float
    b: float

    def __post_init__(self):
        if not self.a > 0:
            raise InvalidInputError(f"linear OCV slope must be positive, got {self.a}")

    def eval(self, soc):
        return self.a * soc + self.b


@dataclass(frozen=True)
class ZoneConfig:
    """SOC intervals (closed) for the high- and low-slope zones; the rest is M."""

    h_zone: tuple[float, float] = (0.0, 0.10)
    l_zone: tuple[float, float] = (0.40, 0.50)
    l_slope_max: float = 0.05

    def __post_init__(self):
        for name in ("h_zone", "l_zone"):
            lo, hi = getattr(self, name)
            if not (0.0 <= lo <= hi <= 1.0):
                raise InvalidInputError(f"{name} must lie within [0, 1], got {(lo, hi)}")
        (hlo, hhi), (llo, lhi) = self.h_zone, self.l_zone
        if not (hhi < llo or lhi < hlo):
            raise InvalidInputError("h_zone and l_zone overlap")
        if not self.l_slope_max > 0:
            raise InvalidInputError("l_slope_max must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "ZoneConfig":
        kw = dict(d)
        for key in ("h_zone", "l_zone"):
            if key in kw:
                kw[key] = tuple(float(v) for v in kw[key])
        return cls(**kw)

    def to_dict(self) -> dict:
        return {"h_zone": list(self.h_zone), "l_zone": list(self.l_zone),
                "l_slope_max": self.l_slope_max}


def classify_zone(cfg: ZoneConfig, soc: float) -> Zone:
    if cfg.h_zone[0] <= soc <= cfg.h_zone[1]:
        return Zone.H
    if cfg.l_zone[0] <= soc <= cfg.l_zone[1]:
        return Zone.L
    return Zone.M


class OcvCurve:
    """Polynomial OCV map ``V = A0 + A1*soc + ... + A12*soc**12``.

    The curve is immutable. Construction verifies it is non-decreasing with
    positive slope on ``valid_range`` (1e-3 grid); SOC values outside the
    range are clamped before evaluation.
    """

    __slots__ = ("_coeffs", "_dcoeffs", "_c", "_dc", "valid_range")

    def __init__(self, coeffs: Iterable[float], valid_range=(0.0, 1.0), *, check=True):
        c = np.asarray(list(coeffs), dtype=float)
        if c.ndim != 1 or len(c) < 2 or not np.all(np.isfinite(c)):
            raise InvalidInputError("coeffs must be a finite 1-D sequence of length >= 2")
        lo, hi = (float(v) for v in valid_range)
        if not (0.0 <= lo < hi <= 1.0):
            raise InvalidInputError(f"valid_range must satisfy 0 <= lo < hi <= 1, got {(lo, hi)}")
        self._coeffs = c
        self._dcoeffs = c[1:] * np.arange(1, len(c))
        # plain-float copies for the scalar path
        self._c = tuple(float(v) for v in c)
        self._dc = tuple(float(v) for v in self._dcoeffs)
        self.valid_range = (lo, hi)
        if check:
            problem = self._monotonicity_problem()
            if problem:
                raise InvalidInputError(problem)

    @property
    def coeffs(self) -> np.ndarray:
        return self._coeffs.copy()

    @property
    def degree(self) -> int:
        return len(self._coeffs) - 1

    def _monotonicity_problem(self) -> str | None:
        lo, hi = self.valid_range
        n = max(2, int(round((hi - lo) / MONOTONE_GRID_STEP)) + 1)
        grid = np.linspace(lo, hi, n)
        v = comp_horner(self._coeffs, grid)
        d = comp_horner(self._dcoeffs, grid)
        if np.any(np.diff(v) < 0):
            k = int(np.argmax(np.diff(v) < 0))
            return f"OCV curve decreases near soc={grid[k]:.4f}"
        if np.any(d <= 0):
            k = int(np.argmax(d <= 0))
            return f"OCV slope is not positive at soc={grid[k]:.4f} (slope={d[k]:.3g})"
        return None

    def clamp(self, soc):
        """Return ``(clamped_soc, was_clamped)``."""
        lo, hi = self.valid_range
        if isinstance(soc, np.ndarray):
            c = np.clip(soc, lo, hi)
            return c, bool(np.any(c != soc))
        c = lo if soc < lo else hi if soc > hi else soc
        return c, c != soc

    def eval(self, soc):
        """OCV [V] at ``soc`` (float or array); out-of-range SOC is clamped."""
        return self.eval_flagged(soc)[0]

    def eval_flagged(self, soc):
        s, clamped = self.clamp(soc)
        if isinstance(s, np.ndarray):
            return comp_horner(self._coeffs, s), clamped
        return _comp_horner_scalar(self._c, float(s)), clamped

    def slope(self, soc):
        """dV_ocv/dSOC [V per unit SOC], analytic derivative."""
        s, _ = self.clamp(soc)
        if isinstance(s, np.ndarray):
            return comp_horner(self._dcoeffs, s)
        return _comp_horner_scalar(self._dc, float(s))

    def to_dict(self) -> dict:
        return {"coeffs": [float(v) for v in self._coeffs],
                "valid_range": list(self.valid_range)}

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def from_dict(cls, d: dict) -> "OcvCurve":
        try:
            coeffs = [float(v) for v in d["coeffs"]]
            rng = tuple(float(v) for v in d.get("valid_range", (0.0, 1.0)))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"bad OCV curve description: {exc}") from exc
        if len(coeffs) != DEGREE + 1:
            raise FormatError(f"expected {DEGREE + 1} coefficients, got {len(coeffs)}")
        return cls(coeffs, rng)

    @classmethod
    def from_json(cls, path) -> "OcvCurve":
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: not valid JSON ({exc})") from exc
        return cls.from_dict(d)

    def __repr__(self):
        return f"OcvCurve(degree={self.degree}, valid_range={self.valid_range})"


def linearize(curve: OcvCurve, soc_lo: float, soc_hi: float, n: int = 100) -> LinearOcv:
    """Least-squares line through ``curve.eval`` on a uniform n-point grid."""
    lo, hi = curve.valid_range
    if not (soc_lo < soc_hi) or soc_lo < lo or soc_hi > hi:
        raise InvalidInputError(
            f"need {lo} <= soc_lo < soc_hi <= {hi}, got ({soc_lo}, {soc_hi})")
    s = np.linspace(soc_lo, soc_hi, n)
    a, b = np.polyfit(s, curve.eval(s), 1)
    return LinearOcv(float(a), float(b))


def _cheb_to_power(cheb_coeffs, lo: float, hi: float) -> np.ndarray:
    """Exact change of basis: Chebyshev series in ``x = (2s - lo - hi)/(hi - lo)``
    to power series in ``s``. Rational arithmetic avoids the cancellation that
    a floating-point conversion would introduce."""
    n = len(cheb_coeffs)
    t_polys = [[Fraction(1)], [Fraction(0), Fraction(1)]]
    for k in range(2, n):
        a = [Fraction(0)] + [2 * t for t in t_polys[k - 1]]
        b = t_polys[k - 2] + [Fraction(0)] * (len(a) - len(t_polys[k - 2]))
        t_polys.append([p - q for p, q in zip(a, b)])
    in_x = [Fraction(0)] * n
    for k, ck in enumerate(cheb_coeffs):
        ck = Fraction(float(ck))
        for j, t in enumerate(t_polys[k]):
            in_x[j] += ck * t
    alpha = Fraction(2) / (Fraction(hi) - Fraction(lo))
    beta = -(Fraction(lo) + Fraction(hi)) / (Fraction(hi) - Fraction(lo))
    out = [Fraction(0)] * n
    for j, a in enumerate(in_x):
        if a == 0:
            continue
        for i in range(j + 1):
            out[i] += a * comb(j, i) * alpha**i * beta ** (j - i)
    return np.array([float(v) for v in out])


@dataclass(frozen=True)
class FitResult:
    curve: OcvCurve
    residual_max_v: float
    condition: float


def fit(anchors: Sequence[tuple[float, float]], degree: int = DEGREE,
        max_condition: float = DEFAULT_MAX_CONDITION) -> FitResult:
    """Least-squares polynomial through ``(soc, volts)`` anchor points.

    The fit is solved in a Chebyshev basis on the anchors' SOC span (well
    conditioned) and converted exactly to power-basis coefficients. The
    resulting curve must be monotone on that span, otherwise :class:`FitError`.
    """
    pts = np.asarray(anchors, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise InvalidInputError("anchors must be a sequence of (soc, volts) pairs")
    if len(pts) < degree + 2:
        raise InvalidInputError(
            f"need at least {degree + 2} anchor points for a degree-{degree} fit, got {len(pts)}")
    if not np.all(np.isfinite(pts)):
        raise InvalidInputError("anchors contain non-finite values")
    soc, volts = pts[:, 0], pts[:, 1]
    if np.any(np.diff(soc) <= 0):
        raise InvalidInputError("anchor SOC values must be strictly increasing")
    lo, hi = float(soc[0]), float(soc[-1])
    if lo < 0.0 or hi > 1.0:
        raise InvalidInputError("anchor SOC values must lie within [0, 1]")
    x = (2.0 * soc - lo - hi) / (hi - lo)
    vander = chebyshev.chebvander(x, degree)
    cond = float(np.linalg.cond(vander))
    if not np.isfinite(cond) or cond > max_condition:
        raise FitError("OCV fit is ill-conditioned",
                       {"condition": cond, "threshold": max_condition, "n_anchors": len(pts)})
    cheb, *_ = np.linalg.lstsq(vander, volts, rcond=None)
    coeffs = _cheb_to_power(cheb, lo, hi)
    try:
        curve = OcvCurve(coeffs, (lo, hi))
    except InvalidInputError as exc:
        raise FitError(f"fitted OCV curve rejected: {exc}",
                       {"condition": cond, "reason": str(exc)}) from exc
    resid = float(np.max(np.abs(curve.eval(soc) - volts)))
    return FitResult(curve, resid, cond)


def load_anchors(path) -> list[tuple[float, float]]:
    """Read an anchor table with header ``soc,v_ocv``."""
    try:
        with open(path, newline="") as fh:
            return _parse_anchors(fh, str(path))
    except OSError as exc:
        raise FormatError(f"cannot read anchor table {path}: {exc}") from exc


def _parse_anchors(fh, name: str) -> list[tuple[float, float]]:
    reader = csv.reader(fh)
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != ["soc", "v_ocv"]:
        raise FormatError(f"{name}: expected header 'soc,v_ocv', got {header}")
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        try:
            s, v = (float(x) for x in row)
        except ValueError as exc:
            raise FormatError(f"{name}:{lineno}: {exc}") from exc
        if not (math.isfinite(s) and math.isfinite(v)):
            raise FormatError(f"{name}:{lineno}: non-finite value")
        rows.append((s, v))
    return rows


def default_anchors() -> list[tuple[float, float]]:
    """Synthetic LFP anchor table shipped with the package (see README)."""
    ref = resources.files("biascomp").joinpath("data/lfp_ocv_anchors.csv")
    with ref.open("r", newline="") as fh:
        return _parse_anchors(fh, "lfp_ocv_anchors.csv")


@functools.lru_cache(maxsize=1)
def default_curve() -> OcvCurve:
    return fit(default_anchors()).curve
