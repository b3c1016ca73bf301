"""Regenerate the synthetic LFP anchor table shipped in src/biascomp/data.

The curve is a 12th-order polynomial chosen by constrained least squares
against a smooth LFP-like target shape:

  * strictly increasing on [0, 1] (slope >= 5 mV per unit SOC)
  * slope at SOC 0 of at least 20.5 V per unit SOC (about 14.4 V at 1 %)
  * slope at most 0.04 V per unit SOC on [0.38, 0.52]
  * ~3.29 V plateau, ~2.75 V at empty, ~3.58 V at full

Requires cvxpy (``pip install .[design]``). Usage::

    python scripts/design_ocv.py [out.csv]
"""

import sys
from pathlib import Path

import cvxpy as cp
import numpy as np
from numpy.polynomial import chebyshev

from biascomp.ocv import DEGREE, _cheb_to_power, comp_horner

OUT = Path(__file__).resolve().parents[1] / "src/biascomp/data/lfp_ocv_anchors.csv"


def target(s):
    knee = 0.52 * np.exp(-s / 0.026)
    top = 0.28 * np.exp((s - 1.0) / 0.035)
    return 3.292 + 0.03 * (s - 0.45) - knee + top


def design():
    s = np.linspace(0.0, 1.0, 2001)
    vander = chebyshev.chebvander(2 * s - 1, DEGREE)
    deriv = np.zeros((DEGREE + 1, DEGREE + 1))
    for k in range(DEGREE + 1):
        e = np.zeros(DEGREE + 1)
        e[k] = 1.0
        d = chebyshev.chebder(e)
        deriv[: len(d), k] = d
    slope = 2.0 * vander @ deriv
    flat = (s >= 0.38) & (s <= 0.52)
    c = cp.Variable(DEGREE + 1)
    prob = cp.Problem(
        cp.Minimize(cp.sum_squares(vander @ c - target(s))),
        [slope @ c >= 0.005, slope[flat] @ c <= 0.04, slope[0] @ c >= 20.5],
    )
    prob.solve(solver="CLARABEL")
    return _cheb_to_power(c.value, 0.0, 1.0)


def main(argv):
    out = Path(argv[1]) if len(argv) > 1 else OUT
    coeffs = design()
    grid = np.round(np.linspace(0.0, 1.0, 101), 2)
    volts = comp_horner(coeffs, grid)
    lines = ["soc,v_ocv"] + [f"{s:.2f},{v:.6f}" for s, v in zip(grid, volts)]
    out.write_text("\n".join(lines) + "\n")
    print(f"wrote {len(grid)} anchors to {out}")


if __name__ == "__main__":
    main(sys.argv)
