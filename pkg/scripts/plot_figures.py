"""Render the plot-data CSVs written by ``biascomp run`` as PNG files.

Requires matplotlib (``pip install .[plot]``). Usage::

    python scripts/plot_figures.py out/cell1_25c_10mv
"""

import argparse
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def load(path):
    return np.genfromtxt(path, delimiter=",", names=True, dtype=None, encoding=None)


def plot_ocv(d, out):
    fig, ax = plt.subplots()
    ax.plot(d["soc"], d["v_ocv"])
    ax.set_xlabel("SOC")
    ax.set_ylabel("OCV [V]")
    ax2 = ax.twinx()
    ax2.semilogy(d["soc"], d["slope"], color="tab:red", lw=0.8)
    ax2.set_ylabel("slope [V/unit SOC]")
    fig.savefig(out / "ocv.png", dpi=120)


def plot_estimates(d, out):
    fig, (a1, a2) = plt.subplots(2, 1, sharex=True)
    h = d["t_s"] / 3600
    a1.plot(h, 100 * d["soc_err"], label="compensated")
    if "soc_err_baseline" in d.dtype.names:
        a1.plot(h, 100 * d["soc_err_baseline"], label="continuous", alpha=0.7)
    a1.set_ylabel("SOC error [%]")
    a1.legend()
    a2.plot(h, d["qb_hat"], label="compensated")
    if "qb_hat_baseline" in d.dtype.names:
        a2.plot(h, d["qb_hat_baseline"], label="continuous", alpha=0.7)
    a2.set_ylabel("Qb estimate [Ah]")
    a2.set_xlabel("time [h]")
    fig.savefig(out / "estimates.png", dpi=120)


def plot_bias(d, out):
    fig, ax = plt.subplots()
    h = d["t_s"] / 3600
    ax.plot(h, 1e3 * d["dv_true"], label="injected")
    ax.plot(h, 1e3 * d["dv_hat"], label="estimated")
    ax.set_xlabel("time [h]")
    ax.set_ylabel("bias [mV]")
    ax.legend()
    fig.savefig(out / "bias.png", dpi=120)


def plot_cycles(d, out):
    fig, ax = plt.subplots()
    c = d["cycle"]
    ax.plot(c, d["rmse_soc_pct"], "o-", label="SOC RMSE")
    ax.plot(c, d["qb_re_pct"], "s-", label="Qb RE")
    ax.set_xlabel("cycle")
    ax.set_ylabel("error [%]")
    ax.set_yscale("log")
    ax.legend()
    fig.savefig(out / "cycle_metrics.png", dpi=120)


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("run_dir", type=Path)
    args = ap.parse_args()
    d = args.run_dir
    plot_ocv(load(d / "plot_ocv.csv"), d)
    plot_estimates(load(d / "plot_estimates.csv"), d)
    plot_bias(load(d / "plot_bias.csv"), d)
    plot_cycles(load(d / "plot_cycle_metrics.csv"), d)


if __name__ == "__main__":
    main()
