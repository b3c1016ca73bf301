"""Command-line entry point.

    biascomp simulate <scenario.json> -o DIR
    biascomp run <scenario.json>... [--compare] [--jobs N] -o DIR
    biascomp baseline <scenario.json> -o DIR
    biascomp fit-ocv <anchors.csv> -o CURVE.json
    biascomp metrics <est.csv> <truth.csv>

Exit codes: 0 success, 1 validation error (bad input, file or config),
2 numerical failure. Without ``-o`` the output directory comes from
``$BIASCOMP_OUTPUT_DIR``, falling back to ``./out``.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .errors import BiasCompError, FormatError, NumericalError
from .harness import (RunReport, Scenario, StageError, re_capacity, rmse_soc, run_baseline_only,
                      run_scenario, simulate_scenario, write_simulation, write_columns)
from .ocv import fit, load_anchors

OUTPUT_ENV = "BIASCOMP_OUTPUT_DIR"
EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2


def output_dir(arg: str | None) -> Path:
    return Path(arg or os.environ.get(OUTPUT_ENV) or "out")


def _print_report(rep: RunReport) -> None:
    print(f"{rep.scenario} (seed {rep.seed})")
    for k, v in rep.param_err_pct.items():
        print(f"  {k:7s} {rep.params_hat[k]:.6g} ({v:+.3f} %)")
    print("  cycle  rmse_soc[%]  qb_re[%]  dv_hat[mV]")
    for c in rep.cycles:
        print(f"  {c.cycle:5d}  {c.rmse_soc_pct:11.4f}  {c.qb_re_pct:8.4f}  {c.dv_hat_mv:10.3f}")
    if rep.baseline_cycles:
        b = rep.final_baseline
        print(f"  baseline final rmse_soc {b.rmse_soc_pct:.4f} %, qb_re {b.qb_re_pct:.4f} %")
    print(f"  runtime {rep.runtime_s:.1f} s")


def cmd_simulate(args) -> int:
    scn = Scenario.load(args.scenario)
    out = output_dir(args.output)
    sim = simulate_scenario(scn)
    for p in write_simulation(sim, out):
        print(p)
    return EXIT_OK


def _run_one(path: str, out: str, compare: bool) -> RunReport:
    return run_scenario(Scenario.load(path), out, compare=compare)


def cmd_run(args) -> int:
    out = output_dir(args.output)
    paths = args.scenario
    if len(paths) == 1:
        _print_report(_run_one(paths[0], str(out), args.compare))
        return EXIT_OK
    # several scenarios: one subdirectory each, run in parallel
    targets = []
    for p in paths:
        targets.append((p, str(out / Scenario.load(p).name)))
    with ProcessPoolExecutor(max_workers=args.jobs) as pool:
        futures = [pool.submit(_run_one, p, d, args.compare) for p, d in targets]
        reports = [f.result() for f in futures]
    for rep in reports:
        _print_report(rep)
    return EXIT_OK


def cmd_baseline(args) -> int:
    scn = Scenario.load(args.scenario)
    out = output_dir(args.output)
    out.mkdir(parents=True, exist_ok=True)
    cycles, traj, _ = run_baseline_only(scn)
    traj.to_csv(out / "baseline_trajectory.csv")
    write_columns(out / "baseline_cycle_metrics.csv",
                   {"cycle": [c.cycle for c in cycles],
                    "rmse_soc_pct": [c.rmse_soc_pct for c in cycles],
                    "qb_re_pct": [c.qb_re_pct for c in cycles]})
    print(f"{scn.name} baseline")
    for c in cycles:
        print(f"  cycle {c.cycle}: rmse_soc {c.rmse_soc_pct:.4f} %, qb_re {c.qb_re_pct:.4f} %")
    return EXIT_OK


def cmd_fit_ocv(args) -> int:
    res = fit(load_anchors(args.anchors))
    out = Path(args.output) if args.output else output_dir(None) / "ocv_curve.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    res.curve.to_json(out)
    print(f"{out}: max residual {1e3 * res.residual_max_v:.4f} mV, condition {res.condition:.3g}")
    return EXIT_OK


def _read_columns(path) -> dict:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise FormatError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if r]
    if any(len(r) != len(header) for r in body):
        raise FormatError(f"{path}: ragged rows")
    cols = {}
    for k, name in enumerate(header):
        try:
            cols[name] = np.array([float(r[k]) for r in body])
        except ValueError:
            pass  # non-numeric column such as the zone label
    return cols


def _pick(cols: dict, names, path) -> np.ndarray:
    for n in names:
        if n in cols:
            return cols[n]
    raise FormatError(f"{path}: needs one of the columns {list(names)}")


def cmd_metrics(args) -> int:
    est = _read_columns(args.estimate)
    truth = _read_columns(args.truth)
    soc_hat = _pick(est, ("soc_hat", "soc"), args.estimate)
    soc_true = _pick(truth, ("soc_true", "soc"), args.truth)
    if "t_s" in est and "t_s" in truth:
        if len(est["t_s"]) != len(truth["t_s"]) or np.any(est["t_s"] != truth["t_s"]):
            raise FormatError("estimate and truth timestamps do not match")
    result = {"rmse_soc_pct": rmse_soc(soc_hat, soc_true)}
    if "qb_hat" in est and "qb_true" in truth:
        result["qb_re_pct"] = re_capacity(float(est["qb_hat"][-1]), float(truth["qb_true"][-1]))
    elif "qb_hat" in est and "qb_true" in est:
        result["qb_re_pct"] = re_capacity(float(est["qb_hat"][-1]), float(est["qb_true"][-1]))
    print(json.dumps(result))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="biascomp", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a scenario and write the measured series")
    p.add_argument("scenario")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("run", help="run the bias-compensated estimator on scenario(s)")
    p.add_argument("scenario", nargs="+")
    p.add_argument("--compare", action="store_true", help="also run the continuous baseline")
    p.add_argument("--jobs", type=int, default=None, help="parallel workers for several scenarios")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("baseline", help="run only the continuous-estimation baseline")
    p.add_argument("scenario")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("fit-ocv", help="fit the OCV polynomial to an anchor table")
    p.add_argument("anchors")
    p.add_argument("-o", "--output", help="curve JSON path")
    p.set_defaults(func=cmd_fit_ocv)

    p = sub.add_parser("metrics", help="SOC RMSE (and capacity RE) of an estimate against truth")
    p.add_argument("estimate")
    p.add_argument("truth")
    p.set_defaults(func=cmd_metrics)
    return ap


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, StageError):
        exc = exc.cause
    if isinstance(exc, NumericalError):
        return EXIT_NUMERICAL
    return EXIT_VALIDATION


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BiasCompError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code(exc)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
