"""Bias-compensated SOC and capacity estimation for LFP cells.

Positive current is discharge throughout.
"""

from .ecm import (REFERENCE_CELLS, BiasSchedule, CellParams, CellState, Sample, TimeSeries,
                  simulate, step_soc, step_vc, terminal_voltage)
from .errors import (BiasCompError, ConfigError, FitError, FormatError, IdentifiabilityError,
                     InvalidInputError, NumericalError, NumericalFailure, ValidationError)
from .filters import HighPassFilter, InjectionSpec, filter_pair, gen_injection, hp_filter, hp_step
from .harness import (RunReport, Scenario, build_profile, execute, re_capacity, rmse_soc,
                      run_scenario, simulate_scenario)
from .kalman import (DekfState, EkfState, ThetaRc, dekf_step, ekf_predict, ekf_update,
                     estimate_dv, estimate_rs, estimate_rt_tau, verify_bias_law)
from .ocv import (LinearOcv, OcvCurve, Zone, ZoneConfig, classify_zone, default_curve, fit,
                  linearize)
from .pipeline import (PipelineConfig, PipelineState, Stage, Trajectory, initial_state, run,
                       run_baseline, run_param_id, step)

__version__ = "0.1.0"

__all__ = [
    "REFERENCE_CELLS", "BiasSchedule", "CellParams", "CellState", "Sample", "TimeSeries",
    "simulate", "step_soc", "step_vc", "terminal_voltage",
    "BiasCompError", "ConfigError", "FitError", "FormatError", "IdentifiabilityError",
    "InvalidInputError", "NumericalError", "NumericalFailure", "ValidationError",
    "HighPassFilter", "InjectionSpec", "filter_pair", "gen_injection", "hp_filter", "hp_step",
    "RunReport", "Scenario", "build_profile", "execute", "re_capacity", "rmse_soc",
    "run_scenario", "simulate_scenario",
    "DekfState", "EkfState", "ThetaRc", "dekf_step", "ekf_predict", "ekf_update", "estimate_dv",
    "estimate_rs", "estimate_rt_tau", "verify_bias_law",
    "LinearOcv", "OcvCurve", "Zone", "ZoneConfig", "classify_zone", "default_curve", "fit",
    "linearize",
    "PipelineConfig", "PipelineState", "Stage", "Trajectory", "initial_state", "run",
    "run_baseline", "run_param_id", "step",
]
