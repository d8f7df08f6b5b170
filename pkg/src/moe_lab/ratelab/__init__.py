"""Convergence-rate experiments: scenario presets, replicate runner, reports."""

from .runner import (
    CI_GRID,
    DEFAULT_GRID,
    HellingerOptions,
    RateReport,
    rerun_from_provenance,
    run_replicates,
    run_scenario,
)
from .scenarios import ScenarioSpec, make_scenario
from .slopes import SlopeFit, fit_slope

__all__ = [
    "CI_GRID", "DEFAULT_GRID", "HellingerOptions", "RateReport", "ScenarioSpec", "SlopeFit",
    "fit_slope", "make_scenario", "rerun_from_provenance", "run_replicates", "run_scenario",
]
