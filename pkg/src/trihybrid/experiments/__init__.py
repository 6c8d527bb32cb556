"""Experiment files, seed sweeps, comparison reports and the ``isac`` CLI."""

from .io import ExperimentSpec, ParseError, ValidationError, load_experiment, parse_experiment
from .runner import beam_pattern_grid, rate_tradeoff_sweep, run_comparison

__all__ = ["ExperimentSpec", "ParseError", "ValidationError", "load_experiment",
           "parse_experiment", "beam_pattern_grid", "rate_tradeoff_sweep", "run_comparison"]
