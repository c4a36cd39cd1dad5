"""Data loading, experiment configs, batch runs, trace files and charts."""

from ..trace import TRACE_COLUMNS, TrainingTrace, suboptimality, validate_trace_file
from .config import ConfigError, ExperimentConfig, RunSpec, load_config, parse_config
from .data import DataError, Standardizer, load_csv, make_synthetic, standardize
from .experiment import build_model, get_reference, read_manifest, run_experiment
from .plots import emit_plots

__all__ = [
    "TRACE_COLUMNS", "TrainingTrace", "suboptimality", "validate_trace_file",
    "ConfigError", "ExperimentConfig", "RunSpec", "load_config", "parse_config",
    "DataError", "Standardizer", "load_csv", "make_synthetic", "standardize",
    "build_model", "get_reference", "read_manifest", "run_experiment", "emit_plots",
]
