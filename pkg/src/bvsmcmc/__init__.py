"""Adaptive random neighbourhood MCMC samplers for Bayesian variable selection."""

from .adapt import AdaptState, asjd, init_adapt, kw_update, rb_update, rm_update
from .config import ConfigError, ExperimentConfig, load_config
from .datagen import SimSpec, generate_yang, load_csv, write_csv
from .diagnostics import RunOutput, pip_mse, relative_log10_mse
from .linmodel import (
    Dataset,
    ModelState,
    PriorSpec,
    center_data,
    enumerate_posterior,
    log_marginal_likelihood,
    make_model_state,
    rb_flip_logits,
)
from .proposals import Balancing
from .samplers import SAMPLERS, RunConfig, init_ensemble, run_chains

__version__ = "0.1.0"

__all__ = [
    "AdaptState",
    "Balancing",
    "ConfigError",
    "Dataset",
    "ExperimentConfig",
    "ModelState",
    "PriorSpec",
    "RunConfig",
    "RunOutput",
    "SAMPLERS",
    "SimSpec",
    "asjd",
    "center_data",
    "enumerate_posterior",
    "generate_yang",
    "init_adapt",
    "init_ensemble",
    "kw_update",
    "load_config",
    "load_csv",
    "log_marginal_likelihood",
    "make_model_state",
    "pip_mse",
    "rb_flip_logits",
    "rb_update",
    "relative_log10_mse",
    "rm_update",
    "run_chains",
    "write_csv",
]
