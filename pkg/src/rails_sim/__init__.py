"""Joint delay-budget decomposition and provider selection across network domains."""

from .config import ExperimentConfig, load_config
from .decompose import Decomposition, decompose, grid_search, refine
from .env import (
    Environment,
    EnvironmentConfig,
    FeedbackSample,
    ProviderGroundTruth,
    build_environment,
    generate_feedback,
    min_supportable_delay,
    system_load,
    true_acceptance_probability,
)
from .harness import aggregate, average_e2e, emit_trace, run_experiment
from .risk import FeedbackBuffer, RiskModel, gradient_check, init_model, predict, push_feedback, update
from .search import SolveResult, nra_solve, opt_solve, raes_solve, rails_solve

__version__ = "0.1.0"
