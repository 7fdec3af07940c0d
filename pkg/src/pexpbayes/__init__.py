"""Adaptive p-exponential priors in the sequence-space white noise model.

The hot loops (whitening, per-coordinate marginal likelihoods, Gibbs sweeps)
run in a compiled extension when it is available and in numpy otherwise;
``pexpbayes.backend.NAME`` reports which one was selected.
"""
from .backend import NAME as BACKEND
from .config import ExperimentConfig, load_config
from .ebayes import CandidateGrid, QuadratureSpec, build_grid, log_marginal, mmle
from .errors import (
    ConfigError,
    DomainError,
    InfeasibleError,
    NumericError,
    PexpError,
    SamplerError,
    UnsupportedBasisError,
)
from .experiments import contraction_study, run_experiment_1, run_experiment_2
from .gibbs import ChainLog, GibbsConfig, PosteriorSummary, run_gibbs
from .model import Fixed, Observation, PowerRule, simulate, truncation_level
from .pexp import PExp
from .prior import HyperParamMode, PriorSpec, ProductHyper, TruncExp, TruncInvGamma, sample_prior
from .rates import (
    RateQuery,
    adaptive_rate_target,
    epsilon_n_solve,
    eps_upper,
    linear_minimax_rate,
    minimax_rate,
    small_ball_mc,
)
from .sequences import Basis, CoefficientVector, NormSpec, TruthSpec, make_truth, weighted_norm

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Basis",
    "CandidateGrid",
    "ChainLog",
    "CoefficientVector",
    "ConfigError",
    "DomainError",
    "ExperimentConfig",
    "Fixed",
    "GibbsConfig",
    "HyperParamMode",
    "InfeasibleError",
    "NormSpec",
    "NumericError",
    "Observation",
    "PExp",
    "PexpError",
    "PosteriorSummary",
    "PowerRule",
    "PriorSpec",
    "ProductHyper",
    "QuadratureSpec",
    "RateQuery",
    "SamplerError",
    "TruncExp",
    "TruncInvGamma",
    "TruthSpec",
    "UnsupportedBasisError",
    "adaptive_rate_target",
    "build_grid",
    "contraction_study",
    "eps_upper",
    "epsilon_n_solve",
    "linear_minimax_rate",
    "load_config",
    "log_marginal",
    "make_truth",
    "minimax_rate",
    "mmle",
    "run_experiment_1",
    "run_experiment_2",
    "run_gibbs",
    "sample_prior",
    "simulate",
    "small_ball_mc",
    "truncation_level",
    "weighted_norm",
]
