"""BKW-style solvers for LWE, LPN, lattice decoding and subset sum, with cost models."""
from .model import (
    Bernoulli,
    Binary,
    BoundedPerCoordinate,
    BoundedUniform,
    DiscreteGaussian,
    Exact,
    LweParams,
    RoundedGaussian,
    RoundedNoise,
    SampleList,
    Uniform,
    beta_of,
    bias_of_gaussian,
    empirical_bias,
    regev_stddev,
)
from .gen import sample_lwe, sample_secret, sample_uniform
from .reduce import PlanInfeasible, ReductionPlan, plan
from .solve import Decision, RecoveredSecret, Verdict, find_secret_fft, solve_lwe

__all__ = [
    "Bernoulli", "Binary", "BoundedPerCoordinate", "BoundedUniform", "DiscreteGaussian", "Exact",
    "LweParams", "RoundedGaussian", "RoundedNoise", "SampleList", "Uniform", "beta_of",
    "bias_of_gaussian", "empirical_bias", "regev_stddev", "sample_lwe", "sample_secret",
    "sample_uniform", "PlanInfeasible", "ReductionPlan", "plan", "Decision", "RecoveredSecret",
    "Verdict", "find_secret_fft", "solve_lwe",
]
__version__ = "0.1.0"
