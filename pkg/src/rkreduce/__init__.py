"""Approximate reductions between statistical models via signed kernels and rejection sampling."""

from .distributions import LogConcaveTarget, ScalarDensity
from .reductions import ReductionPlan, run_reduction
from .rejection import MViolated, RejectionConfig, deficiency_bound, rk_batch, rk_output_law, rk_sample
from .rng import CounterRNG

__all__ = [
    "CounterRNG",
    "LogConcaveTarget",
    "MViolated",
    "ReductionPlan",
    "RejectionConfig",
    "ScalarDensity",
    "deficiency_bound",
    "rk_batch",
    "rk_output_law",
    "rk_sample",
    "run_reduction",
]

__version__ = "0.1.0"
