"""Blind channel-and-signal estimation for massive MIMO by approximate
message passing inside an EM loop, with off-grid angle tuning."""

from .estimator import EstimationResult, EstimatorConfig, run
from .harness import ExperimentSpec, nmse, rate_blind, rate_training, run_experiment

__all__ = ["EstimationResult", "EstimatorConfig", "ExperimentSpec", "nmse", "rate_blind",
           "rate_training", "run", "run_experiment"]
__version__ = "0.1.0"
