"""Sequential design of inputs for learning output statistics.

Bayesian linear/basis regression, acquisition criteria (mean model error,
output-weighted Q, mutual information), their optimization, benchmark systems
and ensemble campaigns.
"""

__version__ = "0.1.0"

from .kernels import BACKEND
from .stochastics import InputDistribution, make_rng
from .regression import BasisSpec, KnownVariance, InferredVariance, fit, hypothetical_update
from .criteria import Acquisition, CriterionSpec, WeightMode, q_weights
from .benchmarks import get_system, ground_truth
from .campaign import CampaignConfig, run_campaign, run_ensemble

__all__ = [
    "BACKEND",
    "InputDistribution",
    "make_rng",
    "BasisSpec",
    "KnownVariance",
    "InferredVariance",
    "fit",
    "hypothetical_update",
    "Acquisition",
    "CriterionSpec",
    "WeightMode",
    "q_weights",
    "get_system",
    "ground_truth",
    "CampaignConfig",
    "run_campaign",
    "run_ensemble",
]
