"""Risk-averse soft-margin linear classifiers."""

__version__ = "0.1.0"

from .geometry import LabeledDataset, LinearClassifier
from .qp_model import LossSpec, TrainedModel, train
from .risk_measures import EmpiricalDistribution, RiskSpec
from .solver import SolverSettings, solve

__all__ = [
    "EmpiricalDistribution", "LabeledDataset", "LinearClassifier", "LossSpec",
    "RiskSpec", "SolverSettings", "TrainedModel", "solve", "train",
]
