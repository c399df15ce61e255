"""OOD detection with scarce labels and a mixed unlabeled pool.

A small numpy MLP is trained in two stages: supervised plus consistency
loss at a calibrated temperature, then entropy minimisation on samples a
score mixture marks as in-distribution and entropy maximisation on those
it marks as out-of-distribution.
"""

__version__ = "0.1.0"

from .kernels import BACKEND
from .data import DatasetBundle, OodTruth, SampleSet, SyntheticSpec, generate_synthetic
from .nn import ParameterSet, forward, init_params
from .trainer import TrainConfig, TrainResult, train
from .metrics import aupr, auroc, fpr_at_95_tpr

__all__ = [
    "BACKEND", "DatasetBundle", "OodTruth", "SampleSet", "SyntheticSpec", "generate_synthetic",
    "ParameterSet", "forward", "init_params", "TrainConfig", "TrainResult", "train",
    "auroc", "aupr", "fpr_at_95_tpr",
]
