"""Learning linear classifiers from multiple noisy annotators, with
disagreement-based example reweighting and perceptron mistake-bound
certificates."""

from .crowd import CrowdModel, InteractiveConfig, disagreement, fit, reweight
from .dataset import MultiLabelDataset, SplitSpec, kfold_indices, parse_libsvm, split
from .simulate import SimulationSpec, flip_probability_score, simulate_labels

__version__ = "0.1.0"

__all__ = [
    "CrowdModel", "InteractiveConfig", "MultiLabelDataset", "SimulationSpec", "SplitSpec",
    "disagreement", "fit", "flip_probability_score", "kfold_indices", "parse_libsvm",
    "reweight", "simulate_labels", "split",
]
