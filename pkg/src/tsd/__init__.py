"""Tri-subspace disentanglement for multimodal sequence regression and classification.

A small numpy autodiff engine, the encoders / regularizers / cross-attention
fusion built on it, a synthetic data generator with planted shared latents,
and a training and experiment harness.
"""

from .config import AblationConfig, DataConfig, ModelConfig, RunConfig, TrainConfig, load_config, parse_config
from .data import Dataset, SyntheticSpec, generate, make_splits, read_dataset, write_dataset
from .errors import ConfigError, ContractError, DimensionError, FormatError, LengthError, NumericError
from .experiments import ablate, sweep_lambda
from .losses import LossWeights
from .metrics import compute_metrics
from .model import TSDModel
from .probe import export_embeddings, probe_disentanglement, read_embeddings
from .stats import holm_correct, paired_t_test
from .tensor import Tensor, no_grad
from .training import evaluate, train

__all__ = [
    "AblationConfig", "DataConfig", "ModelConfig", "RunConfig", "TrainConfig", "load_config", "parse_config",
    "Dataset", "SyntheticSpec", "generate", "make_splits", "read_dataset", "write_dataset",
    "ConfigError", "ContractError", "DimensionError", "FormatError", "LengthError", "NumericError",
    "ablate", "sweep_lambda", "LossWeights", "compute_metrics", "TSDModel",
    "export_embeddings", "probe_disentanglement", "read_embeddings",
    "holm_correct", "paired_t_test", "Tensor", "no_grad", "evaluate", "train",
]
