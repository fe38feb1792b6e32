"""Desk-scale bidirectional selective state-space video classifier
with trainable intra-frame and inter-frame prompt modules, a from-scratch
reverse-mode tape, a synthetic motion dataset, and propagation analyses.
"""

from .autograd import Tape, Tensor, grad_check
from .config import RunConfig, load_config
from .dataset import SynthSpec, build_in_memory, generate_sample, read_dataset, write_dataset
from .errors import (
    ConfigError,
    ContractError,
    DimensionError,
    DomainError,
    FormatError,
    NotFittedError,
    NumericError,
    SSPError,
)
from .estimator import VideoPromptClassifier
from .model import ModelConfig, VideoModel, build_model
from .training import AdamW, Schedule, TrainSettings, evaluate, train

__version__ = "0.1.0"

__all__ = [
    "AdamW",
    "ConfigError",
    "ContractError",
    "DimensionError",
    "DomainError",
    "FormatError",
    "ModelConfig",
    "NotFittedError",
    "NumericError",
    "RunConfig",
    "SSPError",
    "Schedule",
    "SynthSpec",
    "Tape",
    "Tensor",
    "TrainSettings",
    "VideoModel",
    "VideoPromptClassifier",
    "build_in_memory",
    "build_model",
    "evaluate",
    "generate_sample",
    "grad_check",
    "load_config",
    "read_dataset",
    "train",
    "write_dataset",
    "__version__",
]
