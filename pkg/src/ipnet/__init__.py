"""Interpolation-prediction networks for sparse, irregularly sampled multivariate time series."""
from .data import (ChannelStats, Dataset, MaskAssignment, ReferenceGrid, Sample, TimeChannel,
                   load_dataset, save_dataset)
from .interp import InterpParams
from .kernels import BACKEND
from .model import LossWeights, Model, ModelConfig
from .training import Checkpoint, TrainConfig, fit

__version__ = "0.1.0"
