"""Batch-graph multimodal meme classification on precomputed embeddings."""

from .autodiff import Graph, Tensor, grad_check
from .dataio import Dataset, SynthConfig, generate_synthetic, load_dataset, save_dataset
from .errors import ConfigError, DataError, DimensionError, MemeGraphError, TrainingError, UsageError
from .model import ModelConfig, ModelParams, forward, init_model, load_checkpoint, predict, save_checkpoint
from .train import TrainConfig, train_loop, tune_threshold

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataError",
    "Dataset",
    "DimensionError",
    "Graph",
    "MemeGraphError",
    "ModelConfig",
    "ModelParams",
    "SynthConfig",
    "Tensor",
    "TrainConfig",
    "TrainingError",
    "UsageError",
    "forward",
    "generate_synthetic",
    "grad_check",
    "init_model",
    "load_checkpoint",
    "load_dataset",
    "predict",
    "save_checkpoint",
    "save_dataset",
    "train_loop",
    "tune_threshold",
]
