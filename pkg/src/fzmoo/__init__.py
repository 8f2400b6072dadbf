"""Surrogate-assisted many-objective design optimisation for float-zone crystal growth."""

__version__ = "0.1.0"

from .ensemble import EnsembleModel, search_architectures, train_ensemble
from .errors import DataFormatError, DomainError, FzMooError, NumericError, ValidationError
from .neural import Architecture, TrainConfig
from .nsga import GaConfig, run
from .objectives import objective_matrix, table_objectives
from .oracle import evaluate, evaluate_batch, generate_dataset
from .param_space import default_space, lhs_sample

__all__ = [
    "Architecture", "DataFormatError", "DomainError", "EnsembleModel", "FzMooError", "GaConfig",
    "NumericError", "TrainConfig", "ValidationError", "default_space", "evaluate", "evaluate_batch",
    "generate_dataset", "lhs_sample", "objective_matrix", "run", "search_architectures",
    "table_objectives", "train_ensemble",
]
