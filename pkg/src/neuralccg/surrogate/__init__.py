"""MLP surrogate of the recourse cost."""
from .dataset import SurrogateDataset, generate_dataset, load_dataset, repair_commitment, save_dataset
from .mlp import DESK_HIDDEN, LARGE_HIDDEN, MLP, Adam, gradient_check
from .model import Normalizer, SurrogateModel, flatten_inputs, forward, load_model, save_model
from .training import TrainConfig, TrainHistory, mape, train

__all__ = [
    "Adam", "DESK_HIDDEN", "LARGE_HIDDEN", "MLP", "Normalizer", "SurrogateDataset", "SurrogateModel",
    "TrainConfig", "TrainHistory", "flatten_inputs", "forward", "generate_dataset", "gradient_check",
    "load_dataset", "load_model", "mape", "repair_commitment", "save_dataset", "save_model", "train",
]
