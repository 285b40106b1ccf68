"""From-scratch GRU networks for speed and heading prediction."""
from .dataset import Dataset, build_dataset, heading_from_features, trace_features
from .gradcheck import grad_check, small_problem
from .model import (
    ARCHITECTURES,
    MODEL_NAMES,
    DenseLayer,
    GruCellWeights,
    GruLayer,
    GruModel,
    ShapeError,
    build_model,
    gru_cell_forward,
    mse_loss,
)
from .serialize import ModelFormatError, load_model, save_model
from .train import Adam, TrainingDivergedError, heldout_mse, predict, train
