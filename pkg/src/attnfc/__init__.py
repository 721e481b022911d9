"""Attention-based LSTM forecasting of cumulative case counts, on a small
reverse-mode autodiff core."""
from .errors import (
    AttnfcError,
    CheckpointError,
    ConfigError,
    ContractError,
    DimensionError,
    IngestionError,
    MetricError,
    NonFiniteError,
    TrainingError,
)
from .numerics import Tensor, backward, finite_diff_check, no_grad, tensor
from .model import ModelConfig, AttentionLstmModel, build_model, predict_one, forecast_recursive
from .data import SplitSpec, prepare_series, descriptive_stats, fit_scaler, scale, inverse, make_windows
from .training import TrainConfig, train, save_checkpoint, load_checkpoint
from .evaluation import HorizonSpec, rmse, mape, evaluate_test, evaluate_horizon, render_report

__version__ = "0.1.0"
