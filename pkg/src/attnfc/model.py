"""AttentionLSTM encoder-decoder plus the plain-LSTM and persistence baselines.

Wiring of the attention model for one predicted day::

    window rows ++ time2vec(t)  ->  LSTM(14) -> norm -> dropout -> LSTM(7) -> norm  =  H
    decoder LSTM(7), started from the top encoder layer's final state,
        consumes the last augmented window row
    fine-grained attention over H, queried with that final encoder state
    y_hat = dense(concat(context, decoder h))

The plain baseline drops Time2Vec, the decoder and attention, and reads the
forecast off the final top-layer hidden state.
"""
from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field
from typing import Iterator

import numpy as np

from . import numerics as nx
from .attention import (
    AttentionResult,
    AttentionScorerParams,
    attend_basic,
    attend_fine,
    init_scorer,
)
from .errors import ConfigError, ContractError, DimensionError
from .layers import (
    DenseParams,
    LayerNormParams,
    LstmCellParams,
    LstmState,
    Time2VecParams,
    dense_forward,
    dropout_forward,
    init_dense,
    init_layer_norm,
    init_lstm,
    init_time2vec,
    initial_state,
    layer_norm_forward,
    lstm_cell_step,
    lstm_sequence,
    time2vec_sequence,
)
from .numerics import Tensor

MODES = ("attention_lstm", "plain_lstm", "persistence")


@dataclass(frozen=True)
class ModelConfig:
    lookback: int = 7
    encoder_layer_sizes: tuple[int, ...] = (14, 7)
    dropout_rate: float = 0.20
    time2vec_l: int = 7
    feature_count: int = 3
    mode: str = "attention_lstm"
    attention: str = "fine"
    target_index: int = 0
    # Day offsets run to a few hundred; Time2Vec sees them in these units.
    time_scale: float = 100.0
    norm_epsilon: float = 1e-5

    def __post_init__(self):
        object.__setattr__(self, "encoder_layer_sizes", tuple(int(s) for s in self.encoder_layer_sizes))
        if self.lookback < 1:
            raise ConfigError(f"lookback must be >= 1, got {self.lookback}")
        if not self.encoder_layer_sizes or any(s < 1 for s in self.encoder_layer_sizes):
            raise ConfigError(f"encoder layer sizes must be positive, got {self.encoder_layer_sizes}")
        if any(s < 2 for s in self.encoder_layer_sizes):
            raise ConfigError("layer normalization needs encoder layers of size >= 2")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.time2vec_l < 0:
            raise ConfigError(f"time2vec_l must be >= 0, got {self.time2vec_l}")
        if self.feature_count < 1 or not 0 <= self.target_index < self.feature_count:
            raise ConfigError(
                f"target_index {self.target_index} invalid for {self.feature_count} features"
            )
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.attention not in ("fine", "basic"):
            raise ConfigError(f"attention must be 'fine' or 'basic', got {self.attention!r}")
        if self.time_scale <= 0:
            raise ConfigError("time_scale must be positive")

    @property
    def top_size(self) -> int:
        return self.encoder_layer_sizes[-1]

    @property
    def uses_time2vec(self) -> bool:
        return self.mode == "attention_lstm"

    @property
    def input_size(self) -> int:
        extra = self.time2vec_l + 1 if self.uses_time2vec else 0
        return self.feature_count + extra

    def to_dict(self) -> dict:
        d = asdict(self)
        d["encoder_layer_sizes"] = list(self.encoder_layer_sizes)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> ModelConfig:
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


def parameter_count(config: ModelConfig) -> int:
    """Closed-form number of scalars a model built from ``config`` holds."""
    if config.mode == "persistence":
        return 0

    def lstm(n, m):
        return 4 * m * (m + n) + 4 * m

    total = 0
    n = config.input_size
    for m in config.encoder_layer_sizes:
        total += lstm(n, m) + 2 * m
        n = m
    top = config.top_size
    if config.mode == "plain_lstm":
        return total + top + 1
    k = top if config.attention == "fine" else 1
    s = top
    total += 2 * (config.time2vec_l + 1)
    total += lstm(config.input_size, top)
    total += (2 * top) * s + s + s * k
    total += 2 * top + 1
    return total


@dataclass
class AttentionLstmModel:
    config: ModelConfig
    encoder: list[LstmCellParams] = field(default_factory=list)
    norms: list[LayerNormParams] = field(default_factory=list)
    t2v: Time2VecParams | None = None
    decoder: LstmCellParams | None = None
    scorer: AttentionScorerParams | None = None
    output: DenseParams | None = None

    def named_parameters(self) -> Iterator[tuple[str, Tensor]]:
        """Parameters in a fixed order under stable checkpoint names."""
        if self.t2v is not None:
            for name, t in self.t2v.named_tensors():
                yield f"t2v.{name}", t
        for k, (cell, norm) in enumerate(zip(self.encoder, self.norms), start=1):
            for name, t in cell.named_tensors():
                yield f"encoder_l{k}.{name}", t
            for name, t in norm.named_tensors():
                yield f"norm_l{k}.{name}", t
        if self.decoder is not None:
            for name, t in self.decoder.named_tensors():
                yield f"decoder.{name}", t
        if self.scorer is not None:
            for name, t in self.scorer.named_tensors():
                yield f"scorer.{name}", t
        if self.output is not None:
            for name, t in self.output.named_tensors():
                yield f"output.{name}", t

    def parameters(self) -> dict[str, Tensor]:
        return dict(self.named_parameters())

    def clone(self) -> AttentionLstmModel:
        return copy.deepcopy(self)

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.named_parameters()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        params = self.parameters()
        missing = set(params) - set(arrays)
        if missing:
            raise DimensionError(f"missing parameter tensors: {sorted(missing)}")
        for name, t in params.items():
            value = np.asarray(arrays[name], dtype=np.float64)
            if value.shape != t.shape:
                raise DimensionError(f"tensor {name}: shape {value.shape}, model expects {t.shape}")
            t.data = value.copy()


def build_model(config: ModelConfig, seed: int | np.random.Generator = 0) -> AttentionLstmModel:
    """Randomly initialized model; uniform(+-1/sqrt(fan_in)) weights."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    model = AttentionLstmModel(config)
    if config.mode == "persistence":
        return model
    if config.uses_time2vec:
        model.t2v = init_time2vec(config.time2vec_l, rng)
    n = config.input_size
    for m in config.encoder_layer_sizes:
        model.encoder.append(init_lstm(n, m, rng))
        model.norms.append(init_layer_norm(m, config.norm_epsilon))
        n = m
    top = config.top_size
    if config.mode == "attention_lstm":
        model.decoder = init_lstm(config.input_size, top, rng)
        k = top if config.attention == "fine" else 1
        model.scorer = init_scorer(top, top, top, k, rng)
        model.output = init_dense(2 * top, 1, rng)
    else:
        model.output = init_dense(top, 1, rng)
    return model


def zero_model(config: ModelConfig) -> AttentionLstmModel:
    """Same structure as :func:`build_model` with every weight and bias zero."""
    model = build_model(config, 0)
    for _, t in model.named_parameters():
        t.data = np.zeros_like(t.data)
    return model


# ---------------------------------------------------------------------------
# forward passes


def _check_window(config: ModelConfig, window, time_indices) -> tuple[np.ndarray, np.ndarray]:
    window = np.asarray(window, dtype=np.float64)
    expected = (config.lookback, config.feature_count)
    if window.shape != expected:
        raise DimensionError(f"window has shape {window.shape}, model expects {expected}")
    ts = np.asarray(time_indices, dtype=np.float64).reshape(-1)
    if ts.shape != (config.lookback,):
        raise DimensionError(f"expected {config.lookback} time indices, got {ts.shape[0]}")
    return window, ts


def _augment(model: AttentionLstmModel, window: np.ndarray, ts: np.ndarray) -> Tensor:
    x = Tensor(window)
    if model.t2v is None:
        return x
    return nx.concat([x, time2vec_sequence(model.t2v, ts / model.config.time_scale)], axis=1)


def _encode(model, inputs: Tensor, mode: str, rng) -> tuple[Tensor, LstmState]:
    cfg = model.config
    layers = list(zip(model.encoder, model.norms))
    H = inputs
    final = None
    for k, (cell, norm) in enumerate(layers):
        top = k == len(layers) - 1
        H, state = lstm_sequence(cell, initial_state(cell.hidden_size), H, final=top and cfg.mode != "plain_lstm")
        final = state if top else final
        H = layer_norm_forward(norm, H)
        if k < len(layers) - 1:
            H = dropout_forward(cfg.dropout_rate, H, mode, rng)
    return H, final


def encode(
    model: AttentionLstmModel,
    window,
    time_indices,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Top-layer encoder states, shape ``lookback x top_size``."""
    if model.config.mode == "persistence":
        raise ContractError("the persistence baseline has no encoder")
    window, ts = _check_window(model.config, window, time_indices)
    H, _ = _encode(model, _augment(model, window, ts), mode, rng)
    return H


def predict_one(
    model: AttentionLstmModel,
    window,
    time_indices,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
) -> tuple[Tensor, AttentionResult | None]:
    """Forecast the next target value (scaled space) from one window."""
    cfg = model.config
    window, ts = _check_window(cfg, window, time_indices)
    if mode not in ("train", "eval"):
        raise ConfigError(f"mode must be 'train' or 'eval', got {mode!r}")
    if cfg.mode == "persistence":
        return Tensor(window[-1, cfg.target_index]), None
    inputs = _augment(model, window, ts)
    H, final = _encode(model, inputs, mode, rng)
    if cfg.mode == "plain_lstm":
        return nx.reshape(dense_forward(model.output, H[cfg.lookback - 1]), ()), None
    decoder_state = lstm_cell_step(model.decoder, final, inputs[cfg.lookback - 1])
    attend = attend_fine if cfg.attention == "fine" else attend_basic
    trace = attend(model.scorer, H, final.h)
    y = dense_forward(model.output, nx.concat([trace.context, decoder_state.h]))
    return nx.reshape(y, ()), trace


def plain_lstm_forward(
    model: AttentionLstmModel,
    window,
    time_indices=None,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
) -> Tensor:
    if model.config.mode != "plain_lstm":
        raise ConfigError(f"model mode is {model.config.mode!r}, not 'plain_lstm'")
    if time_indices is None:
        time_indices = np.arange(model.config.lookback)
    y, _ = predict_one(model, window, time_indices, mode, rng)
    return y


@dataclass
class ForecastPath:
    predictions: np.ndarray
    attention_traces: list[AttentionResult | None]
    time_indices: np.ndarray


def slide_window(window: np.ndarray, prediction: float, target_index: int) -> np.ndarray:
    """Drop the oldest row and append one carrying ``prediction`` as the target.

    Non-target features keep their last observed values.
    """
    new_row = window[-1].copy()
    new_row[target_index] = prediction
    return np.vstack([window[1:], new_row])


def forecast_recursive(model: AttentionLstmModel, seed_window, time_indices, horizon: int) -> ForecastPath:
    """Roll one-step predictions forward ``horizon`` days in eval mode."""
    if horizon < 1:
        raise ContractError(f"horizon must be >= 1, got {horizon}")
    cfg = model.config
    window, ts = _check_window(cfg, seed_window, time_indices)
    preds, traces, steps = [], [], []
    with nx.no_grad():
        for _ in range(horizon):
            y, trace = predict_one(model, window, ts, "eval")
            value = y.item()
            preds.append(value)
            traces.append(trace)
            steps.append(ts[-1] + 1)
            window = slide_window(window, value, cfg.target_index)
            ts = ts + 1
    return ForecastPath(np.array(preds), traces, np.array(steps))
