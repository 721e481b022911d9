"""MSE training with Adam, best-validation snapshotting and JSON checkpoints."""
from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from os import PathLike
from typing import Callable

import numpy as np

from . import numerics as nx
from .data import WindowedDataset
from .errors import CheckpointError, ConfigError, ContractError, DimensionError, TrainingError
from .model import AttentionLstmModel, ModelConfig, build_model, predict_one
from .numerics import Tensor

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "attnfc-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 150
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon_adam: float = 1e-8
    batch_size: int = 1
    seed: int = 42
    gradient_clip: float | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        for name in ("beta1", "beta2"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ConfigError(f"{name} must be in [0, 1), got {getattr(self, name)}")
        if not self.epsilon_adam > 0:
            raise ConfigError("epsilon_adam must be positive")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.gradient_clip is not None and not self.gradient_clip > 0:
            raise ConfigError("gradient_clip must be positive when set")

    @classmethod
    def from_dict(cls, d: dict) -> TrainConfig:
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown training config keys: {sorted(unknown)}")
        return cls(**d)


def mse_loss(prediction: Tensor, target: float) -> Tensor:
    diff = nx.sub(prediction, Tensor(np.asarray(target, dtype=np.float64).reshape(prediction.shape)))
    return nx.mul(diff, diff)


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(
    params: dict[str, Tensor],
    grads: dict[str, np.ndarray],
    state: AdamState,
    config: TrainConfig,
) -> None:
    """One bias-corrected Adam update, applied in place to ``params``."""
    if set(grads) != set(params):
        raise DimensionError(f"gradients for {sorted(set(grads) ^ set(params))} do not match parameters")
    b1, b2 = config.beta1, config.beta2
    state.t += 1
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for name, p in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        if g.shape != p.shape:
            raise DimensionError(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros(p.shape)
            state.v[name] = np.zeros(p.shape)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data = p.data - config.learning_rate * (m / c1) / (np.sqrt(v / c2) + config.epsilon_adam)


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Rescale all gradients jointly so their global L2 norm is at most ``max_norm``."""
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if norm > max_norm:
        factor = max_norm / norm
        for g in grads.values():
            g *= factor
    return norm


# ---------------------------------------------------------------------------
# training loop


@dataclass
class LossHistory:
    train: list[float] = field(default_factory=list)
    validation: list[float] = field(default_factory=list)
    best_epoch: int = -1

    @property
    def best_validation(self) -> float:
        return self.validation[self.best_epoch]

    def write_csv(self, path: str | PathLike) -> None:
        with open(path, "w") as fh:
            fh.write("epoch,train_mse,validation_mse\n")
            for k, (a, b) in enumerate(zip(self.train, self.validation), start=1):
                fh.write(f"{k},{a!r},{b!r}\n")


@dataclass
class TrainResult:
    model: AttentionLstmModel
    history: LossHistory


def dataset_mse(model: AttentionLstmModel, dataset: WindowedDataset) -> float:
    """Mean squared error of eval-mode one-step predictions, scaled space."""
    if len(dataset) == 0:
        raise ContractError("cannot score an empty dataset")
    total = 0.0
    with nx.no_grad():
        for x, ts, y in zip(dataset.inputs, dataset.time_indices, dataset.targets):
            pred, _ = predict_one(model, x, ts, "eval")
            total += (pred.item() - y) ** 2
    return total / len(dataset)


def train(
    model: AttentionLstmModel,
    train_set: WindowedDataset,
    val_set: WindowedDataset,
    config: TrainConfig = TrainConfig(),
    on_epoch: Callable[[int, float, float], None] | None = None,
) -> TrainResult:
    """Fit ``model`` in place and return a copy holding the best-validation weights.

    Samples are visited in chronological order; with ``batch_size > 1``
    gradients are averaged over consecutive samples before each step.
    """
    if len(train_set) == 0 or len(val_set) == 0:
        raise ContractError("training and validation sets must be nonempty")
    params = model.parameters()
    history = LossHistory()
    if not params:
        # Nothing to fit (persistence); record the constant losses anyway.
        val = dataset_mse(model, val_set)
        tr = dataset_mse(model, train_set)
        history.train = [tr] * config.epochs
        history.validation = [val] * config.epochs
        history.best_epoch = 0
        return TrainResult(model.clone(), history)

    rng = np.random.default_rng(config.seed)
    state = AdamState()
    best_arrays, best_val = None, math.inf
    n = len(train_set)
    for epoch in range(config.epochs):
        epoch_loss = 0.0
        acc = {name: np.zeros(p.shape) for name, p in params.items()}
        pending = 0
        for k in range(n):
            pred, _ = predict_one(model, train_set.inputs[k], train_set.time_indices[k], "train", rng)
            loss = mse_loss(pred, train_set.targets[k])
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingError(f"non-finite loss {value} at epoch {epoch + 1}, sample {k}")
            epoch_loss += value
            nx.backward(loss)
            for name, p in params.items():
                if p.grad is not None:
                    acc[name] += p.grad
            pending += 1
            if pending == config.batch_size or k == n - 1:
                grads = {name: g / pending for name, g in acc.items()}
                if config.gradient_clip is not None:
                    clip_gradients(grads, config.gradient_clip)
                adam_step(params, grads, state, config)
                for g in acc.values():
                    g.fill(0.0)
                pending = 0
        val = dataset_mse(model, val_set)
        if not math.isfinite(val):
            raise TrainingError(f"non-finite validation loss at epoch {epoch + 1}")
        history.train.append(epoch_loss / n)
        history.validation.append(val)
        if val < best_val:
            best_val, best_arrays = val, model.state_arrays()
            history.best_epoch = epoch
        if on_epoch is not None:
            on_epoch(epoch + 1, history.train[-1], val)
        log.debug("epoch %d train %.3e val %.3e", epoch + 1, history.train[-1], val)
    best = model.clone()
    best.load_arrays(best_arrays)
    return TrainResult(best, history)


# ---------------------------------------------------------------------------
# checkpoints


@dataclass
class Checkpoint:
    config: ModelConfig
    arrays: dict[str, np.ndarray]
    metadata: dict = field(default_factory=dict)
    version: int = CHECKPOINT_VERSION

    def to_model(self, config: ModelConfig | None = None) -> AttentionLstmModel:
        model = build_model(config or self.config, 0)
        unexpected = set(self.arrays) - set(model.parameters())
        if unexpected:
            raise DimensionError(f"checkpoint tensors {sorted(unexpected)} do not exist in the model")
        model.load_arrays(self.arrays)
        return model


def save_checkpoint(model: AttentionLstmModel, path: str | PathLike, metadata: dict | None = None) -> None:
    """Write atomically: the target is replaced only once the document is complete.

    Floats are written with ``repr`` precision, so loading is bitwise exact.
    """
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": model.config.to_dict(),
        "metadata": metadata or {},
        "params": {
            name: {"shape": list(a.shape), "data": a.ravel().tolist()}
            for name, a in model.state_arrays().items()
        },
    }
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
    os.replace(tmp, path)


def read_checkpoint(path: str | PathLike) -> Checkpoint:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise CheckpointError(f"{path}: checkpoint not found") from None
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt checkpoint ({exc})") from None
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: not an attnfc checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path}: checkpoint version {doc.get('version')!r}, this build reads {CHECKPOINT_VERSION}"
        )
    try:
        config = ModelConfig.from_dict(doc["config"])
        arrays = {
            name: np.array(entry["data"], dtype=np.float64).reshape(entry["shape"])
            for name, entry in doc["params"].items()
        }
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: malformed checkpoint ({exc})") from None
    return Checkpoint(config, arrays, doc.get("metadata", {}), doc["version"])


def load_checkpoint(path: str | PathLike, config: ModelConfig | None = None) -> AttentionLstmModel:
    """Rebuild the saved model; passing ``config`` checks the tensors against it."""
    return read_checkpoint(path).to_model(config)


def train_config_dict(config: TrainConfig) -> dict:
    return asdict(config)
