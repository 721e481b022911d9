import json

import numpy as np
import pytest

from attnfc import numerics as nx
from attnfc.data import prepare_series
from attnfc.errors import CheckpointError, ConfigError, DimensionError, TrainingError
from attnfc.model import ModelConfig, build_model, forecast_recursive
from attnfc.numerics import Tensor, backward
from attnfc.training import (
    AdamState,
    TrainConfig,
    adam_step,
    clip_gradients,
    load_checkpoint,
    mse_loss,
    read_checkpoint,
    save_checkpoint,
    train,
)

SMALL = ModelConfig(encoder_layer_sizes=(4, 3), time2vec_l=2)


def ramp(n=40):
    t = np.arange(n, dtype=float)
    return prepare_series(np.column_stack([t, 0.5 * t + 3, np.sqrt(t)]), 7)


def test_mse_loss_values_and_gradient():
    assert mse_loss(Tensor(3.0), 3.0).item() == 0.0
    y = Tensor(2.0, requires_grad=True)
    loss = mse_loss(y, 0.0)
    assert loss.item() == 4.0
    backward(loss)
    assert y.grad == 4.0


def test_adam_first_step_by_hand():
    w = Tensor(1.0, requires_grad=True)
    adam_step({"w": w}, {"w": np.array(2.0)}, AdamState(), TrainConfig())
    assert w.data == pytest.approx(1 - 0.001 * 2 / (2 + 1e-8), abs=1e-15)


def test_adam_zero_gradient_is_identity_and_symmetric():
    a, b = Tensor([0.3, -0.2], requires_grad=True), Tensor([0.3, -0.2], requires_grad=True)
    state, cfg = AdamState(), TrainConfig()
    adam_step({"a": a}, {"a": np.zeros(2)}, state, cfg)
    assert a.data.tolist() == [0.3, -0.2]
    g = np.array([0.5, -1.5])
    adam_step({"a": a, "b": b}, {"a": g, "b": g.copy()}, AdamState(), cfg)
    np.testing.assert_array_equal(a.data, b.data)
    with pytest.raises(DimensionError):
        adam_step({"a": a}, {"a": np.zeros(3)}, AdamState(), cfg)


def test_clip_gradients_global_norm():
    g = {"a": np.array([3.0]), "b": np.array([4.0])}
    assert clip_gradients(g, 1.0) == 5.0
    assert np.hypot(g["a"][0], g["b"][0]) == pytest.approx(1.0)


def test_train_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(epochs=0)
    with pytest.raises(ConfigError):
        TrainConfig(beta1=1.0)
    assert TrainConfig().epochs == 150 and TrainConfig().batch_size == 1


def test_training_is_deterministic_and_selects_best():
    prep = ramp()
    cfg = TrainConfig(epochs=6, seed=3)
    r1 = train(build_model(SMALL, 1), prep.train, prep.validation, cfg)
    r2 = train(build_model(SMALL, 1), prep.train, prep.validation, cfg)
    assert r1.history.train == r2.history.train and r1.history.validation == r2.history.validation
    assert len(r1.history.train) == 6
    assert r1.history.best_validation == min(r1.history.validation)
    assert r1.history.best_validation <= r1.history.validation[-1]


def test_single_repeated_sample_loss_decreases():
    prep = ramp()
    one = prep.train.subset(slice(0, 1))
    cfg = ModelConfig(encoder_layer_sizes=(4, 3), time2vec_l=2, dropout_rate=0.0)
    r = train(build_model(cfg, 0), one, prep.validation, TrainConfig(epochs=60))
    losses = np.array(r.history.train)
    assert losses[-1] < losses[0]
    assert (np.diff(losses[10:]) <= 1e-9).all()


def test_non_finite_loss_names_epoch_and_sample():
    prep = ramp()
    prep.train.targets[2] = np.inf
    with pytest.raises(TrainingError, match="epoch 1, sample 2"):
        train(build_model(SMALL, 0), prep.train, prep.validation, TrainConfig(epochs=1))


def test_batch_and_clip_options_run():
    prep = ramp()
    r = train(
        build_model(SMALL, 0), prep.train, prep.validation,
        TrainConfig(epochs=2, batch_size=4, gradient_clip=5.0),
    )
    assert np.isfinite(r.history.train).all()


def test_checkpoint_round_trip_is_bitwise(tmp_path):
    model = build_model(ModelConfig(), 5)
    path = tmp_path / "ck.json"
    save_checkpoint(model, path, {"seed": 5})
    back = load_checkpoint(path)
    for (n1, a), (n2, b) in zip(model.named_parameters(), back.named_parameters()):
        assert n1 == n2
        np.testing.assert_array_equal(a.data, b.data)
    x = np.random.default_rng(0).uniform(-1, 1, (7, 3))
    f1 = forecast_recursive(model, x, np.arange(7), 5).predictions
    f2 = forecast_recursive(back, x, np.arange(7), 5).predictions
    np.testing.assert_array_equal(f1, f2)
    assert read_checkpoint(path).metadata == {"seed": 5}


def test_checkpoint_failures(tmp_path):
    path = tmp_path / "ck.json"
    save_checkpoint(build_model(ModelConfig(), 0), path)
    text = path.read_text()
    (tmp_path / "cut.json").write_text(text[: len(text) // 2])
    with pytest.raises(CheckpointError, match="corrupt"):
        load_checkpoint(tmp_path / "cut.json")
    doc = json.loads(text)
    doc["version"] = 99
    (tmp_path / "v.json").write_text(json.dumps(doc))
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(tmp_path / "v.json")
    with pytest.raises(DimensionError, match="encoder_l1"):
        load_checkpoint(path, ModelConfig(encoder_layer_sizes=(10, 7)))
    with pytest.raises(CheckpointError, match="not found"):
        load_checkpoint(tmp_path / "missing.json")
