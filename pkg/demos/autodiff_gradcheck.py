"""Reverse-mode gradients on the tape, checked against central differences.

Run: python3 demos/autodiff_gradcheck.py
"""
import numpy as np

from attnfc import Tensor, backward, finite_diff_check
from attnfc import numerics as nx
from attnfc.model import ModelConfig, build_model, predict_one
from attnfc.training import mse_loss

# A tiny expression first: f(w) = sum(tanh(W x + b)^2)
rng = np.random.default_rng(0)
W = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
b = Tensor(np.zeros(3), requires_grad=True)
x = Tensor(rng.normal(size=4))


def f():
    h = nx.tanh(nx.affine(x, W, b))
    return nx.sum(nx.mul(h, h))


loss = f()
backward(loss)
print("loss", loss.item())
print("dL/db", b.grad)

report = finite_diff_check(f, {"W": W, "b": b})
print("worst relative error", report.max_rel_error)

# Same check for the full forecaster on a single window.
model = build_model(ModelConfig(), rng)
window = rng.uniform(-1, 1, (7, 3))
days = np.arange(30, 37)


def model_loss():
    return mse_loss(predict_one(model, window, days, "eval")[0], 0.25)


report = finite_diff_check(model_loss, model.parameters())
print(f"{sum(p.data.size for p in model.parameters().values())} parameters, "
      f"worst relative error {report.max_rel_error:.2e}")
