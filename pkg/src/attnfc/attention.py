"""Additive attention over encoder states, in basic and fine-grained form.

Basic attention gives one score per encoder step and mixes whole hidden
vectors. Fine-grained attention scores every (step, dimension) pair and
normalizes over time separately for each dimension, so a context element
is a convex combination of that dimension's history only.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from os import PathLike
from typing import NamedTuple

import numpy as np

from . import numerics as nx
from .errors import ConfigError, DimensionError
from .layers import DenseParams, _Params, dense_forward, init_dense
from .numerics import Tensor


@dataclass
class AttentionScorerParams(_Params):
    """Two-layer scorer: ``concat(h_t, d_prev) -> tanh(s) -> k`` scores.

    The output layer has no bias: softmax over time would cancel it, leaving
    a parameter with identically zero gradient.
    """

    hidden: DenseParams
    output: DenseParams

    @property
    def arity(self) -> int:
        return self.output.out_features

    def named_tensors(self):
        for prefix, dense in (("hidden", self.hidden), ("output", self.output)):
            for name, t in dense.named_tensors():
                yield f"{prefix}.{name}", t


class AttentionResult(NamedTuple):
    context: Tensor
    weights: Tensor  # T x k
    scores: Tensor  # T x k, pre-softmax


def init_scorer(
    encoder_size: int, decoder_size: int, hidden_size: int, arity: int, rng: np.random.Generator
) -> AttentionScorerParams:
    return AttentionScorerParams(
        init_dense(encoder_size + decoder_size, hidden_size, rng),
        init_dense(hidden_size, arity, rng, bias=False),
    )


def _check_states(H: Tensor, d_prev: Tensor, scorer: AttentionScorerParams) -> None:
    if H.data.ndim != 2 or H.shape[0] < 1:
        raise DimensionError(f"encoder states must be T x n with T >= 1, got {H.shape}")
    if d_prev.data.ndim != 1:
        raise DimensionError(f"decoder state must be a vector, got {d_prev.shape}")
    expected = H.shape[1] + d_prev.shape[0]
    if scorer.hidden.in_features != expected:
        raise DimensionError(
            f"scorer takes {scorer.hidden.in_features} inputs but h_t + d_prev has {expected}"
        )


def score(scorer: AttentionScorerParams, H: Tensor, d_prev: Tensor) -> Tensor:
    """Raw scores for every encoder row, shape ``T x k``."""
    _check_states(H, d_prev, scorer)
    T = H.shape[0]
    paired = nx.concat([H, nx.stack([d_prev] * T)], axis=1)
    hidden = nx.tanh(dense_forward(scorer.hidden, paired))
    return dense_forward(scorer.output, hidden)


def score_basic(scorer: AttentionScorerParams, H: Tensor, d_prev: Tensor) -> Tensor:
    if scorer.arity != 1:
        raise ConfigError(f"basic attention needs a 1-output scorer, got {scorer.arity}")
    e = score(scorer, H, d_prev)
    return nx.reshape(e, (H.shape[0],))


def basic_from_scores(e: Tensor, H: Tensor) -> AttentionResult:
    """Softmax over time, then a weighted sum of whole rows of ``H``."""
    if e.shape != (H.shape[0],):
        raise DimensionError(f"scores {e.shape} do not match {H.shape[0]} encoder steps")
    alpha = nx.softmax(e, axis=0)
    context = nx.matmul(alpha, H)
    T = H.shape[0]
    return AttentionResult(context, nx.reshape(alpha, (T, 1)), nx.reshape(e, (T, 1)))


def fine_from_scores(e: Tensor, H: Tensor) -> AttentionResult:
    """Per-dimension softmax over time; ``context[j] = sum_t alpha[t, j] * H[t, j]``."""
    if e.shape != H.shape:
        raise DimensionError(f"fine-grained scores {e.shape} must match encoder states {H.shape}")
    alpha = nx.softmax(e, axis=0)
    return AttentionResult(nx.sum(nx.mul(alpha, H), axis=0), alpha, e)


def attend_basic(scorer: AttentionScorerParams, H: Tensor, d_prev: Tensor) -> AttentionResult:
    return basic_from_scores(score_basic(scorer, H, d_prev), H)


def attend_fine(scorer: AttentionScorerParams, H: Tensor, d_prev: Tensor) -> AttentionResult:
    if scorer.arity != H.shape[-1]:
        raise ConfigError(
            f"fine-grained scorer emits {scorer.arity} scores but encoder states have {H.shape[-1]} dims"
        )
    return fine_from_scores(score(scorer, H, d_prev), H)


def write_attention_csv(result: AttentionResult, path: str | PathLike) -> None:
    """One row per encoder step, one column per scored dimension."""
    weights = result.weights.data
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"dim_{j}" for j in range(weights.shape[1])])
        for t, row in enumerate(weights):
            w.writerow([t] + [repr(float(v)) for v in row])


def read_attention_csv(path: str | PathLike) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return np.array([[float(v) for v in r[1:]] for r in rows[1:]])
