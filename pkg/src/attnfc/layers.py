"""Recurrent and feed-forward building blocks.

All layers are plain functions over parameter records; parameters are
:class:`~attnfc.numerics.Tensor` leaves so gradients flow into them.
"""
from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Iterator, NamedTuple, Sequence

import numpy as np
from scipy.special import expit

from . import _kernels
from . import numerics as nx
from .errors import ConfigError, ContractError, DimensionError, NonFiniteError
from .numerics import Tensor

GATES = ("f", "i", "c", "o")


def _param(array) -> Tensor:
    return Tensor(array, requires_grad=True)


class _Params:
    """Mixin giving parameter records a stable ``name -> Tensor`` listing."""

    def named_tensors(self) -> Iterator[tuple[str, Tensor]]:
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, Tensor):
                yield f.name, value


@dataclass
class LstmCellParams(_Params):
    """Gate weights act on ``concat(h_prev, x)``, hence shape ``m x (m + n)``."""

    w_f: Tensor
    w_i: Tensor
    w_c: Tensor
    w_o: Tensor
    b_f: Tensor
    b_i: Tensor
    b_c: Tensor
    b_o: Tensor

    @property
    def hidden_size(self) -> int:
        return self.w_f.shape[0]

    @property
    def input_size(self) -> int:
        return self.w_f.shape[1] - self.w_f.shape[0]

    def validate(self) -> None:
        m = self.hidden_size
        for g in GATES:
            w, b = getattr(self, f"w_{g}"), getattr(self, f"b_{g}")
            if w.shape != self.w_f.shape:
                raise DimensionError(f"gate {g}: weight {w.shape} differs from {self.w_f.shape}")
            if b.shape != (m,):
                raise DimensionError(f"gate {g}: bias {b.shape}, expected ({m},)")


class LstmState(NamedTuple):
    h: Tensor
    c: Tensor


class LstmGates(NamedTuple):
    forget: Tensor
    input: Tensor
    candidate: Tensor
    output: Tensor
    state: LstmState


@dataclass
class Time2VecParams(_Params):
    alpha: Tensor
    beta: Tensor

    @property
    def l(self) -> int:  # noqa: E743
        return self.alpha.shape[0] - 1


@dataclass
class DenseParams(_Params):
    """``bias`` may be ``None`` for a purely linear map."""

    weight: Tensor
    bias: Tensor | None

    @property
    def in_features(self) -> int:
        return self.weight.shape[1]

    @property
    def out_features(self) -> int:
        return self.weight.shape[0]


@dataclass
class LayerNormParams(_Params):
    gain: Tensor
    offset: Tensor
    epsilon: float = 1e-5


# ---------------------------------------------------------------------------
# initialization


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_lstm(input_size: int, hidden_size: int, rng: np.random.Generator) -> LstmCellParams:
    fan_in = input_size + hidden_size
    shape = (hidden_size, fan_in)
    weights = {f"w_{g}": _param(_uniform(rng, shape, fan_in)) for g in GATES}
    biases = {f"b_{g}": _param(_uniform(rng, hidden_size, fan_in)) for g in GATES}
    return LstmCellParams(**weights, **biases)


def zero_lstm(input_size: int, hidden_size: int) -> LstmCellParams:
    shape = (hidden_size, input_size + hidden_size)
    return LstmCellParams(
        **{f"w_{g}": _param(np.zeros(shape)) for g in GATES},
        **{f"b_{g}": _param(np.zeros(hidden_size)) for g in GATES},
    )


def init_dense(
    in_features: int, out_features: int, rng: np.random.Generator, bias: bool = True
) -> DenseParams:
    weight = _param(_uniform(rng, (out_features, in_features), in_features))
    if not bias:
        return DenseParams(weight, None)
    return DenseParams(weight, _param(_uniform(rng, out_features, in_features)))


def init_time2vec(l: int, rng: np.random.Generator, time_scale: float = 1.0) -> Time2VecParams:  # noqa: E741
    """Frequencies are drawn for time measured in units of ``time_scale``."""
    if l < 0:
        raise ConfigError(f"time2vec size l must be >= 0, got {l}")
    return Time2VecParams(
        _param(rng.uniform(-1.0, 1.0, l + 1) / time_scale),
        _param(rng.uniform(-1.0, 1.0, l + 1)),
    )


def init_layer_norm(size: int, epsilon: float = 1e-5) -> LayerNormParams:
    return LayerNormParams(_param(np.ones(size)), _param(np.zeros(size)), epsilon)


def initial_state(hidden_size: int) -> LstmState:
    return LstmState(Tensor(np.zeros(hidden_size)), Tensor(np.zeros(hidden_size)))


# ---------------------------------------------------------------------------
# LSTM


def lstm_gates(params: LstmCellParams, state: LstmState, x: Tensor) -> LstmGates:
    """One LSTM step, returning the gate activations alongside the new state."""
    m, n = params.hidden_size, params.input_size
    if x.shape != (n,):
        raise DimensionError(f"lstm input has shape {x.shape}, gates expect ({n},)")
    if state.h.shape != (m,) or state.c.shape != (m,):
        raise DimensionError(f"lstm state shapes {state.h.shape}/{state.c.shape}, gates expect ({m},)")
    hx = nx.concat([state.h, x])
    f = nx.sigmoid(nx.affine(hx, params.w_f, params.b_f))
    i = nx.sigmoid(nx.affine(hx, params.w_i, params.b_i))
    c_tilde = nx.tanh(nx.affine(hx, params.w_c, params.b_c))
    c = nx.add(nx.mul(f, state.c), nx.mul(i, c_tilde))
    o = nx.sigmoid(nx.affine(hx, params.w_o, params.b_o))
    h = nx.mul(o, nx.tanh(c))
    return LstmGates(f, i, c_tilde, o, LstmState(h, c))


def _run_cells(params: LstmCellParams, h0: Tensor, c0: Tensor, xs: Tensor) -> Tensor:
    """One tape node covering ``T`` steps; output ``[t, 0]`` is ``h_t``, ``[t, 1]`` is ``c_t``.

    Same arithmetic as :func:`lstm_gates`, evaluated by compiled loops.
    """
    if not np.isfinite(xs.data.sum() + h0.data.sum() + c0.data.sum()):
        raise NonFiniteError("lstm: non-finite input or state")
    weights = (params.w_f, params.w_i, params.w_c, params.w_o)
    biases = (params.b_f, params.b_i, params.b_c, params.b_o)
    m = h0.shape[0]
    try:
        w4 = np.concatenate([w.data for w in weights])
        b4 = np.concatenate([b.data for b in biases])
    except ValueError:
        params.validate()
        raise
    if w4.shape != (4 * m, m + xs.shape[1]) or b4.shape != (4 * m,):
        params.validate()
        raise DimensionError(f"lstm: stacked gate weights {w4.shape} do not fit state size {m}")
    out, hxs, acts, tcs = _kernels.lstm_forward(w4, b4, h0.data, c0.data, np.ascontiguousarray(xs.data))

    def _back(grad):
        dxs, dh, dc, dw4, db4 = _kernels.lstm_backward(
            w4, c0.data, out, hxs, acts, tcs, np.ascontiguousarray(grad)
        )
        nx._accumulate(xs, dxs)
        nx._accumulate(h0, dh)
        nx._accumulate(c0, dc)
        for k, (w, b) in enumerate(zip(weights, biases)):
            nx._accumulate(w, dw4[k * m : (k + 1) * m])
            nx._accumulate(b, db4[k * m : (k + 1) * m])

    return Tensor._from_op(out, (xs, h0, c0, *weights, *biases), _back, "lstm")


def _check_lstm_shapes(params: LstmCellParams, state: LstmState, n_in: int) -> None:
    m, n = params.hidden_size, params.input_size
    if n_in != n:
        raise DimensionError(f"lstm input has {n_in} features, gates expect {n}")
    if state.h.shape != (m,) or state.c.shape != (m,):
        raise DimensionError(f"lstm state shapes {state.h.shape}/{state.c.shape}, gates expect ({m},)")


def lstm_cell_step(params: LstmCellParams, state: LstmState, x: Tensor) -> LstmState:
    """``h, c`` after one step of the standard forget/input/output-gated cell."""
    if x.data.ndim != 1:
        raise DimensionError(f"lstm step input must be a vector, got shape {x.shape}")
    _check_lstm_shapes(params, state, x.shape[0])
    hc = _run_cells(params, state.h, state.c, nx.reshape(x, (1, x.shape[0])))
    return LstmState(hc[0, 0], hc[0, 1])


def lstm_sequence(
    params: LstmCellParams, initial: LstmState, xs: Tensor | Sequence[Tensor], final: bool = True
) -> tuple[Tensor, LstmState | None]:
    """Run the cell over ``xs``; returns the stacked hidden states ``T x m`` and the last state.

    With ``final=False`` the last state is skipped (returned as None).
    """
    if not isinstance(xs, Tensor):
        xs = list(xs)
        if not xs:
            raise ContractError("lstm_sequence needs at least one input step")
        xs = nx.stack(xs)
    if xs.data.ndim != 2:
        raise DimensionError(f"expected a T x n sequence, got shape {xs.shape}")
    if xs.shape[0] == 0:
        raise ContractError("lstm_sequence needs at least one input step")
    _check_lstm_shapes(params, initial, xs.shape[1])
    hc = _run_cells(params, initial.h, initial.c, xs)
    if not final:
        return hc[:, 0], None
    return hc[:, 0], LstmState(hc[-1, 0], hc[-1, 1])


# ---------------------------------------------------------------------------
# Time2Vec


def time2vec(params: Time2VecParams, t: float) -> Tensor:
    """Element 0 is ``alpha_0 t + beta_0``; the rest pass through ReLU."""
    t = float(t)
    if not np.isfinite(t):
        raise ContractError(f"time2vec: time must be finite, got {t}")
    lin = nx.add(nx.scale(params.alpha, t), params.beta)
    if params.l == 0:
        return lin
    return nx.concat([lin[0:1], nx.relu(lin[1:])])


def time2vec_sequence(params: Time2VecParams, ts) -> Tensor:
    """Row ``k`` equals ``time2vec(params, ts[k])``."""
    ts = np.asarray(ts, dtype=np.float64).reshape(-1, 1)
    if not np.isfinite(ts).all():
        raise ContractError("time2vec: times must be finite")
    size = params.alpha.shape[0]
    lin = nx.affine(Tensor(ts), nx.reshape(params.alpha, (size, 1)), params.beta)
    linear = np.zeros(size, dtype=bool)
    linear[0] = True
    return nx.relu(lin, keep=linear)


# ---------------------------------------------------------------------------
# feed-forward pieces


def dense_forward(params: DenseParams, x: Tensor) -> Tensor:
    if x.shape[-1] != params.in_features:
        raise DimensionError(
            f"dense layer expects {params.in_features} inputs, got shape {x.shape}"
        )
    bias = params.bias if params.bias is not None else Tensor(np.zeros(params.out_features))
    return nx.affine(x, params.weight, bias)


def dropout_forward(rate: float, x: Tensor, mode: str, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout: survivors are rescaled so evaluation is the identity."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if mode not in ("train", "eval"):
        raise ConfigError(f"mode must be 'train' or 'eval', got {mode!r}")
    if mode == "eval" or rate == 0.0:
        return x
    if rng is None:
        raise ConfigError("train-mode dropout needs an explicit rng")
    keep = rng.random(x.shape) >= rate
    return nx.mul(x, Tensor(keep / (1.0 - rate)))


def layer_norm_forward(params: LayerNormParams, x: Tensor) -> Tensor:
    """Normalize over the feature (last) axis, then apply gain and offset."""
    if x.shape[-1] < 2:
        raise ContractError(f"layer norm needs at least 2 features, got shape {x.shape}")
    return nx.scale_shift(nx.normalize(x, params.epsilon), params.gain, params.offset)
