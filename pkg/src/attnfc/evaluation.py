"""Error metrics, test-split and recursive-horizon scoring, report rendering."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from datetime import date
from os import PathLike
from typing import Sequence

import numpy as np

from . import numerics as nx
from .data import PreparedSeries, WindowedDataset, inverse, ScalerParams
from .errors import ContractError, MetricError
from .model import AttentionLstmModel, ForecastPath, forecast_recursive, predict_one

DEFAULT_HORIZONS = (2, 4, 6, 8, 10, 12, 14)
TEST = "Test"


def _pair(y, y_hat) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    y_hat = np.asarray(y_hat, dtype=np.float64).reshape(-1)
    if y.shape != y_hat.shape:
        raise MetricError(f"length mismatch: {y.size} actuals vs {y_hat.size} predictions")
    if y.size == 0:
        raise MetricError("metrics need at least one point")
    return y, y_hat


def rmse(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    return math.sqrt(float(np.mean((y - y_hat) ** 2)))


def mape(y, y_hat) -> float:
    """Mean absolute percentage error, in percent."""
    y, y_hat = _pair(y, y_hat)
    zeros = np.flatnonzero(y == 0)
    if zeros.size:
        raise MetricError(f"MAPE undefined: actual value is zero at index {int(zeros[0])}")
    return float(np.mean(100.0 * np.abs(y - y_hat) / np.abs(y)))


@dataclass(frozen=True)
class Score:
    rmse: float
    mape: float


def score(y, y_hat) -> Score:
    return Score(rmse(y, y_hat), mape(y, y_hat))


@dataclass(frozen=True)
class HorizonSpec:
    horizons: tuple[int, ...] = DEFAULT_HORIZONS
    include_test: bool = True

    def __post_init__(self):
        hs = tuple(int(h) for h in self.horizons)
        object.__setattr__(self, "horizons", hs)
        if any(h < 1 for h in hs):
            raise ContractError(f"horizons must be positive, got {hs}")
        if any(b <= a for a, b in zip(hs, hs[1:])):
            raise ContractError(f"horizons must be strictly increasing, got {hs}")

    @property
    def columns(self) -> list[str]:
        return ([TEST] if self.include_test else []) + [str(h) for h in self.horizons]


# ---------------------------------------------------------------------------
# scoring a model


def predict_dataset(model: AttentionLstmModel, dataset: WindowedDataset) -> np.ndarray:
    """Eval-mode one-step predictions in scaled space."""
    out = np.empty(len(dataset))
    with nx.no_grad():
        for k in range(len(dataset)):
            y, _ = predict_one(model, dataset.inputs[k], dataset.time_indices[k], "eval")
            out[k] = y.item()
    return out


def evaluate_test(
    model: AttentionLstmModel, test_set: WindowedDataset, scaler: ScalerParams, target_index: int = 0
) -> Score:
    """One-step-ahead scores over the whole test split, in case counts."""
    if len(test_set) == 0:
        raise ContractError("test set is empty")
    pred = inverse(scaler, predict_dataset(model, test_set), target_index)
    actual = inverse(scaler, test_set.targets, target_index)
    return score(actual, pred)


@dataclass
class HorizonForecast:
    dates: list[date]
    actual: np.ndarray
    predicted: np.ndarray
    path: ForecastPath

    @property
    def score(self) -> Score:
        return score(self.actual, self.predicted)


def forecast_from_boundary(model: AttentionLstmModel, prepared: PreparedSeries, horizon: int) -> HorizonForecast:
    """Forecast ``horizon`` days past the last train/validation target.

    The seed window holds only rows up to that boundary; the held-out
    actuals are read afterwards, for scoring.
    """
    if horizon < 1:
        raise ContractError(f"horizon must be >= 1, got {horizon}")
    b = prepared.boundary
    n = len(prepared.scaled)
    available = n - 1 - b
    if available < horizon:
        raise ContractError(
            f"horizon {horizon} needs {horizon} held-out days after row {b}, only {available} available "
            f"(series length must be >= {b + 1 + horizon})"
        )
    L = prepared.lookback
    seed = prepared.scaled[b - L + 1 : b + 1].copy()
    path = forecast_recursive(model, seed, np.arange(b - L + 1, b + 1), horizon)
    t = prepared.target_index
    rows = slice(b + 1, b + 1 + horizon)
    return HorizonForecast(
        prepared.dates[rows],
        prepared.raw[rows, t].copy(),
        inverse(prepared.scaler, path.predictions, t),
        path,
    )


def evaluate_horizon(model: AttentionLstmModel, prepared: PreparedSeries, horizon: int) -> Score:
    return forecast_from_boundary(model, prepared, horizon).score


# ---------------------------------------------------------------------------
# reports


@dataclass
class MetricsReport:
    """Scores keyed by (country, model), one entry per column label."""

    columns: list[str]
    rows: dict[tuple[str, str], dict[str, Score | None]] = field(default_factory=dict)
    errors: dict[tuple[str, str], str] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def add(self, country: str, model: str, column: str, s: Score | None) -> None:
        if column not in self.columns:
            raise ContractError(f"unknown report column {column!r}")
        if s is not None and (s.rmse < 0 or s.mape < 0):
            raise MetricError("metrics must be nonnegative")
        self.rows.setdefault((country, model), {c: None for c in self.columns})[column] = s

    def fail(self, country: str, model: str, message: str) -> None:
        self.rows.setdefault((country, model), {c: None for c in self.columns})
        self.errors[(country, model)] = message

    def get(self, country: str, model: str, column: str) -> Score | None:
        return self.rows.get((country, model), {}).get(column)

    def merge(self, other: MetricsReport) -> None:
        if other.columns != self.columns:
            raise ContractError("cannot merge reports with different columns")
        self.rows.update(other.rows)
        self.errors.update(other.errors)


def _fmt(value: float | None, full: bool) -> str:
    if value is None:
        return ""
    return repr(value) if full else f"{value:.2f}"


def render_report(report: MetricsReport, format: str = "markdown") -> str:
    """Markdown (2-decimal display) or CSV (full precision) table."""
    if not report.rows:
        raise ContractError("nothing to render")
    keys = sorted(report.rows)
    if format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["country", "model"] + [f"{c}_{m}" for c in report.columns for m in ("rmse", "mape")])
        for key in keys:
            cells = []
            for c in report.columns:
                s = report.rows[key][c]
                cells += [_fmt(s and s.rmse, True), _fmt(s and s.mape, True)]
            w.writerow([*key, *cells])
        return buf.getvalue()
    if format != "markdown":
        raise ContractError(f"unknown report format {format!r}")
    steps = " | ".join(f"{c} RMSE | {c} MAPE" for c in report.columns)
    lines = [
        f"| Country | Model | {steps} |",
        "|" + "---|" * (2 + 2 * len(report.columns)),
    ]
    for key in keys:
        cells = []
        for c in report.columns:
            s = report.rows[key][c]
            cells += [_fmt(s and s.rmse, False), _fmt(s and s.mape, False)]
        lines.append(f"| {key[0]} | {key[1]} | " + " | ".join(cells) + " |")
    for key in keys:
        if key in report.errors:
            lines.append(f"\n{key[0]} / {key[1]}: {report.errors[key]}")
    if report.metadata:
        lines.append("")
        lines += [f"- {k}: {v}" for k, v in sorted(report.metadata.items())]
    return "\n".join(lines) + "\n"


def parse_report_csv(text: str) -> dict[tuple[str, str], dict[str, Score | None]]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    columns = [h[: -len("_rmse")] for h in header[2::2]]
    out = {}
    for row in reader:
        entry = {}
        for k, c in enumerate(columns):
            r, m = row[2 + 2 * k], row[3 + 2 * k]
            entry[c] = Score(float(r), float(m)) if r else None
        out[(row[0], row[1])] = entry
    return out


def emit_plot_series(dates: Sequence, actuals, forecasts, path: str | PathLike) -> None:
    """Long-format ``date,actual,predicted`` CSV at full float precision."""
    a = np.asarray(actuals, dtype=np.float64).reshape(-1)
    f = np.asarray(forecasts, dtype=np.float64).reshape(-1)
    if not len(dates) == a.size == f.size:
        raise ContractError(f"misaligned plot series: {len(dates)} dates, {a.size} actuals, {f.size} forecasts")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "actual", "predicted"])
        for d, x, y in zip(dates, a, f):
            w.writerow([d.isoformat() if hasattr(d, "isoformat") else d, repr(float(x)), repr(float(y))])


def read_plot_series(path: str | PathLike) -> tuple[list[str], np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    return [r[0] for r in rows], np.array([float(r[1]) for r in rows]), np.array([float(r[2]) for r in rows])


def write_trace_csv(path_obj: ForecastPath, path: str | PathLike) -> int:
    """Attention weights of a recursive forecast as ``step,t,dim,weight`` rows.

    Returns the number of weight rows written (horizon x lookback x dims).
    """
    count = 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "t", "dim", "weight"])
        for step, trace in enumerate(path_obj.attention_traces, start=1):
            if trace is None:
                continue
            weights = trace.weights.data
            for t in range(weights.shape[0]):
                for j in range(weights.shape[1]):
                    w.writerow([step, t, j, repr(float(weights[t, j]))])
                    count += 1
    return count


def persistence_ramp_rmse(slope: float, horizon: int) -> float:
    """RMSE of a last-value forecast on a linear ramp: errors are ``slope * k``, k = 1..h."""
    h = horizon
    return abs(slope) * math.sqrt((h + 1) * (2 * h + 1) / 6.0)
