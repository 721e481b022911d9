"""JHU CSSE ingestion, descriptive statistics, scaling, windowing and splits.

The JHU global time-series files are wide tables: four identifying columns
(``Province/State, Country/Region, Lat, Long``) followed by one cumulative
count column per day, headed ``M/D/YY``. Countries reported by province
(Canada, and overseas territories for France) span several rows.
"""
from __future__ import annotations

import csv
import logging
import os
import urllib.request
import warnings
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from os import PathLike
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ContractError, IngestionError

log = logging.getLogger(__name__)

FEATURES = ("confirmed", "recovered", "deaths")
JHU_FILES = {f: f"time_series_covid19_{f}_global.csv" for f in FEATURES}
JHU_BASE_URL = (
    "https://raw.githubusercontent.com/CSSEGISandData/COVID-19/master/"
    "csse_covid_19_data/csse_covid_19_time_series/"
)
ID_COLUMNS = ("Province/State", "Country/Region", "Lat", "Long")

MODEL_WINDOW = (date(2020, 2, 21), date(2020, 9, 12))
# 209 days; the period whose confirmed-case moments appear in the reference table.
STATS_WINDOW = (date(2020, 1, 22), date(2020, 8, 17))
COUNTRIES = ("Italy", "Spain", "Canada", "France")


class DataWarning(UserWarning):
    """Suspicious but tolerated upstream data (revisions, missing channels)."""


# ---------------------------------------------------------------------------
# raw JHU tables


@dataclass
class JhuRow:
    province: str
    country: str
    values: np.ndarray


@dataclass
class JhuTable:
    dates: list[date]
    rows: list[JhuRow]
    source: str = "<memory>"

    @property
    def countries(self) -> list[str]:
        return sorted({r.country for r in self.rows})


def _parse_date(text: str, column: int, source: str) -> date:
    try:
        return datetime.strptime(text.strip(), "%m/%d/%y").date()
    except ValueError:
        raise IngestionError(
            f"{source}: column {column + 1} header {text!r} is not a M/D/YY date"
        ) from None


def parse_jhu_csv(file: str | PathLike | Iterable[str]) -> JhuTable:
    """Read one JHU global time-series CSV.

    ``file`` is a path or an iterable of text lines. Errors carry the
    1-based line and column of the offending cell.
    """
    if isinstance(file, (str, PathLike)):
        source = str(file)
        try:
            with open(file, newline="", encoding="utf-8-sig") as fh:
                return _parse_lines(fh, source)
        except FileNotFoundError:
            raise IngestionError(f"{source}: file not found") from None
    return _parse_lines(file, "<stream>")


def _parse_lines(lines: Iterable[str], source: str) -> JhuTable:
    reader = csv.reader(lines)
    header = next(reader, None)
    if not header:
        raise IngestionError(f"{source}: missing header row")
    ids = tuple(h.strip() for h in header[:4])
    if ids[:3] != ID_COLUMNS[:3] or ids[3] not in ("Long", "Long_"):
        raise IngestionError(f"{source}: header must start with {','.join(ID_COLUMNS)}, got {','.join(ids)}")
    dates = [_parse_date(h, k + 4, source) for k, h in enumerate(header[4:])]
    if not dates:
        raise IngestionError(f"{source}: no date columns")
    for k in range(1, len(dates)):
        if dates[k] - dates[k - 1] != timedelta(days=1):
            raise IngestionError(
                f"{source}: date columns not consecutive at column {k + 5} ({dates[k - 1]} -> {dates[k]})"
            )
    rows = []
    for line_no, rec in enumerate(reader, start=2):
        if not rec or all(not c.strip() for c in rec):
            continue
        if len(rec) != len(header):
            raise IngestionError(f"{source}: line {line_no} has {len(rec)} cells, header has {len(header)}")
        values = np.empty(len(dates))
        for k, cell in enumerate(rec[4:]):
            try:
                values[k] = float(cell)
            except ValueError:
                raise IngestionError(
                    f"{source}: line {line_no}, column {k + 5} ({header[k + 4]}): non-numeric value {cell!r}"
                ) from None
            if not np.isfinite(values[k]):
                raise IngestionError(f"{source}: line {line_no}, column {k + 5}: non-finite value {cell!r}")
        rows.append(JhuRow(rec[0].strip(), rec[1].strip(), values))
    return JhuTable(dates, rows, source)


@dataclass
class CountrySeries:
    country: str
    dates: list[date]
    values: np.ndarray


def aggregate_country(table: JhuTable, country: str) -> CountrySeries:
    """Per-date sum over every province row of ``country``."""
    rows = [r for r in table.rows if r.country == country]
    if not rows:
        raise IngestionError(
            f"{table.source}: unknown country {country!r}; available: {', '.join(table.countries)}"
        )
    total = np.zeros(len(table.dates))
    for r in rows:
        total = total + r.values
    return CountrySeries(country, list(table.dates), total)


def decreasing_indices(values: np.ndarray) -> list[int]:
    return [int(i) + 1 for i in np.flatnonzero(np.diff(values) < 0)]


# ---------------------------------------------------------------------------
# per-country feature series


@dataclass
class RawSeries:
    country: str
    dates: list[date]
    confirmed: np.ndarray
    recovered: np.ndarray
    deaths: np.ndarray

    def __post_init__(self):
        n = len(self.dates)
        for name in FEATURES:
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            setattr(self, name, arr)
            if arr.shape != (n,):
                raise ContractError(f"{self.country}: {name} has {arr.shape[0]} values for {n} dates")
            if (arr < 0).any():
                raise ContractError(f"{self.country}: negative {name} counts")
        for k in range(1, n):
            if self.dates[k] - self.dates[k - 1] != timedelta(days=1):
                raise ContractError(f"{self.country}: dates not daily at {self.dates[k]}")

    def __len__(self) -> int:
        return len(self.dates)

    @property
    def matrix(self) -> np.ndarray:
        """``N x 3`` array in :data:`FEATURES` order."""
        return np.column_stack([self.confirmed, self.recovered, self.deaths])


def _window_slice(dates: Sequence[date], start: date, end: date, source: str) -> slice:
    if start > end:
        raise ContractError(f"empty date window {start}..{end}")
    if start < dates[0] or end > dates[-1]:
        raise IngestionError(f"{source}: window {start}..{end} outside available {dates[0]}..{dates[-1]}")
    return slice(dates.index(start), dates.index(end) + 1)


def build_raw_series(
    tables: dict[str, JhuTable],
    country: str,
    start: date = MODEL_WINDOW[0],
    end: date = MODEL_WINDOW[1],
) -> RawSeries:
    """Country totals for each feature channel, restricted to ``start..end``."""
    confirmed = aggregate_country(tables["confirmed"], country)
    sl = _window_slice(confirmed.dates, start, end, tables["confirmed"].source)
    dates = confirmed.dates[sl]
    channels = {"confirmed": confirmed.values[sl]}
    for name in ("recovered", "deaths"):
        table = tables.get(name)
        values = None
        if table is not None and country in {r.country for r in table.rows}:
            agg = aggregate_country(table, country)
            values = agg.values[_window_slice(agg.dates, start, end, table.source)]
        if values is None or not values.any():
            if name == "deaths":
                raise IngestionError(f"{country}: no deaths data in window {start}..{end}")
            warnings.warn(f"{country}: {name} series missing or all zero; substituting zeros", DataWarning)
            values = np.zeros(len(dates))
        channels[name] = values
    for name, values in channels.items():
        bad = decreasing_indices(values)
        if bad:
            warnings.warn(
                f"{country}: {name} decreases at indices {bad} (upstream revisions)", DataWarning
            )
    return RawSeries(country, dates, **channels)


def load_jhu_tables(data_dir: str | PathLike) -> dict[str, JhuTable]:
    data_dir = Path(data_dir)
    return {name: parse_jhu_csv(data_dir / fname) for name, fname in JHU_FILES.items()}


def fetch_jhu(dest_dir: str | PathLike, base_url: str = JHU_BASE_URL, timeout: float = 30.0) -> Path:
    """Download the three global time-series files into ``dest_dir``."""
    dest = Path(dest_dir)
    dest.mkdir(parents=True, exist_ok=True)
    for fname in JHU_FILES.values():
        target = dest / fname
        tmp = target.with_suffix(".part")
        log.info("fetching %s", base_url + fname)
        with urllib.request.urlopen(base_url + fname, timeout=timeout) as resp:
            tmp.write_bytes(resp.read())
        os.replace(tmp, target)
    return dest


def write_series_csv(series: RawSeries, path: str | PathLike) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", *FEATURES])
        for k, d in enumerate(series.dates):
            w.writerow([d.isoformat(), *(repr(float(getattr(series, f)[k])) for f in FEATURES)])


def read_series_csv(path: str | PathLike, country: str) -> RawSeries:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["date", *FEATURES]:
            raise IngestionError(f"{path}: expected header date,{','.join(FEATURES)}")
        rows = list(reader)
    try:
        dates = [date.fromisoformat(r["date"]) for r in rows]
        cols = {f: np.array([float(r[f]) for r in rows]) for f in FEATURES}
    except ValueError as exc:
        raise IngestionError(f"{path}: {exc}") from None
    return RawSeries(country, dates, **cols)


# ---------------------------------------------------------------------------
# descriptive statistics


@dataclass(frozen=True)
class DescriptiveStats:
    mean: float
    std: float
    min: float
    max: float
    skewness: float
    kurtosis: float

    def as_dict(self) -> dict[str, float]:
        return dict(self.__dict__)


STATS_COLUMNS = ("mean", "std", "min", "max", "skewness", "kurtosis")


def descriptive_stats(series) -> DescriptiveStats:
    """Population moments; kurtosis is excess (Fisher) kurtosis."""
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1 or x.size < 2:
        raise ContractError(f"descriptive statistics need a 1-D series of length >= 2, got {x.shape}")
    mu = x.mean()
    d = x - mu
    m2 = np.mean(d**2)
    if m2 == 0.0:
        raise ContractError("constant series: skewness and kurtosis are undefined")
    m3 = np.mean(d**3)
    m4 = np.mean(d**4)
    return DescriptiveStats(
        mean=float(mu),
        std=float(np.sqrt(m2)),
        min=float(x.min()),
        max=float(x.max()),
        skewness=float(m3 / m2**1.5),
        kurtosis=float(m4 / m2**2 - 3.0),
    )


def write_stats_csv(stats: dict[str, DescriptiveStats], path: str | PathLike) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["country", *STATS_COLUMNS])
        for country, s in stats.items():
            w.writerow([country, *(repr(getattr(s, c)) for c in STATS_COLUMNS)])


# ---------------------------------------------------------------------------
# scaling


@dataclass
class ScalerParams:
    """Per-feature affine map of ``[data_min, data_max]`` onto ``[-1, 1]``."""

    data_min: np.ndarray
    data_max: np.ndarray

    def __post_init__(self):
        self.data_min = np.atleast_1d(np.asarray(self.data_min, dtype=np.float64))
        self.data_max = np.atleast_1d(np.asarray(self.data_max, dtype=np.float64))
        if (self.data_max < self.data_min).any():
            raise ContractError("scaler max must be >= min for every feature")

    @property
    def span(self) -> np.ndarray:
        return self.data_max - self.data_min


def fit_scaler(train, allow_constant: bool = False) -> ScalerParams:
    """Fit on training rows only. Constant features are an error unless
    ``allow_constant``, in which case they get a unit span."""
    x = np.asarray(train, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] == 0:
        raise ContractError("cannot fit a scaler on zero rows")
    lo, hi = x.min(axis=0), x.max(axis=0)
    flat = hi == lo
    if flat.any():
        if not allow_constant:
            raise ContractError(f"degenerate feature(s) {np.flatnonzero(flat).tolist()}: max == min")
        hi = np.where(flat, lo + 1.0, hi)
    return ScalerParams(lo, hi)


def scale(params: ScalerParams, x, feature: int | None = None) -> np.ndarray:
    """Affine map to ``[-1, 1]``; values outside the fit range extrapolate."""
    x = np.asarray(x, dtype=np.float64)
    if feature is not None:
        return 2.0 * (x - params.data_min[feature]) / params.span[feature] - 1.0
    return 2.0 * (x - params.data_min) / params.span - 1.0


def inverse(params: ScalerParams, y, feature: int | None = None) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if feature is not None:
        return (y + 1.0) / 2.0 * params.span[feature] + params.data_min[feature]
    return (y + 1.0) / 2.0 * params.span + params.data_min


# ---------------------------------------------------------------------------
# windows and splits


@dataclass
class WindowedDataset:
    """Supervised pairs: ``inputs[i]`` covers rows ``[i, i + lookback)`` and
    ``targets[i]`` is the target feature at row ``target_rows[i]``."""

    inputs: np.ndarray  # S x lookback x F
    targets: np.ndarray  # S
    time_indices: np.ndarray  # S x lookback
    target_rows: np.ndarray  # S

    def __post_init__(self):
        s = len(self.targets)
        if not (len(self.inputs) == len(self.time_indices) == len(self.target_rows) == s):
            raise ContractError("inputs, targets and time indices must have equal length")

    def __len__(self) -> int:
        return len(self.targets)

    def subset(self, sl: slice) -> WindowedDataset:
        return WindowedDataset(
            self.inputs[sl], self.targets[sl], self.time_indices[sl], self.target_rows[sl]
        )


def make_windows(series, lookback: int, target_index: int = 0, time_offset: int = 0) -> WindowedDataset:
    x = np.asarray(series, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if lookback < 1:
        raise ContractError(f"lookback must be >= 1, got {lookback}")
    n = x.shape[0]
    if n <= lookback:
        raise ContractError(f"series of length {n} too short: need at least {lookback + 1} rows")
    count = n - lookback
    idx = np.arange(count)[:, None] + np.arange(lookback)[None, :]
    return WindowedDataset(
        inputs=x[idx],
        targets=x[lookback:, target_index].copy(),
        time_indices=idx + time_offset,
        target_rows=np.arange(lookback, n),
    )


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.8
    validation: float = 0.1
    test: float = 0.1

    def __post_init__(self):
        parts = (self.train, self.validation, self.test)
        if any(p <= 0 for p in parts):
            raise ContractError(f"split fractions must be positive, got {parts}")
        if abs(sum(parts) - 1.0) > 1e-9:
            raise ContractError(f"split fractions must sum to 1, got {sum(parts)}")

    def sizes(self, n: int) -> tuple[int, int, int]:
        n_train = int(np.floor(n * self.train + 1e-9))
        n_val = int(np.floor(n * self.validation + 1e-9))
        sizes = (n_train, n_val, n - n_train - n_val)
        if min(sizes) < 1:
            raise ContractError(f"split {self} of {n} samples leaves an empty partition: {sizes}")
        return sizes


def chronological_split(dataset: WindowedDataset, spec: SplitSpec) -> tuple[WindowedDataset, ...]:
    """Contiguous train / validation / test partitions, in time order."""
    n_train, n_val, _ = spec.sizes(len(dataset))
    return (
        dataset.subset(slice(0, n_train)),
        dataset.subset(slice(n_train, n_train + n_val)),
        dataset.subset(slice(n_train + n_val, None)),
    )


@dataclass
class PreparedSeries:
    """Everything the model and evaluation need for one country."""

    country: str
    dates: list[date]
    raw: np.ndarray  # N x F, case counts
    scaled: np.ndarray  # N x F
    scaler: ScalerParams
    train: WindowedDataset
    validation: WindowedDataset
    test: WindowedDataset
    lookback: int
    target_index: int = 0
    metadata: dict = field(default_factory=dict)

    @property
    def boundary(self) -> int:
        """Row index of the last train/validation target."""
        return int(self.validation.target_rows[-1])


def prepare_series(
    raw: RawSeries | np.ndarray,
    lookback: int = 7,
    split: SplitSpec = SplitSpec(),
    country: str | None = None,
    dates: Sequence[date] | None = None,
    target_index: int = 0,
) -> PreparedSeries:
    """Split by sample, fit the scaler on training rows, then window the scaled series."""
    if isinstance(raw, RawSeries):
        matrix, dates, country = raw.matrix, list(raw.dates), raw.country
    else:
        matrix = np.asarray(raw, dtype=np.float64)
        if matrix.ndim == 1:
            matrix = matrix[:, None]
        if dates is None:
            dates = [date(2020, 1, 1) + timedelta(days=k) for k in range(len(matrix))]
    n_samples = len(matrix) - lookback
    if n_samples < 3:
        raise ContractError(f"series of length {len(matrix)} too short for lookback {lookback} and a 3-way split")
    n_train, _, _ = split.sizes(n_samples)
    last_train_row = lookback + n_train - 1
    scaler = fit_scaler(matrix[: last_train_row + 1], allow_constant=True)
    scaled = scale(scaler, matrix)
    windows = make_windows(scaled, lookback, target_index)
    train, val, test = chronological_split(windows, split)
    if not dates[train.target_rows[-1]] < dates[test.target_rows[0]]:
        raise ContractError("training targets must precede test targets")
    return PreparedSeries(
        country or "series", list(dates), matrix, scaled, scaler, train, val, test, lookback, target_index
    )
