"""Synthetic epidemic curves written in the JHU global CSV layout.

Useful when the public archive is out of reach: the files parse exactly
like the real ones, so every pipeline stage can be exercised offline.
"""
from __future__ import annotations

import csv
from datetime import date, timedelta
from os import PathLike
from pathlib import Path

import numpy as np

from .data import JHU_FILES

# (peak size, growth rate, midpoint day, second-wave size, second-wave midpoint)
CURVES = {
    "Italy": (240000.0, 0.11, 68.0, 30000.0, 200.0),
    "Spain": (240000.0, 0.12, 70.0, 220000.0, 195.0),
    "Canada": (110000.0, 0.09, 90.0, 30000.0, 205.0),
    "France": (170000.0, 0.12, 72.0, 150000.0, 205.0),
}


def logistic_cases(days: np.ndarray, size: float, rate: float, mid: float) -> np.ndarray:
    return size / (1.0 + np.exp(-rate * (days - mid)))


def country_curves(n_days: int, params, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Cumulative confirmed, recovered and deaths with multiplicative reporting noise."""
    size, rate, mid, size2, mid2 = params
    days = np.arange(n_days, dtype=np.float64)
    smooth = logistic_cases(days, size, rate, mid) + logistic_cases(days, size2, 0.07, mid2)
    daily = np.diff(smooth, prepend=0.0) * rng.lognormal(0.0, 0.15, n_days)
    confirmed = np.floor(np.cumsum(daily))
    recovered = np.floor(np.concatenate([np.zeros(14), 0.8 * confirmed[:-14]]))
    deaths = np.floor(0.08 * np.concatenate([np.zeros(7), confirmed[:-7]]))
    return {"confirmed": confirmed, "recovered": recovered, "deaths": deaths}


def write_jhu_fixture(
    directory: str | PathLike,
    start: date = date(2020, 1, 22),
    end: date = date(2020, 9, 30),
    seed: int = 0,
    curves: dict = CURVES,
    provinces: dict[str, int] | None = None,
) -> Path:
    """Write the three global CSVs for ``curves``; ``provinces`` splits a
    country over several rows (Canada is split in three by default)."""
    provinces = {"Canada": 3} if provinces is None else provinces
    rng = np.random.default_rng(seed)
    n = (end - start).days + 1
    dates = [start + timedelta(days=k) for k in range(n)]
    header = ["Province/State", "Country/Region", "Lat", "Long"]
    header += [f"{d.month}/{d.day}/{d.year % 100}" for d in dates]
    series = {c: country_curves(n, p, rng) for c, p in curves.items()}
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    for feature, fname in JHU_FILES.items():
        with open(out / fname, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for country, chans in series.items():
                total = chans[feature]
                k = provinces.get(country, 1)
                if k == 1:
                    w.writerow(["", country, "0.0", "0.0", *(str(int(v)) for v in total)])
                    continue
                share = np.floor(total / k)
                parts = [share] * (k - 1) + [total - share * (k - 1)]
                for j, part in enumerate(parts):
                    w.writerow([f"Province {j + 1}", country, "0.0", "0.0", *(str(int(v)) for v in part)])
    return out
