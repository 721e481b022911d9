"""``attnfc`` command line: ingest, stats, train, evaluate, forecast.

Every command reads a TOML run configuration (``--config``); flags override
it. Outputs are country-scoped under the output directory::

    out/<country>/series.csv, stats.csv, checkpoint.json, losses.csv,
                  report.md, report.csv, forecast.csv, attention/
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import date, timedelta
from pathlib import Path
from typing import Callable

import numpy as np

from . import data as D
from .data import SplitSpec
from .errors import AttnfcError, ConfigError
from .evaluation import (
    TEST,
    HorizonSpec,
    MetricsReport,
    emit_plot_series,
    evaluate_test,
    forecast_from_boundary,
    render_report,
    write_trace_csv,
)
from .model import ModelConfig, build_model, forecast_recursive
from .training import TrainConfig, load_checkpoint, read_checkpoint, save_checkpoint, train

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("attnfc")

DATA_DIR_ENV = "ATTNFC_DATA_DIR"
TRAINED_MODES = ("attention_lstm", "plain_lstm")
EXIT_OK, EXIT_PARTIAL, EXIT_USAGE = 0, 1, 2


class UsageError(AttnfcError):
    """Bad arguments or missing inputs; exit code 2."""


@dataclass
class RunConfig:
    data_dir: Path | None = None
    data_files: dict[str, Path] = field(default_factory=dict)
    countries: tuple[str, ...] = D.COUNTRIES
    start: date = D.MODEL_WINDOW[0]
    end: date = D.MODEL_WINDOW[1]
    stats_start: date = D.STATS_WINDOW[0]
    stats_end: date = D.STATS_WINDOW[1]
    split: SplitSpec = SplitSpec()
    model: ModelConfig = ModelConfig()
    training: TrainConfig = TrainConfig()
    horizons: HorizonSpec = HorizonSpec()
    traces: bool = True
    out: Path = Path("out")

    def input_paths(self) -> dict[str, Path]:
        paths = {}
        for feature, fname in D.JHU_FILES.items():
            if feature in self.data_files:
                paths[feature] = self.data_files[feature]
            elif self.data_dir is not None:
                paths[feature] = self.data_dir / fname
            else:
                raise UsageError(f"no data directory: pass --data-dir, set [data].dir or ${DATA_DIR_ENV}")
        return paths

    def country_dir(self, country: str) -> Path:
        return self.out / country.replace("/", "_").replace(" ", "_")


def _as_date(value, key: str) -> date:
    if isinstance(value, date):
        return value
    try:
        return date.fromisoformat(str(value))
    except ValueError:
        raise ConfigError(f"{key}: expected an ISO date, got {value!r}") from None


def load_run_config(path: str | os.PathLike | None) -> RunConfig:
    """Parse a TOML run config; ``None`` gives the defaults."""
    doc = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                doc = tomllib.load(fh)
        except FileNotFoundError:
            raise UsageError(f"config file not found: {path}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    known = {"data", "split", "model", "train", "evaluate", "output"}
    if set(doc) - known:
        raise ConfigError(f"unknown config sections: {sorted(set(doc) - known)}")
    cfg = RunConfig()
    data = dict(doc.get("data", {}))
    if "dir" in data:
        cfg.data_dir = Path(data.pop("dir"))
    for feature in D.FEATURES:
        if feature in data:
            cfg.data_files[feature] = Path(data.pop(feature))
    if "countries" in data:
        cfg.countries = tuple(data.pop("countries"))
    for key in ("start", "end", "stats_start", "stats_end"):
        if key in data:
            setattr(cfg, key, _as_date(data.pop(key), f"data.{key}"))
    if data:
        raise ConfigError(f"unknown [data] keys: {sorted(data)}")
    if "split" in doc:
        s = doc["split"]
        cfg.split = SplitSpec(s.get("train", 0.8), s.get("validation", 0.1), s.get("test", 0.1))
    if "model" in doc:
        cfg.model = ModelConfig.from_dict(doc["model"])
    if "train" in doc:
        cfg.training = TrainConfig.from_dict(doc["train"])
    ev = dict(doc.get("evaluate", {}))
    if "horizons" in ev:
        cfg.horizons = HorizonSpec(tuple(ev.pop("horizons")))
    cfg.traces = bool(ev.pop("traces", cfg.traces))
    if ev:
        raise ConfigError(f"unknown [evaluate] keys: {sorted(ev)}")
    if "dir" in doc.get("output", {}):
        cfg.out = Path(doc["output"]["dir"])
    return cfg


def apply_overrides(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    if cfg.data_dir is None and not cfg.data_files and os.environ.get(DATA_DIR_ENV):
        cfg.data_dir = Path(os.environ[DATA_DIR_ENV])
    if getattr(args, "data_dir", None):
        cfg.data_dir = Path(args.data_dir)
    if getattr(args, "country", None):
        cfg.countries = tuple(args.country)
    if getattr(args, "out", None):
        cfg.out = Path(args.out)
    if getattr(args, "seed", None) is not None:
        cfg.training = replace(cfg.training, seed=args.seed)
    if getattr(args, "epochs", None) is not None:
        cfg.training = replace(cfg.training, epochs=args.epochs)
    if not cfg.countries:
        raise UsageError("no countries selected")
    return cfg


# ---------------------------------------------------------------------------
# work items; module-level so a process pool can pickle them


def _load_tables(cfg: RunConfig) -> dict[str, D.JhuTable]:
    paths = cfg.input_paths()
    for p in paths.values():
        if not p.is_file():
            raise UsageError(f"input file not found: {p}")
    return {name: D.parse_jhu_csv(p) for name, p in paths.items()}


def run_ingest(cfg: RunConfig) -> dict[str, D.DescriptiveStats]:
    tables = _load_tables(cfg)
    stats = {}
    for country in cfg.countries:
        series = D.build_raw_series(tables, country, cfg.start, cfg.end)
        cdir = cfg.country_dir(country)
        cdir.mkdir(parents=True, exist_ok=True)
        D.write_series_csv(series, cdir / "series.csv")
        confirmed = D.aggregate_country(tables["confirmed"], country)
        sl = D._window_slice(confirmed.dates, cfg.stats_start, cfg.stats_end, tables["confirmed"].source)
        stats[country] = D.descriptive_stats(confirmed.values[sl])
        D.write_stats_csv({country: stats[country]}, cdir / "stats.csv")
    cfg.out.mkdir(parents=True, exist_ok=True)
    D.write_stats_csv(stats, cfg.out / "stats.csv")
    return stats


def run_stats(cfg: RunConfig) -> dict[str, D.DescriptiveStats]:
    tables = _load_tables(cfg)
    stats = {}
    for country in cfg.countries:
        confirmed = D.aggregate_country(tables["confirmed"], country)
        sl = D._window_slice(confirmed.dates, cfg.stats_start, cfg.stats_end, tables["confirmed"].source)
        stats[country] = D.descriptive_stats(confirmed.values[sl])
    cfg.out.mkdir(parents=True, exist_ok=True)
    D.write_stats_csv(stats, cfg.out / "stats.csv")
    return stats


def prepared_for(cfg: RunConfig, country: str) -> D.PreparedSeries:
    path = cfg.country_dir(country) / "series.csv"
    if not path.is_file():
        raise UsageError(f"{country}: no ingested series at {path}; run `attnfc ingest` first")
    raw = D.read_series_csv(path, country)
    return D.prepare_series(raw, cfg.model.lookback, cfg.split, target_index=cfg.model.target_index)


def checkpoint_name(mode: str) -> str:
    return "checkpoint.json" if mode == "attention_lstm" else f"checkpoint.{mode}.json"


def losses_name(mode: str) -> str:
    return "losses.csv" if mode == "attention_lstm" else f"losses.{mode}.csv"


def train_country(cfg: RunConfig, country: str) -> dict[str, float]:
    prepared = prepared_for(cfg, country)
    cdir = cfg.country_dir(country)
    best = {}
    for mode in TRAINED_MODES:
        mcfg = replace(cfg.model, mode=mode, feature_count=prepared.raw.shape[1])
        model = build_model(mcfg, cfg.training.seed)
        result = train(model, prepared.train, prepared.validation, cfg.training)
        result.history.write_csv(cdir / losses_name(mode))
        meta = {
            "country": country,
            "seed": cfg.training.seed,
            "epochs": cfg.training.epochs,
            "best_epoch": result.history.best_epoch + 1,
            "validation_mse": result.history.best_validation,
            "window": [cfg.start.isoformat(), cfg.end.isoformat()],
            "split": [cfg.split.train, cfg.split.validation, cfg.split.test],
            "scaler_min": prepared.scaler.data_min.tolist(),
            "scaler_max": prepared.scaler.data_max.tolist(),
        }
        save_checkpoint(result.model, cdir / checkpoint_name(mode), meta)
        best[mode] = result.history.best_validation
    return best


def evaluate_country(cfg: RunConfig, country: str) -> MetricsReport:
    report = MetricsReport(cfg.horizons.columns)
    prepared = prepared_for(cfg, country)
    cdir = cfg.country_dir(country)
    models = {"persistence": build_model(replace(cfg.model, mode="persistence", feature_count=prepared.raw.shape[1]))}
    for mode in TRAINED_MODES:
        path = cdir / checkpoint_name(mode)
        try:
            models[mode] = load_checkpoint(path)
        except AttnfcError as exc:
            report.fail(country, mode, str(exc))
    for mode, model in models.items():
        t = prepared.target_index
        if cfg.horizons.include_test:
            report.add(country, mode, TEST, evaluate_test(model, prepared.test, prepared.scaler, t))
        for h in cfg.horizons.horizons:
            fc = forecast_from_boundary(model, prepared, h)
            report.add(country, mode, str(h), fc.score)
            if mode == "attention_lstm" and cfg.traces:
                adir = cdir / "attention"
                adir.mkdir(exist_ok=True)
                write_trace_csv(fc.path, adir / f"horizon_{h}.csv")
                emit_plot_series(fc.dates, fc.actual, fc.predicted, adir / f"series_{h}.csv")
    (cdir / "report.md").write_text(render_report(report, "markdown"))
    (cdir / "report.csv").write_text(render_report(report, "csv"))
    return report


def forecast_country(cfg: RunConfig, country: str, horizon: int) -> Path:
    """Forecast ``horizon`` days past the last ingested date."""
    cdir = cfg.country_dir(country)
    path = cdir / checkpoint_name("attention_lstm")
    if not path.is_file():
        raise UsageError(f"{country}: no checkpoint at {path}; run `attnfc train` first")
    model = load_checkpoint(path)
    prepared = prepared_for(cfg, country)
    L = model.config.lookback
    n = len(prepared.scaled)
    fc = forecast_recursive(model, prepared.scaled[n - L :], np.arange(n - L, n), horizon)
    t = model.config.target_index
    values = D.inverse(prepared.scaler, fc.predictions, t)
    last = prepared.dates[-1]
    out = cdir / "forecast.csv"
    with open(out, "w") as fh:
        fh.write("date,predicted\n")
        for k, v in enumerate(values, start=1):
            fh.write(f"{(last + timedelta(days=k)).isoformat()},{float(v)!r}\n")
    adir = cdir / "attention"
    adir.mkdir(exist_ok=True)
    write_trace_csv(fc, adir / "forecast_trace.csv")
    return out


def _run_each(cfg: RunConfig, jobs: int, fn: Callable, *extra) -> tuple[dict, dict]:
    """Apply ``fn(cfg, country, *extra)`` per country; failures are collected, not raised."""
    done, failed = {}, {}
    if jobs > 1 and len(cfg.countries) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = {c: pool.submit(fn, cfg, c, *extra) for c in cfg.countries}
            for c, fut in futures.items():
                try:
                    done[c] = fut.result()
                except AttnfcError as exc:
                    failed[c] = exc
    else:
        for c in cfg.countries:
            try:
                done[c] = fn(cfg, c, *extra)
            except AttnfcError as exc:
                failed[c] = exc
    for c, exc in failed.items():
        log.error("%s: %s", c, exc)
    return done, failed


def run_train(cfg: RunConfig, jobs: int = 1) -> tuple[dict, dict]:
    return _run_each(cfg, jobs, train_country)


def run_evaluate(cfg: RunConfig, jobs: int = 1) -> tuple[MetricsReport, dict]:
    done, failed = _run_each(cfg, jobs, evaluate_country)
    report = MetricsReport(cfg.horizons.columns)
    for c in cfg.countries:
        if c in done:
            report.merge(done[c])
        else:
            report.fail(c, "all", str(failed[c]))
    report.metadata = {
        "window": f"{cfg.start}..{cfg.end}",
        "split": f"{cfg.split.train}/{cfg.split.validation}/{cfg.split.test}",
        "seed": cfg.training.seed,
    }
    cfg.out.mkdir(parents=True, exist_ok=True)
    (cfg.out / "report.md").write_text(render_report(report, "markdown"))
    (cfg.out / "report.csv").write_text(render_report(report, "csv"))
    return report, failed


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="attnfc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed_required=False):
        p.add_argument("--config", metavar="PATH")
        p.add_argument("--out", metavar="DIR")
        p.add_argument("--data-dir", metavar="DIR", help=f"JHU CSV directory (default ${DATA_DIR_ENV})")
        p.add_argument("--country", metavar="NAME", action="append", help="repeatable")
        p.add_argument("--jobs", type=int, default=1, metavar="N")
        p.add_argument("--seed", type=int, metavar="N", required=seed_required)

    common(sub.add_parser("ingest", help="normalize JHU CSVs into per-country series"))
    common(sub.add_parser("stats", help="descriptive statistics of confirmed cases"))
    p = sub.add_parser("train", help="fit attention and plain LSTM models per country")
    common(p, seed_required=True)
    p.add_argument("--epochs", type=int, metavar="N")
    common(sub.add_parser("evaluate", help="score checkpoints on the test split and horizons"), seed_required=True)
    p = sub.add_parser("forecast", help="forecast past the last ingested date")
    common(p)
    p.add_argument("--horizon", type=int, default=14, metavar="N")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s"
    )
    warnings.simplefilter("always", D.DataWarning)
    try:
        cfg = apply_overrides(load_run_config(args.config), args)
        if args.jobs < 1:
            raise UsageError("--jobs must be >= 1")
        if args.command == "ingest":
            stats = run_ingest(cfg)
            print(_stats_table(stats), end="")
            return EXIT_OK
        if args.command == "stats":
            print(_stats_table(run_stats(cfg)), end="")
            return EXIT_OK
        if args.command == "train":
            done, failed = run_train(cfg, args.jobs)
            return EXIT_OK if not failed else EXIT_PARTIAL
        if args.command == "evaluate":
            report, failed = run_evaluate(cfg, args.jobs)
            print(render_report(report, "markdown"), end="")
            return EXIT_PARTIAL if len(failed) == len(cfg.countries) else EXIT_OK
        if args.command == "forecast":
            if args.horizon < 1:
                raise UsageError("--horizon must be >= 1")
            if len(cfg.countries) != 1:
                raise UsageError("forecast needs exactly one --country")
            print(forecast_country(cfg, cfg.countries[0], args.horizon))
            return EXIT_OK
    except (UsageError, ConfigError, D.IngestionError) as exc:
        print(f"attnfc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except AttnfcError as exc:
        print(f"attnfc: error: {exc}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_USAGE


def _stats_table(stats: dict[str, D.DescriptiveStats]) -> str:
    lines = ["country," + ",".join(D.STATS_COLUMNS)]
    for c, s in stats.items():
        lines.append(c + "," + ",".join(f"{getattr(s, k):.2f}" for k in D.STATS_COLUMNS))
    return "\n".join(lines) + "\n"


if __name__ == "__main__":
    sys.exit(main())
