"""Train the attention model and the plain LSTM on one country, then score
both against persistence on the test split and on recursive horizons.

A short run on synthetic counts; the full protocol uses 150 epochs.

Run: python3 demos/train_and_evaluate.py
"""
import tempfile
from datetime import date

from attnfc import data
from attnfc.evaluation import DEFAULT_HORIZONS, MetricsReport, TEST, evaluate_horizon, evaluate_test, render_report
from attnfc.model import ModelConfig, build_model
from attnfc.synthetic import write_jhu_fixture
from attnfc.training import TrainConfig, train

tables = data.load_jhu_tables(write_jhu_fixture(tempfile.mkdtemp()))
raw = data.build_raw_series(tables, "Italy", date(2020, 2, 21), date(2020, 9, 12))
prepared = data.prepare_series(raw, country="Italy")

report = MetricsReport([TEST] + [str(h) for h in DEFAULT_HORIZONS])
for mode in ("attention_lstm", "plain_lstm", "persistence"):
    model = build_model(ModelConfig(mode=mode), 42)
    result = train(model, prepared.train, prepared.validation, TrainConfig(epochs=10))
    best = result.model
    if result.history.best_epoch >= 0:
        print(f"{mode}: best validation MSE {result.history.best_validation:.2e}")
    report.add("Italy", mode, TEST, evaluate_test(best, prepared.test, prepared.scaler))
    for h in DEFAULT_HORIZONS:
        report.add("Italy", mode, str(h), evaluate_horizon(best, prepared, h))

# Ten epochs leave both networks well behind persistence on these smooth curves.
print(render_report(report))
