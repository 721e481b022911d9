import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from attnfc.data import prepare_series
from attnfc.errors import ContractError, MetricError
from attnfc.evaluation import (
    HorizonSpec,
    MetricsReport,
    Score,
    emit_plot_series,
    evaluate_horizon,
    evaluate_test,
    forecast_from_boundary,
    mape,
    parse_report_csv,
    persistence_ramp_rmse,
    read_plot_series,
    render_report,
    rmse,
    write_trace_csv,
)
from attnfc.model import ModelConfig, build_model, predict_one
from attnfc.data import inverse

PERSIST = build_model(ModelConfig(mode="persistence"))

values = arrays(np.float64, 6, elements=st.floats(1, 1e6))


def test_metric_examples():
    assert rmse([100, 200], [110, 190]) == 10.0
    assert mape([100, 200], [110, 190]) == 7.5
    assert rmse([5], [2]) == 3.0
    assert rmse([1, 2], [1, 2]) == 0.0 and mape([1, 2], [1, 2]) == 0.0


def test_metric_errors():
    with pytest.raises(MetricError, match="length"):
        rmse([1, 2], [1])
    with pytest.raises(MetricError):
        rmse([], [])
    with pytest.raises(MetricError, match="index 1"):
        mape([3, 0], [1, 1])


@settings(max_examples=50, deadline=None)
@given(values, values, st.floats(0.01, 100), st.integers(0, 1000))
def test_metric_properties(y, f, c, seed):
    perm = np.random.default_rng(seed).permutation(6)
    assert rmse(y, f) == pytest.approx(rmse(y[perm], f[perm]), rel=1e-12)
    assert mape(y, f) == pytest.approx(mape(y[perm], f[perm]), rel=1e-12)
    assert rmse(c * y, c * f) == pytest.approx(c * rmse(y, f), rel=1e-9, abs=1e-9)
    assert mape(c * y, c * f) == pytest.approx(mape(y, f), rel=1e-9, abs=1e-9)
    assert (rmse(y, f) == 0) == bool((y == f).all())


def test_persistence_on_constant_and_ramp():
    const = prepare_series(np.column_stack([np.full(60, 5.0), np.arange(60.0)]), 7)
    assert evaluate_test(PERSIST_2(), const.test, const.scaler).rmse == 0.0
    s = 37.0
    ramp = prepare_series(s * np.arange(1.0, 61.0), 7)
    assert evaluate_test(PERSIST_1(), ramp.test, ramp.scaler).rmse == pytest.approx(s, rel=1e-12)


def PERSIST_1():
    return build_model(ModelConfig(mode="persistence", feature_count=1))


def PERSIST_2():
    return build_model(ModelConfig(mode="persistence", feature_count=2))


@pytest.mark.parametrize("h", [1, 2, 4, 6, 8])
def test_persistence_horizon_matches_closed_form(h):
    s = 12.5
    prep = prepare_series(s * np.arange(1.0, 101.0), 7)
    got = evaluate_horizon(PERSIST_1(), prep, h).rmse
    brute = math.sqrt(np.mean([(s * k) ** 2 for k in range(1, h + 1)]))
    assert got == pytest.approx(brute, rel=1e-12, abs=1e-9)
    assert persistence_ramp_rmse(s, h) == pytest.approx(brute, rel=1e-12)


def test_horizon_one_equals_manual_prediction():
    x = np.column_stack([np.arange(1.0, 81.0) ** 1.5, np.arange(80.0), np.ones(80)])
    prep = prepare_series(x, 7)
    model = build_model(ModelConfig(), 0)
    b = prep.boundary
    y, _ = predict_one(model, prep.scaled[b - 6 : b + 1], np.arange(b - 6, b + 1))
    pred = inverse(prep.scaler, y.item(), 0)
    s = evaluate_horizon(model, prep, 1)
    assert s.rmse == abs(pred - x[b + 1, 0])


def test_horizon_needs_enough_held_out_days():
    prep = prepare_series(np.arange(1.0, 31.0), 7)
    with pytest.raises(ContractError, match="needs 14 held-out days"):
        evaluate_horizon(PERSIST_1(), prep, 14)


def test_horizon_forecast_never_reads_held_out_rows():
    x = np.arange(1.0, 101.0)
    prep = prepare_series(x, 7)
    before = forecast_from_boundary(PERSIST_1(), prep, 5).predicted
    prep.scaled[prep.boundary + 1 :] = 123.0
    after = forecast_from_boundary(PERSIST_1(), prep, 5).predicted
    np.testing.assert_array_equal(before, after)


def report():
    r = MetricsReport(HorizonSpec().columns)
    for col in r.columns:
        r.add("Italy", "attention_lstm", col, Score(1 / 3 + len(col), 2 / 7))
    return r


def test_report_shapes_and_round_trip():
    r = report()
    assert r.columns == ["Test", "2", "4", "6", "8", "10", "12", "14"]
    md = render_report(r, "markdown").splitlines()
    assert md[0].count("RMSE") == 8 and md[0].count("MAPE") == 8
    assert len([line for line in md if line.startswith("| Italy")]) == 1
    assert "0.29" in md[2]
    parsed = parse_report_csv(render_report(r, "csv"))
    assert parsed[("Italy", "attention_lstm")] == r.rows[("Italy", "attention_lstm")]
    with pytest.raises(ContractError):
        render_report(MetricsReport(["Test"]))


def test_horizon_spec_validation():
    with pytest.raises(ContractError):
        HorizonSpec((2, 2))
    with pytest.raises(ContractError):
        HorizonSpec((0, 2))


def test_plot_series_round_trip(tmp_path):
    from datetime import date, timedelta

    dates = [date(2020, 8, 1) + timedelta(days=k) for k in range(14)]
    actual = np.random.default_rng(0).uniform(1e5, 2e5, 14)
    pred = actual * (1 + 1e-7 / 3)
    emit_plot_series(dates, actual, pred, tmp_path / "p.csv")
    d, a, p = read_plot_series(tmp_path / "p.csv")
    assert len(d) == 14 and d[0] == "2020-08-01"
    np.testing.assert_array_equal(a, actual)
    np.testing.assert_array_equal(p, pred)
    with pytest.raises(ContractError):
        emit_plot_series(dates, actual[:3], pred, tmp_path / "q.csv")


def test_trace_csv_entry_count(tmp_path):
    x = np.column_stack([np.arange(1.0, 81.0), np.arange(80.0), np.sqrt(np.arange(80.0))])
    prep = prepare_series(x, 7)
    fc = forecast_from_boundary(build_model(ModelConfig(), 0), prep, 4)
    assert write_trace_csv(fc.path, tmp_path / "t.csv") == 4 * 7 * 7
