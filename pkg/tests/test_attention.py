import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from attnfc import attention as A
from attnfc import numerics as nx
from attnfc.errors import ConfigError, DimensionError
from attnfc.numerics import Tensor, backward, finite_diff_check


def random_case(seed, T=7, n=4):
    rng = np.random.default_rng(seed)
    return rng, Tensor(rng.normal(size=(T, n))), Tensor(rng.normal(size=n))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 9), st.integers(1, 6))
def test_fine_weights_sum_to_one_per_dimension(seed, T, n):
    rng, H, d = random_case(seed, T, n)
    scorer = A.init_scorer(n, n, 5, n, rng)
    res = A.attend_fine(scorer, H, d)
    np.testing.assert_allclose(res.weights.data.sum(axis=0), 1.0, rtol=0, atol=1e-12)
    assert res.context.shape == (n,)
    lo, hi = H.data.min(axis=0), H.data.max(axis=0)
    assert np.all(res.context.data >= lo - 1e-12) and np.all(res.context.data <= hi + 1e-12)


def test_fine_context_by_hand():
    H = Tensor([[1.0, 10.0], [3.0, 30.0]])
    e = Tensor([[0.0, np.log(3.0)], [0.0, 0.0]])
    res = A.fine_from_scores(e, H)
    np.testing.assert_allclose(res.context.data, [2.0, 15.0], rtol=1e-15)


def test_tied_scores_reduce_to_basic_attention():
    rng, H, _ = random_case(9)
    e = rng.normal(size=7)
    basic = A.basic_from_scores(Tensor(e), H)
    fine = A.fine_from_scores(Tensor(np.repeat(e[:, None], 4, axis=1)), H)
    np.testing.assert_allclose(fine.context.data, basic.context.data, rtol=0, atol=1e-12)


def test_single_step_attention_is_identity():
    rng, H, d = random_case(1, T=1)
    res = A.attend_fine(A.init_scorer(4, 4, 3, 4, rng), H, d)
    np.testing.assert_array_equal(res.weights.data, 1.0)
    np.testing.assert_allclose(res.context.data, H.data[0], rtol=1e-15)


def test_arity_and_shape_errors():
    rng, H, d = random_case(2)
    with pytest.raises(ConfigError):
        A.attend_fine(A.init_scorer(4, 4, 3, 1, rng), H, d)
    with pytest.raises(ConfigError):
        A.attend_basic(A.init_scorer(4, 4, 3, 4, rng), H, d)
    with pytest.raises(DimensionError):
        A.attend_fine(A.init_scorer(4, 3, 3, 4, rng), H, d)


def test_attention_gradient_check():
    rng, H, d = random_case(4, T=5, n=3)
    H.requires_grad = d.requires_grad = True
    scorer = A.init_scorer(3, 3, 4, 3, rng)
    params = {"H": H, "d": d, **dict(scorer.named_tensors())}
    w = Tensor(rng.normal(size=3))
    report = finite_diff_check(lambda: nx.sum(nx.mul(A.attend_fine(scorer, H, d).context, w)), params)
    assert report.passed and report.max_rel_error < 1e-5


def test_attention_csv_round_trip(tmp_path):
    rng, H, d = random_case(6)
    res = A.attend_fine(A.init_scorer(4, 4, 3, 4, rng), H, d)
    path = tmp_path / "trace.csv"
    A.write_attention_csv(res, path)
    np.testing.assert_array_equal(A.read_attention_csv(path), res.weights.data)
