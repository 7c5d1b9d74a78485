import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from prlpid.metrics import compute_metrics, interval_metrics, overshoot, settling_time, steady_state_error

errs = st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=60)


def test_zero_error_gives_zero():
    m = interval_metrics(np.zeros(20), 0, 20, 0.1)
    assert m.ise == 0.0 and m.iae == 0.0


def test_unit_error_over_one_second():
    m = interval_metrics(np.ones(10), 0, 10, 0.1)
    assert m.ise == pytest.approx(1.0, abs=1e-12) and m.iae == pytest.approx(1.0, abs=1e-12)


def test_alternating_sign():
    m = interval_metrics([1.0, -1.0], 0, 2, 0.1)
    assert m.ise == pytest.approx(0.2, abs=1e-15) and m.iae == pytest.approx(0.2, abs=1e-15)


@given(errs)
def test_sign_symmetry(e):
    a = interval_metrics(e, 0, len(e), 0.1)
    b = interval_metrics([-v for v in e], 0, len(e), 0.1)
    assert a == b


@given(errs, st.data())
def test_interval_additivity(e, data):
    n = len(e)
    mid = data.draw(st.integers(1, n - 1))
    whole = interval_metrics(e, 0, n, 0.1)
    left, right = compute_metrics(e, [(0, mid), (mid, n)], 0.1)
    assert whole.ise == pytest.approx(left.ise + right.ise, rel=1e-12, abs=1e-12)
    assert whole.iae == pytest.approx(left.iae + right.iae, rel=1e-12, abs=1e-12)


@given(errs)
def test_nonnegative(e):
    m = interval_metrics(e, 0, len(e), 0.05)
    assert m.ise >= 0.0 and m.iae >= 0.0


@pytest.mark.parametrize("lo, hi", [(3, 3), (5, 2), (-1, 4), (0, 11)])
def test_bad_interval_raises(lo, hi):
    with pytest.raises(ValueError):
        interval_metrics(np.zeros(10), lo, hi, 0.1)


def test_overshoot():
    assert overshoot([0.0, 0.8, 1.2, 1.0], 1.0) == pytest.approx(0.2)
    assert overshoot([0.0, 0.5, 0.9], 1.0) == 0.0
    assert overshoot([0.0, -1.3, -1.0], -1.0) == pytest.approx(0.3)


def test_settling_time():
    assert settling_time(np.zeros(10), 1.0, 0.1) == 0.0
    assert settling_time([1.0, 0.5, 0.01, 0.0, 0.0], 1.0, 0.1) == pytest.approx(0.2)
    assert settling_time([1.0, 0.5, 0.3], 1.0, 0.1) is None


def test_steady_state_error():
    assert steady_state_error([5.0, 5.0, 0.1, -0.3], 2) == pytest.approx(0.2)
    with pytest.raises(ValueError):
        steady_state_error([], 3)
