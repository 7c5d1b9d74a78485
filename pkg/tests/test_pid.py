import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prlpid.exceptions import ControllerFault
from prlpid.pid import (
    CouplingCoeffs,
    PidGains,
    PidState,
    SaturationLimits,
    coupled_errors,
    cross_axis_control,
    pid_step,
    saturate,
)

errors = st.lists(st.floats(-5.0, 5.0), min_size=1, max_size=30)


def run(gains, seq, dt=0.1):
    state = PidState()
    out = []
    for e in seq:
        u, state = pid_step(gains, e, state, dt)
        out.append(u)
    return np.array(out)


def test_single_step_hand_value():
    u, _ = pid_step(PidGains(1.0, 1.0, 0.0), 1.0, PidState(), 0.1)
    assert abs(u - 1.1) < 1e-12


def test_two_step_hand_trace():
    g = PidGains(2.0, 10.0, 0.5)
    u1, s = pid_step(g, 1.0, PidState(), 0.1)
    u2, _ = pid_step(g, 0.5, s, 0.1)
    assert abs(u1 - 2.0 * (1.0 + 0.1 / 10.0 + 0.5 * 1.0 / 0.1)) < 1e-12
    # recomputed from the raw sums
    integral = 0.1 * 1.0 + 0.1 * 0.5
    assert abs(u2 - 2.0 * (0.5 + integral / 10.0 + 0.5 * (0.5 - 1.0) / 0.1)) < 1e-12
    assert abs(u2 - (-3.97)) < 1e-12


def test_zero_error_gives_zero_output():
    assert np.all(run(PidGains(3.0, 0.5, 2.0), [0.0] * 50) == 0.0)


def test_gain_validation():
    with pytest.raises(ValueError):
        PidGains(-1.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        PidGains(1.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        PidGains(1.0, 1.0, -0.1)
    with pytest.raises(ValueError):
        SaturationLimits(1.0, 1.0)
    with pytest.raises(ControllerFault):
        pid_step(PidGains(1.0, 1.0, 0.0), float("nan"), PidState(), 0.1)


@pytest.mark.parametrize("u, expected", [(5.0, 5.0), (15.0, 10.0), (-15.0, -10.0)])
def test_saturate(u, expected):
    assert saturate(u, SaturationLimits(-10.0, 10.0)) == expected


@given(st.floats(-1e6, 1e6))
def test_saturation_idempotent(u):
    lim = SaturationLimits(-10.0, 10.0)
    assert saturate(saturate(u, lim), lim) == saturate(u, lim)


@settings(max_examples=60)
@given(errors, st.integers(0, 1000))
def test_linearity_without_derivative(seq, seed):
    rng = np.random.default_rng(seed)
    other = rng.uniform(-5, 5, size=len(seq))
    a, b = rng.uniform(-2, 2, size=2)
    g = PidGains(1.7, 0.8, 0.0)
    combo = run(g, a * np.array(seq) + b * other)
    assert np.allclose(combo, a * run(g, seq) + b * run(g, other), atol=1e-12, rtol=0)


@settings(max_examples=60)
@given(errors, st.floats(0.1, 10.0))
def test_gain_homogeneity(seq, c):
    base = run(PidGains(1.3, 2.0, 0.4), seq)
    scaled = run(PidGains(1.3 * c, 2.0, 0.4), seq)
    assert np.allclose(scaled, c * base, atol=1e-12 * max(1.0, np.abs(scaled).max()), rtol=1e-12)


def test_anti_windup_freezes_integral():
    lim = SaturationLimits(-1.0, 1.0)
    _, s = pid_step(PidGains(5.0, 1.0, 0.0), 1.0, PidState(), 0.1, lim)
    assert s.integral_sum == 0.0
    _, s = pid_step(PidGains(0.5, 1.0, 0.0), 1.0, PidState(), 0.1, lim)
    assert s.integral_sum == pytest.approx(0.1)


def test_coupled_errors():
    zero = CouplingCoeffs()
    assert coupled_errors((1.0, 2.0, 3.0), (0.5, 0.5, 0.5), zero) == (0.5, 1.5, 2.5)
    e = coupled_errors((0.0, 0.0, 0.0), (0.0, 1.0, 0.0), CouplingCoeffs(c_rp=0.1))
    assert e == pytest.approx((0.1, -1.0, 0.0), abs=1e-15)
    c = CouplingCoeffs(0.3, -0.2, 0.5, 0.1, -0.4, 0.2)
    assert coupled_errors((0.0, 0.0, 0.0), (0.0, 0.0, 0.0), c) == (0.0, 0.0, 0.0)


def test_cross_axis_zero_coupling_equals_independent_loops():
    rng = np.random.default_rng(1)
    gains = tuple(PidGains(*g) for g in rng.uniform([0.5, 0.5, 0.0], [5, 5, 1], size=(3, 3)))
    states = (PidState(), PidState(), PidState())
    solo = [PidState(), PidState(), PidState()]
    for _ in range(20):
        refs = tuple(rng.uniform(-1, 1, 3))
        meas = tuple(rng.uniform(-1, 1, 3))
        *u, states = cross_axis_control(gains, CouplingCoeffs(), refs, meas, states, 0.1)
        for i in range(3):
            ui, solo[i] = pid_step(gains[i], refs[i] - meas[i], solo[i], 0.1)
            assert ui == u[i]
        assert tuple(solo) == states


def test_one_coupling_coefficient_touches_one_axis():
    gains = (PidGains(1.0, 2.0, 0.1),) * 3
    refs, meas = (0.1, 0.2, 0.3), (0.0, 0.4, -0.2)
    fresh = (PidState(),) * 3
    base = cross_axis_control(gains, CouplingCoeffs(), refs, meas, fresh, 0.1)
    coupled = cross_axis_control(gains, CouplingCoeffs(c_py=0.5), refs, meas, fresh, 0.1)
    assert coupled[0] == base[0] and coupled[2] == base[2]
    e_theta = (refs[1] - meas[1]) + 0.5 * meas[2]
    assert coupled[1] == pid_step(gains[1], e_theta, PidState(), 0.1)[0]


def test_coupling_clamp():
    c = CouplingCoeffs(2.0, -3.0, 0.5, 0.0, 0.0, 0.0).clamped(1.0)
    assert c.as_tuple() == (1.0, -1.0, 0.5, 0.0, 0.0, 0.0)
