import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chaoslim.levy import (
    DivergentMomentError,
    FiniteLevyMeasure,
    discretize,
    moment,
    parse_levy_model,
    pareto_tail_inverse,
    rademacher_measure,
    standardize,
)


def test_rademacher_basics():
    rad = rademacher_measure()
    assert rad.moment(2) == 1.0
    assert rad.moment(4) == 1.0
    assert rad.total_mass == 1.0
    ti = rad.tail_inverse()
    assert ti.evaluate(0.0) == 1.0
    assert ti.evaluate(0.999) == 1.0
    assert ti.evaluate(1.0) == 0.0
    assert abs(moment(ti, 2.0) - 1.0) < 1e-12


def test_pareto_construction():
    p5 = pareto_tail_inverse(5.0)
    assert abs(p5.x0 - math.sqrt(0.6)) < 1e-15
    assert p5.evaluate(1.0) == 0.0
    # unit second moment through the tail-inverse identity
    assert abs(moment(p5, 2.0) - 1.0) < 1e-8
    with pytest.raises(ValueError):
        pareto_tail_inverse(2.0)


@pytest.mark.parametrize("r", [2.0, 3.0, 4.0])
def test_pareto_moment_identity(r):
    p5 = pareto_tail_inverse(5.0)
    assert abs(moment(p5, r) - p5.moment_closed_form(r)) < 1e-8


@pytest.mark.parametrize("r", [2.0, 3.0, 4.0, 6.0])
def test_moment_identity_sixth_order(r):
    p7 = pareto_tail_inverse(7.0)
    assert abs(moment(p7, r) - p7.moment_closed_form(r)) < 1e-8


def test_moment_identity_atomic_models():
    m = FiniteLevyMeasure(xs=np.array([2.0, 0.5]), masses=np.array([0.1, 0.7]))
    ti = m.tail_inverse()
    for r in (2.0, 3.0, 4.0, 6.0):
        assert abs(m.moment(r) - moment(ti, r)) < 1e-12


def test_divergent_moment():
    p5 = pareto_tail_inverse(5.0)
    with pytest.raises(DivergentMomentError):
        moment(p5, 5.0)
    with pytest.raises(DivergentMomentError):
        p5.moment_closed_form(6.0)


def test_odd_moments_exactly_zero():
    for m in (rademacher_measure(),
              FiniteLevyMeasure(xs=np.array([3.0, 1.0]), masses=np.array([0.2, 0.3]))):
        assert m.signed_moment(1) == 0.0
        assert m.signed_moment(3) == 0.0


def test_standardize():
    m = FiniteLevyMeasure(xs=np.array([2.0]), masses=np.array([0.5]))
    s = standardize(m)
    assert np.allclose(s.xs, [1.0])
    assert abs(s.second_moment() - 1.0) < 1e-12
    rad = rademacher_measure()
    again = standardize(rad)
    assert np.array_equal(again.xs, rad.xs) and np.array_equal(again.masses, rad.masses)
    m2 = FiniteLevyMeasure(xs=np.array([1.7, 0.3]), masses=np.array([0.4, 1.1]))
    assert abs(standardize(m2).second_moment() - 1.0) < 1e-12


def test_discretize_step_passthrough():
    rad = rademacher_measure()
    out, err = discretize(rad.tail_inverse(), 0.1)
    assert err == 0.0
    assert np.allclose(out.xs, rad.xs)
    assert np.allclose(out.masses, rad.masses)


def test_discretize_contract():
    p5 = pareto_tail_inverse(5.0)
    prev = np.inf
    for eps in (0.1, 0.05, 0.02):
        out, err = discretize(p5, eps)
        assert err <= eps
        assert err < prev
        assert abs(out.second_moment() - 1.0) < 1e-10
        prev = err


def test_discretize_eps_domain():
    with pytest.raises(ValueError):
        discretize(pareto_tail_inverse(5.0), 0.0)


@settings(max_examples=50, deadline=None)
@given(
    y1=st.floats(min_value=1e-9, max_value=2.0),
    y2=st.floats(min_value=1e-9, max_value=2.0),
    alpha=st.floats(min_value=2.5, max_value=12.0),
)
def test_tail_inverse_monotone(y1, y2, alpha):
    ti = pareto_tail_inverse(alpha)
    lo, hi = min(y1, y2), max(y1, y2)
    assert ti.evaluate(lo) >= ti.evaluate(hi)


@settings(max_examples=30, deadline=None)
@given(y1=st.floats(min_value=0.0, max_value=1.5), y2=st.floats(min_value=0.0, max_value=1.5))
def test_step_tail_monotone(y1, y2):
    ti = FiniteLevyMeasure(
        xs=np.array([2.0, 1.0, 0.25]), masses=np.array([0.2, 0.3, 0.6])
    ).tail_inverse()
    lo, hi = min(y1, y2), max(y1, y2)
    assert ti.evaluate(lo) >= ti.evaluate(hi)


def test_parse_levy_model():
    assert parse_levy_model("rademacher").total_mass == 1.0
    assert parse_levy_model("pareto:5").alpha == 5.0
    out = parse_levy_model("discretized:5:0.1")
    assert abs(out.second_moment() - 1.0) < 1e-10
    with pytest.raises(ValueError):
        parse_levy_model("gaussian")
