import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from concavex.shocks import HLPParameters, ShockDistribution, hlp_to_shocks, shocks_to_hlp

TWO_STATE = ShockDistribution([0.5, 0.5], [1.0, 0.5], [2.0, 0.5], [1.0, 3.0])


def test_shocks_to_hlp_examples():
    h = shocks_to_hlp(ShockDistribution.deterministic(1.0, 1.0, 1.0))
    assert h.to_spec() == {"p": [1.0], "x": [1.0], "v": [1.0]}
    h = shocks_to_hlp(ShockDistribution([1.0], [0.9], [2.0], [1.0]))
    assert h.p[0] == pytest.approx(1.8)
    h = shocks_to_hlp(TWO_STATE)
    np.testing.assert_allclose(h.p, [1.0, 0.125], rtol=1e-15)
    np.testing.assert_array_equal(h.x, [1.0, 3.0])
    np.testing.assert_array_equal(h.v, [2.0, 0.5])
    # with beta_2 = 1 the second weight is 0.5 * 1 * 0.5
    h = shocks_to_hlp(ShockDistribution([0.5, 0.5], [1.0, 1.0], [2.0, 0.5], [1.0, 3.0]))
    np.testing.assert_allclose(h.p, [1.0, 0.25], rtol=1e-15)


def test_single_state_with_half_probability_weight():
    # one state of a two-state law contributes pi * beta * R = 0.5 * 0.9 * 2
    d = ShockDistribution([0.5, 0.5], [0.9, 1.0], [2.0, 1.0], [1.0, 1.0])
    assert shocks_to_hlp(d).p[0] == pytest.approx(0.9)


def test_hlp_to_shocks_examples():
    d = hlp_to_shocks(HLPParameters([1.0], [1.0], [1.0]), pi=[1.0])
    assert d == ShockDistribution.deterministic(1.0, 1.0, 1.0)
    d = hlp_to_shocks(HLPParameters([1.0, 0.125], [1.0, 3.0], [2.0, 0.5]), pi=[0.5, 0.5])
    np.testing.assert_allclose(d.beta, [1.0, 0.5], rtol=1e-15)
    assert d == TWO_STATE


def test_default_pi_is_uniform():
    d = hlp_to_shocks(HLPParameters([1.0, 1.0, 1.0], [1.0, 2.0, 3.0], [1.0, 1.0, 1.0]))
    np.testing.assert_allclose(d.pi, 1 / 3)
    np.testing.assert_allclose(d.beta, 3.0)


pos = st.floats(1e-3, 1e3)


@st.composite
def hlp_and_pi(draw):
    n = draw(st.integers(1, 6))
    p = draw(arrays(float, n, elements=pos))
    x = draw(arrays(float, n, elements=pos))
    v = draw(arrays(float, n, elements=pos))
    w = draw(arrays(float, n, elements=st.floats(0.05, 1.0)))
    return HLPParameters(p, x, v), w / w.sum()


@given(hlp_and_pi())
@settings(max_examples=200, deadline=None)
def test_round_trip_is_identity(case):
    params, pi = case
    dist = hlp_to_shocks(params, pi)
    assert np.all(dist.beta > 0) and np.all(dist.R > 0) and np.all(dist.Y > 0)
    back = shocks_to_hlp(dist)
    np.testing.assert_allclose(back.p, params.p, rtol=1e-14)
    np.testing.assert_array_equal(back.x, params.x)
    np.testing.assert_array_equal(back.v, params.v)


@pytest.mark.parametrize("kwargs, needle", [
    (dict(pi=[0.5, 0.4], beta=[1, 1], R=[1, 1], Y=[1, 1]), "sum to 1"),
    (dict(pi=[1.0], beta=[1], R=[1], Y=[-1]), "Y must be strictly positive"),
    (dict(pi=[1.0], beta=[0], R=[1], Y=[1]), "beta must be strictly positive"),
    (dict(pi=[0.5, 0.5], beta=[1], R=[1, 1], Y=[1, 1]), "equal length"),
    (dict(pi=[], beta=[], R=[], Y=[]), "nonempty"),
])
def test_distribution_validation(kwargs, needle):
    with pytest.raises(ValueError, match=needle):
        ShockDistribution(**kwargs)


def test_probabilities_renormalized_within_tolerance():
    d = ShockDistribution([0.5 + 4e-13, 0.5], [1, 1], [1, 1], [1, 1])
    assert d.pi.sum() == pytest.approx(1.0, abs=3e-16)
    assert d.pi[0] > d.pi[1]


def test_hlp_validation():
    with pytest.raises(ValueError):
        HLPParameters([1.0, -1.0], [1.0, 1.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        HLPParameters([1.0], [1.0], [0.0])
    with pytest.raises(ValueError, match="income"):
        hlp_to_shocks(HLPParameters([1.0], [-1.0], [1.0]))
    with pytest.raises(ValueError, match="length"):
        hlp_to_shocks(HLPParameters([1.0], [1.0], [1.0]), pi=[0.5, 0.5])


def test_spec_round_trip():
    assert ShockDistribution.from_spec(TWO_STATE.to_spec()) == TWO_STATE


def test_arrays_are_read_only():
    with pytest.raises(ValueError):
        TWO_STATE.beta[0] = 2.0


def test_random_is_seeded(rng):
    a = ShockDistribution.random(np.random.default_rng(5), 3)
    b = ShockDistribution.random(np.random.default_rng(5), 3)
    assert a == b
    assert np.all((a.beta >= 0.5) & (a.beta <= 1.2))
    assert np.all((a.Y >= 0.1) & (a.Y <= 5.0))
