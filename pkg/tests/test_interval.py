from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from babbage import equations as Q
from babbage import maps as M
from babbage.interval import Interval1, enclose_image, image_chain, verify_1d_equation

import oracles


def one_d(text, window=None):
    return M.MapSpec.from_strings([text], ["x"], window)


EXP_FACTOR = M.first_factor(M.exp_collapse())


def test_interval_invariants():
    with pytest.raises(ValueError):
        Interval1(1, 0)
    iv = Interval1(-math.inf, 3)
    assert not iv.lo_closed and iv.hi_closed and not iv.bounded
    assert Interval1(0, 1, False, True).approx_equal(Interval1(0, 1), 0.0)
    assert Interval1(0, 1).row(0.5) == [0.0, 1.0, True, True, 0.5]


def test_enclose_square_with_interior_minimum():
    enc = enclose_image(one_d("x^2"), Interval1(-1, 2))
    assert abs(enc.interval.lo) <= 1e-9 and abs(enc.interval.hi - 4) <= 1e-9
    assert enc.interval.lo <= 0 and enc.interval.hi >= 4


def test_enclose_identity():
    enc = enclose_image(one_d("x"), Interval1(0, 1))
    assert enc.interval.approx_equal(Interval1(0, 1), 1e-12)


def test_enclose_smooth_family_image():
    enc = enclose_image(M.f_lambda_smooth("1101"), Interval1(-10, 10))
    assert enc.interval.approx_equal(Interval1(-1, 0), 1e-6)


def test_refinement_finds_a_narrow_extremum_between_samples():
    # peak at x = 1/3 is missed by a coarse grid but found by bisection
    f = one_d("1 - 1000*(x - 1/3)^2")
    enc = enclose_image(f, Interval1(0, 1), resolution=16)
    assert enc.interval.hi >= 1 - 1e-9


@pytest.mark.parametrize(
    "text,lo,hi",
    [("sin(3*x)", -2, 2), ("x^3 - x", -1.5, 1.5), ("exp(-x^2)*cos(5*x)", -3, 3), ("abs(x - 1/7)", -1, 1)],
)
def test_enclosure_contains_brute_force_range(text, lo, hi):
    f = one_d(text)
    enc = enclose_image(f, Interval1(lo, hi), resolution=2048)
    bmin, bmax = oracles.brute_range(lambda xs: f.evaluate(xs[:, None])[:, 0], lo, hi)
    assert enc.interval.lo <= bmin and enc.interval.hi >= bmax
    assert enc.interval.lo >= bmin - 1e-6 and enc.interval.hi <= bmax + 1e-6


def test_unbounded_interval_is_clipped_with_a_note():
    enc = enclose_image(one_d("x^2", [(-2, 2)]), Interval1(-math.inf, math.inf))
    assert "clipped" in enc.note and enc.interval.approx_equal(Interval1(0, 4), 1e-9)
    with pytest.raises(ValueError, match="window"):
        enclose_image(one_d("x^2"), Interval1(0, math.inf))


def test_smooth_family_chain():
    chain = image_chain(M.f_lambda_smooth("1101"), Interval1(-10, 10), 2)
    a, b, c = chain.intervals
    assert a == Interval1(-10, 10)
    assert b.approx_equal(Interval1(-1, 0), 1e-6)
    assert c.approx_equal(Interval1(0, 0), 1e-6)


def test_identity_chain_repeats():
    chain = image_chain(one_d("x"), Interval1(-3, 2), 3)
    assert len(chain.intervals) == 4
    assert all(iv.approx_equal(Interval1(-3, 2), 1e-12) for iv in chain.intervals)


def test_exp_factor_chain():
    chain = image_chain(EXP_FACTOR, Interval1(-5, 5), 2)
    _, b, c = chain.intervals
    assert -1 < b.lo <= -math.exp(-1 / 5) + 1e-9 and abs(b.hi) <= 1e-9
    assert c.approx_equal(Interval1(0, 0), 1e-9)


def test_continuous_family_chain_reaches_unit_interval():
    f = M.f_lambda_cont("1101")
    chain = image_chain(f, Interval1(*f.window[0]), 1)
    assert chain.intervals[1].approx_equal(Interval1(0, 1), 1e-6)
    assert Q.restriction_classify(f, chain.intervals[1], tol=1e-6).label == "identity"


SMOOTH_MAPS = st.sampled_from(["sin(2*x)", "x^2 - 1", "cos(x)*x/2", "x/(1 + x^2)", "exp(-x)-1", "abs(x) - 1/2"])


# each template maps [-3, 3] into itself for every scale in (0, 1]
SELF_MAPS = st.sampled_from(["3*sin(2*x)", "x^2/3 - 1", "x*cos(x)", "x/(1 + x^2)", "3*exp(-x^2) - 1", "abs(x) - 1/2"])


@given(SELF_MAPS, st.floats(0.05, 1), st.integers(1, 3))
def test_chain_is_nested_and_contains_every_sampled_image(text, scale, k):
    f = one_d(f"{scale!r}*({text})")
    chain = image_chain(f, Interval1(-3, 3), k, resolution=512)
    for prev, nxt in zip(chain.intervals, chain.intervals[1:]):
        assert nxt.is_subset(prev)
        xs = np.linspace(prev.lo, prev.hi, 997)
        vals = f.evaluate(xs[:, None])[:, 0]
        assert np.all(vals >= nxt.lo) and np.all(vals <= nxt.hi)


@given(SMOOTH_MAPS, st.floats(-3, 0), st.floats(0.1, 3))
def test_doubling_resolution_moves_endpoints_less_than_slack(text, lo, width):
    f = one_d(text)
    a = enclose_image(f, Interval1(lo, lo + width), resolution=512)
    b = enclose_image(f, Interval1(lo, lo + width), resolution=1024)
    slack = max(a.slack, b.slack)
    assert abs(a.interval.lo - b.interval.lo) <= 2 * slack + 1e-15
    assert abs(a.interval.hi - b.interval.hi) <= 2 * slack + 1e-15


def test_verify_examples():
    v = verify_1d_equation(one_d("abs(x)"), Interval1(-5, 5), 2, 1)
    assert v.verified and v.restriction.label == "identity" and v.reduction == "f^2 = f^1"
    v = verify_1d_equation(one_d("1 - x"), Interval1(-5, 5), 3, 1)
    assert v.verified and v.restriction.label == "involution" and v.reduction == "f^3 = f^1"
    v = verify_1d_equation(one_d("x^2"), Interval1(0, 0.5), 2, 1)
    assert not v.verified and v.deviation >= 3 / 16 - 1e-15 and v.witness == pytest.approx(0.5)


def test_verify_requires_positive_k():
    with pytest.raises(ValueError):
        verify_1d_equation(one_d("x"), Interval1(0, 1), 2, 0)


def test_endpoint_quotients_are_reported():
    v = verify_1d_equation(one_d("abs(x)"), Interval1(-5, 5), 2, 1)
    q = v.endpoint_quotients
    assert q["lo"]["right"] == pytest.approx(1, abs=1e-4) and q["lo"]["left"] == pytest.approx(-1, abs=1e-4)


ONE_D_FIXTURES = {
    "abs": one_d("abs(x)", [(-5, 5)]),
    "reflect": one_d("1 - x", [(-5, 5)]),
    "square": one_d("x^2", [(-0.9, 0.9)]),
    "f_lambda_cont": M.f_lambda_cont("1101"),
    "f_lambda_smooth": M.f_lambda_smooth("1101"),
    "exp_factor": EXP_FACTOR,
}


@pytest.mark.parametrize("name", sorted(ONE_D_FIXTURES))
def test_parity_reduction_agrees_with_direct_comparison(name):
    f = ONE_D_FIXTURES[name]
    I = Interval1(*f.window[0])
    rep = Q.detect_minimal_pair(f, n_max=4)
    pairs = [(n, k) for n in range(2, 6) for k in range(1, n)]
    if rep.pair is not None:
        n, k = rep.pair
        if k == 0:
            n, k = n + 1, k + 1
        step = 1 if (n - k) % 2 else 2
        assert Q.maps_equal(f.power(k + step), f.power(k), mode="sampled").equal
        assert verify_1d_equation(f, I, n, k).verified
    for n, k in pairs:
        direct = Q.check_pair(f, n, k, mode="sampled").holds
        assert verify_1d_equation(f, I, n, k).verified == direct, (n, k)
