from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from babbage import maps as M
from babbage.poly import Polynomial
from babbage.sampling import genotype_simplex, sexed_region

import oracles

F = Fraction


def test_hw_simple_two_alleles_matches_displayed_formula():
    f = M.builtin_map("builtin:hw_simple?k=2")
    a, b = f.vars
    expected = M.MapSpec.from_strings([f"({a} + {b}/2)^2", f"2*({a} + {b}/2)*(1 - {a} - {b}/2)"], f.vars)
    assert f.polynomials() == expected.polynomials()


def test_poly_family_first_member():
    f = M.builtin_map("builtin:poly_family?i=1")
    assert f.polynomials() == M.MapSpec.from_strings(["x*(1-y)", "0"], ["x", "y"]).polynomials()


@pytest.mark.parametrize("i", [1, 2, 3, 4])
def test_poly_family_restricts_to_identity_on_axis_and_is_idempotent(i):
    f = M.poly_family(i)
    p = f.polynomials()[0]
    x_axis = [Polynomial.variable(p.vars, 0), Polynomial.constant(p.vars, 0)]
    assert p.compose(x_axis) == Polynomial.variable(p.vars, 0)
    assert f.compose(f).polynomials() == f.polynomials()


def test_nilpotent_block_is_shift():
    f = M.builtin_map("builtin:jordan?blocks=N2")
    assert f.component_strings() == ["y", "0"]


def test_apply_examples():
    hw = M.hw_simple(2)
    assert M.apply_map(hw, [F(1, 4), F(1, 2)]) == (F(1, 4), F(1, 2))
    fx, fy = M.apply_map(M.exp_collapse(), [1.0, 7.0])
    assert fx == pytest.approx(-math.exp(-1), abs=1e-15) and fy == 0
    assert M.apply_map(M.poly_family(1), [2, 3]) == (-4, 0)


def test_iterate_zero_is_identity():
    for f in (M.hw_simple(2), M.exp_collapse(), M.poly_family(2)):
        assert M.iterate_map(f, [3, 4], 0) == (3, 4)


def test_sexed_counterexample_iterates_exactly():
    f = M.hw_sexed(2)
    x = [F(1, 2), F(1, 2), F(1, 3), F(2, 3)]
    one = M.iterate_map(f, x, 1)
    two = M.iterate_map(f, x, 2)
    assert one == (F(1, 2), F(5, 12)) * 2
    assert two == (F(289, 576), F(238, 576)) * 2
    # independent genotype bookkeeping gives the same numbers
    assert list(one[:2]) == oracles.sexed_mating(2, x[:2], x[2:])
    assert list(two[:2]) == oracles.sexed_mating(2, list(one[:2]), list(one[2:]))


@pytest.mark.parametrize("k", [2, 3, 4])
def test_hw_simple_matches_random_mating_oracle(k):
    rng = np.random.default_rng(k)
    f = M.hw_simple(k)
    for _ in range(25):
        x = oracles.random_simplex_point(k, rng)
        assert list(M.apply_map(f, x)) == oracles.random_mating(k, x)


@pytest.mark.parametrize("k", [2, 3, 4])
def test_hw_simple_conserves_allele_frequencies_exactly(k):
    rng = np.random.default_rng(100 + k)
    f = M.hw_simple(k)
    for _ in range(100):
        x = oracles.random_simplex_point(k, rng)
        y = list(M.apply_map(f, x))
        before = oracles.allele_frequencies(k, oracles.full_genotypes(k, x))
        after = oracles.allele_frequencies(k, oracles.full_genotypes(k, y))
        assert before[:-1] == after[:-1]


@pytest.mark.parametrize("k", [2, 3, 4])
def test_hw_simple_is_idempotent_on_rational_points(k):
    rng = np.random.default_rng(200 + k)
    f = M.hw_simple(k)
    for _ in range(30):
        x = oracles.random_simplex_point(k, rng)
        assert M.iterate_map(f, x, 2) == M.apply_map(f, x)


@pytest.mark.parametrize("k", [2, 3])
def test_hw_sexed_third_iterate_equals_second(k):
    f = M.hw_sexed(k)
    pts = sexed_region(k, 1000, seed=k)
    two, three = f.iterate_points(pts, 2), f.iterate_points(pts, 3)
    assert np.max(np.abs(three - two)) <= 1e-12


def test_f_lambda_cont_is_identity_on_unit_interval_and_maps_into_it():
    for bits in ("1101", "0", "1", "0110"):
        f = M.builtin_map(f"builtin:f_lambda_cont?bits={bits}")
        xs = np.linspace(0, 1, 1001)[:, None]
        assert np.max(np.abs(f.evaluate(xs) - xs)) <= 1e-15
        lo, hi = f.window[0]
        vals = f.evaluate(np.linspace(lo, hi, 20001)[:, None])
        assert vals.min() >= 0 and vals.max() <= 1


def test_f_lambda_cont_fixes_digits_at_integers():
    f = M.f_lambda_cont("1101")
    vals = [float(M.apply_map(f, [float(m)])[0]) for m in (2, 3, 4, 5)]
    assert vals == [1.0, 1.0, 0.0, 1.0]


def test_f_lambda_smooth_image_and_collapse():
    f = M.f_lambda_smooth("1101")
    xs = np.linspace(-10, 10, 20001)[:, None]
    one = f.evaluate(xs)
    assert one.min() >= -1 and one.max() <= 0
    assert np.max(np.abs(f.evaluate(one))) <= 1e-300


def test_exp_collapse_third_equals_second_but_not_first():
    f = M.exp_collapse()
    axis = np.linspace(-5, 5, 32)
    pts = np.array([(a, b) for a in axis for b in axis[:32]])[:1000]
    assert np.array_equal(f.iterate_points(pts, 3), f.iterate_points(pts, 2))
    diff = np.abs(np.array(M.iterate_map(f, [1.0, 0.0], 2)) - np.array(M.apply_map(f, [1.0, 0.0])))
    assert diff.max() >= 0.3


@given(
    st.lists(st.fractions(-2, 2, max_denominator=9), min_size=2, max_size=2),
    st.integers(0, 3),
    st.integers(0, 3),
)
def test_iterate_additivity_exact(x, a, b):
    f = M.MapSpec.from_strings(["x*(1-y) + y^2/3", "x/2 - y"], ["x", "y"])
    assert M.iterate_map(f, x, a + b) == M.iterate_map(f, M.iterate_map(f, x, b), a)


@given(st.lists(st.floats(-3, 3), min_size=2, max_size=2), st.integers(0, 4), st.integers(0, 4))
def test_iterate_additivity_float(x, a, b):
    f = M.MapSpec.from_strings(["sin(x) + y/2", "cos(x*y)/2"], ["x", "y"])
    left = np.array(M.iterate_map(f, x, a + b), dtype=float)
    right = np.array(M.iterate_map(f, M.iterate_map(f, x, b), a), dtype=float)
    assert np.max(np.abs(left - right)) <= 1e-12


def test_power_matches_pointwise_iteration():
    f = M.hw_simple(3)
    pts = genotype_simplex(3, 50, seed=5)
    f3 = f.power(3)
    assert np.allclose(f3.evaluate(pts), f.iterate_points(pts, 3), atol=1e-14)


def test_builtin_uri_round_trip():
    for uri in ("builtin:hw_simple?k=3", "builtin:f_lambda_cont?bits=1101", "builtin:jordan?blocks=1,R1/3,N2",
                "builtin:rot_refl?angle=1/4", "builtin:poly_family?i=2"):
        assert M.builtin_map(uri).tag == uri


def test_rotation_quarter_turn_is_exact():
    f = M.builtin_map("builtin:rot_refl?angle=1/4")
    assert f.polynomials() == M.MapSpec.from_strings(["-y", "x"], ["x", "y"]).polynomials()


def test_jordan_assembly_layout():
    assert M.jordan_matrix(["-1", "N3"]) == [[-1, 0, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1], [0, 0, 0, 0]]


@pytest.mark.parametrize(
    "uri",
    [
        "builtin:nope",
        "builtin:hw_simple?k=1",
        "builtin:hw_sexed",
        "builtin:poly_family?i=0",
        "builtin:f_lambda_cont?bits=",
        "builtin:f_lambda_smooth?bits=12",
        "builtin:jordan",
        "builtin:jordan?blocks=Q3",
        "builtin:hw_simple?k=2&zzz=1",
    ],
)
def test_invalid_builtin_parameters(uri):
    with pytest.raises(M.MapError):
        M.builtin_map(uri)


def test_mapspec_validation():
    with pytest.raises(M.MapError, match="component count"):
        M.MapSpec.from_strings(["x"], ["x", "y"])
    with pytest.raises(ValueError, match="duplicate"):
        M.MapSpec.from_strings(["x", "y"], ["x", "x"])
    with pytest.raises(ValueError):
        M.MapSpec.from_strings(["x"], ["x"], window=[(1, 0)])
    with pytest.raises(M.MapError):
        M.apply_map(M.identity_map(2), [1])


def test_linear_map_prints_signs_cleanly():
    f = M.linear_map([[0, -1], [1, 0]])
    assert f.component_strings() == ["-y", "x"]
