from __future__ import annotations

import cmath
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from babbage import equations as Q
from babbage import maps as M
from babbage.interval import Interval1

import oracles


def mapof(comps, names, window=None):
    return M.MapSpec.from_strings(comps, names, window)


XY = ["x", "y"]
ABS = mapof(["abs(x)"], ["x"], [(-5, 5)])
REFLECT = mapof(["1 - x"], ["x"], [(-5, 5)])
SQUARE = mapof(["x^2"], ["x"], [(-1, 1)])
TWISTED = mapof(["-x + x*y", "0"], XY, [(-2, 2), (-2, 2)])


# maps_equal ------------------------------------------------------------------


def test_two_allele_map_composed_with_itself_is_equal_exactly():
    f = M.hw_simple(2)
    res = Q.maps_equal(f.compose(f), f, mode="exact")
    assert res.equal and res.mode == "exact" and res.deviation == 0


def test_identity_equals_identity():
    res = Q.maps_equal(M.identity_map(2), M.identity_map(2), window=[(-1, 1), (-1, 1)])
    assert res.equal and res.deviation == 0


def test_normalized_family_is_not_identity():
    f = M.poly_family(1)
    res = Q.maps_equal(f, M.identity_map(2), window=[(-1, 1), (-1, 1)], tol=1e-9, mode="sampled")
    assert not res.equal and res.deviation >= 1
    at = np.array([res.argmax])
    assert np.max(np.abs(f.evaluate(at) - at)) == pytest.approx(res.deviation)


def test_exact_mode_requires_polynomials():
    with pytest.raises(Q.ExactModeError):
        Q.maps_equal(M.exp_collapse(), M.exp_collapse(), mode="exact")


def test_dimension_mismatch_is_rejected():
    with pytest.raises(ValueError, match="dimension"):
        Q.maps_equal(M.identity_map(1), M.identity_map(2))


@given(
    st.lists(st.floats(-3, 3), min_size=1, max_size=40),
    st.floats(-2, 2),
    st.floats(0, 2),
)
def test_sampled_equality_is_exactly_deviation_below_tolerance(xs, shift, tol):
    a = mapof(["sin(x)"], ["x"])
    b = mapof([f"sin(x) + {shift!r}*x^2"], ["x"]) if shift >= 0 else mapof([f"sin(x) - {-shift!r}*x^2"], ["x"])
    pts = np.array(xs)[:, None]
    res = Q.maps_equal(a, b, window=[(-3, 3)], tol=tol, mode="sampled", points=pts)
    assert res.equal == (res.deviation <= tol)
    # the reported deviation dominates every sampled pointwise gap
    gaps = np.abs(a.evaluate(pts) - b.evaluate(pts))
    assert np.all(gaps <= res.deviation)


def test_nan_mismatch_counts_as_infinite_deviation():
    dev, _ = Q.sup_deviation(np.array([[np.nan], [1.0]]), np.array([[0.0], [1.0]]))
    assert dev == math.inf


# detection -------------------------------------------------------------------


def test_detect_exp_collapse():
    rep = Q.detect_minimal_pair(M.exp_collapse(), n_max=4)
    assert rep.pair == (3, 2) and rep.label == "eventually-periodic"
    refuted = [c for c in rep.checked if (c.n, c.k) == (2, 1)][0]
    assert not refuted.holds and refuted.deviation >= 0.3
    assert rep.residual <= rep.tol


def test_detect_three_allele_map_is_idempotent_exactly():
    rep = Q.detect_minimal_pair(M.hw_simple(3), n_max=3)
    assert rep.pair == (2, 1) and rep.label == "idempotent" and rep.mode == "exact" and rep.residual is None


def test_detect_sign_reversing_family():
    rep = Q.detect_minimal_pair(TWISTED, n_max=4)
    assert rep.pair == (3, 1) and rep.label == "eventually-periodic"
    assert not [c for c in rep.checked if (c.n, c.k) == (2, 1)][0].holds


def test_detect_periodic_and_none():
    rep = Q.detect_minimal_pair(REFLECT, n_max=4)
    assert rep.pair == (2, 0) and rep.label == "periodic"
    rep = Q.detect_minimal_pair(SQUARE, n_max=3)
    assert rep.pair is None and rep.label == "none"


def test_scan_order_is_lexicographic_in_n_then_k():
    rep = Q.detect_minimal_pair(SQUARE, n_max=4)
    assert [(c.n, c.k) for c in rep.checked] == [(n, k) for n in range(1, 5) for k in range(n)]


def test_constant_power_is_a_flag_not_the_label():
    rep = Q.detect_minimal_pair(M.exp_collapse(), n_max=4)
    assert rep.constant_power is True and rep.label == "eventually-periodic"
    rep = Q.detect_minimal_pair(M.hw_simple(2), n_max=3)
    assert rep.constant_power is False


@given(st.integers(1, 12), st.integers(0, 11))
def test_labels_follow_the_pair(n, k):
    if not n > k:
        return
    label = Q.label_for(n, k)
    if k == 0:
        assert label == "periodic"
    elif (n, k) == (2, 1):
        assert label == "idempotent"
    else:
        assert label == "eventually-periodic"


def test_exact_mode_falls_back_above_degree_cap():
    f = mapof(["x^5 - x^4 + x/3"], ["x"], [(-0.5, 0.5)])
    with pytest.warns(RuntimeWarning, match="cap"):
        rep = Q.detect_minimal_pair(f, n_max=4)
    assert rep.warnings and "sampled" in " ".join(rep.warnings)


def test_float_coefficients_use_sampled_mode():
    rep = Q.detect_minimal_pair(M.rotation(Fraction(1, 3)).with_window([(-1, 1), (-1, 1)]), n_max=4)
    assert rep.pair == (3, 0) and rep.mode == "sampled"


# powers and corollary identities -----------------------------------------------


def test_idempotent_power_examples():
    r = Q.idempotent_power(M.exp_collapse(), 3, 2)
    assert r.exponent == 2 and r.verified
    f = M.hw_simple(2)
    r = Q.idempotent_power(f, 2, 1)
    assert r.exponent == 1 and r.verified and r.h.polynomials() == f.polynomials()
    r = Q.idempotent_power(M.jordan(["N2"]), 3, 2)
    assert r.verified and all(p.terms == {} for p in r.h.polynomials())


def test_idempotent_power_reports_failed_precondition():
    r = Q.idempotent_power(SQUARE, 2, 1)
    assert not r.precondition.holds and not r.verified and r.idempotence is None


FIXTURES = {
    "exp_collapse": M.exp_collapse(),
    "hw_simple2": M.hw_simple(2),
    "hw_simple3": M.hw_simple(3),
    "twisted": TWISTED,
    "abs": ABS,
    "reflect": REFLECT,
    "f_lambda_cont": M.f_lambda_cont("1101"),
    "f_lambda_smooth": M.f_lambda_smooth("1101"),
    "poly_family2": M.poly_family(2),
    "nilpotent": M.jordan(["N2"]).with_window([(-1, 1), (-1, 1)]),
    "rotation3": M.rotation(Fraction(1, 3)).with_window([(-1, 1), (-1, 1)]),
}


@pytest.mark.parametrize("name", sorted(FIXTURES))
def test_corollary_identities_and_idempotent_power(name):
    f = FIXTURES[name]
    rep = Q.detect_minimal_pair(f, n_max=4)
    assert rep.pair is not None
    n, k = rep.pair
    checks = Q.corollary_identities(f, n, k, (0, 1, 2))
    assert len(checks) == 3 and all(c.holds for _, _, c in checks)
    if k >= 1:
        assert Q.idempotent_power(f, n, k).verified


# restriction to the image ----------------------------------------------------


def test_restriction_examples():
    assert Q.restriction_classify(ABS, Interval1(0, 5)).label == "identity"
    assert Q.restriction_classify(REFLECT, Interval1(-5, 5)).label == "involution"
    assert Q.restriction_classify(mapof(["x^2"], ["x"]), Interval1(0, 0.5)).label == "other"


def test_restriction_invariance_is_measured_and_optionally_enforced():
    r = Q.restriction_classify(REFLECT, Interval1(-5, 5))
    assert not r.invariant and r.invariance_excess == pytest.approx(1.0)
    with pytest.raises(Q.NotInvariantError):
        Q.restriction_classify(REFLECT, Interval1(-5, 5), require_invariant=True)


@given(st.floats(0.01, 3), st.floats(-2, 2), st.floats(0, 1))
def test_increasing_maps_are_never_involutions(a, b, c):
    f = mapof([f"{a!r}*x + {c!r}*x^3 + ({b!r})"], ["x"])
    assert Q.restriction_classify(f, Interval1(-2, 2), samples=257, tol=1e-6).label != "involution"


# linear maps -----------------------------------------------------------------


def test_linear_examples():
    rot = M.rotation(Fraction(1, 3))
    assert Q.linear_solution_check(rot, 4, 1).satisfies
    assert Q.linear_solution_check(M.identity_map(3), 5, 2).satisfies
    n2 = M.jordan(["N2"])
    a, b = Q.linear_solution_check(n2, 2, 1), Q.linear_solution_check(n2, 3, 2)
    assert not a.satisfies and a.agree
    assert b.satisfies and b.agree


def test_linear_check_rejects_nonlinear_maps():
    with pytest.raises(Q.NotLinearError):
        Q.linear_solution_check(mapof(["x + 1", "y"], XY), 2, 1)
    with pytest.raises(Q.NotLinearError):
        Q.linear_solution_check(mapof(["x*y", "y"], XY), 2, 1)


TOKENS = ["1", "-1", "N1", "N2", "N3", "N4"] + [f"R{Fraction(p, q)}" for q in range(2, 7) for p in range(1, q)]


@pytest.mark.parametrize("seed", range(4))
def test_random_jordan_assemblies_agree_with_each_other_and_block_structure(seed):
    rng = np.random.default_rng(seed)
    for _ in range(50):
        blocks = list(rng.choice(TOKENS, size=int(rng.integers(1, 4))))
        n = int(rng.integers(2, 9))
        k = int(rng.integers(0, n))
        rep = Q.linear_solution_check(M.jordan(blocks), n, k)
        expected = all(oracles.block_satisfies(str(b), n, k) for b in blocks)
        assert rep.agree, (blocks, n, k, rep.diagnosis)
        assert rep.satisfies == expected, (blocks, n, k, rep.diagnosis)


@pytest.mark.parametrize(
    "blocks,n,k",
    [(["1", "-1"], 3, 1), (["N2", "-1"], 4, 2), (["N3"], 5, 2), (["-1", "N1", "1"], 3, 0)],
)
def test_exact_integer_assemblies_match_sympy_matrix_powers(blocks, n, k):
    f = M.jordan(blocks)
    assert Q.linear_solution_check(f, n, k).power_verdict == oracles.matrix_power_equal(M.jordan_matrix(blocks), n, k)


def test_large_assembly_uses_float_spectrum():
    f = M.jordan(["R1/3", "N2", "-1"])
    rep = Q.linear_solution_check(f, 8, 2)
    assert rep.mode != "exact" and rep.satisfies and rep.agree


# complex affine maps ---------------------------------------------------------


def test_affine_examples():
    r = Q.affine_complex_classify(1j, 0, 5, 1)
    assert r.kind == "rotation" and r.satisfies and r.angle == pytest.approx(math.pi / 2) and abs(r.center) < 1e-15
    r = Q.affine_complex_classify(1, 1, 3, 1)
    assert r.kind == "translation-no-solution" and not r.satisfies
    r = Q.affine_complex_classify(0, 7, 2, 1)
    assert r.kind == "constant" and r.satisfies
    assert Q.affine_complex_classify(1, 0, 4, 2).kind == "identity"


@given(
    st.integers(1, 8),
    st.integers(0, 7),
    st.integers(0, 11),
    st.sampled_from([12, 6, 5]),
    st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False),
)
def test_affine_verdict_matches_direct_iteration(n, k, p, q, b):
    if not n > k:
        return
    a = cmath.exp(2j * math.pi * p / q)
    r = Q.affine_complex_classify(a, b, n, k, tol=1e-9)
    assert r.satisfies == oracles.affine_satisfies(a, b, n, k)
    if r.kind == "rotation":
        fixed = r.center
        assert abs(a * fixed + b - fixed) <= 1e-9


@given(st.floats(0.1, 0.9), st.floats(-2, 2))
def test_contracting_affine_maps_have_no_solution(radius, b):
    r = Q.affine_complex_classify(complex(radius, 0.2), b, 3, 1)
    assert not r.satisfies and r.kind == "no-solution"
    assert r.satisfies == oracles.affine_satisfies(complex(radius, 0.2), b, 3, 1)
