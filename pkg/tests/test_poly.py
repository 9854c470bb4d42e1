import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roofbench.errors import DimensionError, PolynomialParseError
from roofbench.poly import PolyBatch, Polynomial, determinant, parse


def polys(nvars=2, max_terms=4, max_deg=3):
    term = st.tuples(st.tuples(*[st.integers(0, max_deg)] * nvars),
                     st.floats(-5, 5, allow_nan=False, allow_infinity=False))
    return st.lists(term, max_size=max_terms).map(lambda ts: Polynomial(nvars, dict(ts)))


points = st.tuples(st.floats(-2, 2), st.floats(-2, 2)).map(np.array)


def test_parse_and_eval():
    p = parse("x1^2 + x2^2 - 1", 2)
    assert p.eval([0.6, 0.8]) == pytest.approx(0.0, abs=1e-15)
    assert p.degree == 2
    q = Polynomial.parse("-0.5*x1^3*x2 + 2*x2^2", 2)
    assert q.eval([2.0, 3.0]) == pytest.approx(-0.5 * 8 * 3 + 18)


def test_parse_accepts_implicit_exponent_and_coefficient():
    assert parse("x1*x2", 2) == parse("1*x1^1*x2^1", 2)
    assert parse("3", 1) == Polynomial.constant(3.0, 1)
    assert parse("1e-3*x1", 1).terms == {(1,): 1e-3}


@pytest.mark.parametrize("text,token", [
    ("x1^2 + y^2", "y"),
    ("x1 $ x2", "$"),
    ("x3 + x1", "x3"),
    ("x1^", "<end>"),
    ("x1 x2", "x2"),
    ("x1^1.5", "1.5"),
])
def test_parse_errors_name_the_token(text, token):
    with pytest.raises(PolynomialParseError) as exc:
        parse(text, 2)
    assert exc.value.token == token
    assert token in str(exc.value)


def test_to_string_round_trip():
    p = parse("-0.25*x1^3*x2 + 7*x2^2 - 1e-7", 2)
    assert parse(p.to_string(), 2) == p
    assert Polynomial.zero(3).to_string() == "0"


def test_canonical_form_prunes_exact_zeros():
    p = parse("x1 - x1 + x2", 2)
    assert p.terms == {(0, 1): 1.0}
    assert (p - p).is_zero()


def test_diff_and_grad():
    p = parse("x1^3*x2 + 2*x2^2", 2)
    assert p.diff(0) == parse("3*x1^2*x2", 2)
    assert p.diff(1) == parse("x1^3 + 4*x2", 2)
    np.testing.assert_allclose(p.grad_at([1.0, 2.0]), [6.0, 9.0])
    with pytest.raises(DimensionError):
        p.diff(2)


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        parse("x1", 1) + parse("x1", 2)
    with pytest.raises(DimensionError):
        parse("x1", 2).eval([1.0])


def test_compose_and_affine():
    p = parse("x1^2 + x2", 2)
    t = Polynomial.variable(0, 1)
    q = p.compose([t + 1, 3 * t])
    assert q == parse("x1^2 + 5*x1 + 1", 1)
    A = np.array([[1.0], [3.0]])
    assert p.compose_affine(A, [1.0, 0.0]) == q


def test_extend_and_rename():
    p = parse("x1^2*x2", 2)
    assert p.extend(3).eval([2, 3, 100]) == pytest.approx(12)
    r = p.rename([2, 0], 3)
    assert r.eval([3.0, 0.0, 2.0]) == pytest.approx(12)


def test_pow():
    p = parse("x1 + 1", 1)
    assert p ** 3 == parse("x1^3 + 3*x1^2 + 3*x1 + 1", 1)
    with pytest.raises(ValueError):
        p ** -1


def test_determinant_matches_numeric():
    rng = np.random.default_rng(0)
    x1, x2 = Polynomial.variable(0, 2), Polynomial.variable(1, 2)
    entries = [[rng.normal() * x1 + rng.normal() * x2 ** 2 for _ in range(3)] for _ in range(3)]
    d = determinant(entries)
    x = np.array([0.3, -1.2])
    M = np.array([[e.eval(x) for e in row] for row in entries])
    assert d.eval(x) == pytest.approx(np.linalg.det(M), rel=1e-10)


def test_batch_matches_individual():
    ps = [parse("x1^2 + x2^2 - 1", 2), parse("x1^3", 2), Polynomial.zero(2)]
    pts = np.random.default_rng(1).normal(size=(5, 2))
    out = PolyBatch(ps)(pts)
    for i, p in enumerate(ps):
        np.testing.assert_allclose(out[:, i], p.eval_many(pts))


@settings(max_examples=60, deadline=None)
@given(polys(), polys(), points)
def test_ring_homomorphism(p, q, x):
    assert (p * q).eval(x) == pytest.approx(p.eval(x) * q.eval(x), rel=1e-9, abs=1e-9)
    assert (p + q).eval(x) == pytest.approx(p.eval(x) + q.eval(x), rel=1e-9, abs=1e-9)
    assert (p - p).is_zero()


@settings(max_examples=60, deadline=None)
@given(polys(), points)
def test_gradient_matches_finite_difference(p, x):
    h = 1e-6
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        fd = (p.eval(x + e) - p.eval(x - e)) / (2 * h)
        assert p.grad_at(x)[i] == pytest.approx(fd, rel=1e-5, abs=1e-5)


@settings(max_examples=40, deadline=None)
@given(polys())
def test_string_round_trip_property(p):
    assert parse(p.to_string(), 2) == p
