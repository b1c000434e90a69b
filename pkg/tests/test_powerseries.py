import math
import random
from fractions import Fraction

import pytest
import sympy
from hypothesis import given, settings, strategies as st

from builders import dense_terms, series_terms, symbols, to_sympy
from crforge.powerseries import (GaussianRational, Series, SeriesMap, VariableSplit, compose, compose_map,
                                 determinant, generic_rank, ideal_membership, implicit_solve, invert_map,
                                 monomials, pack, random_series, sigma_conjugate, standard_monomials, unpack)

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

small = st.fractions(min_value=-5, max_value=5, max_denominator=4)


@st.composite
def series(draw, nvars=None, order=None, constant=True):
    n = draw(st.integers(1, 3)) if nvars is None else nvars
    k = draw(st.integers(0, 5)) if order is None else order
    monos = monomials(n, k, 0 if constant else 1)
    chosen = draw(st.lists(st.sampled_from(monos), max_size=8)) if monos else []
    terms = {e: (draw(small), draw(small)) for e in chosen}
    return Series.from_terms(terms, n, k)


@st.composite
def same_ring(draw, count=3, constant=True):
    n = draw(st.integers(1, 3))
    k = draw(st.integers(0, 5))
    return [draw(series(n, k, constant)) for _ in range(count)]


# -- Gaussian rationals ---------------------------------------------------------

@pytest.mark.parametrize("text,value", [("3", (3, 0)), ("-i", (0, -1)), ("1/2*i", (0, Fraction(1, 2))),
                                         ("2-3/4i", (2, Fraction(-3, 4))), ("-5/3+i", (Fraction(-5, 3), 1))])
def test_gaussian_parse(text, value):
    assert GaussianRational.parse(text) == GaussianRational(*value)


@given(small, small)
def test_gaussian_text_round_trip(re, im):
    g = GaussianRational(re, im)
    assert GaussianRational.parse(str(g)) == g


@given(small, small, small, small)
def test_gaussian_division_inverts_multiplication(a, b, c, d):
    x, y = GaussianRational(a, b), GaussianRational(c, d)
    if not y.is_zero():
        assert (x * y) / y == x


def test_gaussian_rejects_garbage():
    with pytest.raises(ValueError):
        GaussianRational.parse("1+*")


# -- packing --------------------------------------------------------------------

@given(st.lists(st.integers(0, 20), min_size=1, max_size=5))
def test_pack_round_trip(exps):
    assert unpack(pack(exps), len(exps)) == tuple(exps)


def test_pack_orders_by_degree():
    keys = sorted(pack(e) for e in monomials(3, 4))
    degrees = [sum(unpack(k, 3)) for k in keys]
    assert degrees == sorted(degrees)


# -- ring structure -------------------------------------------------------------

@given(same_ring())
def test_ring_axioms(triple):
    a, b, c = triple
    assert a + b == b + a
    assert a * b == b * a
    assert (a * b) * c == a * (b * c)
    assert a * (b + c) == a * b + a * c
    assert a - a == Series.zero(a.nvars, a.order)


@given(series(), st.integers(0, 5))
def test_truncation_takes_minimum_order(s, other_order):
    t = Series.constant(1, s.nvars, other_order)
    assert (s * t).order == min(s.order, other_order)
    assert (s + t).order == min(s.order, other_order)


def test_coefficient_beyond_order_is_unknown():
    s = Series.variable(0, 2, 3)
    with pytest.raises(ValueError):
        s.coefficient((4, 0))


@given(series())
def test_unit_inverse(s):
    u = s + 1 if s.constant_term().is_zero() else s
    if u.constant_term().is_zero():
        return
    assert u * u.inverse() == Series.constant(1, u.nvars, u.order)


def test_inverse_requires_unit():
    with pytest.raises(ZeroDivisionError):
        Series.variable(0, 1, 3).inverse()


@given(same_ring(count=2, constant=False))
def test_exp_is_a_homomorphism(pair):
    a, b = pair
    assert (a + b).exp() == a.exp() * b.exp()


def test_exp_of_variable_matches_factorials():
    e = Series.variable(0, 1, 6).exp()
    for n in range(7):
        assert e.coefficient((n,)) == GaussianRational(Fraction(1, math.factorial(n)))


@given(series(), st.integers(0, 4))
def test_power_matches_repeated_product(s, e):
    expected = Series.constant(1, s.nvars, s.order)
    for _ in range(e):
        expected = expected * s
    assert s ** e == expected


# -- calculus and composition ------------------------------------------------------

@given(series(order=5), st.data())
def test_derivative_matches_dense_oracle(s, data):
    xs = symbols(s.nvars)
    times = tuple(data.draw(st.integers(0, 2)) for _ in range(s.nvars))
    if sum(times) > s.order:
        return
    expr = to_sympy(s, xs)
    for x, t in zip(xs, times):
        if t:
            expr = sympy.diff(expr, x, t)
    got = s.differentiate(times)
    assert got.order == s.order - sum(times)
    assert series_terms(got) == dense_terms(expr, xs, got.order)


@given(same_ring(count=2))
def test_product_matches_dense_oracle(pair):
    a, b = pair
    xs = symbols(a.nvars)
    assert series_terms(a * b) == dense_terms(to_sympy(a, xs) * to_sympy(b, xs), xs, a.order)


@given(st.data())
def test_composition_is_associative(data):
    k = data.draw(st.integers(1, 4))
    f = data.draw(series(2, k))
    g = [data.draw(series(2, k, constant=False)) for _ in range(2)]
    h = [data.draw(series(1, k, constant=False)) for _ in range(2)]
    left = compose(compose(f, g), h)
    right = compose(f, compose_map(g, h))
    assert left == right


def test_composition_requires_inner_map_fixing_origin():
    f = Series.variable(0, 1, 3)
    inner = [Series.constant(1, 1, 3) + Series.variable(0, 1, 3)]
    with pytest.raises(ValueError):
        compose(f, inner)


@given(st.integers(0, 10_000))
def test_invert_map_round_trip(seed):
    rng = random.Random(seed)
    n, k = rng.randint(1, 3), 5
    linear = [[1 if i == j else rng.randint(-1, 1) * (i > j) for j in range(n)] for i in range(n)]
    base = SeriesMap.linear(linear, k)
    comps = [b + random_series(rng, n, k, min_degree=2) for b in base]
    F = SeriesMap(comps)
    G = invert_map(F)
    assert compose_map(F, G) == SeriesMap.identity(n, k)
    assert compose_map(G, F) == SeriesMap.identity(n, k)


def test_invert_map_rejects_singular_linear_part():
    x, y = Series.variable(0, 2, 3), Series.variable(1, 2, 3)
    with pytest.raises(ValueError):
        invert_map([x + y, x + y])


@given(st.integers(0, 10_000))
def test_implicit_solution_satisfies_equation(seed):
    rng = random.Random(seed)
    k = 5
    x, y = Series.variable(0, 2, k), Series.variable(1, 2, k)
    rho = y * rng.choice((1, 2, -3)) + random_series(rng, 2, k, min_degree=2) + x * rng.randint(-2, 2)
    u = implicit_solve([rho], [1])
    assert compose(rho, [Series.variable(0, 1, k), u[0]]).is_zero()


def test_implicit_solve_needs_invertible_block():
    x, y = Series.variable(0, 2, 3), Series.variable(1, 2, 3)
    with pytest.raises(ValueError):
        implicit_solve([x + y * y], [1])


# -- conjugation ---------------------------------------------------------------

@given(series(nvars=2))
def test_sigma_conjugate_is_an_involution(s):
    split = VariableSplit.of(Z=1, zeta=1)
    assert sigma_conjugate(sigma_conjugate(s, split), split) == s


def test_sigma_conjugate_swaps_and_conjugates():
    z, zeta = Series.variable(0, 2, 3), Series.variable(1, 2, 3)
    s = z * zeta * zeta * GaussianRational(1, 2)
    assert sigma_conjugate(s, first=[0], second=[1]) == zeta * z * z * GaussianRational(1, -2)


# -- determinants, rank, ideals ----------------------------------------------------

def test_determinant_matches_dense_oracle():
    rng = random.Random(3)
    for _ in range(5):
        m = [[random_series(rng, 2, 3) for _ in range(3)] for _ in range(3)]
        xs = symbols(2)
        dense = sympy.Matrix([[to_sympy(e, xs) for e in row] for row in m]).det()
        assert series_terms(determinant(m)) == dense_terms(dense, xs, 3)


def test_rank_of_jacobian_examples():
    x, y = Series.variable(0, 2, 6), Series.variable(1, 2, 6)
    # the Jacobian of (x^2, x y) has determinant 2 x^2, so the generic rank is 2
    assert generic_rank([x * x, x * y]).rank == 2
    assert generic_rank([x * x, x * x * x]).rank == 1
    assert generic_rank([x + y, (x + y) ** 2]).rank == 1
    curve = generic_rank([x * x, x * y], method="curve")
    assert curve.rank == 2


@given(same_ring(count=3, constant=True))
def test_combinations_are_members(gens):
    a, b, c = gens
    x = Series.variable(0, a.nvars, a.order)
    f = a * x + b * (x * x)
    result = ideal_membership(f, [x, x * x])
    assert result.member
    total = sum((w * g for w, g in zip(result.witness, [x, x * x])), Series.zero(a.nvars, a.order))
    assert total == f
    del c


def test_non_member_reports_degree():
    x, y = Series.variable(0, 2, 5), Series.variable(1, 2, 5)
    result = ideal_membership(y * y + x * x * x, [x * x, x * y])
    assert not result.member
    assert result.obstruction_degree == 2


def test_standard_monomials_of_fold_map():
    z1, z2 = Series.variable(0, 2, 6), Series.variable(1, 2, 6)
    assert standard_monomials([z1 * z1, z2], 6) == [(0, 0), (1, 0)]


def test_pretty_is_stable():
    z = Series.variable(0, 2, 3)
    s = z * GaussianRational(1, 2) + z * z
    assert s.pretty() == s.pretty()
    assert "x1" in s.pretty()
