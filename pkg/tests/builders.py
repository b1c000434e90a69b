"""Shared constructions for the test suite: model manifolds, maps and a dense oracle."""

from __future__ import annotations

import random
from fractions import Fraction
from math import factorial
from typing import Dict, List, Sequence, Tuple

import sympy
from gmpy2 import mpq

from crforge.cli import fixture_names, fixture_text
from crforge.manifest import parse_manifest
from crforge.manifolds import GenericManifold
from crforge.powerseries import GaussianRational, Series, SeriesMap, monomials

# 1/(2i), so that (w - tau) * HALF_OVER_I is Im w on the complexification
HALF_OVER_I = GaussianRational(0, mpq(-1, 2))


def variables(n: int, order: int) -> List[Series]:
    return [Series.variable(j, n, order) for j in range(n)]


def quadric(order: int) -> GenericManifold:
    z, w, chi, tau = variables(4, order)
    return GenericManifold.from_defining([(w - tau) * HALF_OVER_I - z * chi], order, "quadric")


def hyperplane(order: int) -> GenericManifold:
    z, w, chi, tau = variables(4, order)
    return GenericManifold.from_defining([(w - tau) * HALF_OVER_I], order, "hyperplane")


def product_model(order: int) -> GenericManifold:
    """Im Z3 = |Z1 Z2|^2."""
    Z1, Z2, Z3, c1, c2, c3 = variables(6, order)
    return GenericManifold.from_defining([(Z3 - c3) * HALF_OVER_I - Z1 * Z2 * c1 * c2], order, "product")


def blowup_source(order: int) -> GenericManifold:
    """Im Z3 = |Z1^2 Z2|^2 + |Z1|^2."""
    Z1, Z2, Z3, c1, c2, c3 = variables(6, order)
    rho = (Z3 - c3) * HALF_OVER_I - Z1 * Z1 * Z2 * c1 * c1 * c2 - Z1 * c1
    return GenericManifold.from_defining([rho], order, "source")


def blowup_target(order: int) -> GenericManifold:
    """Im Z3 = |Z1 Z2|^2 + |Z1|^2."""
    Z1, Z2, Z3, c1, c2, c3 = variables(6, order)
    rho = (Z3 - c3) * HALF_OVER_I - Z1 * Z2 * c1 * c2 - Z1 * c1
    return GenericManifold.from_defining([rho], order, "target")


def factorial_series(order: int, nvars: int = 3) -> Series:
    """sum_{n >= 1} n! Z1^n, a divergent series, truncated."""
    terms = {}
    for n in range(1, order + 1):
        e = [0] * nvars
        e[0] = n
        terms[tuple(e)] = factorial(n)
    return Series.from_terms(terms, nvars, order)


def product_model_map(order: int, p: Series = None) -> SeriesMap:
    """(Z1 exp(p), Z2 exp(-p), Z3) preserves the product model for every p with p(0) = 0."""
    Z1, Z2, Z3 = variables(3, order)
    p = factorial_series(order) if p is None else p
    return SeriesMap([Z1 * p.exp(), Z2 * (-p).exp(), Z3])


def blowup_map(order: int) -> SeriesMap:
    Z1, Z2, Z3 = variables(3, order)
    return SeriesMap([Z1, Z1 * Z2, Z3])


def identity(n: int, order: int) -> SeriesMap:
    return SeriesMap.identity(n, order)


def packaged_manifolds(order: int) -> Dict[str, GenericManifold]:
    """Every manifold declared in the packaged fixture manifests."""
    out = {}
    for fixture in fixture_names():
        manifest = parse_manifest(fixture_text(fixture))
        for decl in manifest.decls:
            if type(decl).__name__ == "ManifoldDecl":
                out[f"{fixture}:{decl.name}"] = manifest.manifold(decl.name, order)
    return out


def rand_map(rng: random.Random, nsource: int, ntarget: int, order: int, degree: int = None,
             density: float = 0.5) -> SeriesMap:
    """Random map fixing the origin with small Gaussian-rational coefficients."""
    degree = order if degree is None else degree
    comps = []
    for _ in range(ntarget):
        terms = {}
        for e in monomials(nsource, degree, 1):
            if rng.random() < density:
                terms[e] = (Fraction(rng.randint(-4, 4), rng.randint(1, 3)),
                            Fraction(rng.randint(-4, 4), rng.randint(1, 3)))
        comps.append(Series.from_terms(terms, nsource, order))
    return SeriesMap(comps)


def invertible_map(rng: random.Random, n: int, order: int, degree: int = 3) -> SeriesMap:
    """Lower-triangular integer linear part with nonzero diagonal plus random higher terms."""
    linear = [[0] * n for _ in range(n)]
    for i in range(n):
        linear[i][i] = rng.choice((1, -1, 2))
        for j in range(i):
            linear[i][j] = rng.randint(-2, 2)
    base = SeriesMap.linear(linear, order)
    extra = rand_map(rng, n, n, order, degree)
    return SeriesMap([b + e - _linear_part(e) for b, e in zip(base, extra)])


def _linear_part(s: Series) -> Series:
    return Series(s.nvars, s.order, dict(s.homogeneous_part(1).raw_items()))


# ---------------------------------------------------------------------------
# dense oracle (sympy)

def symbols(n: int):
    return sympy.symbols(f"x0:{n}")


def to_sympy(s: Series, xs) -> sympy.Expr:
    expr = sympy.Integer(0)
    for exps, c in s.terms():
        coef = sympy.Rational(int(c.re.numerator), int(c.re.denominator)) + \
            sympy.I * sympy.Rational(int(c.im.numerator), int(c.im.denominator))
        mono = sympy.Integer(1)
        for x, e in zip(xs, exps):
            mono *= x ** e
        expr += coef * mono
    return expr


def dense_terms(expr, xs, order: int) -> Dict[Tuple[int, ...], Tuple[Fraction, Fraction]]:
    """Coefficients of total degree <= order, as exact (re, im) pairs."""
    poly = sympy.Poly(sympy.expand(expr), *xs, domain="QQ_I")
    out = {}
    for exps, c in poly.terms():
        if sum(exps) > order:
            continue
        c = sympy.sympify(c)
        re, im = sympy.re(c), sympy.im(c)
        pair = (Fraction(int(re.p), int(re.q)), Fraction(int(im.p), int(im.q)))
        if pair != (0, 0):
            out[tuple(exps)] = pair
    return out


def series_terms(s: Series) -> Dict[Tuple[int, ...], Tuple[Fraction, Fraction]]:
    return {e: (Fraction(int(c.re.numerator), int(c.re.denominator)),
                Fraction(int(c.im.numerator), int(c.im.denominator))) for e, c in s.terms()}


def truncate_poly(poly: sympy.Poly, order: int) -> sympy.Poly:
    gens = poly.gens
    kept = {e: c for e, c in poly.terms() if sum(e) <= order}
    return sympy.Poly.from_dict(kept, *gens, domain=poly.domain) if kept else sympy.Poly(0, *gens, domain=poly.domain)


def dense_compose(f: Series, inner: Sequence[Series], order: int):
    """Brute-force truncated composition with dense sympy polynomials."""
    n_out = inner[0].nvars
    ys = symbols(n_out)
    g = [truncate_poly(sympy.Poly(to_sympy(s, ys) + 0 * ys[0], *ys, domain="QQ_I"), order) for s in inner]
    total = sympy.Poly(0, *ys, domain="QQ_I")
    for exps, c in series_terms(f).items():
        term = sympy.Poly(sympy.Rational(c[0].numerator, c[0].denominator)
                          + sympy.I * sympy.Rational(c[1].numerator, c[1].denominator) + 0 * ys[0],
                          *ys, domain="QQ_I")
        for gi, e in zip(g, exps):
            for _ in range(e):
                term = truncate_poly(term * gi, order)
        total = total + term
    return dense_terms(total.as_expr(), ys, order)
