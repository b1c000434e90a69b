"""Acceptance criteria: exact identities at truncation order, with wall-clock budgets.

A summary line per criterion is printed at the end of the pytest run.
"""

import random
import time

from builders import (dense_compose, dense_terms, factorial_series, hyperplane, identity, invertible_map,
                      packaged_manifolds, product_model, product_model_map, quadric, rand_map, blowup_map,
                      blowup_source, blowup_target, series_terms, symbols, to_sympy, variables, HALF_OVER_I)
from crforge.jets import (compose_prolongations, expansion_first, expansion_second, identity_prolongation,
                          jet_of_map, multi_indices, prolong, prolong_two_blocks, universal_polynomials)
from crforge.manifolds import (GenericManifold, SegreTower, finite_type_check, holo_nondegeneracy_check,
                               segre_mapping)
from crforge.powerseries import Series, SeriesMap, compose, compose_map, invert_map, random_series
from crforge import reflection as rf


class Clock:
    def __init__(self):
        self.start = time.perf_counter()

    @property
    def seconds(self):
        return time.perf_counter() - self.start


def test_criterion_01_reality_identity():
    manifolds = packaged_manifolds(10)
    assert len(manifolds) >= 4
    for name, M in manifolds.items():
        clock = Clock()
        assert M.order == 10
        assert M.reality_identity_defect() is None, name
        assert clock.seconds < 1.0, (name, clock.seconds)


def test_criterion_02_segre_iteration_identity():
    for name, M in packaged_manifolds(8).items():
        clock = Clock()
        tower = SegreTower(segre_mapping(M))
        for j in range(4):
            residuals = tower.identity_residuals(j)
            assert residuals and all(r.is_zero() for r in residuals), (name, j)
            assert min(r.order for r in residuals) >= 1
        assert clock.seconds < 5.0, (name, clock.seconds)


def test_criterion_03_retraction_identity():
    for name, M in packaged_manifolds(8).items():
        clock = Clock()
        tower = SegreTower(segre_mapping(M))
        assert tower.segre.default
        for j in range(3):
            assert all(r.is_zero() for r in tower.retraction_residual(j)), (name, j)
            xi = tower.xi(j)
            nv = M.n * (j + 1)
            if j == 0:
                assert all(c.is_zero() for c in xi)
            else:
                block = [Series.variable(p, nv, M.order) for p in tower.t_block(j)]
                assert all(c.agrees_with(b) for c, b in zip(xi, block)), (name, j)
        assert clock.seconds < 1.0, (name, clock.seconds)


def test_criterion_04_jet_prolongation():
    clock = Clock()
    rng = random.Random(4)
    order = 5
    for case in range(50):
        k = rng.randint(1, 2)
        l = rng.randint(0, 2)
        r = rng.randint(1, 3)
        s = rng.randint(1, 3)
        phi = rand_map(rng, r, s, order, degree=3)
        F = rand_map(rng, k, r, order, degree=3)
        lhs = prolong(phi, l, k).evaluate(jet_of_map(F, l))
        rhs = jet_of_map(compose_map(phi, F), l)
        assert lhs.agrees_with(rhs), case
    assert clock.seconds < 10.0

    for case in range(10):
        n = rng.randint(1, 3)
        l = rng.randint(1, 2)
        k = rng.randint(1, 2)
        phi = invertible_map(rng, n, order)
        inv = invert_map(phi)
        forward, backward = prolong(phi, l, k), prolong(inv, l, k)
        ident = identity_prolongation(n, l, k, order)
        for composite in (compose_prolongations(backward, forward), compose_prolongations(forward, backward)):
            for nu in multi_indices(k, l):
                for got, want in zip(composite.components[nu], ident.components[nu]):
                    assert got.agrees_with(want, order - l - 1), (case, nu)
        F = rand_map(rng, k, n, order, degree=3)
        jet = jet_of_map(F, l)
        assert backward.evaluate(forward.evaluate(jet)).agrees_with(jet), case


def test_criterion_05_universal_polynomials():
    clock = Clock()
    for N in (1, 2, 3):
        for Np in (1, 2):
            for l in range(4):
                report = universal_polynomials(N, Np, l).identity_report()
                assert all(report.values()), (N, Np, l, report)
    Q = quadric(6)
    rho = Q.graph_generators()
    for l in range(3):
        first = expansion_first(rho, l, Q.N)
        second = expansion_second(rho, l, Q.N)
        direct = prolong_two_blocks(rho, l, Q.N)
        assert set(first) == set(second) == set(direct)
        for nu in first:
            for a, b, c in zip(first[nu], second[nu], direct[nu]):
                depth = 6 - 2 * l
                assert a.agrees_with(b, depth), (l, nu)
                assert a.agrees_with(c, depth), (l, nu)
    assert clock.seconds < 10.0


def _system_solved(M, H, kind, l, j, tilde):
    system = rf.build_system(M, M, H, kind, l, j, tilde=tilde)
    assert system.routes_agree().holds, (kind, l, j, tilde)
    return rf.check_jet_solution(system, M, H).holds


def test_criterion_06_jets_solve_systems():
    clock = Clock()
    order = 6
    Q = quadric(order)
    z, w = variables(2, order)
    quadric_map = SeriesMap([z * 2, w * 4])
    cases = [(Q, quadric_map), (product_model(order), product_model_map(order))]
    for M, H in cases:
        for l in (0, 1, 2):
            assert _system_solved(M, H, "phi", l, 0, False), (M.name, l)
            for j in (0, 1):
                for tilde in (False, True):
                    assert _system_solved(M, H, "psi", l, j, tilde), (M.name, l, j, tilde)
    assert clock.seconds < 30.0


def test_criterion_07_worked_examples():
    clock = Clock()
    order = 10
    R = product_model(order)
    H = product_model_map(order)
    assert rf.sends_into(R, R, H).holds
    assert rf.ideal_equal(R, H, identity(3, order)).holds
    assert rf.ideal_equal_by_membership(R, H, identity(3, order)).holds

    source, target, G = blowup_source(order), blowup_target(order), blowup_map(order)
    assert rf.sends_into(source, target, G).holds
    assert finite_type_check(source).finite
    assert holo_nondegeneracy_check(target).verdict == "nondegenerate"
    rank = rf.map_rank(G)
    assert rank.certificate["rank"] == 3
    assert rf.not_totally_degenerate(source, target, G).verdict == "certified"
    finite = rf.finite_map_check(G, order)
    assert finite.holds is False and finite.verdict == "not_finite_up_to_order"
    assert clock.seconds < 30.0


def _pullback_of_quadric(rng, order):
    """A finite self-map H of C^2 and M = H^{-1}(quadric), so H sends M into the quadric."""
    z, w = variables(2, order)
    m = rng.randint(1, 3)
    c = rng.choice((1, 2, 3, -1))
    f = z ** m + rand_map(rng, 2, 1, order, degree=3, density=0.3)[0] * z * w
    g = w * c + rand_map(rng, 2, 1, order, degree=3, density=0.3)[0] * w * w
    H = SeriesMap([f, g])
    zz, ww, chi, tau = variables(4, order)
    left = SeriesMap([compose(comp, [zz, ww]) for comp in H])
    right = SeriesMap([compose(comp.conj(), [chi, tau]) for comp in H])
    rho = (left[1] - right[1]) * HALF_OVER_I - left[0] * right[0]
    return GenericManifold.from_defining([rho], order, "pullback"), H


def test_criterion_08_finite_maps_have_full_rank():
    clock = Clock()
    rng = random.Random(8)
    order = 8
    Q = quadric(order)
    finite_seen = 0
    for case in range(20):
        M, H = _pullback_of_quadric(rng, order)
        assert rf.sends_into(M, Q, H).holds, case
        verdict = rf.finite_map_check(H, order)
        if verdict.holds:
            finite_seen += 1
            assert rf.map_rank(H).certificate["rank"] == 2, case
            assert rf.not_totally_degenerate(M, Q, H).verdict == "certified", case
    assert finite_seen == 20
    assert clock.seconds < 30.0


def _transfer_pairs(order):
    z, w = variables(2, order)
    Z1, Z2, Z3 = variables(3, order)
    rng = random.Random(9)
    R, P = product_model(order), hyperplane(order)
    pairs = []
    for p, q in [(factorial_series(order), None), (Z1 + Z2, Z3), (Z1 * Z3 * 3, -Z2 * Z2),
                 (Z2 * Z3, Z1 * Z1 * Z1), (Z3, Z1 * 2 + Z2)]:
        pairs.append((R, product_model_map(order, p), product_model_map(order, q) if q is not None
                      else identity(3, order)))
    for real in (True, True, True, False, False):
        g = w * 2 + w * w if real else w * w + w * HALF_OVER_I
        f1 = rand_map(rng, 2, 1, order, degree=3)[0]
        f2 = rand_map(rng, 2, 1, order, degree=3)[0]
        pairs.append((P, SeriesMap([f1, g]), SeriesMap([f2, g])))
    return pairs


def test_criterion_09_reflection_ideal_transfer():
    clock = Clock()
    order = 8
    pairs = _transfer_pairs(order)
    assert len(pairs) == 10
    transfers = 0
    for M, H, H_check in pairs:
        assert rf.ideal_equal(M, H, H_check).holds
        first = rf.sends_into(M, M, H).holds
        second = rf.sends_into(M, M, H_check).holds
        if first:
            transfers += 1
            assert second
        assert first == second
    assert transfers >= 8
    assert clock.seconds < 20.0


def test_criterion_10_key_identity():
    clock = Clock()
    order = 8
    R = product_model(order)
    H, H0 = product_model_map(order), identity(3, order)
    tower = SegreTower(segre_mapping(R))
    S = rf.map_jet_along(H0, 1, tower.v(1))
    verdict = rf.key_identity_check(R, R, H, S, 1, 0, H0=H0)
    assert verdict.holds is True, verdict
    assert verdict.certificate["comparison_with_H0"] is True
    assert clock.seconds < 30.0


def test_criterion_11_determination_experiment():
    clock = Clock()
    order = 10
    Q = quadric(order)
    report = rf.determination_experiment(Q, Q, identity(2, order), K=2, trials=100, seed=0)
    assert report.trials == 100
    assert report.nontrivial_survivors > 0
    assert report.counterexamples == []
    assert report.passes == report.survivors
    assert report.verdict == "pass"
    assert all(a >= report.margin for a in report.agreement_orders)
    assert all(c >= report.margin for c in report.conclusion_orders)
    assert clock.seconds < 120.0


def test_criterion_12_dense_oracle():
    clock = Clock()
    rng = random.Random(12)
    for case in range(200):
        n = rng.randint(1, 3)
        order = rng.randint(1, 6)
        a = random_series(rng, n, order, density=0.5)
        b = random_series(rng, n, order, density=0.5)
        op = case % 4
        xs = symbols(n)
        if op == 0:
            got, want = a + b, dense_terms(to_sympy(a, xs) + to_sympy(b, xs), xs, order)
        elif op == 1:
            got, want = a - b * 3, dense_terms(to_sympy(a, xs) - 3 * to_sympy(b, xs), xs, order)
        elif op == 2:
            got, want = a * b, dense_terms(to_sympy(a, xs) * to_sympy(b, xs), xs, order)
        else:
            m = rng.randint(1, 3)
            inner = [random_series(rng, m, order, degree=3, constant=False, density=0.5) for _ in range(n)]
            got, want = compose(a, inner), dense_compose(a, inner, order)
        assert series_terms(got) == want, case
    assert clock.seconds < 30.0
