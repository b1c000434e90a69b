import random

import pytest
from hypothesis import given, settings, strategies as st

from builders import HALF_OVER_I, hyperplane, product_model, quadric, blowup_target, variables
from crforge.manifolds import (GenericManifold, ManifoldError, SegreTower, apply_field, bracket, cr_vector_fields,
                               field_tangency, field_value_at_zero, finite_type_check, holo_nondegeneracy_check,
                               segre_identity_residuals, segre_mapping)
from crforge.powerseries import GaussianRational, Series, VariableSplit, random_series, sigma_conjugate

settings.register_profile("manifolds", max_examples=25, deadline=None)
settings.load_profile("manifolds")


def random_real_hypersurface(seed: int, N: int = 2, order: int = 6) -> GenericManifold:
    """Im w = psi with psi = P + sigma(P) of degree >= 2, so the defining series is real."""
    rng = random.Random(seed)
    P = random_series(rng, 2 * N, order, degree=3, density=0.25, min_degree=2, constant=False)
    psi = P + sigma_conjugate(P, VariableSplit.of(Z=N, zeta=N))
    Zs = variables(2 * N, order)
    w, tau = Zs[N - 1], Zs[2 * N - 1]
    return GenericManifold.from_defining([(w - tau) * HALF_OVER_I - psi], order, f"random{seed}")


# -- construction ------------------------------------------------------------

def test_quadric_normal_form():
    Q = quadric(6)
    assert (Q.N, Q.d, Q.n) == (2, 1, 1)
    assert Q.w_idx == (1,) and Q.z_idx == (0,)
    # w = tau + 2i z chi
    expected = Series.from_terms({(0, 0, 1): 1, (1, 1, 0): (0, 2)}, 3, 6)
    assert Q.Q[0] == expected
    # tau = w - 2i chi z in variables (chi, z, w)
    assert Q.Qbar[0] == Series.from_terms({(0, 0, 1): 1, (1, 1, 0): (0, -2)}, 3, 6)


def test_graph_and_conjugate_generators_vanish_on_the_manifold():
    M = blowup_target(6)
    for g in M.graph_generators() + M.conjugate_generators():
        assert M.restrict(g).is_zero()


def test_non_generic_ideal_is_rejected():
    z, w, chi, tau = variables(4, 4)
    with pytest.raises(ManifoldError, match="not generic"):
        GenericManifold.from_defining([chi + tau], 4)


def test_non_real_ideal_is_rejected():
    z, w, chi, tau = variables(4, 4)
    with pytest.raises(ManifoldError, match="not real"):
        GenericManifold.from_defining([w - tau * 2], 4)
    with pytest.raises(ManifoldError, match="not real"):
        GenericManifold.from_defining([w - z * chi], 4)


def test_singular_differentials_are_rejected():
    z, w, chi, tau = variables(4, 4)
    with pytest.raises(ManifoldError):
        GenericManifold.from_defining([z * z + chi * chi], 4)
    with pytest.raises(ManifoldError):
        GenericManifold.from_defining([w - tau, (w - tau) * 2], 4)


def test_order_cannot_be_raised():
    with pytest.raises(ValueError):
        quadric(4).with_order(5)


def test_from_graph_checks_reality():
    z, zeta1, zeta2 = variables(3, 4)
    good = zeta2 + z * zeta1 * GaussianRational(0, 2)
    assert GenericManifold.from_graph([good], 2).reality_identity_defect() is None
    with pytest.raises(ManifoldError):
        GenericManifold.from_graph([zeta2 + z * zeta1], 2)


@given(st.integers(0, 10_000))
def test_random_real_manifolds_satisfy_reality_identity(seed):
    M = random_real_hypersurface(seed)
    assert M.reality_identity_defect() is None


def test_qbar_expansion_reassembles():
    M = blowup_target(6)
    n, N = M.n, M.N
    total = Series.zero(n + N, 6)
    for alpha, comps in M.qbar_expansion().items():
        mono = Series.from_terms({tuple(alpha) + (0,) * N: 1}, n + N, 6)
        total = total + mono * comps[0].embed(n + N, list(range(n, n + N)))
    assert total.agrees_with(M.Qbar[0])
    assert total.order >= 4


# -- Segre mappings -------------------------------------------------------------

@given(st.integers(0, 10_000))
def test_segre_identities_on_random_manifolds(seed):
    M = random_real_hypersurface(seed, order=5)
    tower = SegreTower(segre_mapping(M))
    for j in range(3):
        assert all(r.is_zero() for r in tower.identity_residuals(j))
    for j in range(2):
        assert all(r.is_zero() for r in tower.retraction_residual(j))


def test_non_default_segre_mapping():
    M = product_model(6)
    N, n = M.N, M.n
    nv = N + n
    zetas = variables(nv, 6)[:N]
    ts = variables(nv, 6)[N:]
    mu = [ts[0] + ts[0] * zetas[0] * 3 + ts[1] * ts[1], ts[1] - ts[0] * ts[1] + zetas[2] * ts[0]]
    S = segre_mapping(M, mu)
    assert not S.default
    assert all(r.is_zero() for r in segre_identity_residuals(S))
    tower = SegreTower(S)
    for j in range(2):
        assert all(r.is_zero() for r in tower.identity_residuals(j))
        assert all(r.is_zero() for r in tower.retraction_residual(j))


def test_segre_mapping_rejects_degenerate_parametrization():
    M = quadric(4)
    zeta1, zeta2, t = variables(3, 4)
    with pytest.raises(ValueError):
        segre_mapping(M, [t * t])


def test_iterated_segre_levels_grow():
    tower = SegreTower(segre_mapping(quadric(6)))
    assert tower.v(0)[0].nvars == 0
    for j in (1, 2, 3):
        assert tower.v(j).nvars == j
    # under the default mapping the z-coordinate of v^2 is its newest parameter
    assert tower.v(2)[0] == Series.variable(1, 2, 6)


# -- finite type ---------------------------------------------------------------

@pytest.mark.parametrize("builder,finite", [(quadric, True), (product_model, True), (blowup_target, True),
                                            (hyperplane, False)])
def test_finite_type_routes_agree(builder, finite):
    result = finite_type_check(builder(6))
    assert result.finite is finite
    assert result.agree is True


def test_quadric_is_reached_at_second_segre_level():
    result = finite_type_check(quadric(6))
    assert result.segre["j0"] == 2


def test_brackets_of_cr_fields_reach_the_transversal_direction():
    Q = quadric(6)
    fields = cr_vector_fields(Q)
    L, Lbar = fields["basis_10"][0], fields["basis_01"][0]
    T = bracket(L, Lbar)
    values = field_value_at_zero(T)
    assert not all(v.is_zero() for v in values)
    assert all(field_tangency(Q, L))
    assert all(field_tangency(Q, Lbar))


def test_product_with_line_keeps_finite_type():
    M = quadric(6).product_with_line()
    assert M.N == 3 and M.d == 1
    assert M.reality_identity_defect() is None
    assert finite_type_check(M).finite


@given(st.integers(0, 10_000))
def test_finite_type_routes_agree_on_random_manifolds(seed):
    result = finite_type_check(random_real_hypersurface(seed, order=5))
    assert result.agree in (True, None)


# -- holomorphic nondegeneracy -------------------------------------------------------

@pytest.mark.parametrize("builder", [quadric, blowup_target])
def test_nondegenerate_examples(builder):
    result = holo_nondegeneracy_check(builder(6))
    assert result.verdict == "nondegenerate"
    assert not result.determinant.is_zero()


@pytest.mark.parametrize("builder", [hyperplane, lambda k: quadric(k).product_with_line(),
                                     product_model])
def test_degenerate_examples_produce_tangent_fields(builder):
    M = builder(6)
    result = holo_nondegeneracy_check(M)
    assert result.verdict == "degenerate_to_order"
    X = result.vector_field
    assert any(not c.is_zero() for c in X)
    for comps in M.qbar_expansion().values():
        for q in comps:
            if q.order < 1:
                continue
            image = Series.zero(M.N, q.order - 1)
            for m, a in enumerate(X):
                image = image + a.truncate(q.order - 1) * q.d(m)
            assert image.is_zero()


def test_apply_field_is_a_derivation():
    Q = quadric(5)
    L = cr_vector_fields(Q)["basis_10"][0]
    f, g = variables(4, 5)[0], variables(4, 5)[3]
    assert apply_field(L, f * g) == apply_field(L, f) * g + f * apply_field(L, g)
