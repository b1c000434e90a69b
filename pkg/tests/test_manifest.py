import pytest
from hypothesis import given, settings, strategies as st

from builders import product_model, quadric
from crforge.cli import fixture_names, fixture_text
from crforge.manifest import (Abs2, Bin, Call, Imag, ManifestError, Neg, Num, Pow, Var, parse_expression,
                              parse_manifest, render, render_expr)
from crforge.powerseries import Series

settings.register_profile("manifest", max_examples=150, deadline=None)
settings.load_profile("manifest")


def test_parses_the_documented_example():
    m = parse_manifest("""
        order 8
        manifold M dim 3 codim 1 vars (Z1, Z2, Z3) { Im(Z3) - |Z1*Z2|^2 }
        series h = Z1 + 2*Z1^2
        map H : M -> M { Z1*exp(h), Z2*exp(-h), Z3 }
    """)
    assert m.order == 8
    assert m.manifold("M").Q == product_model(8).Q
    H = m.map("H")
    z1 = Series.variable(0, 3, 8)
    assert H[0] == z1 * (z1 + z1 * z1 * 2).exp()
    assert m.map_ends["H"] == ("M", "M")


def test_quadric_text_matches_builder():
    m = parse_manifest("order 6\nmanifold Q dim 2 codim 1 vars (z, w) { Im(w) - |z|^2 }")
    assert m.manifold().Q == quadric(6).Q


def test_complexified_form_matches_real_form():
    real = parse_manifest("order 5\nmanifold Q dim 2 codim 1 vars (z, w) { Im(w) - |z|^2 }")
    cplx = parse_manifest("order 5\nmanifold Q dim 2 codim 1 vars (z, w) complexified (chi, tau) "
                          "{ (w - tau) / (2 * i) - z * chi }")
    assert real.manifold().Q == cplx.manifold().Q


def test_order_argument_is_a_default_only():
    text = "manifold Q dim 2 codim 1 vars (z, w) { Im(w) - |z|^2 }"
    assert parse_manifest(text, order=4).order == 4
    assert parse_manifest("order 3\n" + text, order=9).order == 3
    with pytest.raises(ManifestError, match="no 'order'"):
        parse_manifest(text)


@pytest.mark.parametrize("text,line,col", [
    ("order 4\nmanifold M dim 2 codim 1 vars (z, w) { Im(w) - |z|^3 }", 2, 52),
    ("order 4\nmanifold M dim 2 codim 1 vars (z, w) { Im(w) - $ }", 2, 48),
    ("order 4\nmanifold M dim 2 codim 1 vars (z, w) { Im(w) - q }", 2, 48),
    ("order 4\n\nmanifold M dim 2 codim 1 { Im(w) }\nmap F : M -> M { z, w + 1 }", 3, 1),
    ("order 4\nmanifold M dim 2 codim 1 vars (z, w) { Im(w) }\n\nmap F : M -> M { z, w + 1 }", 4, 1),
    ("order 4\nmanifold M dim 2 codim 1 vars (z, w) { Im(w) }\nmap F : M -> N { z, w }", 3, 1),
    ("order 4 order 5", 1, 9),
    ("order 4\nmanifold M dim 2 codim 1 vars (z, w) { Im(w) }\nmap F : M -> M { z, conj(w) }", 3, 21),
])
def test_errors_carry_line_and_column(text, line, col):
    with pytest.raises(ManifestError) as info:
        parse_manifest(text)
    assert (info.value.line, info.value.col) == (line, col), info.value
    assert f"line {line}, column {col}" in str(info.value)


def test_conjugation_is_forbidden_in_maps_and_series_used_by_maps():
    text = ("order 4\nmanifold M dim 2 codim 1 vars (z, w) { Im(w) - |z|^2 }\n"
            "series s = |z|^2\nmap F : M -> M { z, w + s }")
    with pytest.raises(ManifestError, match="holomorphic"):
        parse_manifest(text)


@pytest.mark.parametrize("body,message", [
    ("manifold M dim 2 codim 2 vars (z, w) { Im(w) }", "defining expressions"),
    ("manifold M dim 3 codim 1 vars (z, w) { Im(w) }", "coordinates for dim"),
    ("manifold M dim 2 codim 1 vars (z, i) { Im(i) }", "imaginary unit"),
    ("manifold M dim 2 codim 1 vars (z, w) { Im(w) }\nmanifold M dim 2 codim 1 vars (z, w) { Im(w) }", "duplicate"),
    ("manifold M dim 2 codim 1 vars (z, w) { Im(w) }\nmap F : M -> M { z }", "components"),
    ("manifold M dim 2 codim 1 vars (z, w) { Im(w) }\nmap F : M -> M { z, exp(w + 1) - 1 }", "exp needs"),
    ("manifold M dim 2 codim 1 vars (z, w) { Im(w) }\nmap F : M -> M { z, w / z }", "division"),
    ("series s = s + 1\nmanifold M dim 2 codim 1 vars (z, w) { Im(w) + s - 1 }", "itself"),
])
def test_semantic_errors(body, message):
    with pytest.raises(ManifestError, match=message):
        parse_manifest("order 3\n" + body)


def test_order_must_be_positive():
    with pytest.raises(ManifestError, match="at least 1"):
        parse_manifest("order 0\nmanifold M dim 2 codim 1 vars (z, w) { Im(w) }")


def test_requested_order_cannot_exceed_manifest_order():
    m = parse_manifest(fixture_text("quadric"))
    assert m.manifold("Q", 6).order == 6
    assert m.map("A", 6).order == 6
    with pytest.raises(ManifestError, match="exceeds"):
        m.manifold("Q", 11)
    with pytest.raises(ManifestError, match="exceeds"):
        m.map("A", 11)


def test_lenient_mode_defers_manifold_errors():
    text = ("order 4\nmanifold B dim 2 codim 1 vars (z, w) { |z|^2 + |w|^2 }\n"
            "manifold Q dim 2 codim 1 vars (z, w) { Im(w) - |z|^2 }\nmap F : B -> Q { z, w }")
    with pytest.raises(ManifestError, match="manifold B"):
        parse_manifest(text)
    m = parse_manifest(text, strict=False)
    assert set(m.errors) == {"B", "F"}
    assert m.manifold("Q").N == 2
    with pytest.raises(ManifestError) as info:
        m.manifold("B")
    assert info.value.line == 2
    with pytest.raises(ManifestError, match="invalid"):
        m.map("F")


def test_unknown_names():
    m = parse_manifest(fixture_text("quadric"))
    with pytest.raises(ManifestError, match="unknown manifold"):
        m.manifold("X")
    with pytest.raises(ManifestError, match="unknown map"):
        m.map("X")
    with pytest.raises(ManifestError, match="unknown name"):
        m.declaration("X")


# -- variable inference -----------------------------------------------------------------

def test_default_coordinates_are_inferred():
    m = parse_manifest("order 4\nmanifold M dim 3 codim 1 { Im(Z3) - |Z1|^2 }")
    assert m.declaration("M").variables == ("Z1", "Z2", "Z3")


def test_custom_coordinates_are_inferred_when_all_appear():
    m = parse_manifest("order 4\nmanifold M dim 2 codim 1 { Im(w) - |z|^2 }")
    # transversal names starting with w sort last
    assert m.declaration("M").variables == ("z", "w")
    assert m.manifold().Q == quadric(4).Q


def test_inference_fails_when_coordinates_are_missing():
    with pytest.raises(ManifestError, match="declare vars"):
        parse_manifest("order 4\nmanifold M dim 3 codim 1 { Im(w) - |z|^2 }")


# -- rendering ----------------------------------------------------------------------------

@pytest.mark.parametrize("name", fixture_names())
def test_fixtures_round_trip(name):
    m = parse_manifest(fixture_text(name))
    again = parse_manifest(render(m))
    assert again == m
    assert render(again) == render(m)
    for key in m.manifolds:
        assert again.manifolds[key].Q == m.manifolds[key].Q
    for key in m.maps:
        assert again.maps[key] == m.maps[key]


def expressions():
    leaves = st.one_of(st.integers(0, 30).map(Num), st.just(Imag()), st.sampled_from(["Z1", "Z2", "w"]).map(Var))

    def extend(inner):
        return st.one_of(
            st.builds(Bin, st.sampled_from("+-*/"), inner, inner),
            st.builds(Neg, inner),
            st.builds(Pow, inner, st.integers(0, 4)),
            st.builds(Abs2, inner),
            st.builds(Call, st.sampled_from(["Im", "Re", "conj", "exp"]), inner),
        )

    return st.recursive(leaves, extend, max_leaves=12)


@given(expressions())
def test_expression_render_parse_round_trip(expr):
    text = render_expr(expr)
    assert parse_expression(text) == expr, text


def test_parse_expression_rejects_trailing_input():
    with pytest.raises(ManifestError, match="after expression"):
        parse_expression("z + 1 )")


def test_comments_and_trailing_commas_are_accepted():
    m = parse_manifest("# header\norder 3  # inline\nmanifold M dim 2 codim 1 vars (z, w) { Im(w), }\n")
    assert m.manifold().N == 2
