"""Jet spaces, jet prolongation and the universal chain-rule polynomials.

Jet coordinates of ``J^l_0(C^k, C^r)`` are indexed by raw multi-indices:
``Lambda_nu`` (``|nu| <= l``) is a vector of ``r`` coordinates.  The block
``Lambda_0`` plays the role of a base point and enters expressions as a
power series variable; the remaining coordinates ``Lambda-hat`` enter
polynomially.  A :class:`JetPolynomial` is exactly such an expression: a
finite sum of monomials in hat labels with :class:`Series` coefficients.

A hat label is a triple ``(block, nu, comp)``.  The block number separates
several jet spaces living in one expression (``Lambda^1`` and ``Lambda^2``
when a defining function has both ``Z'`` and ``zeta'`` arguments).
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from math import comb
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from gmpy2 import mpq

from .powerseries import Series, SeriesMap, Substitution, generic_rank, monomials

Label = Tuple[int, Tuple[int, ...], int]
HatMonomial = Tuple[Tuple[Label, int], ...]
MultiIndex = Tuple[int, ...]


def multi_indices(k: int, l: int, min_degree: int = 0) -> List[MultiIndex]:
    """All ``nu`` in ``N^k`` with ``min_degree <= |nu| <= l``, graded-lex."""
    return monomials(k, l, min_degree)


def jet_dimension(k: int, r: int, l: int) -> int:
    return r * comb(k + l, l)


def _unit(k: int, i: int) -> MultiIndex:
    return tuple(1 if j == i else 0 for j in range(k))


def _add(a: MultiIndex, b: MultiIndex) -> MultiIndex:
    return tuple(x + y for x, y in zip(a, b))


def _sub(a: MultiIndex, b: MultiIndex) -> MultiIndex:
    return tuple(x - y for x, y in zip(a, b))


def _leq(a: MultiIndex, b: MultiIndex) -> bool:
    return all(x <= y for x, y in zip(a, b))


def _mono_mul(a: HatMonomial, b: HatMonomial) -> HatMonomial:
    if not a:
        return b
    if not b:
        return a
    out = dict(a)
    for lab, e in b:
        out[lab] = out.get(lab, 0) + e
    return tuple(sorted(out.items()))


def _mono_degree(m: HatMonomial) -> int:
    return sum(e for _, e in m)


def _mono_sort_key(m: HatMonomial):
    return (_mono_degree(m), m)


# ---------------------------------------------------------------------------

class JetPolynomial:
    """Polynomial in hat labels with series coefficients over ``nbase`` base variables."""

    __slots__ = ("nbase", "order", "terms")

    def __init__(self, nbase: int, order: int, terms: Optional[Dict[HatMonomial, Series]] = None):
        self.nbase = nbase
        self.order = order
        clean: Dict[HatMonomial, Series] = {}
        for m, c in (terms or {}).items():
            if c.nvars != nbase:
                raise ValueError(f"coefficient has {c.nvars} variables, expected {nbase}")
            c = c.truncate(order)
            if not c.is_zero():
                clean[m] = c
        self.terms = clean

    # construction

    @classmethod
    def zero(cls, nbase: int, order: int) -> "JetPolynomial":
        return cls(nbase, order)

    @classmethod
    def from_series(cls, s: Series) -> "JetPolynomial":
        return cls(s.nvars, s.order, {(): s})

    @classmethod
    def hat(cls, label: Label, nbase: int, order: int) -> "JetPolynomial":
        return cls(nbase, order, {((label, 1),): Series.constant(1, nbase, order)})

    @classmethod
    def from_rational_poly(cls, poly: Mapping[HatMonomial, object], nbase: int, order: int,
                           block: Optional[int] = None) -> "JetPolynomial":
        """Lift a table polynomial (monomials over ``(nu, comp)`` placeholders) into a block."""
        terms = {}
        for m, c in poly.items():
            if block is not None:
                m = tuple(sorted(((block, nu, comp), e) for (nu, comp), e in m))
            terms[m] = Series.constant(c, nbase, order)
        return cls(nbase, order, terms)

    # inspection

    def is_zero(self) -> bool:
        return not self.terms

    def labels_used(self) -> List[Label]:
        labs = set()
        for m in self.terms:
            for lab, _ in m:
                labs.add(lab)
        return sorted(labs)

    def hat_degree(self) -> int:
        return max((_mono_degree(m) for m in self.terms), default=0)

    def sorted_terms(self) -> List[Tuple[HatMonomial, Series]]:
        return sorted(self.terms.items(), key=lambda t: _mono_sort_key(t[0]))

    def coefficient(self, mono: HatMonomial) -> Series:
        return self.terms.get(tuple(sorted(mono)), Series.zero(self.nbase, self.order))

    def __eq__(self, other):
        if not isinstance(other, JetPolynomial):
            return NotImplemented
        return self.nbase == other.nbase and self.order == other.order and self.terms == other.terms

    def __hash__(self):
        return hash((self.nbase, self.order, frozenset(self.terms.items())))

    def truncate(self, order: int) -> "JetPolynomial":
        if order >= self.order:
            return self
        return JetPolynomial(self.nbase, order, {m: c.truncate(order) for m, c in self.terms.items()})

    def agrees_with(self, other: "JetPolynomial", order: Optional[int] = None) -> bool:
        return self.first_difference(other, order) is None

    def first_difference(self, other: "JetPolynomial", order: Optional[int] = None):
        """``None`` if equal through ``order``, else ``(hat monomial, degree)`` of the first mismatch."""
        k = min(self.order, other.order) if order is None else order
        diff = self.truncate(k) - other.truncate(k)
        for m, c in diff.sorted_terms():
            return m, c.valuation()
        return None

    # arithmetic

    def _lift(self, other) -> "JetPolynomial":
        if isinstance(other, JetPolynomial):
            if other.nbase != self.nbase:
                raise ValueError("base variable mismatch")
            return other
        if isinstance(other, Series):
            return JetPolynomial.from_series(other)
        return JetPolynomial.from_series(Series.constant(other, self.nbase, self.order))

    def __add__(self, other) -> "JetPolynomial":
        other = self._lift(other)
        k = min(self.order, other.order)
        out = {m: c.truncate(k) for m, c in self.terms.items()}
        for m, c in other.terms.items():
            out[m] = out[m] + c if m in out else c
        return JetPolynomial(self.nbase, k, out)

    __radd__ = __add__

    def __neg__(self) -> "JetPolynomial":
        return JetPolynomial(self.nbase, self.order, {m: -c for m, c in self.terms.items()})

    def __sub__(self, other) -> "JetPolynomial":
        return self + (-self._lift(other))

    def __mul__(self, other) -> "JetPolynomial":
        if isinstance(other, Series):
            return JetPolynomial(self.nbase, min(self.order, other.order),
                                 {m: c * other for m, c in self.terms.items()})
        if not isinstance(other, JetPolynomial):
            return JetPolynomial(self.nbase, self.order, {m: c.scale(other) for m, c in self.terms.items()})
        other = self._lift(other)
        k = min(self.order, other.order)
        out: Dict[HatMonomial, Series] = {}
        for ma, ca in self.terms.items():
            for mb, cb in other.terms.items():
                m = _mono_mul(ma, mb)
                p = ca * cb
                out[m] = out[m] + p if m in out else p
        return JetPolynomial(self.nbase, k, out)

    __rmul__ = __mul__

    # calculus and substitution

    def differentiate_base(self, times: Sequence[int]) -> "JetPolynomial":
        """Differentiate every coefficient in the base variables."""
        total = sum(times)
        return JetPolynomial(self.nbase, self.order - total,
                             {m: c.differentiate(times) for m, c in self.terms.items()})

    def substitute(self, base: "Substitution | Sequence[Series] | None" = None,
                   hats: Optional[Mapping[Label, object]] = None,
                   nbase: Optional[int] = None) -> "JetPolynomial":
        """Substitute series for base variables and values for hat labels.

        ``base`` lists one series (in the new base ring) per old base
        variable; ``hats`` maps labels to a :class:`Series` or
        :class:`JetPolynomial` in the new base ring.  Labels not mentioned
        stay as hat variables.
        """
        hats = dict(hats or {})
        if base is None:
            sub = None
            new_n = self.nbase if nbase is None else nbase
        else:
            sub = base if isinstance(base, Substitution) else Substitution(list(base), nvars=nbase)
            new_n = sub.nvars
        values: Dict[Label, JetPolynomial] = {}
        for lab, v in hats.items():
            if isinstance(v, Series):
                v = JetPolynomial.from_series(v)
            if v.nbase != new_n:
                raise ValueError(f"value for {lab} has {v.nbase} base variables, expected {new_n}")
            values[lab] = v
        powers: Dict[Tuple[Label, int], JetPolynomial] = {}

        def power(lab: Label, e: int) -> JetPolynomial:
            key = (lab, e)
            if key not in powers:
                powers[key] = values[lab] if e == 1 else power(lab, e - 1) * values[lab]
            return powers[key]

        acc: Dict[HatMonomial, Series] = {}
        order = self.order
        for m, c in self.terms.items():
            coef = sub(c) if sub is not None else c
            order = min(order, coef.order)
            kept = tuple((lab, e) for lab, e in m if lab not in values)
            piece = JetPolynomial(new_n, coef.order, {kept: coef})
            for lab, e in m:
                if lab in values:
                    piece = piece * power(lab, e)
            for pm, pc in piece.terms.items():
                acc[pm] = acc[pm] + pc if pm in acc else pc
            order = min(order, piece.order)
        return JetPolynomial(new_n, order, acc)

    def evaluate(self, hats: Mapping[Label, Series], base: "Substitution | Sequence[Series] | None" = None,
                 nbase: Optional[int] = None) -> Series:
        """Full evaluation: every hat label must receive a value."""
        missing = [lab for lab in self.labels_used() if lab not in hats]
        if missing:
            raise ValueError(f"no value for hat coordinates {missing[:3]}")
        out = self.substitute(base, hats, nbase)
        if not out.terms:
            return Series.zero(out.nbase, out.order)
        return out.terms[()]

    def to_series(self, labels: Sequence[Label], order: Optional[int] = None) -> Series:
        """Read the expression as a series in (base variables, listed hat labels)."""
        nb = self.nbase
        n = nb + len(labels)
        pos = {lab: nb + i for i, lab in enumerate(labels)}
        k = self.order if order is None else order
        total = Series.zero(n, k)
        for m, c in self.terms.items():
            exps = [0] * n
            for lab, e in m:
                exps[pos[lab]] = e
            mono = Series.from_terms({tuple(exps): 1}, n, k)
            total = total + c.truncate(k).embed(n, list(range(nb))) * mono
        return total

    def relabel(self, mapping) -> "JetPolynomial":
        """Rename hat labels through a callable."""
        out: Dict[HatMonomial, Series] = {}
        for m, c in self.terms.items():
            nm = tuple(sorted((mapping(lab), e) for lab, e in m))
            out[nm] = out[nm] + c if nm in out else c
        return JetPolynomial(self.nbase, self.order, out)

    def pretty(self, base_names: Optional[Sequence[str]] = None, max_terms: int = 8) -> str:
        parts = []
        for m, c in self.sorted_terms()[:max_terms]:
            hat = "*".join(_label_name(lab) + (f"^{e}" if e > 1 else "") for lab, e in m)
            coef = c.pretty(base_names)
            parts.append(f"({coef})" + (f"*{hat}" if hat else ""))
        if len(self.terms) > max_terms:
            parts.append("...")
        return " + ".join(parts) if parts else "0"

    def __repr__(self):
        return f"JetPolynomial({self.pretty()}, order={self.order})"


def _label_name(lab: Label) -> str:
    block, nu, comp = lab
    return f"L{block}[{''.join(map(str, nu))}]_{comp + 1}"


# ---------------------------------------------------------------------------

@dataclass
class JetValue:
    """``(d^nu F)`` for ``|nu| <= l``: ``entries[nu]`` is a list of ``r`` series."""

    l: int
    k: int
    r: int
    entries: Dict[MultiIndex, List[Series]]

    @property
    def base(self) -> List[Series]:
        return self.entries[(0,) * self.k]

    @property
    def nvars(self) -> int:
        return self.base[0].nvars

    def hat_values(self, block: int = 1) -> Dict[Label, Series]:
        out = {}
        for nu, vals in self.entries.items():
            if sum(nu) == 0:
                continue
            for c, v in enumerate(vals):
                out[(block, nu, c)] = v
        return out

    def compose(self, inner: "Substitution | Sequence[Series]") -> "JetValue":
        """Substitute a map into every entry (moving the base point along a parameter)."""
        sub = inner if isinstance(inner, Substitution) else Substitution(list(inner))
        return JetValue(self.l, self.k, self.r, {nu: [sub(s) for s in vals] for nu, vals in self.entries.items()})

    def agrees_with(self, other: "JetValue", order: Optional[int] = None) -> bool:
        if set(self.entries) != set(other.entries):
            return False
        for nu, vals in self.entries.items():
            for a, b in zip(vals, other.entries[nu]):
                k = min(a.order, b.order) if order is None else min(order, a.order, b.order)
                if not a.agrees_with(b, k):
                    return False
        return True

    @property
    def order(self) -> int:
        return min(s.order for vals in self.entries.values() for s in vals)


def jet_of_map(F: "SeriesMap | Sequence[Series]", l: int, positions: Optional[Sequence[int]] = None) -> JetValue:
    """All partials ``d^nu F`` with ``|nu| <= l`` in the variables ``positions``.

    The entries stay in the full variable ring of ``F`` (other variables act
    as parameters); entry ``nu`` has order ``order(F) - |nu|``.
    """
    comps = list(F)
    n = comps[0].nvars
    positions = list(range(n)) if positions is None else list(positions)
    k = len(positions)
    order = min(c.order for c in comps)
    if l > order:
        raise ValueError(f"jet order {l} exceeds the truncation order {order}")
    entries: Dict[MultiIndex, List[Series]] = {}
    for nu in multi_indices(k, l):
        if sum(nu) == 0:
            entries[nu] = comps
            continue
        i = next(j for j, e in enumerate(nu) if e)
        prev = entries[_sub(nu, _unit(k, i))]
        entries[nu] = [c.d(positions[i]) for c in prev]
    return JetValue(l, k, len(comps), entries)


# ---------------------------------------------------------------------------
# universal chain-rule tables

_TABLE_CACHE: Dict[Tuple[int, int, int, bool], Dict[MultiIndex, Dict]] = {}
_TABLE_LOCK = threading.Lock()

Poly = Dict[HatMonomial, mpq]


def _poly_add(target: Poly, mono: HatMonomial, c) -> None:
    v = target.get(mono, 0) + c
    if v == 0:
        target.pop(mono, None)
    else:
        target[mono] = v


def _differentiate_expression(expr: Dict[Tuple[MultiIndex, MultiIndex], Poly], i: int, k: int, r: int,
                              direct: bool) -> Dict[Tuple[MultiIndex, MultiIndex], Poly]:
    """Apply ``d/dx_i`` to ``sum Phi_{alpha,beta}(F(x), x) * poly(jet of F)``."""
    out: Dict[Tuple[MultiIndex, MultiIndex], Poly] = {}
    ei = _unit(k, i)
    for (alpha, beta), poly in expr.items():
        # derivative through each argument F_j
        for j in range(r):
            key = (_add(alpha, _unit(r, j)), beta)
            bucket = out.setdefault(key, {})
            factor = ((ei, j), 1)
            for mono, c in poly.items():
                _poly_add(bucket, _mono_mul(mono, (factor,)), c)
        # derivative through the explicit x argument
        if direct:
            key = (alpha, _add(beta, ei))
            bucket = out.setdefault(key, {})
            for mono, c in poly.items():
                _poly_add(bucket, mono, c)
        # derivative of the jet coordinates: D_i Lambda_{mu, j} = Lambda_{mu + e_i, j}
        bucket = out.setdefault((alpha, beta), {})
        for mono, c in poly.items():
            for idx, (lab, e) in enumerate(mono):
                mu, j = lab
                rest = dict(mono)
                if e == 1:
                    del rest[lab]
                else:
                    rest[lab] = e - 1
                new = (_add(mu, ei), j)
                rest[new] = rest.get(new, 0) + 1
                _poly_add(bucket, tuple(sorted(rest.items())), c * e)
    return {key: p for key, p in out.items() if p}


def chain_rule_table(k: int, r: int, l: int, direct: bool = False) -> Dict[MultiIndex, Dict]:
    """Coefficients of ``d^nu_x [g(F(x), x)]`` (or ``[g(F(x))]``) on the partials of ``g``.

    Returns ``table[nu][(alpha, beta)] = poly`` where ``poly`` is a polynomial in
    the placeholders ``(mu, j) = d^mu F_j``.  Without ``direct`` the ``beta``
    index is always zero.  Generated by repeated symbolic differentiation.
    """
    key = (k, r, l, direct)
    with _TABLE_LOCK:
        hit = _TABLE_CACHE.get(key)
        if hit is not None:
            return hit
        table: Dict[MultiIndex, Dict] = {}
        zero_k, zero_r = (0,) * k, (0,) * r
        for nu in multi_indices(k, l):
            if sum(nu) == 0:
                table[nu] = {(zero_r, zero_k): {(): mpq(1)}}
                continue
            i = next(j for j, e in enumerate(nu) if e)
            table[nu] = _differentiate_expression(table[_sub(nu, _unit(k, i))], i, k, r, direct)
        _TABLE_CACHE[key] = table
        return table


@dataclass
class UniversalPolys:
    """Tables ``P[nu][(alpha, beta)]`` and ``R[beta][mu]`` for source dimension N, target N'."""

    N: int
    N_target: int
    l: int
    P: Dict[MultiIndex, Dict[Tuple[MultiIndex, MultiIndex], Poly]]
    R: Dict[MultiIndex, Dict[MultiIndex, Poly]]

    def P_entry(self, nu, alpha, beta) -> Poly:
        return self.P.get(tuple(nu), {}).get((tuple(alpha), tuple(beta)), {})

    def R_entry(self, beta, mu) -> Poly:
        return self.R.get(tuple(beta), {}).get(tuple(mu), {})

    def identity_report(self) -> Dict[str, bool]:
        """The normalizations ``P_{nu,0,nu} = 1``, ``R_00 = 1``, ``R_{beta,0} = 0`` (beta != 0)."""
        one = {(): mpq(1)}
        zr = (0,) * self.N_target
        zk = (0,) * self.N
        p_ok = all(self.P_entry(nu, zr, nu) == one for nu in self.P)
        r00 = self.R_entry(zk, zr) == one
        rb0 = all(not self.R_entry(beta, zr) for beta in self.R if sum(beta))
        return {"P_nu0nu": p_ok, "R_00": r00, "R_beta0": rb0}


def universal_polynomials(N: int, N_target: int, l: int) -> UniversalPolys:
    P = chain_rule_table(N, N_target, l, direct=True)
    raw = chain_rule_table(N, N_target, l, direct=False)
    zk = (0,) * N
    R = {beta: {alpha: poly for (alpha, _), poly in entries.items()} for beta, entries in raw.items()}
    assert all(b == zk for entries in raw.values() for (_, b) in entries)
    return UniversalPolys(N, N_target, l, P, R)


# ---------------------------------------------------------------------------
# prolongation

@dataclass
class Prolongation:
    """``phi^(l)``: for each ``nu`` the ``s`` components as jet polynomials over ``Lambda_0``."""

    l: int
    k: int
    r: int
    s: int
    components: Dict[MultiIndex, List[JetPolynomial]]
    block: int = 1

    def evaluate(self, jet: JetValue) -> JetValue:
        """``phi^(l)(j^l F)`` as a jet value in the ring of ``jet``."""
        sub = Substitution(jet.base)
        hats = jet.hat_values(self.block)
        entries = {nu: [p.evaluate(hats, sub) for p in comps] for nu, comps in self.components.items()}
        return JetValue(self.l, self.k, self.s, entries)

    def triangular(self) -> bool:
        """Component ``nu`` only involves ``Lambda_alpha`` with ``alpha <= nu``."""
        for nu, comps in self.components.items():
            for p in comps:
                if any(not _leq(lab[1], nu) for lab in p.labels_used()):
                    return False
        return True

    def as_list(self) -> List[JetPolynomial]:
        return [p for nu in multi_indices(self.k, self.l) for p in self.components[nu]]


def prolong(phi: "SeriesMap | Sequence[Series]", l: int, k: int, block: int = 1) -> Prolongation:
    """The jet prolongation ``phi^(l)`` of ``phi: (C^r, 0) -> (C^s, 0)`` over source dimension ``k``."""
    comps = list(phi)
    r = comps[0].nvars
    if any(not c.constant_term().is_zero() for c in comps):
        raise ValueError("phi must fix the origin")
    order = min(c.order for c in comps)
    if l > order:
        raise ValueError(f"jet order {l} exceeds the truncation order {order}")
    table = chain_rule_table(k, r, l, direct=False)
    partials: Dict[Tuple[int, MultiIndex], Series] = {}

    def partial(c: int, alpha: MultiIndex) -> Series:
        key = (c, alpha)
        if key not in partials:
            partials[key] = comps[c].differentiate(alpha)
        return partials[key]

    out: Dict[MultiIndex, List[JetPolynomial]] = {}
    for nu in multi_indices(k, l):
        row = []
        for c in range(len(comps)):
            total = JetPolynomial(r, order - sum(nu))
            for (alpha, _), poly in table[nu].items():
                coef = partial(c, alpha)
                total = total + JetPolynomial.from_rational_poly(poly, r, coef.order, block) * coef
            row.append(total)
        out[nu] = row
    return Prolongation(l, k, r, len(comps), out, block)


def compose_prolongations(outer: Prolongation, inner: Prolongation) -> Prolongation:
    """``outer o inner`` as maps of jet spaces (both over the same source dimension)."""
    if outer.k != inner.k or outer.r != inner.s or outer.l != inner.l:
        raise ValueError("prolongations are not composable")
    zero = (0,) * inner.k
    base = [p.terms.get((), Series.zero(inner.r, p.order)) for p in inner.components[zero]]
    if any(p.labels_used() for p in inner.components[zero]):
        raise ValueError("the zeroth component of a prolongation must not involve hat coordinates")
    sub = Substitution(base)
    hats = {}
    for nu, comps in inner.components.items():
        if sum(nu) == 0:
            continue
        for c, p in enumerate(comps):
            hats[(outer.block, nu, c)] = p
    out = {nu: [p.substitute(sub, hats) for p in comps] for nu, comps in outer.components.items()}
    return Prolongation(outer.l, outer.k, inner.r, outer.s, out, inner.block)


def identity_prolongation(r: int, l: int, k: int, order: int, block: int = 1) -> Prolongation:
    out = {}
    for nu in multi_indices(k, l):
        if sum(nu) == 0:
            out[nu] = [JetPolynomial.from_series(Series.variable(c, r, order)) for c in range(r)]
        else:
            out[nu] = [JetPolynomial.hat((block, nu, c), r, order) for c in range(r)]
    return Prolongation(l, k, r, r, out, block)


def ideal_prolong(gens: Sequence[Series], l: int, k: int, block: int = 1) -> List[JetPolynomial]:
    """Generators of the prolonged ideal ``I^(l)``: all components of ``rho_j^(l)``."""
    from . import linalg

    gens = list(gens)
    if not gens:
        raise ValueError("need at least one generator")
    r = gens[0].nvars
    diffs = [[g.d(p).constant_term() for p in range(r)] for g in gens]
    if any(not g.constant_term().is_zero() for g in gens) or linalg.rank(diffs) < len(gens):
        raise ValueError("not a manifold ideal: generators must vanish at 0 with independent differentials")
    pro = prolong(gens, l, k, block)
    return [pro.components[nu][j] for nu in multi_indices(k, l) for j in range(len(gens))]


def jet_labels(k: int, r: int, l: int, block: int = 1) -> List[Label]:
    return [(block, nu, c) for nu in multi_indices(k, l, 1) for c in range(r)]


# ---------------------------------------------------------------------------
# the two expansions of rho'^(l) for a function of (Z', zeta')

def _split_block(N_target: int):
    def relabel(lab: Label) -> Label:
        _, nu, c = lab
        return (1, nu, c) if c < N_target else (2, nu, c - N_target)
    return relabel


def prolong_two_blocks(rho: Sequence[Series], l: int, N: int) -> Dict[MultiIndex, List[JetPolynomial]]:
    """``rho^(l)(Lambda^1, Lambda^2)`` by direct prolongation of ``rho(Z', zeta')``."""
    rho = list(rho)
    Np = rho[0].nvars // 2
    pro = prolong(rho, l, N, block=0)
    relabel = _split_block(Np)
    return {nu: [p.relabel(relabel) for p in comps] for nu, comps in pro.components.items()}


def expansion_first(rho: Sequence[Series], l: int, N: int) -> Dict[MultiIndex, List[JetPolynomial]]:
    """``sum P_{nu alpha beta}(L1-hat) sum R_{beta mu}(L2-hat) rho_{Z'^alpha zeta'^mu}(L1_0, L2_0)``."""
    return _expansion(rho, l, N, swap=False)


def expansion_second(rho: Sequence[Series], l: int, N: int) -> Dict[MultiIndex, List[JetPolynomial]]:
    """``sum P_{nu alpha beta}(L2-hat) sum R_{beta mu}(L1-hat) rho_{Z'^mu zeta'^alpha}(L1_0, L2_0)``."""
    return _expansion(rho, l, N, swap=True)


def _expansion(rho: Sequence[Series], l: int, N: int, swap: bool) -> Dict[MultiIndex, List[JetPolynomial]]:
    rho = list(rho)
    nb = rho[0].nvars
    Np = nb // 2
    U = universal_polynomials(N, Np, l)
    p_block, r_block = (2, 1) if swap else (1, 2)
    order = min(g.order for g in rho)
    cache: Dict[Tuple[int, MultiIndex, MultiIndex], Series] = {}

    def partial(c: int, a: MultiIndex, m: MultiIndex) -> Series:
        key = (c, a, m)
        if key not in cache:
            zexp, zetaexp = (m, a) if swap else (a, m)
            cache[key] = rho[c].differentiate(zexp + zetaexp)
        return cache[key]

    out: Dict[MultiIndex, List[JetPolynomial]] = {}
    for nu in multi_indices(N, l):
        row = []
        for c in range(len(rho)):
            total = JetPolynomial(nb, order - sum(nu))
            for (alpha, beta), ppoly in U.P[nu].items():
                inner = JetPolynomial(nb, order)
                for mu, rpoly in U.R[beta].items():
                    coef = partial(c, alpha, mu)
                    inner = inner + JetPolynomial.from_rational_poly(rpoly, nb, coef.order, r_block) * coef
                total = total + JetPolynomial.from_rational_poly(ppoly, nb, order, p_block) * inner
            row.append(total)
        out[nu] = row
    return out


# ---------------------------------------------------------------------------
# uniqueness test map

def uniqueness_test_map(k: int, r: int, l: int, order: Optional[int] = None) -> Tuple[SeriesMap, List[int]]:
    """``phi(A, x) = (d^alpha_x (x_1 sum_nu A_nu x^nu))_{|alpha| <= l}``.

    Variables are ``A`` (``r`` per multi-index, graded-lex) followed by ``x``.
    Returns the map and the positions of the ``A`` variables.
    """
    nus = multi_indices(k, l)
    m = r * len(nus)
    nv = m + k
    # the Jacobian determinant in A vanishes to order m in x_1
    order = max(2 * l + 2, m + l + 2) if order is None else order
    xs = [Series.variable(m + i, nv, order) for i in range(k)]
    polys = []
    for c in range(r):
        total = Series.zero(nv, order)
        for a, nu in enumerate(nus):
            term = Series.variable(a * r + c, nv, order)
            for i, e in enumerate(nu):
                if e:
                    term = term * xs[i] ** e
            total = total + term
        polys.append(xs[0] * total)
    comps = []
    for alpha in nus:
        for c in range(r):
            comps.append(polys[c].differentiate((0,) * m + tuple(alpha)))
    return SeriesMap(comps), list(range(m))


def uniqueness_rank(k: int, r: int, l: int):
    phi, a_pos = uniqueness_test_map(k, r, l)
    return generic_rank(phi, a_pos, method="minors"), jet_dimension(k, r, l)
