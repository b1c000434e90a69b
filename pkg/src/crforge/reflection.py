"""Reflection ideals, maps between formal generic manifolds and the jet constraint systems.

A map ``H`` is a :class:`SeriesMap` with ``N'`` components in the ``N``
source variables ``Z``.  Target generators come in two normal forms:

* ``rho'(Z', zeta') = tau' - Qbar'(chi', Z')`` (:meth:`conjugate_generators`),
* ``rho~'(Z', zeta') = w' - Q'(z', zeta')`` (:meth:`graph_generators`).

The reflection ideal of ``H`` is generated by ``tau' - Qbar'(chi', H(Z))``
in the variables ``(Z, zeta')``.  Every verdict carries the truncation order
at which it is certified.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from math import comb
from typing import Dict, List, Optional, Sequence, Tuple

from gmpy2 import mpq

from . import linalg
from .jets import (JetPolynomial, JetValue, MultiIndex, chain_rule_table, jet_of_map, multi_indices,
                   prolong_two_blocks, universal_polynomials, _sub, _add, _leq)
from .manifolds import (GenericManifold, SegreMapping, SegreTower, holo_nondegeneracy_check, gradient_rows,
                        select_nonsingular_rows, segre_mapping)
from .powerseries import (GaussianRational, Series, SeriesMap, Substitution, compose, generic_rank,
                          ideal_membership, monomials, standard_monomials)


@dataclass
class Verdict:
    """Outcome of one check: ``holds`` is ``True``/``False`` (``None`` when inconclusive)."""

    check: str
    holds: Optional[bool]
    order: int
    verdict: str
    certificate: dict = field(default_factory=dict)

    def __bool__(self):
        return bool(self.holds)


def _first_term(s: Series):
    terms = s.terms()
    if not terms:
        return None
    v = s.valuation()
    for e, c in terms:
        if sum(e) == v:
            return list(e), str(c)
    return None


# ---------------------------------------------------------------------------
# maps

@dataclass
class FormalMapGerm:
    """``H: (C^N, 0) -> (C^N', 0)`` with its complexification ``(H(Z), Hbar(zeta))``."""

    H: SeriesMap
    source: Optional[GenericManifold] = None
    target: Optional[GenericManifold] = None
    name: str = "H"

    def __post_init__(self):
        if not isinstance(self.H, SeriesMap):
            self.H = SeriesMap(list(self.H))
        if not self.H.fixes_origin:
            raise ValueError(f"map {self.name} does not fix the origin")
        if self.source is not None and self.H.nvars != self.source.N:
            raise ValueError(f"map {self.name} has {self.H.nvars} variables, source dimension is {self.source.N}")
        if self.target is not None and len(self.H) != self.target.N:
            raise ValueError(f"map {self.name} has {len(self.H)} components, target dimension is {self.target.N}")

    def complexification(self) -> SeriesMap:
        N = self.H.nvars
        first = [c.embed(2 * N, list(range(N))) for c in self.H]
        second = [c.conj().embed(2 * N, list(range(N, 2 * N))) for c in self.H]
        return SeriesMap(first + second)

    def sigma_consistent(self) -> bool:
        from .powerseries import sigma_conjugate
        N = self.H.nvars
        C = self.complexification()
        n2 = len(self.H)
        return all(sigma_conjugate(C[i], first=range(N), second=range(N, 2 * N)).agrees_with(C[n2 + i])
                   for i in range(n2))


def _as_map(H) -> SeriesMap:
    if isinstance(H, FormalMapGerm):
        return H.H
    return H if isinstance(H, SeriesMap) else SeriesMap(list(H))


def identity_map(N: int, order: int) -> SeriesMap:
    return SeriesMap.identity(N, order)


def sends_into(M: GenericManifold, Mp: GenericManifold, H, order: Optional[int] = None) -> Verdict:
    """Substitute ``(H(Z), Hbar(gammabar(Z, t)))`` into every generator of I(M')."""
    H = _as_map(H)
    if H.nvars != M.N or len(H) != Mp.N:
        raise ValueError(f"dimension mismatch: map is C^{H.nvars} -> C^{len(H)}, manifolds are in C^{M.N}, C^{Mp.N}")
    N, n = M.N, M.n
    gb = segre_mapping(M).gamma_bar()
    nv = N + n
    HZ = [c.embed(nv, list(range(N))) for c in H]
    Hb = [compose(c.conj(), gb) for c in H]
    sub = Substitution(HZ + Hb)
    worst = None
    k_avail = None
    for kind, gens in (("rho", Mp.conjugate_generators()), ("rho_tilde", Mp.graph_generators())):
        for j, g in enumerate(gens):
            val = sub(g)
            if order is not None:
                if order > val.order:
                    raise ValueError(f"requested order {order} exceeds the available order {val.order}")
                val = val.truncate(order)
            k_avail = val.order if k_avail is None else min(k_avail, val.order)
            v = val.valuation()
            if v is not None and (worst is None or v < worst[0]):
                worst = (v, kind, j, _first_term(val))
    if worst is None:
        return Verdict("sends_into", True, k_avail, "holds_mod_order", {})
    v, kind, j, term = worst
    return Verdict("sends_into", False, k_avail, "fails",
                   {"first_obstructing_degree": v, "generator": f"{kind}[{j + 1}]",
                    "witness_monomial": term[0], "witness_coefficient": term[1],
                    "variables": "(Z, t)"})


@dataclass
class ReflectionIdeal:
    generators: SeriesMap  # d' series in (Z, zeta'), N + N' variables
    order: int
    source_dim: int
    target: GenericManifold
    map_name: str = "H"
    polynomial_data: bool = False

    def qbar_part(self) -> SeriesMap:
        """``Qbar'(chi', H(Z))`` in variables ``(Z, chi')``."""
        N = self.source_dim
        Mp = self.target
        keep = list(range(N)) + [N + j for j in Mp.z_idx]
        out = []
        for g, w in zip(self.generators, Mp.w_idx):
            tau = Series.variable(N + w, g.nvars, g.order)
            out.append((tau - g).drop_to(keep))
        return SeriesMap(out)


def _qbar_of_map(Mp: GenericManifold, H: SeriesMap) -> SeriesMap:
    """``Qbar'(chi', H(Z))`` with variables ``(Z, chi')``."""
    N = H.nvars
    npr = Mp.n
    nv = N + npr
    chis = [Series.variable(N + a, nv, Mp.order) for a in range(npr)]
    HZ = [c.embed(nv, list(range(N))) for c in H]
    sub = Substitution(chis + HZ)
    return SeriesMap([sub(q) for q in Mp.Qbar])


def reflection_generators(Mp: GenericManifold, H, name: str = "H") -> ReflectionIdeal:
    H = _as_map(H)
    if not H.fixes_origin:
        raise ValueError("the map must fix the origin")
    N, Np = H.nvars, Mp.N
    nv = N + Np
    qb = _qbar_of_map(Mp, H)
    pos = list(range(N)) + [N + j for j in Mp.z_idx]
    gens = []
    for q, w in zip(qb, Mp.w_idx):
        gens.append(Series.variable(N + w, nv, q.order) - q.embed(nv, pos))
    gm = SeriesMap(gens)
    polynomial = all(g.degree() is None or g.degree() < g.order for g in gm)
    return ReflectionIdeal(gm, gm.order, N, Mp, name, polynomial)


def ideal_equal(Mp: GenericManifold, H, H0, order: Optional[int] = None) -> Verdict:
    """Compare ``Qbar'(chi', H(Z))`` and ``Qbar'(chi', H0(Z))`` coefficientwise."""
    H, H0 = _as_map(H), _as_map(H0)
    a, b = _qbar_of_map(Mp, H), _qbar_of_map(Mp, H0)
    k = min(a.order, b.order)
    if order is not None:
        if order > k:
            raise ValueError(f"requested order {order} exceeds the available order {k}")
        k = order
    worst = None
    for j, (x, y) in enumerate(zip(a, b)):
        v = x.first_difference(y, k)
        if v is not None and (worst is None or v < worst[0]):
            worst = (v, j, _first_term((x - y).truncate(k)))
    if worst is None:
        return Verdict("ideal_equal", True, k, "equal", {})
    v, j, term = worst
    return Verdict("ideal_equal", False, k, "different",
                   {"obstruction_degree": v, "component": j + 1, "witness_monomial": term[0],
                    "witness_coefficient": term[1], "variables": "(Z, chi')"})


def ideal_equal_by_membership(Mp: GenericManifold, H, H0, order: Optional[int] = None) -> Verdict:
    """Mutual truncated ideal membership of the two reflection-ideal generator sets."""
    A = reflection_generators(Mp, H).generators
    B = reflection_generators(Mp, H0).generators
    k = min(A.order, B.order) if order is None else order
    ab = all(ideal_membership(g, list(B), k, witness=False).member for g in A)
    ba = all(ideal_membership(g, list(A), k, witness=False).member for g in B)
    return Verdict("ideal_equal_membership", ab and ba, k, "equal" if ab and ba else "different",
                   {"first_in_second": ab, "second_in_first": ba})


def not_totally_degenerate(M: GenericManifold, Mp: GenericManifold, H, seed: int = 0) -> Verdict:
    """Generic rank of ``H o v^1`` against ``n' = dim S_0(M')``."""
    H = _as_map(H)
    v1 = SegreTower(segre_mapping(M)).v(1)
    comp = H.compose(v1)
    r = generic_rank(comp, seed=seed)
    ok = r.rank == Mp.n
    return Verdict("not_totally_degenerate", ok, r.order, "certified" if ok else "not_certified_at_order",
                   {"rank": r.rank, "target": Mp.n, "method": r.method, "rows": list(r.rows),
                    "cols": list(r.cols), "minor_valuation": r.minor_valuation})


def finite_map_check(H, order: Optional[int] = None) -> Verdict:
    """Standard monomials of ``C[[Z]] / ((H) + m^(order+1))``."""
    H = _as_map(H)
    if not H.fixes_origin:
        raise ValueError("the map must fix the origin")
    k = H.order if order is None else order
    if k > H.order:
        raise ValueError(f"requested order {k} exceeds the map's order {H.order}")
    std = standard_monomials(list(H), k)
    top = max((sum(e) for e in std), default=-1)
    stab = top + 1  # m^stab is inside (H) + m^(k+1)
    if stab <= k:
        exact = stab < k
        return Verdict("finite_map", True, k, "finite",
                       {"multiplicity": len(std), "multiplicity_exact": exact, "stabilization_degree": stab,
                        "standard_monomials": [list(e) for e in std]})
    evidence = [list(e) for e in std if sum(e) == k]
    return Verdict("finite_map", False, k, "not_finite_up_to_order",
                   {"surviving_top_degree_monomials": evidence[:12], "standard_monomial_count": len(std)})


def map_rank(H, seed: int = 0) -> Verdict:
    H = _as_map(H)
    r = generic_rank(H, seed=seed)
    return Verdict("rank", True, r.order, "rank", {"rank": r.rank, "method": r.method, "rows": list(r.rows),
                                                   "cols": list(r.cols), "minor_valuation": r.minor_valuation})


# ---------------------------------------------------------------------------
# constraint systems

@dataclass
class ConstraintSystem:
    """Entries of the phi / psi / theta systems as jet polynomials over ``(Lambda^1_0, params)``.

    ``params`` is ``(Z, t)`` for phi, ``t^[j+2]`` for psi and ``t^[j+1]`` for
    theta.  Entries are keyed by ``nu`` (and ``(nu, eps)`` for theta), each
    a list of ``d'`` jet polynomials.  ``route_b`` holds the same entries
    assembled from the coefficient tables.
    """

    kind: str
    tilde: bool
    l: int
    j: int
    epsilon_bound: int
    N: int
    n: int
    N_target: int
    nparams: int
    order: int
    entries: Dict[tuple, List[JetPolynomial]]
    route_b: Dict[tuple, List[JetPolynomial]]
    tables: Dict[str, dict]
    map_name: str = "H"

    @property
    def nbase(self) -> int:
        return self.N_target + self.nparams

    def routes_agree(self) -> Verdict:
        bad = None
        for key, comps in self.entries.items():
            for c, (a, b) in enumerate(zip(comps, self.route_b[key])):
                diff = a.first_difference(b)
                if diff is not None:
                    bad = {"entry": str(key), "component": c + 1, "degree": diff[1]}
                    break
            if bad:
                break
        return Verdict(f"{self.kind}_routes", bad is None, self.order, "agree" if bad is None else "differ",
                       bad or {"entries": len(self.entries)})


def _target_generators(Mp: GenericManifold, tilde: bool) -> List[Series]:
    return Mp.graph_generators() if tilde else Mp.conjugate_generators()


def _reflected(rho: Sequence[Series], H: SeriesMap, Np: int) -> List[Series]:
    """``rho(Z', Hbar(zeta))`` in variables ``(Z', zeta)``."""
    N = H.nvars
    nv = Np + N
    Zp = [Series.variable(a, nv, H.order) for a in range(Np)]
    Hb = [c.conj().embed(nv, list(range(Np, nv))) for c in H]
    sub = Substitution(Zp + Hb)
    return [sub(r) for r in rho]


def _eval_table_poly(poly, values: Dict[Tuple[MultiIndex, int], Series], nvars: int, order: int) -> Series:
    total = Series.zero(nvars, order)
    for mono, c in poly.items():
        term = Series.constant(c, nvars, order)
        for lab, e in mono:
            term = term * values[lab] ** e
        total = total + term
    return total


def _jet_placeholders(jet: JetValue) -> Dict[Tuple[MultiIndex, int], Series]:
    return {(nu, c): s for nu, vals in jet.entries.items() if sum(nu) for c, s in enumerate(vals)}


def c_table(M: GenericManifold, l: int, S: Optional[SegreMapping] = None) -> Dict[Tuple[MultiIndex, MultiIndex], Series]:
    """``c_{beta delta}(Z, t)``: chain-rule coefficients of ``d^beta_Z [g(gammabar(Z, t))]``."""
    N, n = M.N, M.n
    S = S or segre_mapping(M)
    gb = S.gamma_bar()
    R = chain_rule_table(N, N, l, direct=False)
    jet = jet_of_map(gb, l, list(range(N)))
    vals = _jet_placeholders(jet)
    out = {}
    for beta, entries in R.items():
        for (delta, _), poly in entries.items():
            out[(beta, delta)] = _eval_table_poly(poly, vals, N + n, gb.order - sum(beta))
    return out


def _phi_route_a(rho, H, M, Mp, l, gb) -> Tuple[Dict, int]:
    N, n, Np = M.N, M.n, Mp.N
    nb = Np + N + n
    pro = prolong_two_blocks(rho, l, N)
    Hbg = SeriesMap([compose(c.conj(), gb) for c in H])
    jet2 = jet_of_map(Hbg, l, list(range(N)))
    emb = list(range(Np, nb))
    base = [Series.variable(a, nb, Mp.order) for a in range(Np)] + [s.embed(nb, emb) for s in jet2.base]
    sub = Substitution(base)
    hats = {(2, nu, c): s.embed(nb, emb) for nu, vals in jet2.entries.items() if sum(nu) for c, s in enumerate(vals)}
    out = {(nu,): [p.substitute(sub, hats) for p in comps] for nu, comps in pro.items()}
    return out, nb


def _assemble(U, rhoH_partial, coeff, l, N, nb, block=1):
    """``sum_{alpha,beta} P_{nu alpha beta}(L1-hat) sum_delta coeff[beta, delta] G_{alpha delta}``."""
    out = {}
    for nu in multi_indices(N, l):
        comps = []
        for c in range(len(rhoH_partial)):
            total = None
            for (alpha, beta), ppoly in U.P[nu].items():
                inner = None
                for (b, delta), cf in coeff.items():
                    if b != beta:
                        continue
                    g = rhoH_partial[c](alpha, delta)
                    term = cf * g
                    inner = term if inner is None else inner + term
                if inner is None:
                    continue
                piece = JetPolynomial.from_rational_poly(ppoly, nb, inner.order, block) * inner
                total = piece if total is None else total + piece
            comps.append(total if total is not None else JetPolynomial(nb, 0))
        out[(nu,)] = comps
    return out


class _PartialCache:
    """``G_{alpha, delta}`` of ``rho(Z', Hbar(zeta))`` evaluated along a substitution."""

    def __init__(self, G: Series, Np: int, sub: Substitution):
        self.G = G
        self.Np = Np
        self.sub = sub
        self.cache: Dict[Tuple[MultiIndex, MultiIndex], Series] = {}

    def __call__(self, alpha, delta) -> Series:
        key = (tuple(alpha), tuple(delta))
        if key not in self.cache:
            self.cache[key] = self.sub(self.G.differentiate(tuple(alpha) + tuple(delta)))
        return self.cache[key]


def build_system(M: GenericManifold, Mp: GenericManifold, H, kind: str = "phi", l: int = 1, j: int = 0,
                 epsilon_bound: int = 0, tilde: bool = False, order: Optional[int] = None,
                 S: Optional[SegreMapping] = None, name: str = "H") -> ConstraintSystem:
    """Build the phi, psi or theta system for the map ``H`` (two assembly routes)."""
    if kind not in ("phi", "psi", "theta"):
        raise ValueError(f"unknown system kind {kind!r}")
    H = _as_map(H)
    k = min(M.order, Mp.order, H.order)
    if order is not None:
        if order > k:
            raise ValueError(f"requested order {order} exceeds the available order {k}")
        k = order
    need = l + (epsilon_bound if kind == "theta" else 0)
    if k < need + 1:
        raise ValueError(f"truncation budget exceeded: order {k} is too small for l={l}, "
                         f"epsilon_bound={epsilon_bound}")
    M, Mp, H = M.with_order(k), Mp.with_order(k), H.truncate(k)
    S = segre_mapping(M, None if S is None else [m.truncate(k) for m in S.mu])
    N, n, Np = M.N, M.n, Mp.N
    rho = _target_generators(Mp, tilde)
    gb = S.gamma_bar()
    U = universal_polynomials(N, Np, l)
    G = _reflected(rho, H, Np)
    tables: Dict[str, dict] = {}
    ctab = c_table(M, l, S)
    tables["c"] = ctab

    # phi: base (Lambda_0, Z, t)
    phi_a, nb_phi = _phi_route_a(rho, H, M, Mp, l, gb)
    emb = list(range(Np, nb_phi))
    lam = [Series.variable(a, nb_phi, k) for a in range(Np)]
    sub_phi = Substitution(lam + [s.embed(nb_phi, emb) for s in gb])
    parts = [_PartialCache(g, Np, sub_phi) for g in G]
    coeff = {key: s.embed(nb_phi, emb) for key, s in ctab.items()}
    phi_b = _assemble(U, parts, coeff, l, N, nb_phi)
    if kind == "phi":
        return ConstraintSystem(kind, tilde, l, j, 0, N, n, Np, N + n, k, phi_a, phi_b, tables, name)

    # psi: base (Lambda_0, t^[j+2]); Z -> v^{j+1}, t -> t^{j+2}
    tower = SegreTower(S)
    npar = n * (j + 2)
    nb_psi = Np + npar
    vj1 = tower.v_in(j + 1, npar)
    tlast = [Series.variable(p, npar, k) for p in tower.t_block(j + 2)]
    to_psi = [Series.variable(a, nb_psi, k) for a in range(Np)]
    pemb = list(range(Np, nb_psi))
    to_psi += [s.embed(nb_psi, pemb) for s in list(vj1) + tlast]
    sub_psi = Substitution(to_psi)
    psi_a = {key: [p.substitute(sub_psi) for p in comps] for key, comps in phi_a.items()}
    param_sub = Substitution(list(vj1) + tlast)
    utab = {key: param_sub(s) for key, s in ctab.items()}
    tables["u"] = utab
    vbar = tower.v(j + 2).conj()  # conj(v^{j+2}) in t^[j+2]
    sub_g = Substitution([Series.variable(a, nb_psi, k) for a in range(Np)] + [s.embed(nb_psi, pemb) for s in vbar])
    parts = [_PartialCache(g, Np, sub_g) for g in G]
    coeff = {key: s.embed(nb_psi, pemb) for key, s in utab.items()}
    psi_b = _assemble(U, parts, coeff, l, N, nb_psi)
    if kind == "psi":
        return ConstraintSystem(kind, tilde, l, j, 0, N, n, Np, npar, k, psi_a, psi_b, tables, name)

    # theta: d^eps in t^{j+2}, then t^{j+2} -> conj(xi^j); base (Lambda_0, t^[j+1])
    nth = n * (j + 1)
    nb_th = Np + nth
    xib = tower.xi_conj(j)
    ts = [Series.variable(p, nth, k) for p in range(nth)]
    to_th = Substitution([Series.variable(a, nb_th, k) for a in range(Np)]
                         + [s.embed(nb_th, list(range(Np, nb_th))) for s in ts + list(xib)])
    last = [Np + p for p in tower.t_block(j + 2)]
    theta_a = {}
    eps_list = multi_indices(n, epsilon_bound)
    for (nu,), comps in psi_a.items():
        for eps in eps_list:
            times = [0] * nb_psi
            for a, e in zip(last, eps):
                times[a] = e
            theta_a[(nu, eps)] = [p.differentiate_base(times).substitute(to_th) for p in comps]
    # route b: omega tables against G_{alpha delta}(Lambda_0, conj(v^j))
    omega = _omega_tables(U, utab, tower, j, l, epsilon_bound, N, n, Np, k)
    tables["omega"] = omega
    vj_bar = [s.conj() for s in tower.v_in(j, nth)]
    sub_gj = Substitution([Series.variable(a, nb_th, k) for a in range(Np)]
                          + [s.embed(nb_th, list(range(Np, nb_th))) for s in vj_bar])
    parts = [_PartialCache(g, Np, sub_gj) for g in G]
    theta_b = {}
    for (nu, eps), by_ad in omega.items():
        comps = []
        for c in range(len(G)):
            total = JetPolynomial(nb_th, k)
            for (alpha, delta), w in by_ad.items():
                total = total + w * parts[c](alpha, delta)
            comps.append(total)
        theta_b[(nu, eps)] = comps
    return ConstraintSystem(kind, tilde, l, j, epsilon_bound, N, n, Np, nth, k, theta_a, theta_b, tables, name)


def _omega_tables(U, utab, tower: SegreTower, j: int, l: int, epsilon_bound: int, N: int, n: int, Np: int,
                  k: int) -> Dict[tuple, Dict[tuple, JetPolynomial]]:
    """``omega^j_{nu eps alpha delta}(L1-hat, t^[j+1])`` as jet polynomials over ``(Lambda_0, t^[j+1])``."""
    npar = n * (j + 2)
    nth = n * (j + 1)
    nb_th = Np + nth
    last = tower.t_block(j + 2)
    xib = tower.xi_conj(j)
    to_th = Substitution([Series.variable(p, nth, k) for p in range(nth)] + list(xib))
    V = tower.v(j + 2).conj()
    Rn = chain_rule_table(n, N, epsilon_bound, direct=False)
    jetV = jet_of_map(V, epsilon_bound, last)
    vals = _jet_placeholders(jetV)
    r_vals: Dict[Tuple[MultiIndex, MultiIndex], Series] = {}
    for eps, entries in Rn.items():
        for (dp, _), poly in entries.items():
            r_vals[(eps, dp)] = to_th(_eval_table_poly(poly, vals, npar, V.order - sum(eps)))
    du: Dict[Tuple[MultiIndex, MultiIndex, MultiIndex], Series] = {}

    def u_deriv(beta, delta, e):
        key = (beta, delta, e)
        if key not in du:
            times = [0] * npar
            for a, x in zip(last, e):
                times[a] = x
            du[key] = to_th(utab[(beta, delta)].differentiate(times))
        return du[key]

    emb = list(range(Np, nb_th))
    out: Dict[tuple, Dict[tuple, JetPolynomial]] = {}
    for nu in multi_indices(N, l):
        for eps in multi_indices(n, epsilon_bound):
            acc: Dict[tuple, JetPolynomial] = {}
            for (alpha, beta), ppoly in U.P[nu].items():
                scalar: Dict[MultiIndex, Series] = {}
                for (b, delta) in utab:
                    if b != beta:
                        continue
                    for e1 in multi_indices(n, sum(eps)):
                        if not _leq(e1, eps):
                            continue
                        binom = 1
                        for x, y in zip(eps, e1):
                            binom *= comb(x, y)
                        ud = u_deriv(beta, delta, _sub(eps, e1))
                        if ud.is_zero():
                            continue
                        for (ee, dp), rv in r_vals.items():
                            if ee != e1 or rv.is_zero():
                                continue
                            dd = _add(delta, dp)
                            term = (ud * rv).scale(binom)
                            scalar[dd] = scalar[dd] + term if dd in scalar else term
                for dd, s in scalar.items():
                    piece = JetPolynomial.from_rational_poly(ppoly, nb_th, s.order, 1) * s.embed(nb_th, emb)
                    key = (alpha, dd)
                    acc[key] = acc[key] + piece if key in acc else piece
            out[(nu, eps)] = {key: w for key, w in acc.items() if not w.is_zero()}
    return out


# ---------------------------------------------------------------------------
# solutions

def map_jet_along(H, l: int, along: Optional[SeriesMap] = None, nparams: Optional[int] = None) -> JetValue:
    """``((d^alpha H)(along))_{|alpha| <= l}`` (``along`` defaults to the identity)."""
    H = _as_map(H)
    jet = jet_of_map(H, l)
    if along is None:
        return jet
    return jet.compose(along)


def solution_for(system: ConstraintSystem, M: GenericManifold, H, S: Optional[SegreMapping] = None) -> JetValue:
    """The jet of ``H`` in the parameter ring of ``system`` (along Z, or along ``v^{j+1}``)."""
    H = _as_map(H).truncate(system.order)
    M = M.with_order(system.order)
    N, n = M.N, M.n
    if system.kind == "phi":
        Z = [Series.variable(a, N + n, system.order) for a in range(N)]
        return map_jet_along(H, system.l, SeriesMap(Z))
    tower = SegreTower(S or segre_mapping(M))
    return map_jet_along(H, system.l, tower.v_in(system.j + 1, system.nparams))


def substitute_solution(system: ConstraintSystem, S: JetValue, route: str = "a") -> Dict[tuple, List[Series]]:
    """Evaluate every entry at ``Lambda^1 = S`` (series in the system's parameters)."""
    npar = system.nparams
    if S.nvars != npar:
        raise ValueError(f"jet value lives in {S.nvars} variables, the system has {npar} parameters")
    params = [Series.variable(p, npar, system.order) for p in range(npar)]
    sub = Substitution(list(S.base) + params)
    hats = S.hat_values(1)
    entries = system.entries if route == "a" else system.route_b
    return {key: [p.evaluate(hats, sub) for p in comps] for key, comps in entries.items()}


def check_jet_solution(system: ConstraintSystem, M: GenericManifold, H=None, S: Optional[JetValue] = None,
                       route: str = "a") -> Verdict:
    """All entries vanish at the jet of ``H`` (or at the supplied jet value ``S``)."""
    if S is None:
        S = solution_for(system, M, H)
    vals = substitute_solution(system, S, route)
    worst = None
    k = system.order
    for key, comps in vals.items():
        for c, s in enumerate(comps):
            k = min(k, s.order)
            v = s.valuation()
            if v is not None and (worst is None or v < worst[0]):
                worst = (v, key, c)
    if worst is None:
        return Verdict(f"{system.kind}_solution", True, k, "solution",
                       {"entries": len(vals), "tilde": system.tilde})
    v, key, c = worst
    return Verdict(f"{system.kind}_solution", False, k, "not_a_solution",
                   {"entry": str(key), "component": c + 1, "degree": v, "tilde": system.tilde})


# ---------------------------------------------------------------------------
# key identity

def _H_rho(Mp: GenericManifold, H: SeriesMap) -> List[Series]:
    """``rho'(H(Z), zeta')`` in ``(Z, zeta')``."""
    return list(reflection_generators(Mp, H).generators)


def key_identity_check(M: GenericManifold, Mp: GenericManifold, H, S: JetValue, l: int, j: int = 0,
                       H0=None, order: Optional[int] = None, check_precondition: bool = True) -> Verdict:
    """``Hrho'_{Z^nu}(v^{j+1}, zeta') = sum_mu R_{nu mu}(S-hat) rho'_{Z'^mu}(S_0, zeta')`` for ``|nu| <= l``."""
    H = _as_map(H)
    k = min(M.order, Mp.order, H.order) if order is None else order
    M, Mp, H = M.with_order(k), Mp.with_order(k), H.truncate(k)
    N, n, Np = M.N, M.n, Mp.N
    tower = SegreTower(segre_mapping(M))
    npar = n * (j + 1)
    if check_precondition:
        sys_psi = build_system(M, Mp, H, "psi", l, j)
        # S lives in t^[j+1]; the psi parameters are t^[j+2]
        lift = [Series.variable(p, sys_psi.nparams, k) for p in range(npar)]
        S_lift = S.compose(lift)
        pre = check_jet_solution(sys_psi, M, S=S_lift)
        if not pre.holds:
            return Verdict("key_identity", None, pre.order, "precondition_failed",
                           {"reason": "S does not solve the psi system", **pre.certificate})
    nv = npar + Np
    vj1 = tower.v_in(j + 1, npar)
    emb_t = list(range(npar))
    zetas = [Series.variable(npar + a, nv, k) for a in range(Np)]
    sub_lhs = Substitution([s.embed(nv, emb_t) for s in vj1] + zetas)
    sub_rhs = Substitution([s.embed(nv, emb_t) for s in S.base] + zetas)
    rho = Mp.conjugate_generators()
    Hrho = _H_rho(Mp, H)
    H0rho = _H_rho(Mp, _as_map(H0).truncate(k)) if H0 is not None else None
    R = chain_rule_table(N, Np, l, direct=False)
    svals = {(nu, c): s.embed(nv, emb_t) for (_, nu, c), s in S.hat_values(1).items()}
    worst = None
    worst_flue = None
    korder = k
    for nu in multi_indices(N, l):
        zt = tuple(nu) + (0,) * Np
        for c in range(Mp.d):
            lhs = sub_lhs(Hrho[c].differentiate(zt))
            rhs = None
            for (mu, _), poly in R[nu].items():
                coef = _eval_table_poly(poly, svals, nv, k - sum(nu))
                term = coef * sub_rhs(rho[c].differentiate(tuple(mu) + (0,) * Np))
                rhs = term if rhs is None else rhs + term
            korder = min(korder, lhs.order, rhs.order)
            v = lhs.first_difference(rhs)
            if v is not None and (worst is None or v < worst[0]):
                worst = (v, nu, c)
            if H0rho is not None:
                other = sub_lhs(H0rho[c].differentiate(zt))
                v2 = lhs.first_difference(other)
                if v2 is not None and (worst_flue is None or v2 < worst_flue[0]):
                    worst_flue = (v2, nu, c)
    cert = {"levels": f"l={l}, j={j}"}
    if H0 is not None:
        cert["comparison_with_H0"] = worst_flue is None
        if worst_flue is not None:
            cert["comparison_failure"] = {"degree": worst_flue[0], "nu": list(worst_flue[1])}
    ok = worst is None and (H0 is None or worst_flue is None)
    if worst is not None:
        cert["identity_failure"] = {"degree": worst[0], "nu": list(worst[1]), "component": worst[2] + 1}
    return Verdict("key_identity", ok, korder, "holds" if ok else "fails", cert)


# ---------------------------------------------------------------------------
# nondegeneracy certificate

def nondegeneracy_certificate(Mp: GenericManifold, H0, alpha_bound: Optional[int] = None, seed: int = 0) -> Verdict:
    """Indices ``(alpha^l, j_l)`` with ``det(d q_{j_l, alpha^l} / d Z'_m (H0(Z))) != 0``."""
    H0 = _as_map(H0)
    bound = Mp.order - 1 if alpha_bound is None else alpha_bound
    nd = holo_nondegeneracy_check(Mp, bound)
    if nd.verdict != "nondegenerate":
        return Verdict("nondegeneracy_certificate", False, nd.order, "none_found",
                       {"bound": bound, "target_verdict": nd.verdict})
    rk = generic_rank(H0, seed=seed)
    if rk.rank != Mp.N:
        return Verdict("nondegeneracy_certificate", None, rk.order, "precondition_failed",
                       {"reason": f"Rk H0 = {rk.rank} < {Mp.N}"})
    sub = Substitution(list(H0))
    rows = gradient_rows(Mp, bound)
    idx, det = select_nonsingular_rows(rows, Mp.N, transform=sub)
    if idx is None:
        return Verdict("nondegeneracy_certificate", False, Mp.order - 1, "none_found", {"bound": bound})
    return Verdict("nondegeneracy_certificate", True, det.order, "certified",
                   {"indices": [{"alpha": list(a), "j": jj + 1} for a, jj in idx],
                    "determinant_valuation": det.valuation(),
                    "determinant_leading": _first_term(det)})


# ---------------------------------------------------------------------------
# determination experiment

def hypothesis_at_level(M: GenericManifold, Mp: GenericManifold, H, H0, j: int, K: int,
                        order: Optional[int] = None) -> Verdict:
    """``H0rho'_{Z^delta}(v^j, zeta') = Hrho'_{Z^delta}(v^j, zeta')`` for ``|delta| <= K``."""
    H, H0 = _as_map(H), _as_map(H0)
    k = min(H.order, H0.order, M.order) if order is None else order
    tower = SegreTower(segre_mapping(M.with_order(k)))
    N, n, Np = M.N, M.n, Mp.N
    npar = n * j
    nv = npar + Np
    A = _H_rho(Mp, H.truncate(k))
    B = _H_rho(Mp, H0.truncate(k))
    zetas = [Series.variable(npar + a, nv, k) for a in range(Np)]
    if j == 0:
        base = [Series.zero(nv, k) for _ in range(N)]
    else:
        base = [s.embed(nv, list(range(npar))) for s in tower.v(j)]
    sub = Substitution(base + zetas)
    worst = None
    kk = k
    for delta in multi_indices(N, K):
        zt = tuple(delta) + (0,) * Np
        for c in range(len(A)):
            if sum(delta) > A[c].order:
                return Verdict("level_identity", None, kk, "budget_exceeded", {"level": j, "K": K})
            a = sub(A[c].differentiate(zt))
            b = sub(B[c].differentiate(zt))
            kk = min(kk, a.order, b.order)
            v = a.first_difference(b)
            if v is not None and (worst is None or v < worst[0]):
                worst = (v, delta)
    if worst is None:
        return Verdict("level_identity", True, kk, "holds", {"level": j, "K": K})
    return Verdict("level_identity", False, kk, "fails",
                   {"level": j, "K": K, "degree": worst[0], "delta": list(worst[1])})


@dataclass
class ExperimentReport:
    K: int
    trials: int
    order: int
    margin: int
    perturbation_degree: int
    survivors: int = 0
    nontrivial_survivors: int = 0
    passes: int = 0
    counterexamples: List[dict] = field(default_factory=list)
    implication_checks: int = 0
    implication_passes: int = 0
    kernel_samples: int = 0
    raw_samples: int = 0
    agreement_orders: List[int] = field(default_factory=list)
    conclusion_orders: List[int] = field(default_factory=list)
    seed: int = 0

    @property
    def verdict(self) -> str:
        if self.survivors == 0:
            return "vacuous"
        return "pass" if not self.counterexamples else "fail"

    def to_dict(self) -> dict:
        return {"K": self.K, "trials": self.trials, "order": self.order, "margin": self.margin,
                "perturbation_degree": self.perturbation_degree, "survivors": self.survivors,
                "nontrivial_survivors": self.nontrivial_survivors, "passes": self.passes,
                "counterexamples": self.counterexamples,
                "implication_checks": self.implication_checks, "implication_passes": self.implication_passes,
                "kernel_samples": self.kernel_samples, "raw_samples": self.raw_samples,
                "min_agreement_order": min(self.agreement_orders) if self.agreement_orders else None,
                "min_conclusion_order": min(self.conclusion_orders) if self.conclusion_orders else None,
                "verdict": self.verdict, "seed": self.seed}


def _reorder(s: Series, order: int) -> Series:
    return Series(s.nvars, order, dict(s.raw_items()))


class LinearizedConstraint:
    """Linearization at ``H0`` of ``P -> I(M')(H0 + P, conj(H0 + P) o gammabar)``.

    Unknowns are the real and imaginary parts of the coefficients of ``P``
    (components with monomials of degree ``lo..hi``); equations are the real
    and imaginary parts of every coefficient of every target generator in
    ``(Z, t)`` through ``order``.
    """

    def __init__(self, M: GenericManifold, Mp: GenericManifold, H0, lo: int, hi: int, order: int):
        self.H0 = _as_map(H0).truncate(order)
        self.M, self.Mp = M.with_order(order), Mp.with_order(order)
        self.order = order
        N, n, Np = self.M.N, self.M.n, self.Mp.N
        self.N, self.Np = N, Np
        nv = N + n
        gb = segre_mapping(self.M).gamma_bar()
        self.gamma_bar = gb
        self.rho = self.Mp.conjugate_generators() + self.Mp.graph_generators()
        H0Z = [c.embed(nv, list(range(N))) for c in self.H0]
        H0b = [compose(c.conj(), gb) for c in self.H0]
        sub = Substitution(H0Z + H0b)
        # a derivative is known to order - 1; multiplied by a perturbation of
        # valuation >= 1 the product is still exact through ``order``
        A = [[_reorder(sub(r.d(m)), order) for m in range(Np)] for r in self.rho]
        B = [[_reorder(sub(r.d(Np + m)), order) for m in range(Np)] for r in self.rho]
        gsub = Substitution(list(gb))
        self.labels: List[Tuple[int, Tuple[int, ...], int]] = []
        columns = []
        for comp in range(Np):
            for e in monomials(N, hi, lo):
                zmono = Series.from_terms({e: 1}, N, order)
                pz = zmono.embed(nv, list(range(N)))
                pb = gsub(zmono)
                for part, unit in ((0, GaussianRational(1)), (1, GaussianRational(0, 1))):
                    col = [(A[r][comp] * pz).scale(unit) + (B[r][comp] * pb).scale(unit.conjugate())
                           for r in range(len(self.rho))]
                    self.labels.append((comp, e, part))
                    columns.append(col)
        self.keys = sorted({(r, key) for col in columns for r, s in enumerate(col) for key, _ in s.raw_items()})
        self.key_pos = {key: i for i, key in enumerate(self.keys)}
        self.rows: List[List[mpq]] = []
        for r, key in self.keys:
            re_row, im_row = [], []
            for col in columns:
                c = dict(col[r].raw_items()).get(key)
                re_row.append(c[0] if c else mpq(0))
                im_row.append(c[1] if c else mpq(0))
            self.rows.append(re_row)
            self.rows.append(im_row)

    def kernel(self) -> List[List[mpq]]:
        return linalg.nullspace(self.rows, len(self.labels))

    def perturbation(self, vec) -> List[Series]:
        terms: List[Dict] = [dict() for _ in range(self.Np)]
        for (comp, e, part), x in zip(self.labels, vec):
            if x == 0:
                continue
            cur = terms[comp].get(e, (0, 0))
            terms[comp][e] = (cur[0] + x, cur[1]) if part == 0 else (cur[0], cur[1] + x)
        return [Series.from_terms(t, self.N, self.order) for t in terms]

    def perturbed_map(self, vec) -> SeriesMap:
        return SeriesMap([a + b for a, b in zip(self.H0, self.perturbation(vec))])

    def residual(self, vec) -> Optional[List[mpq]]:
        """Right-hand side of the constraint at ``H0 + P(vec)``; ``None`` if it leaves the column keys."""
        H = self.perturbed_map(vec)
        N = self.N
        nv = N + self.M.n
        sub = Substitution([c.embed(nv, list(range(N))) for c in H]
                           + [compose(c.conj(), self.gamma_bar) for c in H])
        out = [mpq(0)] * len(self.rows)
        for r, g in enumerate(self.rho):
            for key, c in sub(g).truncate(self.order).raw_items():
                i = self.key_pos.get((r, key))
                if i is None:
                    return None
                out[2 * i], out[2 * i + 1] = c[0], c[1]
        return out

    def correct(self, vec, steps: int = 8) -> Optional[List[mpq]]:
        """Newton iteration toward an exact truncated solution; ``None`` when a step is unsolvable."""
        vec = list(vec)
        for _ in range(steps):
            res = self.residual(vec)
            if res is None:
                return None
            if not any(res):
                return vec
            try:
                step = linalg.solve(self.rows, [-x for x in res])
            except linalg.SingularMatrix:
                return None
            vec = [a + b for a, b in zip(vec, step)]
        res = self.residual(vec)
        return vec if res is not None and not any(res) else None


def determination_experiment(M: GenericManifold, Mp: GenericManifold, H0, K: int = 2, trials: int = 100,
                             perturbation_degree: Optional[int] = None, order: Optional[int] = None,
                             margin: Optional[int] = None, seed: int = 0, level_l: int = 1,
                             family=None) -> ExperimentReport:
    """Perturb ``H0`` above degree ``K``, keep the maps that still send M into M', compare ideals.

    Even trials draw a random element of the linearized kernel and push it
    onto the truncated solution set by Newton steps; odd trials are raw
    random perturbations.  ``family(rng) -> SeriesMap`` replaces both.
    """
    H0 = _as_map(H0)
    k = min(M.order, Mp.order, H0.order) if order is None else order
    M, Mp, H0 = M.with_order(k), Mp.with_order(k), H0.truncate(k)
    if perturbation_degree is None:
        perturbation_degree = max(k - K, 1)
    lo, hi = K + 1, min(K + perturbation_degree, k)
    m = default_margin(k, K) if margin is None else margin
    rep = ExperimentReport(K, trials, k, m, perturbation_degree, seed=seed)
    lin = basis = None
    if family is None and lo <= hi:
        lin = LinearizedConstraint(M, Mp, H0, lo, hi, k)
        basis = lin.kernel()
    for trial in range(trials):
        rng = random.Random(f"{seed}:{trial}")
        if family is not None:
            H = _as_map(family(rng)).truncate(k)
        elif lin is None:
            H = H0
        else:
            vec = None
            if basis and trial % 2 == 0:
                rep.kernel_samples += 1
                start = [mpq(0)] * len(lin.labels)
                for b in basis:
                    c = rng.randint(-3, 3)
                    start = [x + c * y for x, y in zip(start, b)]
                vec = lin.correct(start)
                if vec is None:
                    continue
            else:
                rep.raw_samples += 1
                vec = [mpq(rng.randint(-3, 3)) for _ in lin.labels]
            H = lin.perturbed_map(vec)
        if not sends_into(M, Mp, H).holds:
            continue
        rep.survivors += 1
        if not H.agrees_with(H0):
            rep.nontrivial_survivors += 1
        eq = ideal_equal(Mp, H, H0)
        agree = k if eq.holds else eq.certificate["obstruction_degree"] - 1
        rep.agreement_orders.append(agree)
        ok = agree >= m
        for j in (0, 1):
            hyp = hypothesis_at_level(M, Mp, H, H0, j, K)
            if not hyp.holds:
                continue
            rep.implication_checks += 1
            concl = hypothesis_at_level(M, Mp, H, H0, j + 1, level_l)
            c_ord = concl.order if concl.holds else concl.certificate["degree"] - 1
            rep.conclusion_orders.append(c_ord)
            if c_ord >= m:
                rep.implication_passes += 1
            else:
                ok = False
        if ok:
            rep.passes += 1
        else:
            rep.counterexamples.append({"trial": trial, "agreement_order": agree})
    return rep


def default_margin(order: int, K: int) -> int:
    """Order through which a survivor at truncation ``order`` must agree with ``H0``."""
    return max(K, order // 2)
