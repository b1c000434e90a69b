"""Formal generic manifolds in normal form and the objects built on them.

Variable conventions used throughout:

* ambient coordinates ``Z = (Z_1..Z_N)`` and conjugate coordinates
  ``zeta = (zeta_1..zeta_N)``; a series "in (Z, zeta)" has ``2N`` variables,
  ``Z`` first;
* the split ``Z = (z, w)`` is given by index lists ``z_idx`` and ``w_idx``,
  and the same lists split ``zeta = (chi, tau)``;
* ``Q`` has variables ``(z, zeta)`` (``n + N`` of them) and ``Qbar`` has
  ``(chi, Z)``; the manifold is ``w = Q(z, zeta)``, equivalently
  ``tau = Qbar(chi, Z)``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from . import linalg
from .powerseries import (GaussianRational, Series, SeriesMap, Substitution, determinant, generic_rank,
                          ideal_membership, implicit_solve, monomials, pack, sigma_conjugate, _Echelon,
                          BITS)


class ManifoldError(ValueError):
    """Raised when a defining system does not describe a generic real manifold."""


@dataclass(frozen=True)
class GenericManifold:
    N: int
    d: int
    z_idx: Tuple[int, ...]
    w_idx: Tuple[int, ...]
    Q: SeriesMap
    Qbar: SeriesMap
    order: int
    name: str = "M"

    @property
    def n(self) -> int:
        return self.N - self.d

    # -- construction -------------------------------------------------------

    @classmethod
    def from_defining(cls, rho: Sequence[Series], order: Optional[int] = None, name: str = "M") -> "GenericManifold":
        """Normal form of the manifold ideal generated by ``rho`` (series in (Z, zeta))."""
        rho = list(rho)
        if not rho:
            raise ManifoldError("need at least one defining series")
        two_n = rho[0].nvars
        if two_n % 2:
            raise ManifoldError("defining series must live in (Z, zeta) with an even variable count")
        N = two_n // 2
        d = len(rho)
        k = min(r.order for r in rho) if order is None else order
        rho = [r.truncate(k) for r in rho]
        for j, r in enumerate(rho):
            if not r.constant_term().is_zero():
                raise ManifoldError(f"defining series {j + 1} does not vanish at the origin")
        full = [[r.d(p).constant_term() for p in range(two_n)] for r in rho]
        if linalg.rank(full) < d:
            raise ManifoldError("not a manifold ideal: differentials at 0 are linearly dependent")
        zpart = [row[:N] for row in full]
        if linalg.rank(zpart) < d:
            raise ManifoldError(f"not generic: d rho/dZ (0) has rank {linalg.rank(zpart)} < {d}")
        w_idx = None
        for cand in itertools.combinations(reversed(range(N)), d):
            cols = sorted(cand)
            if linalg.rank([[row[c] for c in cols] for row in zpart]) == d:
                w_idx = tuple(cols)
                break
        z_idx = tuple(j for j in range(N) if j not in w_idx)
        Q = implicit_solve(rho, list(w_idx))
        tau_pos = [N + j for j in w_idx]
        if linalg.rank([[row[c] for c in tau_pos] for row in full]) < d:
            raise ManifoldError("not real: d rho/d tau (0) is singular")
        sol = implicit_solve(rho, tau_pos)
        # remaining variables of sol: Z (N) then chi (n); reorder to (chi, Z)
        n = N - d
        Qbar = SeriesMap([c.embed(N + n, [n + j for j in range(N)] + list(range(n))) for c in sol])
        m = cls(N, d, z_idx, w_idx, Q, Qbar, k, name)
        bad = m.reality_defect(rho)
        if bad is not None:
            j, deg = bad
            raise ManifoldError(f"not real: the conjugate of generator {j + 1} leaves the ideal at degree {deg}")
        return m

    @classmethod
    def from_graph(cls, Q: Sequence[Series], N: int, w_idx: Optional[Sequence[int]] = None,
                   name: str = "M") -> "GenericManifold":
        """Manifold ``w = Q(z, zeta)`` given directly in normal form."""
        Q = SeriesMap(list(Q))
        d = len(Q)
        w_idx = tuple(range(N - d, N)) if w_idx is None else tuple(w_idx)
        z_idx = tuple(j for j in range(N) if j not in w_idx)
        m = cls(N, d, z_idx, w_idx, Q, Q.conj(), Q.order, name)
        defect = m.reality_identity_defect()
        if defect is not None:
            raise ManifoldError(f"graph is not real: reality identity fails at degree {defect}")
        return m

    # -- generators ---------------------------------------------------------

    def _z_zeta_embedding(self) -> List[int]:
        """Positions of (z, zeta) inside (Z, zeta)."""
        return list(self.z_idx) + [self.N + j for j in range(self.N)]

    def _chi_Z_embedding(self) -> List[int]:
        """Positions of (chi, Z) inside (Z, zeta)."""
        return [self.N + j for j in self.z_idx] + list(range(self.N))

    def graph_generators(self) -> List[Series]:
        """``w - Q(z, zeta)`` as series in (Z, zeta)."""
        two_n = 2 * self.N
        pos = self._z_zeta_embedding()
        return [Series.variable(w, two_n, self.order) - q.embed(two_n, pos) for w, q in zip(self.w_idx, self.Q)]

    def conjugate_generators(self) -> List[Series]:
        """``tau - Qbar(chi, Z)`` as series in (Z, zeta)."""
        two_n = 2 * self.N
        pos = self._chi_Z_embedding()
        return [Series.variable(self.N + w, two_n, self.order) - q.embed(two_n, pos)
                for w, q in zip(self.w_idx, self.Qbar)]

    def parametrization(self) -> Substitution:
        """Substitution (Z, zeta) -> (z, zeta) placing w = Q(z, zeta): variables (z, zeta)."""
        n, N = self.n, self.N
        k = self.order
        args: List[Series] = [None] * (2 * N)  # type: ignore
        for a, j in enumerate(self.z_idx):
            args[j] = Series.variable(a, n + N, k)
        for b, j in enumerate(self.w_idx):
            args[j] = self.Q[b]
        for j in range(N):
            args[N + j] = Series.variable(n + j, n + N, k)
        return Substitution(args)

    def restrict(self, f: Series) -> Series:
        """Value of a (Z, zeta)-series on the complexified manifold, in variables (z, zeta)."""
        return self.parametrization()(f)

    def reality_defect(self, rho: Sequence[Series]) -> Optional[Tuple[int, int]]:
        """First generator whose sigma-image is not in the ideal, with its obstruction degree."""
        N = self.N
        sub = self.parametrization()
        for j, r in enumerate(rho):
            s = sigma_conjugate(r, first=range(N), second=range(N, 2 * N))
            v = sub(s).valuation()
            if v is not None:
                return j, v
        return None

    def reality_identity(self) -> SeriesMap:
        """``Q(z, chi, Qbar(chi, z, w))`` in variables (Z, chi); equals ``w`` for a real manifold."""
        N, n, k = self.N, self.n, self.order
        nv = N + n
        Zs = [Series.variable(j, nv, k) for j in range(N)]
        chis = [Series.variable(N + a, nv, k) for a in range(n)]
        qbar_args = chis + Zs
        sub_bar = Substitution(qbar_args)
        taus = [sub_bar(q) for q in self.Qbar]
        zeta: List[Series] = [None] * N  # type: ignore
        for a, j in enumerate(self.z_idx):
            zeta[j] = chis[a]
        for b, j in enumerate(self.w_idx):
            zeta[j] = taus[b]
        q_args = [Zs[j] for j in self.z_idx] + zeta
        sub = Substitution(q_args)
        return SeriesMap([sub(q) for q in self.Q])

    def reality_identity_defect(self) -> Optional[int]:
        """Lowest degree where the reality identity fails, ``None`` if it holds to order."""
        N, n = self.N, self.n
        lhs = self.reality_identity()
        worst = None
        for b, j in enumerate(self.w_idx):
            target = Series.variable(j, N + n, lhs.order)
            v = lhs[b].first_difference(target)
            if v is not None and (worst is None or v < worst):
                worst = v
        return worst

    def qbar_expansion(self) -> Dict[Tuple[int, ...], List[Series]]:
        """Coefficients ``q_alpha(Z)`` of ``Qbar(chi, Z) = sum q_alpha(Z) chi^alpha``."""
        n, N, k = self.n, self.N, self.order
        out: Dict[Tuple[int, ...], List[Dict[Tuple[int, ...], GaussianRational]]] = {}
        for b, q in enumerate(self.Qbar):
            for exps, c in q.terms():
                alpha, zexp = exps[:n], exps[n:]
                out.setdefault(alpha, [dict() for _ in range(self.d)])[b][zexp] = c
        result = {}
        for alpha, comps in out.items():
            result[alpha] = [Series.from_terms(t, N, k - sum(alpha)) for t in comps]
        return result

    def with_order(self, order: int) -> "GenericManifold":
        if order > self.order:
            raise ValueError(f"cannot raise the order from {self.order} to {order}")
        return GenericManifold(self.N, self.d, self.z_idx, self.w_idx, self.Q.truncate(order),
                               self.Qbar.truncate(order), order, self.name)

    def product_with_line(self, name: Optional[str] = None) -> "GenericManifold":
        """The manifold M x C: one extra free coordinate placed first."""
        N, n = self.N, self.n
        # Q variables (z, zeta) -> (s, z, sigma, zeta) with s, sigma new
        pos = [1 + a for a in range(n)] + [n + 2 + j for j in range(N)]
        Q = SeriesMap([q.embed(n + N + 2, pos) for q in self.Q])
        z_idx = (0,) + tuple(j + 1 for j in self.z_idx)
        w_idx = tuple(j + 1 for j in self.w_idx)
        # Q must be indexed as (z in z_idx order, zeta in coordinate order)
        return GenericManifold(N + 1, self.d, z_idx, w_idx, Q, Q.conj(), self.order, name or self.name + "xC")


# ---------------------------------------------------------------------------
# Segre mappings

@dataclass
class SegreMapping:
    """``gamma(zeta, t) = (mu(zeta, t), Q(mu, zeta))``; variables (zeta, t)."""

    manifold: GenericManifold
    mu: SeriesMap
    gamma: SeriesMap

    @property
    def default(self) -> bool:
        M = self.manifold
        N, n = M.N, M.n
        return all(m.agrees_with(Series.variable(N + a, N + n, m.order)) for a, m in enumerate(self.mu))

    def gamma_bar(self) -> SeriesMap:
        """``gamma-bar(Z, t)``: conjugate coefficients, variables (Z, t)."""
        return self.gamma.conj()

    def pi_map(self) -> SeriesMap:
        """``pi(Z, t)`` with ``mu(gamma-bar(Z, t), pi(Z, t)) = z``; variables (Z, t)."""
        M = self.manifold
        N, n, k = M.N, M.n, M.order
        nv = N + n + n  # (Z, t, s)
        gb = [c.embed(nv, list(range(N + n))) for c in self.gamma_bar()]
        s_vars = [Series.variable(N + n + a, nv, k) for a in range(n)]
        sub = Substitution(gb + s_vars)
        rho = [sub(m) - Series.variable(zj, nv, k) for m, zj in zip(self.mu, M.z_idx)]
        return implicit_solve(rho, list(range(N + n, nv)))


def segre_mapping(M: GenericManifold, mu: Optional[Sequence[Series]] = None) -> SegreMapping:
    """Segre variety mapping relative to M; default ``mu(zeta, t) = t``."""
    N, n, k = M.N, M.n, M.order
    nv = N + n
    if mu is None:
        mu = [Series.variable(N + a, nv, k) for a in range(n)]
    mu = SeriesMap(list(mu))
    if len(mu) != n or mu.nvars != nv:
        raise ValueError(f"mu must have {n} components in {nv} variables (zeta, t)")
    if not mu.fixes_origin:
        raise ValueError("mu must vanish at the origin")
    dt = [[c.d(N + a).constant_term() for a in range(n)] for c in mu]
    if n and linalg.rank(dt) < n:
        raise ValueError("d gamma/dt (0) must have rank n")
    zetas = [Series.variable(j, nv, k) for j in range(N)]
    sub = Substitution(list(mu) + zetas)
    nu = [sub(q) for q in M.Q]
    comps: List[Series] = [None] * N  # type: ignore
    for a, j in enumerate(M.z_idx):
        comps[j] = mu[a]
    for b, j in enumerate(M.w_idx):
        comps[j] = nu[b]
    return SegreMapping(M, mu, SeriesMap(comps))


def segre_identity_residuals(S: SegreMapping) -> List[Series]:
    """Generators h of I(M) evaluated at (gamma(zeta, t), zeta); all vanish for a valid mapping."""
    M = S.manifold
    N, n = M.N, M.n
    nv = N + n
    zetas = [Series.variable(j, nv, M.order) for j in range(N)]
    sub = Substitution(list(S.gamma) + zetas)
    return [sub(h) for h in M.graph_generators() + M.conjugate_generators()]


class SegreTower:
    """Iterated Segre mappings ``v^0 = 0, v^1, v^2, ...`` with retractions."""

    def __init__(self, S: SegreMapping):
        self.segre = S
        self.manifold = S.manifold
        self._v: Dict[int, SeriesMap] = {}

    def t_block(self, j: int) -> List[int]:
        """Positions of ``t^j`` (j >= 1) inside ``t^[J]`` for any J >= j."""
        n = self.manifold.n
        return list(range(n * (j - 1), n * j))

    def v(self, j: int) -> SeriesMap:
        """``v^j`` in variables ``t^[j]`` (``n*j`` of them; ``v^0`` uses 0 variables)."""
        if j < 0:
            raise ValueError("level must be nonnegative")
        if j in self._v:
            return self._v[j]
        M = self.manifold
        N, n, k = M.N, M.n, M.order
        if j == 0:
            res = SeriesMap([Series.zero(0, k) for _ in range(N)])
        else:
            nv = n * j
            prev = self.v(j - 1)
            prev_bar = [c.conj().embed(nv, list(range(n * (j - 1)))) if c.nvars else Series.zero(nv, k)
                        for c in prev]
            ts = [Series.variable(p, nv, k) for p in self.t_block(j)]
            sub = Substitution(prev_bar + ts)
            res = SeriesMap([sub(c) for c in self.segre.gamma])
        self._v[j] = res
        return res

    def v_in(self, j: int, nv: int) -> SeriesMap:
        """``v^j`` embedded in ``nv >= n*j`` variables ``t^[J]``."""
        vj = self.v(j)
        k = vj.order
        if vj.nvars == 0:
            return SeriesMap([Series.zero(nv, k) for _ in vj])
        return vj.embed(nv, list(range(vj.nvars)))

    def identity_residuals(self, j: int) -> List[Series]:
        """Generators h of I(M) at ``(v^j, conj(v^{j+1}))``, variables ``t^[j+1]``."""
        M = self.manifold
        nv = M.n * (j + 1)
        a = self.v_in(j, nv)
        b = self.v(j + 1).conj()
        sub = Substitution(list(a) + list(b))
        return [sub(h) for h in M.graph_generators() + M.conjugate_generators()]

    def xi(self, j: int) -> SeriesMap:
        """Retraction ``xi^j(t^[j+1])`` with ``v^{j+2}(t^[j+1], xi^j) = v^j``."""
        M = self.manifold
        n = M.n
        nv = n * (j + 1)
        k = M.order
        if self.segre.default:
            if j == 0:
                return SeriesMap([Series.zero(nv, k) for _ in range(n)])
            return SeriesMap([Series.variable(p, nv, k) for p in self.t_block(j)])
        pi = self.segre.pi_map()
        args = list(self.v_in(j, nv)) + [Series.variable(p, nv, k) for p in self.t_block(j + 1)]
        sub = Substitution(args)
        return SeriesMap([sub(c) for c in pi])

    def xi_conj(self, j: int) -> SeriesMap:
        """Conjugate retraction: ``conj(v^{j+2})(t^[j+1], conj(xi^j)) = conj(v^j)``."""
        return self.xi(j).conj()

    def retraction_residual(self, j: int) -> List[Series]:
        """``v^{j+2}(t^[j+1], xi^j(t^[j+1])) - v^j(t^[j])`` in variables ``t^[j+1]``."""
        M = self.manifold
        n = M.n
        nv = n * (j + 1)
        k = M.order
        xi = self.xi(j)
        args = [Series.variable(p, nv, k) for p in range(nv)] + list(xi)
        sub = Substitution(args)
        lhs = [sub(c) for c in self.v(j + 2)]
        rhs = self.v_in(j, nv)
        return [a - b for a, b in zip(lhs, rhs)]


def iterated_segre(M: GenericManifold, j: int, S: Optional[SegreMapping] = None) -> SeriesMap:
    return SegreTower(S or segre_mapping(M)).v(j)


def xi_retraction(M: GenericManifold, j: int, S: Optional[SegreMapping] = None) -> SeriesMap:
    return SegreTower(S or segre_mapping(M)).xi(j)


# ---------------------------------------------------------------------------
# CR vector fields and finite type

VectorField = Tuple[Series, ...]  # coefficients on d/dZ_1..d/dZ_N, d/dzeta_1..d/dzeta_N


def cr_vector_fields(M: GenericManifold) -> Dict[str, List[VectorField]]:
    """Bases of the (1,0) and (0,1) fields tangent to the complexified manifold."""
    N, k = M.N, M.order
    two_n = 2 * N
    qpos = M._z_zeta_embedding()
    bpos = M._chi_Z_embedding()
    one = Series.constant(1, two_n, k)
    zero = Series.zero(two_n, k)
    basis_10 = []
    for a, zj in enumerate(M.z_idx):
        coeffs = [zero] * two_n
        coeffs[zj] = one
        for b, wj in enumerate(M.w_idx):
            coeffs[wj] = M.Q[b].d(a).embed(two_n, qpos)
        basis_10.append(tuple(c.truncate(k - 1) for c in coeffs))
    basis_01 = []
    for a, zj in enumerate(M.z_idx):
        coeffs = [zero] * two_n
        coeffs[N + zj] = one
        for b, wj in enumerate(M.w_idx):
            coeffs[N + wj] = M.Qbar[b].d(a).embed(two_n, bpos)
        basis_01.append(tuple(c.truncate(k - 1) for c in coeffs))
    return {"basis_10": basis_10, "basis_01": basis_01}


def apply_field(X: VectorField, f: Series) -> Series:
    total = None
    for j, c in enumerate(X):
        if c.is_zero():
            continue
        term = c * f.d(j)
        total = term if total is None else total + term
    if total is None:
        return Series.zero(f.nvars, min(f.order - 1, min(c.order for c in X)))
    return total


def bracket(X: VectorField, Y: VectorField) -> VectorField:
    return tuple(apply_field(X, b) - apply_field(Y, a) for a, b in zip(X, Y))


def field_value_at_zero(X: VectorField) -> List[GaussianRational]:
    return [c.constant_term() for c in X]


def field_tangency(M: GenericManifold, X: VectorField, order: Optional[int] = None) -> List[bool]:
    """Whether X annihilates each generator of I(M) modulo the ideal (by ideal membership)."""
    gens = M.graph_generators()
    out = []
    for h in gens:
        img = apply_field(X, h)
        k = img.order if order is None else order
        out.append(ideal_membership(img, [g.truncate(k) for g in gens], k, witness=False).member)
    return out


@dataclass
class FiniteTypeResult:
    verdict: str  # finite_type | not_finite_type_to_order | inconclusive
    order: int
    lie: Optional[dict] = None
    segre: Optional[dict] = None
    agree: Optional[bool] = None

    @property
    def finite(self) -> bool:
        return self.verdict == "finite_type"


def _lie_route(M: GenericManifold, depth_bound: int) -> dict:
    fields = cr_vector_fields(M)
    gens = fields["basis_10"] + fields["basis_01"]
    target = 2 * M.N - M.d
    values = [field_value_at_zero(X) for X in gens]
    dim = linalg.rank(values) if values else 0
    depth_reached = 1
    current = gens
    seen = set()
    closed = False
    while dim < target and depth_reached < depth_bound:
        if any(c.order < 1 for X in current for c in X):
            break
        new = []
        for g in gens:
            for X in current:
                B = bracket(g, X)
                if all(c.is_zero() for c in B):
                    continue
                key = tuple(B)
                if key in seen:
                    continue
                seen.add(key)
                new.append(B)
        depth_reached += 1
        if not new:
            closed = True
            break
        values.extend(field_value_at_zero(X) for X in new)
        dim = linalg.rank(values)
        current = new
    order = min((c.order for X in current for c in X), default=M.order)
    if dim == target:
        verdict = "finite_type"
    elif closed:
        verdict = "not_finite_type_to_order"
    else:
        verdict = "inconclusive"
    return {"verdict": verdict, "dimension": dim, "target": target, "depth": depth_reached,
            "closed": closed, "order": order}


def _segre_route(M: GenericManifold, j_bound: int, S: Optional[SegreMapping] = None) -> dict:
    tower = SegreTower(S or segre_mapping(M))
    ranks = {}
    for j in range(1, j_bound + 1):
        r = generic_rank(tower.v(j))
        ranks[j] = {"rank": r.rank, "method": r.method, "order": r.order}
        if r.rank == M.N:
            return {"verdict": "finite_type", "j0": j, "ranks": ranks, "order": r.order}
    last = ranks[j_bound]
    verdict = "not_finite_type_to_order" if last["method"] == "minors" else "inconclusive"
    return {"verdict": verdict, "j0": None, "ranks": ranks, "order": last["order"]}


def finite_type_check(M: GenericManifold, route: str = "both", depth_bound: Optional[int] = None,
                      j_bound: Optional[int] = None) -> FiniteTypeResult:
    depth_bound = 2 * M.N - M.d + 1 if depth_bound is None else depth_bound
    j_bound = M.d + 1 if j_bound is None else j_bound
    if route not in ("lie", "segre", "both"):
        raise ValueError(f"unknown route {route!r}")
    lie = _lie_route(M, depth_bound) if route in ("lie", "both") else None
    seg = _segre_route(M, j_bound) if route in ("segre", "both") else None
    verdicts = [r["verdict"] for r in (lie, seg) if r is not None]
    definite = [v for v in verdicts if v != "inconclusive"]
    agree = None
    if lie is not None and seg is not None and len(definite) == 2:
        agree = definite[0] == definite[1]
    if "finite_type" in definite:
        verdict = "finite_type"
    elif definite:
        verdict = definite[0]
    else:
        verdict = "inconclusive"
    order = min(r["order"] for r in (lie, seg) if r is not None)
    return FiniteTypeResult(verdict, order, lie, seg, agree)


# ---------------------------------------------------------------------------
# holomorphic nondegeneracy

@dataclass
class NondegeneracyResult:
    verdict: str  # nondegenerate | degenerate_to_order | inconclusive
    order: int
    indices: Optional[List[Tuple[Tuple[int, ...], int]]] = None
    determinant: Optional[Series] = None
    vector_field: Optional[List[Series]] = None
    notes: List[str] = field(default_factory=list)


def gradient_rows(M: GenericManifold, alpha_bound: int) -> List[Tuple[Tuple[Tuple[int, ...], int], List[Series]]]:
    """Rows ``grad_Z q_{j,alpha}`` in graded-lex order of alpha, then j."""
    exp = M.qbar_expansion()
    rows = []
    for alpha in monomials(M.n, alpha_bound):
        if alpha not in exp:
            continue
        for j, q in enumerate(exp[alpha]):
            if q.order < 1 or q.is_zero():
                continue
            rows.append(((alpha, j), [q.d(m) for m in range(M.N)]))
    return rows


def select_nonsingular_rows(rows, size: int, transform=None):
    """Greedy choice of ``size`` rows with a nonzero maximal minor, in the given row order."""
    chosen: List[int] = []
    det = None
    mats = [r[1] if transform is None else [transform(e) for e in r[1]] for r in rows]
    ncols = len(mats[0]) if mats else 0
    for i in range(len(rows)):
        trial = chosen + [i]
        found = None
        for cols in itertools.combinations(range(ncols), len(trial)):
            m = determinant([[mats[r][c] for c in cols] for r in trial])
            if not m.is_zero():
                found = m
                break
        if found is not None:
            chosen = trial
            det = found
            if len(chosen) == size:
                break
    if len(chosen) < size:
        return None, None
    return [rows[i][0] for i in chosen], det


def tangent_holomorphic_field(M: GenericManifold, max_degree: Optional[int] = None) -> Optional[List[Series]]:
    """Lowest-degree nonzero ``a(Z) d/dZ`` with ``sum_k a_k d q_alpha/dZ_k = 0`` to order, or ``None``."""
    N, k = M.N, M.order
    D = max(0, (k - 1) // 2) if max_degree is None else max_degree
    exp = M.qbar_expansion()
    blocks = []
    for alpha, comps in sorted(exp.items(), key=lambda t: (sum(t[0]), t[0])):
        for j, q in enumerate(comps):
            if q.order >= 1 and not q.is_zero():
                blocks.append([q.d(m) for m in range(N)])
    if not blocks:
        return [Series.constant(1, N, k)] + [Series.zero(N, k) for _ in range(N - 1)]
    ech = _Echelon(True)
    stride = 1 << (BITS * (N + 1) + 8)
    for beta in monomials(N, D):
        shift = pack(beta)
        for m in range(N):
            vec = {}
            for b, grads in enumerate(blocks):
                g = grads[m]
                lim = (g.order + 1) << (BITS * N)
                for key, c in g.raw_items():
                    new = key + shift
                    if new < lim:
                        vec[b * stride + new] = c
            combo = {(m, beta): (GaussianRational(1).pair)}
            vec, combo, p = ech.reduce(vec, combo)
            if p is None:
                coeffs: List[Dict] = [dict() for _ in range(N)]
                for (mm, bb), c in combo.items():
                    coeffs[mm][bb] = c
                return [Series.from_terms(c, N, D) for c in coeffs]
            inv = (GaussianRational(1) / GaussianRational(*vec[p])).pair
            from .powerseries import _scaled
            ech.pivots[p] = (_scaled(vec, inv), _scaled(combo, inv))
    return None


def holo_nondegeneracy_check(M: GenericManifold, alpha_degree_bound: Optional[int] = None) -> NondegeneracyResult:
    bound = (M.order - 1) if alpha_degree_bound is None else alpha_degree_bound
    rows = gradient_rows(M, bound)
    idx, det = select_nonsingular_rows(rows, M.N)
    if idx is not None:
        return NondegeneracyResult("nondegenerate", det.order, [(a, j) for a, j in idx], det)
    notes = [f"no nonvanishing determinant among q_alpha with |alpha| <= {bound}"]
    X = tangent_holomorphic_field(M)
    if X is not None:
        return NondegeneracyResult("degenerate_to_order", M.order - 1, vector_field=X, notes=notes)
    notes.append("no tangent holomorphic vector field of low degree found")
    return NondegeneracyResult("inconclusive", M.order, notes=notes)
