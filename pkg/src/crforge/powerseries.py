"""Truncated multivariate formal power series over the Gaussian rationals.

A :class:`Series` stores the coefficients of the monomials of total degree at
most ``order``; everything above that degree is unknown, not zero.  Binary
operations return a result at the smaller of the two orders, so every equality
the library asserts is an equality modulo ``m^(order+1)``.

Internally a monomial is packed into one integer (8 bits per exponent, total
degree in the high bits) so that monomial multiplication is integer addition
and sorting the keys gives a graded order.  Coefficients are pairs of
``gmpy2.mpq`` (real part, imaginary part).
"""

from __future__ import annotations

import itertools
import random
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple

from gmpy2 import mpq

BITS = 8
MASK = (1 << BITS) - 1
MAX_ORDER = 120

_Q0 = mpq(0)
_Q1 = mpq(1)
_ZERO_PAIR = (_Q0, _Q0)
_ONE_PAIR = (_Q1, _Q0)

Pair = Tuple[mpq, mpq]


class GaussianRational:
    """Exact value ``re + i*im`` with rational parts."""

    __slots__ = ("re", "im")

    def __init__(self, re=0, im=0):
        self.re = _to_mpq(re)
        self.im = _to_mpq(im)

    @classmethod
    def coerce(cls, value) -> "GaussianRational":
        if isinstance(value, GaussianRational):
            return value
        if isinstance(value, tuple):
            return cls(value[0], value[1])
        if isinstance(value, complex):
            return cls(Fraction(value.real), Fraction(value.imag))
        if isinstance(value, str):
            return cls.parse(value)
        return cls(value, 0)

    @classmethod
    def parse(cls, text: str) -> "GaussianRational":
        """Parse ``"a/b+c/d*i"`` and the shorter forms ``"3"``, ``"-i"``, ``"1/2*i"``."""
        s = text.replace(" ", "")
        if not s:
            raise ValueError("empty coefficient")
        m = _COEF_RE.fullmatch(s)
        if m is None:
            raise ValueError(f"malformed coefficient {text!r}")
        real, imag = m.group("re"), m.group("im")
        re_part = mpq(real) if real else _Q0
        if imag is None:
            return cls(re_part, 0)
        sign = -1 if imag.startswith("-") else 1
        body = imag.lstrip("+-").rstrip("i").rstrip("*")
        im_part = mpq(body) if body else _Q1
        return cls(re_part, sign * im_part)

    @property
    def pair(self) -> Pair:
        return (self.re, self.im)

    def is_zero(self) -> bool:
        return self.re == 0 and self.im == 0

    def conjugate(self) -> "GaussianRational":
        return GaussianRational(self.re, -self.im)

    def __add__(self, other):
        o = GaussianRational.coerce(other)
        return GaussianRational(self.re + o.re, self.im + o.im)

    __radd__ = __add__

    def __sub__(self, other):
        o = GaussianRational.coerce(other)
        return GaussianRational(self.re - o.re, self.im - o.im)

    def __rsub__(self, other):
        return GaussianRational.coerce(other) - self

    def __neg__(self):
        return GaussianRational(-self.re, -self.im)

    def __mul__(self, other):
        o = GaussianRational.coerce(other)
        return GaussianRational(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = GaussianRational.coerce(other)
        den = o.re * o.re + o.im * o.im
        if den == 0:
            raise ZeroDivisionError("division by zero Gaussian rational")
        return GaussianRational((self.re * o.re + self.im * o.im) / den, (self.im * o.re - self.re * o.im) / den)

    def __rtruediv__(self, other):
        return GaussianRational.coerce(other) / self

    def __eq__(self, other):
        try:
            o = GaussianRational.coerce(other)
        except (TypeError, ValueError):
            return NotImplemented
        return self.re == o.re and self.im == o.im

    def __hash__(self):
        return hash((self.re, self.im))

    def __str__(self):
        return format_pair((self.re, self.im))

    def __repr__(self):
        return f"GaussianRational({self})"


_COEF_RE = re.compile(
    r"(?P<re>[+-]?\d+(?:/\d+)?)?"
    r"(?P<im>[+-]?(?:\d+(?:/\d+)?\*?)?i)?"
)


def _to_mpq(x) -> mpq:
    if isinstance(x, Fraction):
        return mpq(x.numerator, x.denominator)
    return mpq(x)


def format_pair(c: Pair) -> str:
    """Canonical text ``a/b+c/d*i`` (always both parts)."""
    re_part, im_part = c
    sign = "-" if im_part < 0 else "+"
    return f"{_fmt_q(re_part)}{sign}{_fmt_q(abs(im_part))}*i"


def _fmt_q(q: mpq) -> str:
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def _pair(value) -> Pair:
    if isinstance(value, tuple) and len(value) == 2 and isinstance(value[0], type(_Q0)):
        return value
    return GaussianRational.coerce(value).pair


# ---------------------------------------------------------------------------
# monomial packing

def pack(exps: Sequence[int]) -> int:
    n = len(exps)
    key = sum(exps) << (BITS * n)
    for j, e in enumerate(exps):
        if e < 0 or e > MASK:
            raise ValueError(f"exponent {e} out of range")
        key |= e << (BITS * j)
    return key


def unpack(key: int, nvars: int) -> Tuple[int, ...]:
    return tuple((key >> (BITS * j)) & MASK for j in range(nvars))


def key_degree(key: int, nvars: int) -> int:
    return key >> (BITS * nvars)


def monomials(nvars: int, max_degree: int, min_degree: int = 0) -> List[Tuple[int, ...]]:
    """All exponent tuples with ``min_degree <= |e| <= max_degree`` in graded-lex order."""
    out = []
    for d in range(min_degree, max_degree + 1):
        out.extend(_homogeneous_exponents(nvars, d))
    return out


def _homogeneous_exponents(nvars: int, d: int) -> List[Tuple[int, ...]]:
    if nvars == 0:
        return [()] if d == 0 else []
    if nvars == 1:
        return [(d,)]
    out = []
    for first in range(d, -1, -1):
        for rest in _homogeneous_exponents(nvars - 1, d - first):
            out.append((first,) + rest)
    return out


# ---------------------------------------------------------------------------

class Series:
    """Truncated power series in ``nvars`` variables, exact through degree ``order``."""

    __slots__ = ("nvars", "order", "_c")

    def __init__(self, nvars: int, order: int, coeffs: Optional[Dict[int, Pair]] = None):
        if nvars < 0:
            raise ValueError("nvars must be nonnegative")
        if order < 0 or order > MAX_ORDER:
            raise ValueError(f"truncation order {order} outside 0..{MAX_ORDER}")
        self.nvars = nvars
        self.order = order
        self._c: Dict[int, Pair] = coeffs if coeffs is not None else {}

    # -- construction -------------------------------------------------------

    @classmethod
    def zero(cls, nvars: int, order: int) -> "Series":
        return cls(nvars, order)

    @classmethod
    def constant(cls, value, nvars: int, order: int) -> "Series":
        c = _pair(value)
        if c == _ZERO_PAIR:
            return cls(nvars, order)
        return cls(nvars, order, {0: c})

    @classmethod
    def variable(cls, index: int, nvars: int, order: int) -> "Series":
        if not 0 <= index < nvars:
            raise IndexError(f"variable {index} out of range for {nvars} variables")
        exps = [0] * nvars
        exps[index] = 1
        if order < 1:
            return cls(nvars, order)
        return cls(nvars, order, {pack(exps): _ONE_PAIR})

    @classmethod
    def from_terms(cls, terms: Mapping[Sequence[int], object], nvars: int, order: int) -> "Series":
        out: Dict[int, Pair] = {}
        for exps, value in terms.items():
            exps = tuple(exps)
            if len(exps) != nvars:
                raise ValueError(f"exponent {exps} does not have {nvars} entries")
            if sum(exps) > order:
                continue
            c = _pair(value)
            if c != _ZERO_PAIR:
                k = pack(exps)
                if k in out:
                    o = out[k]
                    c = (o[0] + c[0], o[1] + c[1])
                out[k] = c
        return cls(nvars, order, {k: v for k, v in out.items() if v != _ZERO_PAIR})

    # -- inspection ---------------------------------------------------------

    def __len__(self) -> int:
        return len(self._c)

    def terms(self) -> List[Tuple[Tuple[int, ...], GaussianRational]]:
        """Nonzero terms as (exponents, coefficient) in graded-lex order."""
        items = [(unpack(k, self.nvars), c) for k, c in self._c.items()]
        items.sort(key=lambda t: (sum(t[0]), tuple(-e for e in t[0])))
        return [(e, GaussianRational(c[0], c[1])) for e, c in items]

    def raw_items(self) -> Iterable[Tuple[int, Pair]]:
        return self._c.items()

    def coefficient(self, exps: Sequence[int]) -> GaussianRational:
        if sum(exps) > self.order:
            raise ValueError(f"degree {sum(exps)} is beyond truncation order {self.order}")
        c = self._c.get(pack(tuple(exps)), _ZERO_PAIR)
        return GaussianRational(c[0], c[1])

    def constant_term(self) -> GaussianRational:
        c = self._c.get(0, _ZERO_PAIR)
        return GaussianRational(c[0], c[1])

    def is_zero(self) -> bool:
        return not self._c

    def valuation(self) -> Optional[int]:
        """Lowest degree carrying a nonzero coefficient (``None`` for zero)."""
        if not self._c:
            return None
        return key_degree(min(self._c), self.nvars)

    def degree(self) -> Optional[int]:
        if not self._c:
            return None
        return key_degree(max(self._c), self.nvars)

    def is_real(self) -> bool:
        return all(c[1] == 0 for c in self._c.values())

    def variables_used(self) -> List[int]:
        used = set()
        for k in self._c:
            for j in range(self.nvars):
                if (k >> (BITS * j)) & MASK:
                    used.add(j)
        return sorted(used)

    # -- truncation / equality ----------------------------------------------

    def truncate(self, order: int) -> "Series":
        if order >= self.order:
            return self
        lim = (order + 1) << (BITS * self.nvars)
        return Series(self.nvars, order, {k: c for k, c in self._c.items() if k < lim})

    def homogeneous_part(self, d: int) -> "Series":
        n = self.nvars
        return Series(n, self.order, {k: c for k, c in self._c.items() if key_degree(k, n) == d})

    def __eq__(self, other):
        if not isinstance(other, Series):
            return NotImplemented
        return self.nvars == other.nvars and self.order == other.order and self._c == other._c

    def __hash__(self):
        return hash((self.nvars, self.order, frozenset(self._c.items())))

    def agrees_with(self, other: "Series", order: Optional[int] = None) -> bool:
        """Coefficient-wise equality through ``order`` (default: the smaller order)."""
        return self.first_difference(other, order) is None

    def first_difference(self, other: "Series", order: Optional[int] = None) -> Optional[int]:
        """Lowest degree at which the two series differ, or ``None``."""
        self._check_compatible(other)
        k = min(self.order, other.order) if order is None else order
        if k > min(self.order, other.order):
            raise ValueError(f"comparison order {k} exceeds available order")
        diff = (self.truncate(k) - other.truncate(k))
        return diff.valuation()

    # -- arithmetic -----------------------------------------------------------

    def _check_compatible(self, other: "Series") -> None:
        if not isinstance(other, Series):
            raise TypeError(f"expected Series, got {type(other).__name__}")
        if other.nvars != self.nvars:
            raise ValueError(f"variable-count mismatch: {self.nvars} vs {other.nvars}")

    def _lift(self, other) -> "Series":
        if isinstance(other, Series):
            self._check_compatible(other)
            return other
        return Series.constant(other, self.nvars, self.order)

    def __add__(self, other) -> "Series":
        other = self._lift(other)
        k = min(self.order, other.order)
        a, b = self.truncate(k), other.truncate(k)
        out = dict(a._c)
        for key, (br, bi) in b._c.items():
            o = out.get(key)
            if o is None:
                out[key] = (br, bi)
            else:
                s = (o[0] + br, o[1] + bi)
                if s[0] == 0 and s[1] == 0:
                    del out[key]
                else:
                    out[key] = s
        return Series(self.nvars, k, out)

    __radd__ = __add__

    def __neg__(self) -> "Series":
        return Series(self.nvars, self.order, {k: (-r, -i) for k, (r, i) in self._c.items()})

    def __sub__(self, other) -> "Series":
        return self + (-self._lift(other))

    def __rsub__(self, other) -> "Series":
        return self._lift(other) - self

    def scale(self, value) -> "Series":
        cr, ci = _pair(value)
        if cr == 0 and ci == 0:
            return Series(self.nvars, self.order)
        if ci == 0:
            return Series(self.nvars, self.order, {k: (r * cr, i * cr) for k, (r, i) in self._c.items()})
        return Series(self.nvars, self.order,
                      {k: (r * cr - i * ci, r * ci + i * cr) for k, (r, i) in self._c.items()})

    def __mul__(self, other) -> "Series":
        if not isinstance(other, Series):
            return self.scale(other)
        self._check_compatible(other)
        k = min(self.order, other.order)
        n = self.nvars
        lim = (k + 1) << (BITS * n)
        a, b = self._c, other._c
        if len(a) > len(b):
            a, b = b, a
        bl = sorted(b.items())
        out: Dict[int, Pair] = {}
        get = out.get
        for ka, (ar, ai) in a.items():
            if ka >= lim:
                continue
            if ai == 0:
                for kb, (br, bi) in bl:
                    key = ka + kb
                    if key >= lim:
                        break
                    o = get(key)
                    if o is None:
                        out[key] = (ar * br, ar * bi)
                    else:
                        out[key] = (o[0] + ar * br, o[1] + ar * bi)
            else:
                for kb, (br, bi) in bl:
                    key = ka + kb
                    if key >= lim:
                        break
                    o = get(key)
                    if o is None:
                        out[key] = (ar * br - ai * bi, ar * bi + ai * br)
                    else:
                        out[key] = (o[0] + ar * br - ai * bi, o[1] + ar * bi + ai * br)
        return Series(n, k, {key: c for key, c in out.items() if c[0] != 0 or c[1] != 0})

    def __rmul__(self, other) -> "Series":
        return self.scale(other)

    def __pow__(self, e: int) -> "Series":
        if not isinstance(e, int) or e < 0:
            raise ValueError("only nonnegative integer powers are supported")
        result = Series.constant(1, self.nvars, self.order)
        base = self
        while e:
            if e & 1:
                result = result * base
            e >>= 1
            if e:
                base = base * base
        return result

    def inverse(self) -> "Series":
        """Multiplicative inverse of a unit (nonzero constant term)."""
        c0 = self._c.get(0)
        if c0 is None:
            raise ZeroDivisionError("unit-inverse requires a nonzero constant term")
        inv0 = (GaussianRational(1) / GaussianRational(*c0)).pair
        g = self.scale(inv0) - 1  # zero constant term
        result = Series.constant(1, self.nvars, self.order)
        for _ in range(self.order):
            result = 1 - g * result
        return result.scale(inv0)

    def exp(self) -> "Series":
        """Truncated exponential of a series with zero constant term."""
        if 0 in self._c:
            raise ValueError("exp is only defined here for series with zero constant term")
        result = Series.constant(1, self.nvars, self.order)
        for j in range(self.order, 0, -1):
            result = 1 + (self * result).scale(mpq(1, j))
        return result

    def conj(self) -> "Series":
        """Conjugate every coefficient (the map written with a bar)."""
        return Series(self.nvars, self.order, {k: (r, -i) for k, (r, i) in self._c.items()})

    # -- calculus -----------------------------------------------------------

    def differentiate(self, times: Sequence[int]) -> "Series":
        """Raw partial derivative of multi-order ``times`` (no 1/times! factor)."""
        n = self.nvars
        times = tuple(times)
        if len(times) != n:
            raise ValueError(f"derivative multi-index needs {n} entries")
        total = sum(times)
        if total == 0:
            return self
        if total > self.order:
            raise ValueError(f"derivative of order {total} exceeds truncation order {self.order}")
        shift = pack(times)
        out: Dict[int, Pair] = {}
        for k, (r, i) in self._c.items():
            exps = unpack(k, n)
            factor = 1
            ok = True
            for e, t in zip(exps, times):
                if e < t:
                    ok = False
                    break
                for m in range(e - t + 1, e + 1):
                    factor *= m
            if ok:
                out[k - shift] = (r * factor, i * factor)
        return Series(n, self.order - total, out)

    def d(self, var: int, times: int = 1) -> "Series":
        nu = [0] * self.nvars
        nu[var] = times
        return self.differentiate(nu)

    # -- variable bookkeeping -------------------------------------------------

    def embed(self, nvars: int, positions: Sequence[int]) -> "Series":
        """Relabel variable ``j`` as variable ``positions[j]`` of an ``nvars``-variable ring."""
        if len(positions) != self.nvars:
            raise ValueError("positions must list a target slot for every variable")
        if len(set(positions)) != len(positions) or any(not 0 <= p < nvars for p in positions):
            raise ValueError("positions must be distinct slots within range")
        out = {}
        n = self.nvars
        for k, c in self._c.items():
            exps = unpack(k, n)
            new = [0] * nvars
            for e, p in zip(exps, positions):
                new[p] = e
            out[pack(new)] = c
        return Series(nvars, self.order, out)

    def drop_to(self, positions: Sequence[int]) -> "Series":
        """Keep only the listed variables (all others must be absent from the support)."""
        keep = list(positions)
        n = self.nvars
        out = {}
        keepset = set(keep)
        for k, c in self._c.items():
            exps = unpack(k, n)
            if any(e for j, e in enumerate(exps) if j not in keepset):
                raise ValueError("series depends on a variable being dropped")
            out[pack([exps[j] for j in keep])] = c
        return Series(len(keep), self.order, out)

    def set_zero(self, positions: Iterable[int]) -> "Series":
        """Substitute 0 for the listed variables (keeps the variable count)."""
        mask = 0
        for p in positions:
            mask |= MASK << (BITS * p)
        return Series(self.nvars, self.order, {k: c for k, c in self._c.items() if not k & mask})

    # -- serialization --------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "nvars": self.nvars,
            "order": self.order,
            "terms": [[list(e), str(c)] for e, c in self.terms()],
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "Series":
        return cls.from_terms({tuple(e): GaussianRational.parse(c) for e, c in data["terms"]},
                              data["nvars"], data["order"])

    def __repr__(self):
        return f"Series({self.nvars} vars, order {self.order}: {self.pretty()})"

    def pretty(self, names: Optional[Sequence[str]] = None, max_terms: int = 12) -> str:
        names = list(names) if names is not None else [f"x{j + 1}" for j in range(self.nvars)]
        parts = []
        for exps, c in self.terms()[:max_terms]:
            mono = "*".join(n if e == 1 else f"{n}^{e}" for n, e in zip(names, exps) if e)
            cs = _pretty_coef(c)
            if not mono:
                parts.append(cs)
            elif cs == "1":
                parts.append(mono)
            elif cs == "-1":
                parts.append("-" + mono)
            else:
                parts.append(f"{cs}*{mono}")
        if len(self) > max_terms:
            parts.append("...")
        body = " + ".join(parts) if parts else "0"
        return f"{body} + O({self.order + 1})"


def _pretty_coef(c: GaussianRational) -> str:
    if c.im == 0:
        return _fmt_q(c.re)
    if c.re == 0:
        if c.im == 1:
            return "i"
        if c.im == -1:
            return "-i"
        return f"{_fmt_q(c.im)}*i"
    return f"({format_pair(c.pair)})"


# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VariableSplit:
    """Named blocks of variable positions that partition ``range(nvars)``."""

    nvars: int
    blocks: Tuple[Tuple[str, Tuple[int, ...]], ...]

    def __post_init__(self):
        seen: List[int] = []
        for _, idx in self.blocks:
            seen.extend(idx)
        if sorted(seen) != list(range(self.nvars)):
            raise ValueError("variable blocks must partition all variables exactly once")

    @classmethod
    def of(cls, **sizes: int) -> "VariableSplit":
        """Consecutive blocks in keyword order, e.g. ``VariableSplit.of(Z=2, zeta=2)``."""
        blocks = []
        start = 0
        for name, size in sizes.items():
            blocks.append((name, tuple(range(start, start + size))))
            start += size
        return cls(start, tuple(blocks))

    def __getitem__(self, name: str) -> Tuple[int, ...]:
        for n, idx in self.blocks:
            if n == name:
                return idx
        raise KeyError(name)

    def names(self) -> List[str]:
        return [n for n, _ in self.blocks]


class SeriesMap:
    """A tuple of series in common variables, read as a formal map."""

    __slots__ = ("components", "nvars", "order")

    def __init__(self, components: Sequence[Series]):
        comps = tuple(components)
        if not comps:
            raise ValueError("a SeriesMap needs at least one component")
        n = comps[0].nvars
        if any(c.nvars != n for c in comps):
            raise ValueError("all components must share the same variables")
        k = min(c.order for c in comps)
        self.components = tuple(c.truncate(k) for c in comps)
        self.nvars = n
        self.order = k

    @classmethod
    def identity(cls, nvars: int, order: int) -> "SeriesMap":
        return cls([Series.variable(j, nvars, order) for j in range(nvars)])

    @classmethod
    def linear(cls, matrix: Sequence[Sequence[object]], order: int) -> "SeriesMap":
        n = len(matrix[0])
        comps = []
        for row in matrix:
            comps.append(Series.from_terms({tuple(1 if k == j else 0 for k in range(n)): v
                                            for j, v in enumerate(row)}, n, order))
        return cls(comps)

    def __len__(self):
        return len(self.components)

    def __getitem__(self, i):
        return self.components[i]

    def __iter__(self) -> Iterator[Series]:
        return iter(self.components)

    def __eq__(self, other):
        return isinstance(other, SeriesMap) and self.components == other.components

    def __hash__(self):
        return hash(self.components)

    @property
    def fixes_origin(self) -> bool:
        return all(c.constant_term().is_zero() for c in self.components)

    def truncate(self, order: int) -> "SeriesMap":
        return SeriesMap([c.truncate(order) for c in self.components])

    def conj(self) -> "SeriesMap":
        return SeriesMap([c.conj() for c in self.components])

    def compose(self, inner: "SeriesMap | Sequence[Series]") -> "SeriesMap":
        return compose_map(self, inner)

    def jacobian(self, positions: Optional[Sequence[int]] = None) -> List[List[Series]]:
        positions = range(self.nvars) if positions is None else positions
        return [[c.d(p) for p in positions] for c in self.components]

    def agrees_with(self, other: "SeriesMap", order: Optional[int] = None) -> bool:
        return len(self) == len(other) and all(a.agrees_with(b, order) for a, b in zip(self, other))

    def embed(self, nvars: int, positions: Sequence[int]) -> "SeriesMap":
        return SeriesMap([c.embed(nvars, positions) for c in self.components])

    def to_json(self) -> list:
        return [c.to_json() for c in self.components]

    def __repr__(self):
        return "SeriesMap(" + ", ".join(c.pretty() for c in self.components) + ")"


# ---------------------------------------------------------------------------
# composition and solvers

class Substitution:
    """A map fixing the origin, ready to be substituted into many series.

    Powers of the components and products of those powers are cached, so
    composing several series with the same inner map shares the work.
    """

    def __init__(self, inner: "SeriesMap | Sequence[Series]", nvars: Optional[int] = None):
        g = list(inner)
        if not g and nvars is None:
            raise ValueError("nothing to substitute")
        n = g[0].nvars if g else nvars
        if any(s.nvars != n for s in g):
            raise ValueError("substituted series must share their variables")
        for j, s in enumerate(g):
            if 0 in s._c:
                raise ValueError(f"substitution {j} has a nonzero constant term (map must fix the origin)")
        self.order = min(s.order for s in g) if g else MAX_ORDER
        self.nvars = n
        self.arity = len(g)
        self._g = g
        self._vals = [s.valuation() for s in g]
        self._powers: List[Dict[int, Series]] = [{1: s} for s in g]
        self._prefix: Dict[Tuple[int, Tuple[int, ...]], Series] = {}

    def _power(self, j: int, e: int, k: int) -> Series:
        p = self._powers[j]
        if e not in p:
            half = self._power(j, e // 2, k)
            sq = half * half
            p[e] = sq if e % 2 == 0 else sq * self._g[j]
        return p[e].truncate(k)

    def _product(self, exps: Tuple[int, ...], k: int) -> Series:
        key = (k, exps)
        hit = self._prefix.get(key)
        if hit is not None:
            return hit
        if not exps:
            res = Series.constant(1, self.nvars, k)
        else:
            base = self._product(exps[:-1], k)
            e = exps[-1]
            if e == 0 or base.is_zero():
                res = base
            else:
                res = base * self._power(len(exps) - 1, e, k)
        self._prefix[key] = res
        return res

    def __call__(self, f: Series) -> Series:
        if f.nvars != self.arity:
            raise ValueError(f"arity mismatch: f has {f.nvars} variables, {self.arity} substitutions given")
        k = min(f.order, self.order)
        m = f.nvars
        n = self.nvars
        out: Dict[int, Pair] = {}
        get = out.get
        items = sorted((unpack(key, m), c) for key, c in f._c.items() if key_degree(key, m) <= k)
        for exps, (cr, ci) in items:
            low = 0
            for e, v in zip(exps, self._vals):
                if e:
                    if v is None:
                        low = k + 1
                        break
                    low += e * v
            if low > k:
                continue
            last = max((j for j, e in enumerate(exps) if e), default=-1)
            p = self._product(exps[: last + 1], k)
            for key, (pr, pi) in p._c.items():
                o = get(key)
                if o is None:
                    out[key] = (cr * pr - ci * pi, cr * pi + ci * pr)
                else:
                    out[key] = (o[0] + cr * pr - ci * pi, o[1] + cr * pi + ci * pr)
        return Series(n, k, {key: c for key, c in out.items() if c[0] != 0 or c[1] != 0})


def compose(f: Series, inner: "SeriesMap | Sequence[Series]") -> Series:
    """``f(inner)``; the inner map must fix the origin."""
    g = list(inner)
    if len(g) != f.nvars:
        raise ValueError(f"arity mismatch: f has {f.nvars} variables, {len(g)} substitutions given")
    return Substitution(g)(f)


def compose_map(outer: "SeriesMap | Sequence[Series]", inner: "SeriesMap | Sequence[Series]") -> SeriesMap:
    sub = Substitution(inner)
    return SeriesMap([sub(c) for c in outer])


def _const_matrix(rows: Sequence[Sequence[Series]]) -> List[List[GaussianRational]]:
    return [[s.constant_term() for s in row] for row in rows]


def implicit_solve(rho: "SeriesMap | Sequence[Series]", y_positions: Sequence[int]) -> SeriesMap:
    """Solve ``rho(x, y) = 0`` for ``y = u(x)`` with ``u(0) = 0``.

    ``x`` are the variables not listed in ``y_positions``, in their original
    order.  The correction is done degree by degree with the constant matrix
    ``d rho/dy (0)``, so after ``order`` rounds every degree is settled.
    """
    from . import linalg

    rho = list(rho)
    d = len(rho)
    y_positions = list(y_positions)
    if len(y_positions) != d:
        raise ValueError("need as many unknowns as equations")
    n = rho[0].nvars
    x_positions = [j for j in range(n) if j not in y_positions]
    k = min(r.order for r in rho)
    if any(not r.constant_term().is_zero() for r in rho):
        raise ValueError("rho(0) must vanish")
    jac_y = _const_matrix([[r.d(p) for p in y_positions] for r in rho])
    try:
        inv = linalg.inverse(jac_y)
    except linalg.SingularMatrix:
        raise ValueError("d rho/dy (0) is singular; cannot solve for the requested block") from None
    nx = len(x_positions)
    xs = [Series.variable(j, nx, k) for j in range(nx)] if nx else []
    if nx == 0:
        return SeriesMap([Series.zero(0, k) for _ in range(d)])
    u = [Series.zero(nx, k) for _ in range(d)]
    for _ in range(k):
        args: List[Series] = [None] * n  # type: ignore
        for j, p in enumerate(x_positions):
            args[p] = xs[j]
        for j, p in enumerate(y_positions):
            args[p] = u[j]
        sub = Substitution(args)
        resid = [sub(r) for r in rho]
        if all(r.is_zero() for r in resid):
            break
        u = [u[i] - _lincomb(inv[i], resid) for i in range(d)]
    return SeriesMap(u)


def _lincomb(coefs: Sequence[GaussianRational], series: Sequence[Series]) -> Series:
    out = Series.zero(series[0].nvars, series[0].order)
    for c, s in zip(coefs, series):
        if not c.is_zero():
            out = out + s.scale(c)
    return out


def invert_map(F: "SeriesMap | Sequence[Series]") -> SeriesMap:
    """Compositional inverse of a square map fixing the origin."""
    F = SeriesMap(list(F))
    n = F.nvars
    if len(F) != n:
        raise ValueError("invert_map needs a square map")
    if not F.fixes_origin:
        raise ValueError("map must fix the origin")
    k = F.order
    # rho(y, x) = F(x) - y, solve for x
    rho = []
    for j, c in enumerate(F):
        shifted = c.embed(2 * n, list(range(n, 2 * n)))
        rho.append(shifted - Series.variable(j, 2 * n, k))
    return implicit_solve(rho, list(range(n, 2 * n)))


def sigma_conjugate(f: Series, split: Optional[VariableSplit] = None,
                    first: Optional[Sequence[int]] = None, second: Optional[Sequence[int]] = None) -> Series:
    """Conjugate the coefficients and swap two equal-size variable blocks.

    Blocks come either from ``first``/``second`` or from a two-block ``split``.
    """
    if split is not None:
        if len(split.blocks) != 2:
            raise ValueError("sigma needs a split with exactly two blocks")
        first, second = split.blocks[0][1], split.blocks[1][1]
    if first is None or second is None:
        raise ValueError("two variable blocks are required")
    if len(first) != len(second):
        raise ValueError("the swapped blocks must have equal size")
    perm = list(range(f.nvars))
    for a, b in zip(first, second):
        perm[a], perm[b] = b, a
    return f.conj().embed(f.nvars, perm)


# ---------------------------------------------------------------------------
# determinants and rank

def determinant(matrix: Sequence[Sequence[Series]]) -> Series:
    """Determinant by cofactor expansion with memoized column subsets."""
    m = len(matrix)
    if m == 0:
        raise ValueError("empty matrix")
    if any(len(row) != m for row in matrix):
        raise ValueError("determinant needs a square matrix")
    memo: Dict[Tuple[int, Tuple[int, ...]], Series] = {}

    def det(row: int, cols: Tuple[int, ...]) -> Series:
        if row == m - 1:
            return matrix[row][cols[0]]
        key = (row, cols)
        if key in memo:
            return memo[key]
        total = None
        for pos, c in enumerate(cols):
            entry = matrix[row][c]
            if entry.is_zero():
                continue
            minor = det(row + 1, cols[:pos] + cols[pos + 1:])
            term = entry * minor
            if pos % 2:
                term = -term
            total = term if total is None else total + term
        if total is None:
            ref = matrix[row][cols[0]]
            total = Series.zero(ref.nvars, min(matrix[r][c].order for r in range(row, m) for c in cols))
        memo[key] = total
        return total

    return det(0, tuple(range(m)))


@dataclass
class RankResult:
    """Generic rank certified by a nonzero minor."""

    rank: int
    order: int
    method: str
    rows: Tuple[int, ...] = ()
    cols: Tuple[int, ...] = ()
    minor_valuation: Optional[int] = None
    extra: dict = field(default_factory=dict)

    def __int__(self):
        return self.rank


def _along_line(s: Series, direction: Sequence[int]) -> Series:
    line = [Series.from_terms({(1,): c}, 1, s.order) for c in direction]
    return compose(s, line)


def generic_rank(F: "SeriesMap | Sequence[Series]", positions: Optional[Sequence[int]] = None,
                 method: str = "auto", seed: int = 0, minor_budget: int = 400) -> RankResult:
    """Largest r with a nonzero r-by-r Jacobian minor (a certified lower bound).

    ``method`` is ``"minors"`` (exact multivariate minors), ``"curve"`` (minors
    restricted to a random line through the origin, a ring map that keeps every
    certified coefficient) or ``"auto"``.
    """
    comps = list(F)
    if not comps:
        return RankResult(0, 0, "minors")
    n = comps[0].nvars
    positions = list(range(n)) if positions is None else list(positions)
    if min(c.order for c in comps) < 1:
        return RankResult(0, 0, "minors")
    jac = [[c.d(p) for p in positions] for c in comps]
    rows, cols = len(jac), len(positions)
    order = min(e.order for row in jac for e in row)
    if method == "auto":
        top = min(rows, cols)
        count = _binom(rows, top) * _binom(cols, top)
        size = sum(len(e) for row in jac for e in row)
        method = "minors" if count * max(size, 1) <= minor_budget * 50 and n <= 10 else "curve"
    if method == "curve":
        rng = random.Random(seed)
        direction = [rng.randint(1, 97) * rng.choice((1, -1)) for _ in range(n)]
        jac = [[_along_line(e, direction) for e in row] for row in jac]
    elif method != "minors":
        raise ValueError(f"unknown rank method {method!r}")
    chosen_rows: List[int] = []
    chosen_cols: Tuple[int, ...] = ()
    best_val = None
    for r in range(rows):
        trial = chosen_rows + [r]
        found = None
        for cset in itertools.combinations(range(cols), len(trial)):
            minor = determinant([[jac[i][j] for j in cset] for i in trial])
            if not minor.is_zero():
                found = (cset, minor.valuation())
                break
        if found is not None:
            chosen_rows = trial
            chosen_cols, best_val = found
            if len(chosen_rows) == min(rows, cols):
                break
    return RankResult(len(chosen_rows), order, method, tuple(chosen_rows), tuple(chosen_cols), best_val,
                      {"positions": positions})


def _binom(a: int, b: int) -> int:
    from math import comb
    return comb(a, b)


# ---------------------------------------------------------------------------
# truncated ideal membership

@dataclass
class MembershipResult:
    member: bool
    order: int
    witness: Optional[List[Series]] = None
    obstruction_degree: Optional[int] = None


class _Echelon:
    """Sparse row echelon form with lowest-monomial pivots (graded order)."""

    def __init__(self, track: bool):
        self.pivots: Dict[int, Tuple[Dict[int, Pair], Dict[object, Pair]]] = {}
        self.track = track

    def reduce(self, vec: Dict[int, Pair], combo: Optional[Dict[object, Pair]]):
        vec = dict(vec)
        combo = dict(combo) if combo is not None else None
        while vec:
            p = min(vec)
            if p not in self.pivots:
                return vec, combo, p
            cr, ci = vec[p]
            pv, pc = self.pivots[p]
            _axpy(vec, pv, (-cr, -ci))
            if combo is not None:
                _axpy(combo, pc, (-cr, -ci))
        return vec, combo, None

    def insert(self, vec: Dict[int, Pair], combo: Optional[Dict[object, Pair]]) -> bool:
        vec, combo, p = self.reduce(vec, combo)
        if p is None:
            return False
        inv = (GaussianRational(1) / GaussianRational(*vec[p])).pair
        vec = _scaled(vec, inv)
        combo = _scaled(combo, inv) if combo is not None else None
        self.pivots[p] = (vec, combo)
        return True


def _axpy(target: Dict, source: Dict, c: Pair) -> None:
    cr, ci = c
    for key, (r, i) in source.items():
        o = target.get(key, _ZERO_PAIR)
        v = (o[0] + cr * r - ci * i, o[1] + cr * i + ci * r)
        if v[0] == 0 and v[1] == 0:
            target.pop(key, None)
        else:
            target[key] = v


def _scaled(vec: Dict, c: Pair) -> Dict:
    cr, ci = c
    return {key: (cr * r - ci * i, cr * i + ci * r) for key, (r, i) in vec.items()}


def _module_span(gens: Sequence[Series], k: int, track: bool) -> _Echelon:
    n = gens[0].nvars
    ech = _Echelon(track)
    lim = (k + 1) << (BITS * n)
    for gi, g in enumerate(gens):
        g = g.truncate(k)
        v = g.valuation()
        if v is None:
            continue
        for beta in monomials(n, k - v):
            shift = pack(beta)
            vec = {}
            for key, c in g._c.items():
                new = key + shift
                if new < lim:
                    vec[new] = c
            if vec:
                ech.insert(vec, {(gi, shift): _ONE_PAIR} if track else None)
    return ech


def ideal_membership(f: Series, gens: Sequence[Series], order: Optional[int] = None,
                     witness: bool = True) -> MembershipResult:
    """Decide ``f in (gens) + m^(order+1)`` by truncated linear algebra."""
    gens = list(gens)
    if any(g.nvars != f.nvars for g in gens):
        raise ValueError("generators and f must share their variables")
    k = min([f.order] + [g.order for g in gens]) if order is None else order
    if k > min([f.order] + [g.order for g in gens]):
        raise ValueError("membership order exceeds the available truncation order")
    n = f.nvars
    if not gens:
        ft = f.truncate(k)
        if ft.is_zero():
            return MembershipResult(True, k, [])
        return MembershipResult(False, k, None, ft.valuation())
    ech = _module_span(gens, k, witness)
    rest, combo, p = ech.reduce(f.truncate(k)._c, {} if witness else None)
    if p is not None:
        return MembershipResult(False, k, None, key_degree(p, n))
    if not witness:
        return MembershipResult(True, k)
    mult: List[Dict[int, Pair]] = [dict() for _ in gens]
    for (gi, shift), (r, i) in combo.items():
        # f - sum(c * x^beta * g) = 0, so the multiplier carries the negated combination
        o = mult[gi].get(shift, _ZERO_PAIR)
        mult[gi][shift] = (o[0] - r, o[1] - i)
    return MembershipResult(True, k, [Series(n, k, {s: c for s, c in m.items() if c != _ZERO_PAIR})
                                      for m in mult])


def standard_monomials(gens: Sequence[Series], order: int) -> List[Tuple[int, ...]]:
    """Monomials of degree <= order spanning C[x]/((gens) + m^(order+1))."""
    gens = list(gens)
    n = gens[0].nvars
    ech = _module_span(gens, order, False)
    return [e for e in monomials(n, order) if pack(e) not in ech.pivots]


# ---------------------------------------------------------------------------
# random samples (tests, experiments)

def random_series(rng: random.Random, nvars: int, order: int, degree: Optional[int] = None,
                  density: float = 0.6, coeff_range: int = 5, constant: bool = True,
                  complex_coeffs: bool = True, min_degree: int = 0) -> Series:
    degree = order if degree is None else min(degree, order)
    terms = {}
    start = min_degree if constant or min_degree > 0 else 1
    for e in monomials(nvars, degree, start):
        if rng.random() < density:
            re_part = Fraction(rng.randint(-coeff_range, coeff_range), rng.randint(1, 3))
            im_part = Fraction(rng.randint(-coeff_range, coeff_range), rng.randint(1, 3)) if complex_coeffs else 0
            terms[e] = (re_part, im_part)
    return Series.from_terms(terms, nvars, order)
