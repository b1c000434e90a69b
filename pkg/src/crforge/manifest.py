"""Manifest language: declarations of manifolds, auxiliary series and maps.

Example::

    order 8
    manifold M dim 3 codim 1 vars (Z1, Z2, Z3) { Im(Z3) - |Z1*Z2|^2 }
    series h = Z1 + 2*Z1^2
    map H : M -> M { Z1*exp(h), Z2*exp(-h), Z3 }

Real-form manifold expressions use the holomorphic coordinates only and are
complexified by sending ``conj(Z_j)`` to ``zeta_j``.  The ``complexified``
keyword names the ``zeta`` coordinates and allows them in the expressions.
Map components and series are holomorphic in the source coordinates.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

from .manifolds import GenericManifold, ManifoldError
from .powerseries import GaussianRational, Series, SeriesMap, sigma_conjugate

FUNCTIONS = ("Im", "Re", "conj", "exp")
KEYWORDS = ("order", "manifold", "dim", "codim", "vars", "complexified", "series", "map")


class ManifestError(ValueError):
    def __init__(self, message: str, line: int = 0, col: int = 0):
        self.message, self.line, self.col = message, line, col
        super().__init__(f"line {line}, column {col}: {message}" if line else message)


# ---------------------------------------------------------------------------
# syntax tree

@dataclass(frozen=True)
class Num:
    value: int
    pos: Tuple[int, int] = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Imag:
    pos: Tuple[int, int] = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Var:
    name: str
    pos: Tuple[int, int] = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Call:
    fn: str
    arg: "Expr"
    pos: Tuple[int, int] = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Abs2:
    arg: "Expr"
    pos: Tuple[int, int] = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Neg:
    arg: "Expr"
    pos: Tuple[int, int] = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Bin:
    op: str
    left: "Expr"
    right: "Expr"
    pos: Tuple[int, int] = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Pow:
    base: "Expr"
    exponent: int
    pos: Tuple[int, int] = field(default=(0, 0), compare=False)


Expr = Union[Num, Imag, Var, Call, Abs2, Neg, Bin, Pow]


@dataclass(frozen=True)
class ManifoldDecl:
    name: str
    dim: int
    codim: int
    variables: Tuple[str, ...]
    conj_variables: Tuple[str, ...]  # empty unless complexified
    exprs: Tuple[Expr, ...]
    pos: Tuple[int, int] = field(default=(0, 0), compare=False)

    @property
    def complexified(self) -> bool:
        return bool(self.conj_variables)


@dataclass(frozen=True)
class SeriesDecl:
    name: str
    expr: Expr
    pos: Tuple[int, int] = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class MapDecl:
    name: str
    source: str
    target: str
    exprs: Tuple[Expr, ...]
    pos: Tuple[int, int] = field(default=(0, 0), compare=False)


Decl = Union[ManifoldDecl, SeriesDecl, MapDecl]


# ---------------------------------------------------------------------------
# lexer

_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r]+) | (?P<nl>\n) | (?P<comment>\#[^\n]*)
  | (?P<num>\d+)
  | (?P<name>[A-Za-z_][A-Za-z0-9_']*)
  | (?P<arrow>->)
  | (?P<op>[-+*/^(){},:|=])
""", re.VERBOSE)


@dataclass
class Token:
    kind: str  # num, name, op, eof
    text: str
    line: int
    col: int


def tokenize(text: str) -> List[Token]:
    out: List[Token] = []
    line, start = 1, 0
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ManifestError(f"unexpected character {text[pos]!r}", line, pos - start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            start = m.end()
        elif kind in ("num", "name"):
            out.append(Token(kind, m.group(), line, pos - start + 1))
        elif kind in ("arrow", "op"):
            out.append(Token("op", m.group(), line, pos - start + 1))
        pos = m.end()
    out.append(Token("eof", "", line, pos - start + 1))
    return out


# ---------------------------------------------------------------------------
# parser

class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def error(self, msg: str, tok: Optional[Token] = None):
        t = tok or self.tok
        raise ManifestError(msg, t.line, t.col)

    def take(self) -> Token:
        t = self.tok
        self.i += 1
        return t

    def accept(self, text: str) -> bool:
        if self.tok.kind in ("op", "name") and self.tok.text == text:
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> Token:
        t = self.tok
        if not self.accept(text):
            self.error(f"expected {text!r}, found {t.text or 'end of input'!r}")
        return t

    def name(self, what: str = "name") -> Token:
        t = self.tok
        if t.kind != "name" or t.text in KEYWORDS:
            self.error(f"expected {what}, found {t.text or 'end of input'!r}")
        return self.take()

    def integer(self) -> int:
        t = self.tok
        if t.kind != "num":
            self.error(f"expected an integer, found {t.text or 'end of input'!r}")
        self.take()
        return int(t.text)

    # declarations

    def manifest(self) -> Tuple[Optional[int], List[Decl]]:
        order = None
        decls: List[Decl] = []
        while self.tok.kind != "eof":
            t = self.tok
            if self.accept("order"):
                if order is not None:
                    self.error("order declared twice", t)
                order = self.integer()
            elif self.accept("manifold"):
                decls.append(self.manifold_decl(t))
            elif self.accept("series"):
                n = self.name("series name")
                self.expect("=")
                decls.append(SeriesDecl(n.text, self.expr(), (t.line, t.col)))
            elif self.accept("map"):
                n = self.name("map name")
                self.expect(":")
                src = self.name("source manifold")
                self.expect("->")
                tgt = self.name("target manifold")
                decls.append(MapDecl(n.text, src.text, tgt.text, tuple(self.block()), (t.line, t.col)))
            else:
                self.error(f"expected a declaration, found {t.text!r}")
        return order, decls

    def names(self) -> Tuple[str, ...]:
        self.expect("(")
        out = [self.name("variable name").text]
        while self.accept(","):
            out.append(self.name("variable name").text)
        self.expect(")")
        return tuple(out)

    def manifold_decl(self, start: Token) -> ManifoldDecl:
        n = self.name("manifold name")
        self.expect("dim")
        dim = self.integer()
        self.expect("codim")
        codim = self.integer()
        variables: Tuple[str, ...] = ()
        conj_vars: Tuple[str, ...] = ()
        if self.accept("vars"):
            variables = self.names()
        if self.accept("complexified"):
            conj_vars = self.names()
        exprs = tuple(self.block())
        return ManifoldDecl(n.text, dim, codim, variables, conj_vars, exprs, (start.line, start.col))

    def block(self) -> List[Expr]:
        self.expect("{")
        out = [self.expr()]
        while self.accept(","):
            if self.tok.text == "}":
                break
            out.append(self.expr())
        self.expect("}")
        return out

    # expressions

    def expr(self) -> Expr:
        left = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            t = self.take()
            left = Bin(t.text, left, self.term(), (t.line, t.col))
        return left

    def term(self) -> Expr:
        left = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            t = self.take()
            left = Bin(t.text, left, self.unary(), (t.line, t.col))
        return left

    def unary(self) -> Expr:
        t = self.tok
        if self.accept("-"):
            return Neg(self.unary(), (t.line, t.col))
        if self.accept("+"):
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        t = self.tok
        if self.accept("^"):
            return Pow(base, self.integer(), (t.line, t.col))
        return base

    def atom(self) -> Expr:
        t = self.tok
        if t.kind == "num":
            self.take()
            return Num(int(t.text), (t.line, t.col))
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        if self.accept("|"):
            e = self.expr()
            self.expect("|")
            self.expect("^")
            two = self.tok
            if self.integer() != 2:
                self.error("only |e|^2 is supported", two)
            return Abs2(e, (t.line, t.col))
        if t.kind == "name" and t.text not in KEYWORDS:
            self.take()
            if t.text in FUNCTIONS:
                self.expect("(")
                e = self.expr()
                self.expect(")")
                return Call(t.text, e, (t.line, t.col))
            if t.text == "i":
                return Imag((t.line, t.col))
            return Var(t.text, (t.line, t.col))
        self.error(f"unexpected {t.text or 'end of input'!r} in expression")


# ---------------------------------------------------------------------------
# rendering

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def render_expr(e: Expr, prec: int = 0) -> str:
    if isinstance(e, Num):
        return str(e.value)
    if isinstance(e, Imag):
        return "i"
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Call):
        return f"{e.fn}({render_expr(e.arg)})"
    if isinstance(e, Abs2):
        return f"|{render_expr(e.arg)}|^2"
    if isinstance(e, Neg):
        s = "-" + render_expr(e.arg, 3)
        return f"({s})" if prec > 1 else s
    if isinstance(e, Pow):
        s = f"{render_expr(e.base, 4)}^{e.exponent}"
        return f"({s})" if prec > 3 else s
    if isinstance(e, Bin):
        p = _PREC[e.op]
        s = f"{render_expr(e.left, p)} {e.op} {render_expr(e.right, p + 1)}"
        return f"({s})" if prec > p else s
    raise TypeError(e)


def _render_block(exprs: Sequence[Expr]) -> str:
    return "{ " + ", ".join(render_expr(e) for e in exprs) + " }"


def render_decl(d: Decl) -> str:
    if isinstance(d, ManifoldDecl):
        head = f"manifold {d.name} dim {d.dim} codim {d.codim} vars ({', '.join(d.variables)})"
        if d.complexified:
            head += f" complexified ({', '.join(d.conj_variables)})"
        return f"{head} {_render_block(d.exprs)}"
    if isinstance(d, SeriesDecl):
        return f"series {d.name} = {render_expr(d.expr)}"
    return f"map {d.name} : {d.source} -> {d.target} {_render_block(d.exprs)}"


# ---------------------------------------------------------------------------
# elaboration

def _natural_key(name: str):
    parts = re.split(r"(\d+)", name)
    return (name[:1].lower() == "w", [int(p) if p.isdigit() else p for p in parts])


def _free_names(e: Expr, out: List[str]) -> None:
    if isinstance(e, Var):
        if e.name not in out:
            out.append(e.name)
    elif isinstance(e, (Call, Abs2, Neg)):
        _free_names(e.arg, out)
    elif isinstance(e, Pow):
        _free_names(e.base, out)
    elif isinstance(e, Bin):
        _free_names(e.left, out)
        _free_names(e.right, out)


class _Context:
    """Variable environment for elaboration in ``nvars`` variables."""

    def __init__(self, names: Dict[str, int], nvars: int, order: int, series: Dict[str, SeriesDecl],
                 holomorphic: bool, half: int = 0, what: str = ""):
        self.names, self.nvars, self.order = names, nvars, order
        self.series = series
        self.holomorphic = holomorphic
        self.half = half
        self.what = what
        self.expanding: List[str] = []

    def err(self, msg: str, node) -> ManifestError:
        line, col = getattr(node, "pos", (0, 0))
        return ManifestError(msg, line, col)

    def conj(self, s: Series, node) -> Series:
        if self.holomorphic:
            raise self.err(f"{self.what} must be holomorphic: conjugation is not allowed", node)
        return sigma_conjugate(s, first=range(self.half), second=range(self.half, 2 * self.half))

    def eval(self, e: Expr) -> Series:
        n, k = self.nvars, self.order
        if isinstance(e, Num):
            return Series.constant(e.value, n, k)
        if isinstance(e, Imag):
            return Series.constant(GaussianRational(0, 1), n, k)
        if isinstance(e, Var):
            if e.name in self.names:
                return Series.variable(self.names[e.name], n, k)
            if e.name in self.series:
                if e.name in self.expanding:
                    raise self.err(f"series {e.name} is defined in terms of itself", e)
                self.expanding.append(e.name)
                try:
                    return self.eval(self.series[e.name].expr)
                finally:
                    self.expanding.pop()
            raise self.err(f"unresolved name {e.name!r} in {self.what}", e)
        if isinstance(e, Neg):
            return -self.eval(e.arg)
        if isinstance(e, Pow):
            return self.eval(e.base) ** e.exponent
        if isinstance(e, Abs2):
            a = self.eval(e.arg)
            return a * self.conj(a, e)
        if isinstance(e, Call):
            a = self.eval(e.arg)
            if e.fn == "exp":
                if not a.constant_term().is_zero():
                    raise self.err("exp needs an argument vanishing at the origin", e)
                return a.exp()
            if e.fn == "conj":
                return self.conj(a, e)
            if e.fn == "Re":
                return (a + self.conj(a, e)).scale(GaussianRational(1) / 2)
            return (a - self.conj(a, e)).scale(GaussianRational(1) / GaussianRational(0, 2))
        if isinstance(e, Bin):
            a, b = self.eval(e.left), self.eval(e.right)
            if e.op == "+":
                return a + b
            if e.op == "-":
                return a - b
            if e.op == "*":
                return a * b
            if b.constant_term().is_zero():
                raise self.err("division by a series vanishing at the origin", e)
            return a * b.inverse()
        raise TypeError(e)


@dataclass
class Manifest:
    order: int
    decls: List[Decl]
    manifolds: Dict[str, GenericManifold] = field(default_factory=dict, compare=False)
    maps: Dict[str, SeriesMap] = field(default_factory=dict, compare=False)
    map_ends: Dict[str, Tuple[str, str]] = field(default_factory=dict, compare=False)
    errors: Dict[str, ManifestError] = field(default_factory=dict, compare=False)

    def __eq__(self, other):
        return isinstance(other, Manifest) and self.order == other.order and self.decls == other.decls

    def render(self) -> str:
        return "\n".join([f"order {self.order}"] + [render_decl(d) for d in self.decls]) + "\n"

    def manifold(self, name: Optional[str] = None, order: Optional[int] = None) -> GenericManifold:
        if name is None:
            if not self.manifolds:
                raise ManifestError("the manifest declares no manifold")
            name = next(iter(self.manifolds))
        if name in self.errors:
            raise self.errors[name]
        if name not in self.manifolds:
            raise ManifestError(f"unknown manifold {name!r}")
        return self.manifolds[name] if order is None else self.manifolds[name].with_order(self._order(order))

    def map(self, name: Optional[str] = None, order: Optional[int] = None) -> SeriesMap:
        if name is None:
            if not self.maps:
                raise ManifestError("the manifest declares no map")
            name = next(iter(self.maps))
        if name in self.errors:
            raise self.errors[name]
        if name not in self.maps:
            raise ManifestError(f"unknown map {name!r}")
        return self.maps[name] if order is None else self.maps[name].truncate(self._order(order))

    def _order(self, order: int) -> int:
        if order > self.order:
            raise ManifestError(f"requested order {order} exceeds the manifest order {self.order}")
        return order

    def declaration(self, name: str) -> Decl:
        for d in self.decls:
            if d.name == name:
                return d
        raise ManifestError(f"unknown name {name!r}")


def _manifold_vars(d: ManifoldDecl, series: Dict[str, SeriesDecl]) -> Tuple[str, ...]:
    if d.variables:
        return d.variables
    used: List[str] = []
    for e in d.exprs:
        _free_names(e, used)
    used = [u for u in used if u not in series]
    default = [f"Z{j + 1}" for j in range(d.dim)]
    if set(used) <= set(default):
        return tuple(default)
    if len(used) == d.dim:
        return tuple(sorted(used, key=_natural_key))
    raise ManifestError(f"manifold {d.name}: cannot infer {d.dim} coordinates from {used}; declare vars (...)",
                        *d.pos)


def elaborate(order: int, decls: List[Decl], strict: bool = True) -> Manifest:
    """Build every declaration; with ``strict=False`` failing manifolds and maps are recorded in ``errors``."""
    seen = set()
    series: Dict[str, SeriesDecl] = {}
    man = Manifest(order, [])
    var_names: Dict[str, Tuple[str, ...]] = {}
    for d in decls:
        if d.name in seen:
            raise ManifestError(f"duplicate name {d.name!r}", *d.pos)
        seen.add(d.name)
        if isinstance(d, SeriesDecl):
            series[d.name] = d
            man.decls.append(d)
        elif isinstance(d, ManifoldDecl):
            variables = _manifold_vars(d, series)
            if len(variables) != d.dim:
                raise ManifestError(f"manifold {d.name}: {len(variables)} coordinates for dim {d.dim}", *d.pos)
            if d.conj_variables and len(d.conj_variables) != d.dim:
                raise ManifestError(f"manifold {d.name}: {len(d.conj_variables)} conjugate coordinates "
                                    f"for dim {d.dim}", *d.pos)
            if len(d.exprs) != d.codim:
                raise ManifestError(f"manifold {d.name}: {len(d.exprs)} defining expressions for codim {d.codim}",
                                    *d.pos)
            if "i" in variables + d.conj_variables:
                raise ManifestError("'i' is the imaginary unit and cannot name a coordinate", *d.pos)
            d = ManifoldDecl(d.name, d.dim, d.codim, variables, d.conj_variables, d.exprs, d.pos)
            names = {v: j for j, v in enumerate(variables)}
            names.update({v: d.dim + j for j, v in enumerate(d.conj_variables)})
            ctx = _Context(names, 2 * d.dim, order, series, False, d.dim, f"manifold {d.name}")
            rho = [ctx.eval(e) for e in d.exprs]
            var_names[d.name] = variables
            man.decls.append(d)
            try:
                man.manifolds[d.name] = GenericManifold.from_defining(rho, order, d.name)
            except ManifoldError as exc:
                err = ManifestError(f"manifold {d.name}: {exc}", *d.pos)
                if strict:
                    raise err from None
                man.errors[d.name] = err
        else:
            for end in (d.source, d.target):
                if end in man.errors:
                    err = ManifestError(f"map {d.name}: manifold {end!r} is invalid", *d.pos)
                    if strict:
                        raise err
                    man.errors[d.name] = err
                    break
                if end not in man.manifolds:
                    raise ManifestError(f"map {d.name}: unknown manifold {end!r}", *d.pos)
            if d.name in man.errors:
                man.decls.append(d)
                continue
            src, tgt = man.manifolds[d.source], man.manifolds[d.target]
            if len(d.exprs) != tgt.N:
                raise ManifestError(f"map {d.name}: {len(d.exprs)} components for a target of dimension {tgt.N}",
                                    *d.pos)
            names = {v: j for j, v in enumerate(var_names[d.source])}
            ctx = _Context(names, src.N, order, series, True, what=f"map {d.name}")
            comps = SeriesMap([ctx.eval(e) for e in d.exprs])
            if not comps.fixes_origin:
                raise ManifestError(f"map {d.name} does not fix the origin", *d.pos)
            man.maps[d.name] = comps
            man.map_ends[d.name] = (d.source, d.target)
            man.decls.append(d)
    return man


def parse_expression(text: str) -> Expr:
    parser = _Parser(text)
    e = parser.expr()
    if parser.tok.kind != "eof":
        parser.error(f"unexpected {parser.tok.text!r} after expression")
    return e


def parse_manifest(text: str, order: Optional[int] = None, strict: bool = True) -> Manifest:
    """Parse and elaborate; ``order`` supplies a default when the text declares none."""
    declared, decls = _Parser(text).manifest()
    k = declared if declared is not None else order
    if k is None:
        raise ManifestError("no 'order' declaration")
    if k < 1:
        raise ManifestError("order must be at least 1")
    return elaborate(k, decls, strict)


def render(manifest: Manifest) -> str:
    return manifest.render()
