"""Expression trees for coefficient functions.

A small DSL covering the arithmetic needed to write drifts, diffusion
columns and jump coefficients::

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := atom ('^' atom)?
    atom   := number | ident | func '(' expr ')' | '(' expr ')' | '-' atom
    ident  := x<k> | z<k> | v<k>
    func   := sin | cos | exp | log | sqrt | abs | atan

Trees are immutable and hashable.  :func:`simplify` maps a tree to a
canonical sum-of-monomials form (constant folding, like-term merging,
``cos(u)^2 -> 1 - sin(u)^2``), which is enough for the bracket
computations in :mod:`nlhormander.vecfield` to cancel exactly in the
common cases.  Evaluation is vectorised through code generation against
numpy.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DomainError, ExprSyntaxError, UnknownIdentifierError

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt", "abs", "atan")
_IDENT_VAR = re.compile(r"^[xzv][1-9][0-9]*$")


class Expr:
    """Base node.  Arithmetic operators build unsimplified trees."""

    __slots__ = ()

    def __add__(self, other):
        return add(self, as_expr(other))

    def __radd__(self, other):
        return add(as_expr(other), self)

    def __sub__(self, other):
        return sub(self, as_expr(other))

    def __rsub__(self, other):
        return sub(as_expr(other), self)

    def __mul__(self, other):
        return mul(self, as_expr(other))

    def __rmul__(self, other):
        return mul(as_expr(other), self)

    def __truediv__(self, other):
        return div(self, as_expr(other))

    def __rtruediv__(self, other):
        return div(as_expr(other), self)

    def __pow__(self, other):
        return power(self, as_expr(other))

    def __neg__(self):
        return neg(self)

    def __str__(self):
        return to_str(self)

    def diff(self, var: str) -> "Expr":
        return diff(self, var)

    def simplify(self) -> "Expr":
        return simplify(self)

    def free_vars(self) -> frozenset:
        return free_vars(self)


@dataclass(frozen=True, eq=True, repr=False)
class Const(Expr):
    value: float

    def __repr__(self):
        return f"Const({self.value!r})"


@dataclass(frozen=True, eq=True, repr=False)
class Var(Expr):
    name: str

    def __repr__(self):
        return f"Var({self.name!r})"


@dataclass(frozen=True, eq=True, repr=False)
class Unary(Expr):
    op: str  # 'neg' or one of FUNCTIONS
    arg: Expr

    def __repr__(self):
        return f"Unary({self.op!r}, {self.arg!r})"


@dataclass(frozen=True, eq=True, repr=False)
class Binary(Expr):
    op: str  # add, sub, mul, div, pow
    left: Expr
    right: Expr

    def __repr__(self):
        return f"Binary({self.op!r}, {self.left!r}, {self.right!r})"


ZERO = Const(0.0)
ONE = Const(1.0)


def as_expr(value) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, (int, float, np.floating, np.integer)):
        return Const(float(value))
    raise TypeError(f"cannot convert {type(value).__name__} to Expr")


def is_const(e, value=None) -> bool:
    return isinstance(e, Const) and (value is None or e.value == value)


# -- light-folding constructors (used by diff and operators) -------------


def add(a, b):
    if is_const(a, 0.0):
        return b
    if is_const(b, 0.0):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    return Binary("add", a, b)


def sub(a, b):
    if is_const(b, 0.0):
        return a
    if is_const(a, 0.0):
        return neg(b)
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    return Binary("sub", a, b)


def mul(a, b):
    if is_const(a, 0.0) or is_const(b, 0.0):
        return ZERO
    if is_const(a, 1.0):
        return b
    if is_const(b, 1.0):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    return Binary("mul", a, b)


def div(a, b):
    if is_const(b, 1.0):
        return a
    if is_const(a, 0.0) and not is_const(b, 0.0):
        return ZERO
    return Binary("div", a, b)


def power(a, b):
    if is_const(b, 1.0):
        return a
    if is_const(b, 0.0):
        return ONE
    return Binary("pow", a, b)


def neg(a):
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Unary) and a.op == "neg":
        return a.arg
    return Unary("neg", a)


def func(name, a):
    if name not in FUNCTIONS:
        raise ValueError(f"unknown function {name!r}")
    return Unary(name, a)


def var(name):
    return Var(name)


# -- parsing -------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),]))"
)


def _tokenize(text):
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, text, variables):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0
        self.variables = None if variables is None else set(variables)

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, text, pos = self.peek()
        if kind != "op" or text != value:
            found = "end of input" if kind == "end" else repr(text)
            raise ExprSyntaxError(f"expected {value!r}, found {found}", pos)
        return self.take()

    def parse_list(self):
        items = [self.parse_expr()]
        while self.peek()[:2] == ("op", ","):
            self.take()
            items.append(self.parse_expr())
        kind, text, pos = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected token {text!r}", pos)
        return items

    def parse_expr(self):
        node = self.parse_term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            rhs = self.parse_term()
            node = Binary("add" if op == "+" else "sub", node, rhs)
        return node

    def parse_term(self):
        node = self.parse_factor()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.take()[1]
            rhs = self.parse_factor()
            node = Binary("mul" if op == "*" else "div", node, rhs)
        return node

    def parse_factor(self):
        base = self.parse_atom()
        if self.peek()[:2] == ("op", "^"):
            self.take()
            return Binary("pow", base, self.parse_atom())
        return base

    def parse_atom(self):
        kind, text, pos = self.peek()
        if kind == "num":
            self.take()
            return Const(float(text))
        if kind == "ident":
            self.take()
            if text in FUNCTIONS:
                self.expect("(")
                arg = self.parse_expr()
                self.expect(")")
                return Unary(text, arg)
            if not _IDENT_VAR.match(text):
                raise UnknownIdentifierError(f"unknown identifier {text!r}", pos)
            if self.variables is not None and text not in self.variables:
                raise UnknownIdentifierError(
                    f"variable {text!r} not among {sorted(self.variables)}", pos
                )
            return Var(text)
        if kind == "op" and text == "(":
            self.take()
            node = self.parse_expr()
            self.expect(")")
            return node
        if kind == "op" and text == "-":
            self.take()
            return Unary("neg", self.parse_atom())
        found = "end of input" if kind == "end" else repr(text)
        raise ExprSyntaxError(f"unexpected {found}", pos)


def parse_expr(text: str, variables: Iterable[str] | None = None) -> Expr:
    """Parse one expression.  ``variables`` restricts the allowed identifiers."""
    p = _Parser(text, variables)
    node = p.parse_expr()
    kind, tok, pos = p.peek()
    if kind != "end":
        raise ExprSyntaxError(f"unexpected token {tok!r}", pos)
    return node


def parse_list(text: str, variables: Iterable[str] | None = None) -> list:
    """Parse a comma-separated list of expressions."""
    return _Parser(text, variables).parse_list()


# -- printing ------------------------------------------------------------

_LEVEL = {"add": 1, "sub": 1, "mul": 2, "div": 2, "pow": 3}


def _fmt_number(v):
    if not math.isfinite(v):
        raise ValueError(f"cannot print non-finite constant {v}")
    if v == int(v) and abs(v) < 1e15:
        return str(int(v)) if v != 0 else "0"
    return repr(v)


def _level(e):
    if isinstance(e, Binary):
        return _LEVEL[e.op]
    return 4


def to_str(e: Expr) -> str:
    """Render in the DSL grammar; re-parsing yields the same tree."""
    if isinstance(e, Const):
        return _fmt_number(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Unary):
        if e.op == "neg":
            inner = to_str(e.arg)
            if _level(e.arg) < 4 or (isinstance(e.arg, Const) and e.arg.value < 0):
                inner = f"({inner})"
            return "-" + inner
        return f"{e.op}({to_str(e.arg)})"
    if isinstance(e, Binary):
        lv = _LEVEL[e.op]
        ls, rs = to_str(e.left), to_str(e.right)
        if e.op == "pow":
            if _level(e.left) < 4 or _is_negated(e.left):
                ls = f"({ls})"
            if _level(e.right) < 4:
                rs = f"({rs})"
            return f"{ls}^{rs}"
        if _level(e.left) < lv:
            ls = f"({ls})"
        if _level(e.right) <= lv:
            rs = f"({rs})"
        sym = {"add": " + ", "sub": " - ", "mul": "*", "div": "/"}[e.op]
        return ls + sym + rs
    raise TypeError(e)


def _is_negated(e):
    return (isinstance(e, Unary) and e.op == "neg") or (
        isinstance(e, Const) and e.value < 0
    )


# -- structure ------------------------------------------------------------


def free_vars(e: Expr) -> frozenset:
    if isinstance(e, Var):
        return frozenset([e.name])
    if isinstance(e, Const):
        return frozenset()
    if isinstance(e, Unary):
        return free_vars(e.arg)
    return free_vars(e.left) | free_vars(e.right)


def depends_on(e: Expr, name: str) -> bool:
    return name in free_vars(e)


def subs(e: Expr, mapping: Mapping[str, Expr | float]) -> Expr:
    """Substitute variables; values may be expressions or numbers."""
    if isinstance(e, Var):
        if e.name in mapping:
            return as_expr(mapping[e.name])
        return e
    if isinstance(e, Const):
        return e
    if isinstance(e, Unary):
        return Unary(e.op, subs(e.arg, mapping))
    return Binary(e.op, subs(e.left, mapping), subs(e.right, mapping))


# -- differentiation ------------------------------------------------------


def diff(e: Expr, name: str) -> Expr:
    """Symbolic partial derivative (unsimplified apart from light folding)."""
    if isinstance(e, Const):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.name == name else ZERO
    if not depends_on(e, name):
        return ZERO
    if isinstance(e, Unary):
        u = e.arg
        du = diff(u, name)
        op = e.op
        if op == "neg":
            return neg(du)
        if op == "sin":
            return mul(Unary("cos", u), du)
        if op == "cos":
            return neg(mul(Unary("sin", u), du))
        if op == "exp":
            return mul(e, du)
        if op == "log":
            return div(du, u)
        if op == "sqrt":
            return div(du, mul(Const(2.0), e))
        if op == "abs":
            return mul(div(u, e), du)
        if op == "atan":
            return div(du, add(ONE, power(u, Const(2.0))))
        raise ValueError(op)
    a, b = e.left, e.right
    da, db = diff(a, name), diff(b, name)
    if e.op == "add":
        return add(da, db)
    if e.op == "sub":
        return sub(da, db)
    if e.op == "mul":
        return add(mul(da, b), mul(a, db))
    if e.op == "div":
        return div(sub(mul(da, b), mul(a, db)), power(b, Const(2.0)))
    if e.op == "pow":
        if not depends_on(b, name):
            return mul(mul(b, power(a, sub(b, ONE))), da)
        # a^b = exp(b log a)
        return mul(e, add(mul(db, Unary("log", a)), div(mul(b, da), a)))
    raise ValueError(e.op)


def gradient(e: Expr, names: Sequence[str]) -> list:
    return [simplify(diff(e, n)) for n in names]


# -- canonical simplification --------------------------------------------
#
# A normal form is a dict {monomial: coefficient}; a monomial is a sorted
# tuple of (key, atom, exponent) with key = to_str(atom).  Atoms are
# variables, function applications with simplified arguments, opaque
# non-numeric powers, and canonical sums raised to non-integer or negative
# exponents.

_CANCEL_RTOL = 1e-14
_MAX_EXPAND = 8


def _frac(v):
    f = Fraction(v).limit_denominator(1000)
    if abs(float(f) - v) <= 1e-12 * max(1.0, abs(v)):
        return f
    return None


def _nf_const(c):
    return {(): float(c)} if c != 0.0 else {}


def _nf_atom(atom, exp=Fraction(1)):
    return {((to_str(atom), atom, Fraction(exp)),): 1.0}


def _nf_add(a, b, scale=1.0):
    out = dict(a)
    for m, c in b.items():
        c = c * scale
        if m in out:
            old = out[m]
            s = old + c
            if abs(s) <= _CANCEL_RTOL * max(abs(old), abs(c)):
                del out[m]
            else:
                out[m] = s
        else:
            out[m] = c
    return out


def _mono_mul(m1, m2):
    acc = {}
    for key, atom, e in m1 + m2:
        if key in acc:
            acc[key] = (atom, acc[key][1] + e)
        else:
            acc[key] = (atom, e)
    return tuple(sorted((k, a, e) for k, (a, e) in acc.items() if e != 0))


def _nf_mul(a, b):
    out = {}
    for m1, c1 in a.items():
        for m2, c2 in b.items():
            out = _nf_add(out, {_mono_mul(m1, m2): c1 * c2})
    return out


def _nf_is_const(nf):
    return not nf or (len(nf) == 1 and () in nf)


def _nf_value(nf):
    return nf.get((), 0.0) if _nf_is_const(nf) else None


def _sorted_monos(nf):
    return sorted(nf, key=lambda m: [(k, float(e)) for k, _, e in m])


def _nf_leading_negative(nf):
    if not nf:
        return False
    first = _sorted_monos(nf)[0]
    return nf[first] < 0


def _nf_neg(nf):
    return {m: -c for m, c in nf.items()}


def _sum_atom(nf, exp):
    """Atom for a canonical multi-term sum raised to ``exp``."""
    first = _sorted_monos(nf)[0]
    lead = nf[first]
    if lead > 0 and lead != 1.0:
        # factor the leading coefficient out so equal bases share a key
        base = {m: c / lead for m, c in nf.items()}
        coeff = lead ** float(exp)
        return _nf_mul(_nf_const(coeff), _nf_atom(_from_nf(base), exp))
    return _nf_atom(_from_nf(nf), exp)


def _nf_pow(nf, n):
    """Normal form of nf**n for a numeric exponent n."""
    f = _frac(n)
    if f is None:
        return _nf_atom(Binary("pow", _from_nf(nf), Const(float(n))))
    if not nf:
        if f > 0:
            return {}
        raise DomainError("division by zero in constant expression")
    if f == 0:
        return _nf_const(1.0)
    if _nf_is_const(nf):
        c = nf[()]
        if c < 0 and f.denominator != 1:
            return _nf_atom(Binary("pow", Const(c), Const(float(f))))
        return _nf_const(c ** float(f))
    if len(nf) == 1:
        (m, c), = nf.items()
        if f.denominator != 1:
            even = any(e.denominator == 1 and e % 2 == 0 for _, _, e in m)
            if c < 0 or even:
                return _sum_or_opaque(nf, f)
        mono = tuple((k, a, e * f) for k, a, e in m)
        return {mono: c ** float(f)}
    if f.denominator == 1 and 0 < f <= _MAX_EXPAND:
        out = _nf_const(1.0)
        for _ in range(int(f)):
            out = _nf_mul(out, nf)
        return out
    return _sum_or_opaque(nf, f)


def _sum_or_opaque(nf, f):
    if len(nf) > 1:
        return _sum_atom(nf, f)
    return _nf_atom(Binary("pow", _from_nf(nf), Const(float(f))))


def _nf_func(op, arg):
    s_nf = _nf(arg)
    val = _nf_value(s_nf)
    if val is not None:
        folded = _fold(op, val)
        if folded is not None:
            return _nf_const(folded)
    if op in ("sin", "atan") and _nf_leading_negative(s_nf):
        return _nf_neg(_nf_atom(Unary(op, _from_nf(_nf_neg(s_nf)))))
    if op in ("cos", "abs") and _nf_leading_negative(s_nf):
        return _nf_atom(Unary(op, _from_nf(_nf_neg(s_nf))))
    if op == "sqrt":
        return _nf_pow(s_nf, 0.5)
    if op == "log" and len(s_nf) == 1:
        (m,) = s_nf
        if len(m) == 1 and isinstance(m[0][1], Unary) and m[0][1].op == "exp" and s_nf[m] == 1.0:
            return _nf_mul(_nf_const(float(m[0][2])), _nf(m[0][1].arg))
    return _nf_atom(Unary(op, _from_nf(s_nf)))


def _fold(op, v):
    if op == "sin":
        return math.sin(v)
    if op == "cos":
        return math.cos(v)
    if op == "exp":
        return math.exp(v)
    if op == "atan":
        return math.atan(v)
    if op == "abs":
        return abs(v)
    if op == "log":
        return math.log(v) if v > 0 else None
    if op == "sqrt":
        return math.sqrt(v) if v >= 0 else None
    return None


def _nf(e):
    if isinstance(e, Const):
        return _nf_const(e.value)
    if isinstance(e, Var):
        return _nf_atom(e)
    if isinstance(e, Unary):
        if e.op == "neg":
            return _nf_neg(_nf(e.arg))
        return _nf_func(e.op, e.arg)
    a = _nf(e.left)
    if e.op == "add":
        return _nf_add(a, _nf(e.right))
    if e.op == "sub":
        return _nf_add(a, _nf(e.right), -1.0)
    if e.op == "mul":
        return _nf_mul(a, _nf(e.right))
    if e.op == "div":
        b = _nf(e.right)
        if not b:
            raise DomainError("division by zero in constant expression")
        return _nf_mul(a, _nf_pow(b, -1.0))
    if e.op == "pow":
        b = _nf(e.right)
        n = _nf_value(b)
        if n is not None:
            return _nf_pow(a, n)
        return _nf_atom(Binary("pow", _from_nf(a), _from_nf(b)))
    raise ValueError(e.op)


def _canon_trig(nf):
    """Rewrite cos(u)^n (n >= 2 integer) as cos(u)^(n-2) * (1 - sin(u)^2)."""
    changed = True
    while changed:
        changed = False
        out = {}
        for m, c in nf.items():
            hit = None
            for i, (k, a, e) in enumerate(m):
                if isinstance(a, Unary) and a.op == "cos" and e.denominator == 1 and e >= 2:
                    hit = i
                    break
            if hit is None:
                out = _nf_add(out, {m: c})
                continue
            changed = True
            k, a, e = m[hit]
            rest = m[:hit] + m[hit + 1:]
            if e > 2:
                rest = _mono_mul(rest, ((k, a, e - 2),))
            sin_atom = Unary("sin", a.arg)
            repl = _nf_add(_nf_const(1.0), _nf_atom(sin_atom, 2), -1.0)
            out = _nf_add(out, _nf_mul({rest: c}, repl))
        nf = out
    return nf


def _factor_expr(atom, e):
    if e == 1:
        return atom
    if e == Fraction(1, 2):
        return Unary("sqrt", atom)
    v = float(e)
    return Binary("pow", atom, Const(v))


def _mono_expr(m):
    num, den = [], []
    for _, atom, e in m:
        if e > 0:
            num.append(_factor_expr(atom, e))
        else:
            den.append(_factor_expr(atom, -e))
    node = None
    for f in num:
        node = f if node is None else Binary("mul", node, f)
    dnode = None
    for f in den:
        dnode = f if dnode is None else Binary("mul", dnode, f)
    if dnode is not None:
        node = Binary("div", node if node is not None else ONE, dnode)
    return node


def _term(c, m, signed):
    """Expression for c*m; with signed=False the magnitude only."""
    body = _mono_expr(m)
    mag = abs(c) if not signed else c
    if body is None:
        return Const(mag)
    if mag == 1.0:
        return body
    if mag == -1.0:
        return Unary("neg", body)
    return Binary("mul", Const(mag), body)


def _from_nf(nf):
    if not nf:
        return ZERO
    node = None
    for m in _sorted_monos(nf):
        c = nf[m]
        if node is None:
            node = _term(c, m, signed=True)
        elif c < 0:
            node = Binary("sub", node, _term(c, m, signed=False))
        else:
            node = Binary("add", node, _term(c, m, signed=False))
    return node


def simplify(e: Expr) -> Expr:
    """Canonical form; raises DomainError on constant division by zero."""
    return _from_nf(_canon_trig(_nf(e)))


def is_zero(e: Expr) -> bool:
    return is_const(simplify(e), 0.0)


# -- evaluation -----------------------------------------------------------

_NP_FUNC = {
    "sin": "np.sin",
    "cos": "np.cos",
    "exp": "np.exp",
    "log": "np.log",
    "sqrt": "np.sqrt",
    "abs": "np.abs",
    "atan": "np.arctan",
}


def to_numpy_source(e: Expr) -> str:
    if isinstance(e, Const):
        return repr(float(e.value))
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Unary):
        inner = to_numpy_source(e.arg)
        if e.op == "neg":
            return f"(-{inner})"
        return f"{_NP_FUNC[e.op]}({inner})"
    ls, rs = to_numpy_source(e.left), to_numpy_source(e.right)
    if e.op == "pow":
        return f"np.power({ls}, {rs})"
    sym = {"add": "+", "sub": "-", "mul": "*", "div": "/"}[e.op]
    return f"({ls} {sym} {rs})"


_COMPILED: dict = {}


def compile_exprs(exprs: Sequence[Expr], variables: Sequence[str]):
    """Compile expressions into ``f(values) -> array (..., len(exprs))``.

    ``values`` has shape ``(..., len(variables))``.  Results are raw
    numpy output; non-finite entries signal domain errors.
    """
    key = (tuple(exprs), tuple(variables))
    fn = _COMPILED.get(key)
    if fn is not None:
        return fn
    args = ", ".join(variables) if variables else ""
    body = ", ".join(to_numpy_source(e) for e in exprs)
    src = f"def _f({args}):\n    return ({body},)\n"
    ns = {"np": np}
    exec(compile(src, "<nlhormander-expr>", "exec"), ns)
    raw = ns["_f"]
    nvars = len(variables)

    def fn(values):
        values = np.asarray(values, dtype=float)
        if values.shape[-1:] != (nvars,) and not (nvars == 0):
            raise ValueError(f"expected trailing dimension {nvars}, got {values.shape}")
        shape = values.shape[:-1]
        cols = [values[..., i] for i in range(nvars)]
        with np.errstate(all="ignore"):
            outs = raw(*cols)
        return np.stack([np.broadcast_to(np.asarray(o, dtype=float), shape) for o in outs], axis=-1)

    _COMPILED[key] = fn
    return fn


def evaluate(e: Expr, variables: Sequence[str], point) -> float:
    """Evaluate at a single point; raises DomainError on non-finite results."""
    out = compile_exprs([e], variables)(np.asarray(point, dtype=float))[..., 0]
    if not np.all(np.isfinite(out)):
        raise DomainError(f"{to_str(e)} is undefined at {np.asarray(point).tolist()}")
    return float(out) if out.ndim == 0 else out
