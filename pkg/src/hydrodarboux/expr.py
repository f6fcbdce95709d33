"""Immutable expression trees over the variables u1..un.

The engine is deliberately small: it parses the speed grammar, differentiates
exactly, applies a light canonicalising simplifier and evaluates either at a
single point (with precise domain errors) or on numpy arrays (domain errors
become NaN).

Grammar::

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := base ('^' factor)?
    base   := number | ident | '(' expr ')' | func '(' expr ')' | '-' base
    func   := sin | cos | exp | log | sqrt | tanh
    ident  := 'u' digits

Note that unary minus lives in ``base``, so ``-u1^2`` is ``(-u1)^2``.
"""

from __future__ import annotations

import math
import re
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Expr", "Const", "Var", "Unary", "Binary",
    "ParseError", "DomainError",
    "parse", "differentiate", "evaluate", "evaluate_array", "simplify",
    "is_zero", "is_numeric_zero", "lambdify", "free_vars", "to_string",
    "const", "var", "FUNCTIONS",
]

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt", "tanh")
_UNARY_OPS = FUNCTIONS + ("neg",)
_BINARY_OPS = ("add", "sub", "mul", "div", "pow")
_SYMBOL = {"add": "+", "sub": "-", "mul": "*", "div": "/", "pow": "^"}
_PREC = {"add": 1, "sub": 1, "mul": 2, "div": 2, "pow": 3}
_ATOM = 4


class ParseError(ValueError):
    """Syntax error, unknown identifier or out-of-range variable index."""

    def __init__(self, message: str, position: int | None = None):
        self.position = position
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)


class DomainError(ArithmeticError):
    """Evaluation left the real domain of an operation."""

    def __init__(self, message: str, subexpr: "Expr | None" = None):
        self.subexpr = subexpr
        if subexpr is not None:
            message = f"{message} in '{subexpr}'"
        super().__init__(message)


# ---------------------------------------------------------------------------
# nodes

class Expr:
    __slots__ = ("_hash", "_str", "_cache")

    def _init(self, key):
        object.__setattr__(self, "_hash", hash(key))
        object.__setattr__(self, "_str", None)
        object.__setattr__(self, "_cache", {})

    def __setattr__(self, name, value):
        raise AttributeError("Expr nodes are immutable")

    def __hash__(self):
        return self._hash

    def __str__(self):
        s = self._str
        if s is None:
            s = _print(self)
            object.__setattr__(self, "_str", s)
        return s

    def __repr__(self):
        return f"Expr({str(self)!r})"

    # operator sugar builds raw (unsimplified) trees
    def __add__(self, other):
        return Binary("add", self, _coerce(other))

    def __radd__(self, other):
        return Binary("add", _coerce(other), self)

    def __sub__(self, other):
        return Binary("sub", self, _coerce(other))

    def __rsub__(self, other):
        return Binary("sub", _coerce(other), self)

    def __mul__(self, other):
        return Binary("mul", self, _coerce(other))

    def __rmul__(self, other):
        return Binary("mul", _coerce(other), self)

    def __truediv__(self, other):
        return Binary("div", self, _coerce(other))

    def __rtruediv__(self, other):
        return Binary("div", _coerce(other), self)

    def __pow__(self, other):
        return Binary("pow", self, _coerce(other))

    def __rpow__(self, other):
        return Binary("pow", _coerce(other), self)

    def __neg__(self):
        return Unary("neg", self)


class Const(Expr):
    __hash__ = Expr.__hash__
    __slots__ = ("value",)

    def __init__(self, value: float):
        value = float(value)
        if not math.isfinite(value):
            raise ValueError(f"constant must be finite, got {value}")
        if value == 0.0:
            value = 0.0  # drop the sign of -0.0
        object.__setattr__(self, "value", value)
        self._init(("c", value))

    def __eq__(self, other):
        return isinstance(other, Const) and other.value == self.value


class Var(Expr):
    __hash__ = Expr.__hash__
    __slots__ = ("index",)

    def __init__(self, index: int):
        if int(index) < 1:
            raise ValueError("variable indices start at 1")
        object.__setattr__(self, "index", int(index))
        self._init(("v", self.index))

    def __eq__(self, other):
        return isinstance(other, Var) and other.index == self.index


class Unary(Expr):
    __hash__ = Expr.__hash__
    __slots__ = ("op", "arg")

    def __init__(self, op: str, arg: Expr):
        if op not in _UNARY_OPS:
            raise ValueError(f"unknown unary op {op!r}")
        object.__setattr__(self, "op", op)
        object.__setattr__(self, "arg", arg)
        self._init(("u", op, arg._hash))

    def __eq__(self, other):
        if self is other:
            return True
        return (isinstance(other, Unary) and other._hash == self._hash
                and other.op == self.op and other.arg == self.arg)


class Binary(Expr):
    __hash__ = Expr.__hash__
    __slots__ = ("op", "left", "right")

    def __init__(self, op: str, left: Expr, right: Expr):
        if op not in _BINARY_OPS:
            raise ValueError(f"unknown binary op {op!r}")
        object.__setattr__(self, "op", op)
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)
        self._init(("b", op, left._hash, right._hash))

    def __eq__(self, other):
        if self is other:
            return True
        return (isinstance(other, Binary) and other._hash == self._hash
                and other.op == self.op and other.left == self.left
                and other.right == self.right)


def const(value: float) -> Const:
    return Const(value)


def var(index: int) -> Var:
    return Var(index)


def _coerce(value) -> Expr:
    if isinstance(value, Expr):
        return value
    return Const(value)


ZERO = Const(0.0)
ONE = Const(1.0)
UNDEF = Binary("div", ONE, ZERO)  # canonical form of a literal division by zero


# ---------------------------------------------------------------------------
# printing

def _fmt_number(v: float) -> str:
    if v.is_integer() and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


def _prec(e: Expr) -> int:
    if isinstance(e, Binary):
        return _PREC[e.op]
    return _ATOM


def _print(e: Expr) -> str:
    if isinstance(e, Const):
        s = _fmt_number(abs(e.value))
        return f"(-{s})" if e.value < 0 else s
    if isinstance(e, Var):
        return f"u{e.index}"
    if isinstance(e, Unary):
        if e.op == "neg":
            inner = str(e.arg)
            if _prec(e.arg) < _ATOM:
                inner = f"({inner})"
            return f"(-{inner})"
        return f"{e.op}({e.arg})"
    p = _PREC[e.op]
    left, right = str(e.left), str(e.right)
    if e.op == "pow":
        if _prec(e.left) <= p:
            left = f"({left})"
        if _prec(e.right) < p:
            right = f"({right})"
        return f"{left}^{right}"
    if _prec(e.left) < p:
        left = f"({left})"
    if _prec(e.right) <= p:
        right = f"({right})"
    return f"{left} {_SYMBOL[e.op]} {right}"


def to_string(e: Expr) -> str:
    return str(e)


# ---------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            start = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ParseError(f"unexpected character {text[start]!r}", start)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, n: int):
        self.tokens = _tokenize(text)
        self.i = 0
        self.n = n

    @property
    def tok(self):
        return self.tokens[self.i]

    def take(self, value=None):
        kind, val, pos = self.tok
        if value is not None and val != value:
            what = "end of input" if kind == "end" else repr(val)
            raise ParseError(f"expected {value!r} but found {what}", pos)
        self.i += 1
        return kind, val, pos

    def expr(self):
        node = self.term()
        while self.tok[1] in ("+", "-") and self.tok[0] == "op":
            _, op, _ = self.take()
            node = Binary("add" if op == "+" else "sub", node, self.term())
        return node

    def term(self):
        node = self.factor()
        while self.tok[1] in ("*", "/") and self.tok[0] == "op":
            _, op, _ = self.take()
            node = Binary("mul" if op == "*" else "div", node, self.factor())
        return node

    def factor(self):
        node = self.base()
        if self.tok[0] == "op" and self.tok[1] == "^":
            self.take()
            node = Binary("pow", node, self.factor())
        return node

    def base(self):
        kind, val, pos = self.tok
        if kind == "num":
            self.take()
            return Const(float(val))
        if kind == "op" and val == "(":
            self.take()
            node = self.expr()
            self.take(")")
            return node
        if kind == "op" and val == "-":
            self.take()
            inner = self.base()
            if isinstance(inner, Const):
                return Const(-inner.value)
            return Unary("neg", inner)
        if kind == "ident":
            self.take()
            if val in FUNCTIONS:
                self.take("(")
                node = self.expr()
                self.take(")")
                return Unary(val, node)
            m = re.fullmatch(r"u(\d+)", val)
            if m is None:
                raise ParseError(f"unknown identifier {val!r}", pos)
            index = int(m.group(1))
            if index < 1 or index > self.n:
                raise ParseError(
                    f"variable index out of range: {val} with n={self.n}", pos)
            return Var(index)
        what = "end of input" if kind == "end" else repr(val)
        raise ParseError(f"unexpected {what}", pos)


def parse(text: str, n: int) -> Expr:
    """Parse ``text`` into an expression over u1..un."""
    p = _Parser(text, n)
    node = p.expr()
    kind, val, pos = p.tok
    if kind != "end":
        raise ParseError(f"unexpected trailing {val!r}", pos)
    return node


# ---------------------------------------------------------------------------
# structure helpers

def free_vars(e: Expr) -> frozenset[int]:
    cached = e._cache.get("free")
    if cached is not None:
        return cached
    if isinstance(e, Const):
        out = frozenset()
    elif isinstance(e, Var):
        out = frozenset((e.index,))
    elif isinstance(e, Unary):
        out = free_vars(e.arg)
    else:
        out = free_vars(e.left) | free_vars(e.right)
    e._cache["free"] = out
    return out


def _walk_unique(e: Expr) -> list[Expr]:
    """Post-order list of structurally distinct subtrees."""
    seen: dict[Expr, None] = {}
    stack = [(e, False)]
    while stack:
        node, expanded = stack.pop()
        if node in seen:
            continue
        if expanded or isinstance(node, (Const, Var)):
            seen[node] = None
            continue
        stack.append((node, True))
        if isinstance(node, Unary):
            stack.append((node.arg, False))
        else:
            stack.append((node.right, False))
            stack.append((node.left, False))
    return list(seen)


# ---------------------------------------------------------------------------
# scalar evaluation with precise domain errors

def _pow_scalar(a: float, b: float, node: Expr) -> float:
    if a == 0.0 and b < 0:
        raise DomainError("zero raised to a negative power", node)
    if a < 0 and not float(b).is_integer():
        raise DomainError("negative base with non-integer exponent", node)
    try:
        return math.pow(a, b)
    except OverflowError:
        raise DomainError("overflow", node) from None


def _eval_node(op: str, args: tuple, node: Expr) -> float:
    if op == "add":
        return args[0] + args[1]
    if op == "sub":
        return args[0] - args[1]
    if op == "mul":
        return args[0] * args[1]
    if op == "div":
        if args[1] == 0.0:
            raise DomainError("division by zero", node)
        return args[0] / args[1]
    if op == "pow":
        return _pow_scalar(args[0], args[1], node)
    a = args[0]
    if op == "neg":
        return -a
    if op == "log":
        if a <= 0:
            raise DomainError("log of a nonpositive value", node)
        return math.log(a)
    if op == "sqrt":
        if a < 0:
            raise DomainError("sqrt of a negative value", node)
        return math.sqrt(a)
    if op == "exp":
        try:
            return math.exp(a)
        except OverflowError:
            raise DomainError("overflow", node) from None
    return getattr(math, op)(a)


def evaluate(e: Expr, p: Sequence[float]) -> float:
    """Evaluate at one point; raises :class:`DomainError` naming the subexpression."""
    p = [float(v) for v in p]
    values: dict[Expr, float] = {}
    for node in _walk_unique(e):
        if isinstance(node, Const):
            v = node.value
        elif isinstance(node, Var):
            if node.index > len(p):
                raise ValueError(
                    f"point has {len(p)} coordinates but {node} is referenced")
            v = p[node.index - 1]
        elif isinstance(node, Unary):
            v = _eval_node(node.op, (values[node.arg],), node)
        else:
            v = _eval_node(node.op, (values[node.left], values[node.right]), node)
        if not math.isfinite(v):
            raise DomainError("non-finite intermediate value", node)
        values[node] = v
    return values[e]


# ---------------------------------------------------------------------------
# compiled evaluation

def _np_div(a, b):
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.divide(a, b)
    return np.where(b == 0, np.nan, out)


def _np_pow(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    bad = ((a == 0) & (b < 0)) | ((a < 0) & (b != np.round(b)))
    with np.errstate(all="ignore"):
        out = np.power(a, b)
    return np.where(bad, np.nan, out)


def _np_log(a):
    with np.errstate(all="ignore"):
        out = np.log(a)
    return np.where(a <= 0, np.nan, out)


def _np_sqrt(a):
    with np.errstate(all="ignore"):
        out = np.sqrt(a)
    return np.where(a < 0, np.nan, out)


def _np_exp(a):
    with np.errstate(over="ignore"):
        return np.exp(a)


def _m_div(a, b):
    if b == 0.0:
        raise DomainError("division by zero")
    return a / b


def _m_pow(a, b):
    if a == 0.0 and b < 0:
        raise DomainError("zero raised to a negative power")
    if a < 0 and not float(b).is_integer():
        raise DomainError("negative base with non-integer exponent")
    return math.pow(a, b)


_NP_ENV = {
    "_div": _np_div, "_pow": _np_pow, "_log": _np_log, "_sqrt": _np_sqrt,
    "_exp": _np_exp, "_sin": np.sin, "_cos": np.cos, "_tanh": np.tanh,
    "_full": np.full_like, "_asarray": np.asarray, "_nan": np.nan,
    "_isfinite": np.isfinite, "_where": np.where, "_float": float,
}
_M_ENV = {
    "_div": _m_div, "_pow": _m_pow, "_log": math.log, "_sqrt": math.sqrt,
    "_exp": math.exp, "_sin": math.sin, "_cos": math.cos, "_tanh": math.tanh,
}


def _codegen(e: Expr, backend: str) -> Callable:
    nodes = _walk_unique(e)
    names: dict[Expr, str] = {}
    lines = []
    for k, node in enumerate(nodes):
        name = f"t{k}"
        if isinstance(node, Const):
            rhs = repr(node.value)
        elif isinstance(node, Var):
            rhs = f"u[{node.index - 1}]"
        elif isinstance(node, Unary):
            a = names[node.arg]
            rhs = f"(-{a})" if node.op == "neg" else f"_{node.op}({a})"
        else:
            a, b = names[node.left], names[node.right]
            if node.op in ("div", "pow"):
                rhs = f"_{node.op}({a}, {b})"
            else:
                rhs = f"({a} {_SYMBOL[node.op]} {b})"
        names[node] = name
        lines.append(f"    {name} = {rhs}")
    result = names[e]
    if backend == "numpy":
        src = ["def _f(u):", "    u = _asarray(u, dtype=float)"] + lines
        src += [f"    r = {result} + 0.0 * u[0] if len(u) else {result}",
                "    r = _asarray(r, dtype=float)",
                "    return _where(_isfinite(r), r, _nan)"]
        env = dict(_NP_ENV)
    else:
        src = ["def _f(u):"] + lines + [f"    return _float({result})"]
        env = dict(_M_ENV)
        env["_float"] = float
    code = compile("\n".join(src), f"<expr {backend}>", "exec")
    exec(code, env)
    return env["_f"]


def lambdify(e: Expr, backend: str = "numpy") -> Callable:
    """Compile ``e`` into a fast callable of the coordinate vector ``u``.

    ``numpy``: ``u`` has shape ``(n, ...)``; domain violations give NaN.
    ``math``: ``u`` is a sequence of floats; domain violations raise
    (DomainError, ValueError, ZeroDivisionError or OverflowError).
    """
    if backend not in ("numpy", "math"):
        raise ValueError("backend must be 'numpy' or 'math'")
    key = "fn_" + backend
    fn = e._cache.get(key)
    if fn is None:
        fn = _codegen(e, backend)
        e._cache[key] = fn
    return fn


def evaluate_array(e: Expr, points) -> np.ndarray:
    """Evaluate at an ``(m, n)`` array of points; NaN marks domain errors."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return np.broadcast_to(lambdify(e, "numpy")(pts.T), (pts.shape[0],)).copy()


# ---------------------------------------------------------------------------
# differentiation

def differentiate(e: Expr, k: int, n: int | None = None) -> Expr:
    """Exact partial derivative with respect to u_k, simplified."""
    if k < 1 or (n is not None and k > n):
        raise ValueError(f"variable index {k} out of range")
    memo: dict[Expr, Expr] = {}
    return simplify(_d(e, k, memo))


def _d(e: Expr, k: int, memo: dict) -> Expr:
    if k not in free_vars(e):
        return ZERO
    hit = memo.get(e)
    if hit is not None:
        return hit
    if isinstance(e, Var):
        out = ONE
    elif isinstance(e, Unary):
        a = e.arg
        da = _d(a, k, memo)
        if e.op == "neg":
            out = Unary("neg", da)
        elif e.op == "sin":
            out = da * Unary("cos", a)
        elif e.op == "cos":
            out = Unary("neg", da * Unary("sin", a))
        elif e.op == "exp":
            out = da * e
        elif e.op == "log":
            out = da / a
        elif e.op == "sqrt":
            out = da / (Const(2.0) * e)
        else:  # tanh
            out = da * (ONE - e ** Const(2.0))
    else:
        a, b = e.left, e.right
        if e.op in ("add", "sub"):
            out = Binary(e.op, _d(a, k, memo), _d(b, k, memo))
        elif e.op == "mul":
            out = _d(a, k, memo) * b + a * _d(b, k, memo)
        elif e.op == "div":
            if k not in free_vars(b):
                out = _d(a, k, memo) / b
            elif k not in free_vars(a):
                out = Unary("neg", a * _d(b, k, memo)) / b ** Const(2.0)
            else:
                out = (_d(a, k, memo) * b - a * _d(b, k, memo)) / b ** Const(2.0)
        else:  # pow
            if k not in free_vars(b):
                if isinstance(b, Const):
                    out = b * a ** Const(b.value - 1.0) * _d(a, k, memo)
                else:
                    out = b * a ** (b - ONE) * _d(a, k, memo)
            elif k not in free_vars(a):
                out = e * Unary("log", a) * _d(b, k, memo)
            else:
                out = e * (_d(b, k, memo) * Unary("log", a)
                           + b * _d(a, k, memo) / a)
    memo[e] = out
    return out


# ---------------------------------------------------------------------------
# simplification
#
# Canonical form: sums are flat lists of (coefficient, product) terms with
# like terms merged; products are a coefficient times integer powers of
# sorted base factors.  A sum used as a factor is sign-normalised so that its
# leading term is positive, which lets (u1-u2) and (u2-u1) cancel.

_MAX_INT_EXP = 1000


def _sort_key(e: Expr):
    if isinstance(e, Const):
        return (0, 0, "")
    if isinstance(e, Var):
        return (1, e.index, "")
    if isinstance(e, Unary) and e.op != "neg":
        return (2, 0, str(e))
    if isinstance(e, Binary) and e.op == "pow":
        return (3, 0, str(e))
    return (4, 0, str(e))


def _factor_key(factors):
    return tuple((_sort_key(b), p) for b, p in factors)


def _is_sum(e: Expr) -> bool:
    return isinstance(e, Binary) and e.op in ("add", "sub")


def _as_int(v: float):
    if float(v).is_integer() and abs(v) <= _MAX_INT_EXP:
        return int(v)
    return None


def _fold_unary(op: str, v: float):
    try:
        out = _eval_node(op, (v,), None)
    except (DomainError, ValueError, OverflowError):
        return None
    return out if math.isfinite(out) else None


def _make_prod(c: float, factors) -> Expr:
    if c == 0.0:
        return ZERO
    if len(factors) == 1 and factors[0][1] == 1 and _is_sum(factors[0][0]):
        # c * (sum) is distributed so that sums stay flat
        constant, terms = _sum_parts(factors[0][0])
        return _make_sum(c * constant, [(c * ci, fi) for ci, fi in terms])
    factors = sorted(factors, key=lambda bp: (_sort_key(bp[0]), bp[1]))
    num = [b if p == 1 else Binary("pow", b, Const(p)) for b, p in factors if p > 0]
    den = [b if p == -1 else Binary("pow", b, Const(-p)) for b, p in factors if p < 0]

    def chain(items):
        out = items[0]
        for item in items[1:]:
            out = Binary("mul", out, item)
        return out

    if not num:
        top = Const(c)
    else:
        top = chain(num)
        if c == -1.0:
            top = Unary("neg", top)
        elif c != 1.0:
            top = Binary("mul", Const(c), top)
    if den:
        return Binary("div", top, chain(den))
    return top


def _chain_factors(e: Expr, sign: int, out: list):
    if isinstance(e, Binary) and e.op == "mul":
        _chain_factors(e.left, sign, out)
        _chain_factors(e.right, sign, out)
        return
    if isinstance(e, Binary) and e.op == "pow" and isinstance(e.right, Const) and not isinstance(e.left, Const):
        p = _as_int(e.right.value)
        if p is not None and p != 0:
            out.append((e.left, sign * p))
            return
    out.append((e, sign))


def _prod_parts(e: Expr):
    """Invert :func:`_make_prod` on a canonical expression."""
    if isinstance(e, Const):
        return e.value, []
    if isinstance(e, Unary) and e.op == "neg":
        c, f = _prod_parts(e.arg)
        return -c, f
    factors: list = []
    c = 1.0
    top = e
    if isinstance(e, Binary) and e.op == "div":
        top = e.left
        _chain_factors(e.right, -1, factors)
    if isinstance(top, Const):
        c = top.value
    else:
        if isinstance(top, Unary) and top.op == "neg":
            c = -1.0
            top = top.arg
        elif isinstance(top, Binary) and top.op == "mul" and isinstance(top.left, Const):
            c = top.left.value
            top = top.right
        head: list = []
        _chain_factors(top, 1, head)
        factors = head + factors
    return c, factors


def _sum_parts(e: Expr):
    """(constant, [(coef, factors)]) of a canonical expression seen as a sum."""
    items: list = []
    _gather_sum(e, 1.0, items, None)
    return _collect_terms(items)


def _gather_sum(e: Expr, sign: float, items: list, memo):
    if isinstance(e, Binary) and e.op in ("add", "sub"):
        _gather_sum(e.left, sign, items, memo)
        _gather_sum(e.right, sign if e.op == "add" else -sign, items, memo)
        return
    if isinstance(e, Unary) and e.op == "neg":
        _gather_sum(e.arg, -sign, items, memo)
        return
    if memo is not None:
        s = _simp(e, memo)
        if _is_sum(s) or (isinstance(s, Unary) and s.op == "neg" and _is_sum(s.arg)):
            _gather_sum(s, sign, items, None)
            return
        e = s
    items.append((sign, e))


def _collect_terms(items):
    constant = 0.0
    terms: dict = {}
    order: list = []
    for sign, s in items:
        c, factors = _prod_parts(s)
        c *= sign
        if not factors:
            constant += c
            continue
        factors = tuple(sorted(factors, key=lambda bp: (_sort_key(bp[0]), bp[1])))
        key = factors
        if key in terms:
            terms[key] += c
        else:
            terms[key] = c
            order.append(key)
    return constant, [(terms[k], list(k)) for k in order if terms[k] != 0.0]


def _make_sum(constant: float, terms) -> Expr:
    terms = [(c, f) for c, f in terms if c != 0.0]
    if not terms:
        return Const(constant)
    terms.sort(key=lambda cf: _factor_key(cf[1]))
    pos = [t for t in terms if t[0] > 0]
    neg = [t for t in terms if t[0] < 0]
    ordered = pos + neg
    c0, f0 = ordered[0]
    acc = _make_prod(c0, f0)
    for c, f in ordered[1:]:
        if c > 0:
            acc = Binary("add", acc, _make_prod(c, f))
        else:
            acc = Binary("sub", acc, _make_prod(-c, f))
    if constant > 0:
        acc = Binary("add", acc, Const(constant))
    elif constant < 0:
        acc = Binary("sub", acc, Const(-constant))
    return acc


def _normalize_sign(base: Expr):
    """Return (sign, base') with base = sign * base' and base' leading-positive."""
    if not _is_sum(base):
        return 1.0, base
    constant, terms = _sum_parts(base)
    if not terms:
        return 1.0, base
    lead = min(terms, key=lambda cf: _factor_key(cf[1]))
    if lead[0] > 0:
        return 1.0, base
    return -1.0, _make_sum(-constant, [(-c, f) for c, f in terms])


def _children(e: Expr):
    if isinstance(e, Unary):
        return (e.arg,)
    return (e.left, e.right)


def _simp(e: Expr, memo: dict) -> Expr:
    hit = memo.get(e)
    if hit is not None:
        return hit
    if isinstance(e, (Const, Var)):
        out = e
    elif e != UNDEF and any(_simp(c, memo) == UNDEF for c in _children(e)):
        # a literal division by zero poisons the enclosing expression
        out = UNDEF
    elif isinstance(e, Unary):
        if e.op == "neg":
            out = _sum_canon(e, memo)
        else:
            a = _simp(e.arg, memo)
            out = Unary(e.op, a)
            if isinstance(a, Const):
                v = _fold_unary(e.op, a.value)
                if v is not None:
                    out = Const(v)
    elif e.op in ("add", "sub"):
        out = _sum_canon(e, memo)
    else:
        out = _prod_canon(e, memo)
    memo[e] = out
    return out


def _sum_canon(e: Expr, memo: dict) -> Expr:
    items: list = []
    _gather_sum(e, 1.0, items, memo)
    constant, terms = _collect_terms(items)
    return _make_sum(constant, terms)


def _gather_prod(e: Expr, k: int, acc: dict, memo: dict) -> bool:
    """Accumulate factors of e**k into acc; False if the product must stay opaque."""
    if isinstance(e, Binary) and e.op == "mul":
        return _gather_prod(e.left, k, acc, memo) and _gather_prod(e.right, k, acc, memo)
    if isinstance(e, Binary) and e.op == "div":
        return _gather_prod(e.left, k, acc, memo) and _gather_prod(e.right, -k, acc, memo)
    s = _simp(e, memo)
    c, factors = _prod_parts(s)
    if c == 0.0 and k < 0:
        acc["undef"] = True
        return False
    try:
        ck = c ** k
    except (OverflowError, ZeroDivisionError):
        return False
    if not math.isfinite(ck):
        return False
    acc["coef"] *= ck
    for b, p in factors:
        sign, b = _normalize_sign(b)
        if sign < 0 and (p * k) % 2:
            acc["coef"] = -acc["coef"]
        exps = acc["exps"]
        exps[b] = exps.get(b, 0) + p * k
    return True


def _finish_prod(acc: dict) -> Expr:
    if acc["coef"] == 0.0:
        return ZERO
    factors = [(b, p) for b, p in acc["exps"].items() if p != 0]
    return _make_prod(acc["coef"], factors)


def _prod_canon(e: Expr, memo: dict) -> Expr:
    if e.op == "pow":
        return _pow_canon(e, memo)
    acc = {"coef": 1.0, "exps": {}}
    if not _gather_prod(e, 1, acc, memo):
        if acc.get("undef"):
            return UNDEF
        return Binary(e.op, _simp(e.left, memo), _simp(e.right, memo))
    return _finish_prod(acc)


def _pow_canon(e: Expr, memo: dict) -> Expr:
    b = _simp(e.left, memo)
    x = _simp(e.right, memo)
    if isinstance(x, Const):
        if x.value == 0.0:
            return ONE
        if x.value == 1.0:
            return b
        if isinstance(b, Const):
            try:
                v = _pow_scalar(b.value, x.value, None)
            except DomainError:
                v = None
            if v is not None and math.isfinite(v):
                return Const(v)
            if b.value == 0.0 and x.value < 0:
                return UNDEF
            return Binary("pow", b, x)
        p = _as_int(x.value)
        if p is not None:
            acc = {"coef": 1.0, "exps": {}}
            if _gather_prod(b, p, acc, memo):
                return _finish_prod(acc)
            if acc.get("undef"):
                return UNDEF
    return Binary("pow", b, x)


def simplify(e: Expr) -> Expr:
    """Light canonicalising simplification; value-preserving where both sides evaluate."""
    hit = e._cache.get("simp")
    if hit is not None:
        return hit
    out = _simp(e, {})
    e._cache["simp"] = out
    return out


def is_zero(e: Expr) -> bool:
    """Sound syntactic zero test: True only if simplify reduces ``e`` to 0."""
    s = simplify(e)
    return isinstance(s, Const) and s.value == 0.0


def is_numeric_zero(e: Expr, points, tol: float) -> bool:
    """True when ``|e| <= tol`` at every point (NaN counts as nonzero)."""
    vals = evaluate_array(e, points)
    return bool(np.all(np.abs(vals) <= tol))


def sum_exprs(items: Iterable[Expr]) -> Expr:
    out = None
    for item in items:
        out = item if out is None else out + item
    return ZERO if out is None else out
