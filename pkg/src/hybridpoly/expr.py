"""Expression trees for field components, switching functions and jump maps.

Expressions are immutable trees built from constants, variables, negation,
binary arithmetic, powers with a constant exponent and one-argument
elementary functions. They can be parsed from text, printed back, evaluated,
compiled to fast Python callables, differentiated exactly and expanded as
truncated power series.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence, Union

__all__ = [
    "Const", "Var", "Neg", "BinOp", "Pow", "Func", "Expression",
    "ExprError", "ExprSyntaxError", "UnknownIdentifierError", "ArityError",
    "UnboundVariableError", "DomainError", "ExpressionTooLarge",
    "FUNCTIONS", "MAX_NODES",
    "parse_expression", "to_string", "evaluate", "compile_expr",
    "differentiate", "taylor_coefficients", "series_evaluate", "substitute",
    "variables", "node_count", "const", "add", "sub", "mul", "div", "neg",
    "power", "func",
]

FUNCTIONS = ("sin", "cos", "tan", "atan", "exp", "ln", "sqrt", "abs")
MAX_NODES = 1_000_000


class ExprError(Exception):
    """Base class for expression errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at byte offset {offset}")
        self.offset = offset


class UnknownIdentifierError(ExprError):
    pass


class ArityError(ExprError):
    pass


class UnboundVariableError(ExprError):
    pass


class DomainError(ExprError, ArithmeticError):
    pass


class ExpressionTooLarge(ExprError):
    pass


# --------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Const:
    value: float

    def __post_init__(self):
        v = float(self.value)
        if not math.isfinite(v) or v < 0:
            raise ValueError(f"Const requires a finite non-negative value, got {self.value!r}")
        object.__setattr__(self, "value", v + 0.0)  # normalizes -0.0


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Expression"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expression"
    right: "Expression"

    def __post_init__(self):
        if self.op not in "+-*/" or len(self.op) != 1:
            raise ValueError(f"unknown operator {self.op!r}")


@dataclass(frozen=True)
class Pow:
    base: "Expression"
    exponent: float

    def __post_init__(self):
        e = float(self.exponent)
        if not math.isfinite(e):
            raise ValueError("exponent must be finite")
        object.__setattr__(self, "exponent", e + 0.0)


@dataclass(frozen=True)
class Func:
    name: str
    arg: "Expression"

    def __post_init__(self):
        if self.name not in FUNCTIONS:
            raise ValueError(f"unknown function {self.name!r}")


Expression = Union[Const, Var, Neg, BinOp, Pow, Func]

ZERO = Const(0.0)
ONE = Const(1.0)


# --------------------------------------------------------------------------
# Parsing

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^(),]))"
)


class _Parser:
    def __init__(self, text: str, allowed: frozenset[str] | None):
        self.text = text
        self.allowed = allowed
        self.tokens: list[tuple[str, str, int]] = []
        pos = 0
        while True:
            m = _TOKEN_RE.match(text, pos)
            if m is None or m.end() == pos:
                rest = text[pos:]
                if rest.strip() == "":
                    break
                bad = pos + len(rest) - len(rest.lstrip())
                raise ExprSyntaxError(f"unexpected character {text[bad]!r}", self._byte(bad))
            kind = m.lastgroup
            self.tokens.append((kind, m.group(kind), m.start(kind)))
            pos = m.end()
        self.tokens.append(("end", "", len(text)))
        self.i = 0

    def _byte(self, char_offset: int) -> int:
        return len(self.text[:char_offset].encode("utf-8"))

    def peek(self) -> tuple[str, str, int]:
        return self.tokens[self.i]

    def take(self) -> tuple[str, str, int]:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, message: str, tok=None):
        tok = tok or self.peek()
        raise ExprSyntaxError(message, self._byte(tok[2]))

    def expect(self, value: str):
        tok = self.take()
        if tok[0] != "op" or tok[1] != value:
            self.fail(f"expected {value!r}", tok)

    def parse(self) -> Expression:
        e = self.expr()
        if self.peek()[0] != "end":
            self.fail(f"unexpected token {self.peek()[1]!r}")
        return e

    def expr(self) -> Expression:
        e = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            e = BinOp(op, e, self.term())
        return e

    def term(self) -> Expression:
        e = self.factor()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.take()[1]
            e = BinOp(op, e, self.factor())
        return e

    def factor(self) -> Expression:
        if self.peek() [0] == "op" and self.peek()[1] == "-":
            self.take()
            return Neg(self.factor())
        return self.power()

    def power(self) -> Expression:
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            sign = 1.0
            if self.peek()[0] == "op" and self.peek()[1] == "-":
                self.take()
                sign = -1.0
            tok = self.take()
            if tok[0] != "num":
                self.fail("exponent must be a numeric constant", tok)
            return Pow(base, sign * float(tok[1]))
        return base

    def atom(self) -> Expression:
        tok = self.take()
        kind, value, _ = tok
        if kind == "num":
            return Const(float(value))
        if kind == "ident":
            is_call = self.peek()[0] == "op" and self.peek()[1] == "("
            if value in FUNCTIONS:
                if not is_call:
                    raise ArityError(f"function {value!r} requires one argument "
                                     f"(byte offset {self._byte(tok[2])})")
                self.take()
                arg = self.expr()
                nxt = self.peek()
                if nxt[0] == "op" and nxt[1] == ",":
                    raise ArityError(f"function {value!r} takes exactly one argument "
                                     f"(byte offset {self._byte(nxt[2])})")
                self.expect(")")
                return Func(value, arg)
            if is_call:
                raise UnknownIdentifierError(f"unknown function {value!r}")
            if value == "pi":
                return Const(math.pi)
            if self.allowed is not None and value not in self.allowed:
                raise UnknownIdentifierError(f"unknown identifier {value!r}")
            return Var(value)
        if kind == "op" and value == "(":
            e = self.expr()
            self.expect(")")
            return e
        if kind == "end":
            self.fail("unexpected end of input", tok)
        self.fail(f"unexpected token {value!r}", tok)


def parse_expression(text: str, variables: Iterable[str] | None = None) -> Expression:
    """Parse ``text`` into an expression tree.

    If ``variables`` is given, any other identifier (besides ``pi`` and the
    function names) raises :class:`UnknownIdentifierError`.
    """
    allowed = None if variables is None else frozenset(variables)
    return _Parser(text, allowed).parse()


# --------------------------------------------------------------------------
# Printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _prec(e: Expression) -> int:
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return 3
    if isinstance(e, Pow):
        return 4
    return 5


def _fmt_number(v: float) -> str:
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def to_string(e: Expression) -> str:
    """Print ``e`` so that :func:`parse_expression` rebuilds the same tree."""
    if isinstance(e, Const):
        return _fmt_number(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Func):
        return f"{e.name}({to_string(e.arg)})"
    if isinstance(e, Pow):
        b = to_string(e.base)
        if _prec(e.base) < 5:
            b = f"({b})"
        return f"{b}^{_fmt_number(e.exponent)}"
    if isinstance(e, Neg):
        a = to_string(e.arg)
        if _prec(e.arg) < 3:
            a = f"({a})"
        return f"-{a}"
    p = _PREC[e.op]
    left = to_string(e.left)
    if _prec(e.left) < p:
        left = f"({left})"
    right = to_string(e.right)
    if _prec(e.right) <= p and not isinstance(e.right, Neg):
        right = f"({right})"
    if e.op in "+-":
        return f"{left} {e.op} {right}"
    return f"{left}{e.op}{right}"


# --------------------------------------------------------------------------
# Numeric helpers shared by evaluation and compiled code


def _pow(a: float, c: float) -> float:
    if a < 0 and not c.is_integer():
        raise DomainError(f"negative base {a!r} with non-integer exponent {c!r}")
    if a == 0 and c < 0:
        raise DomainError("zero raised to a negative power")
    return a ** c


def _ln(a: float) -> float:
    if a <= 0:
        raise DomainError(f"ln of non-positive value {a!r}")
    return math.log(a)


def _sqrt(a: float) -> float:
    if a < 0:
        raise DomainError(f"sqrt of negative value {a!r}")
    return math.sqrt(a)


def _div(a: float, b: float) -> float:
    if b == 0:
        raise DomainError("division by zero")
    return a / b


def _exp(a: float) -> float:
    try:
        return math.exp(a)
    except OverflowError:
        raise DomainError(f"exp overflow at {a!r}") from None


_FUNC_IMPL: dict[str, Callable[[float], float]] = {
    "sin": math.sin, "cos": math.cos, "tan": math.tan, "atan": math.atan,
    "exp": _exp, "ln": _ln, "sqrt": _sqrt, "abs": abs,
}


def evaluate(e: Expression, bindings: Mapping[str, float]) -> float:
    """Evaluate ``e`` in double precision with the given variable values."""
    memo: dict[int, float] = {}

    def ev(n: Expression) -> float:
        key = id(n)
        if key in memo:
            return memo[key]
        if isinstance(n, Const):
            r = n.value
        elif isinstance(n, Var):
            try:
                r = float(bindings[n.name])
            except KeyError:
                raise UnboundVariableError(f"variable {n.name!r} is not bound") from None
        elif isinstance(n, Neg):
            r = -ev(n.arg)
        elif isinstance(n, BinOp):
            a, b = ev(n.left), ev(n.right)
            if n.op == "+":
                r = a + b
            elif n.op == "-":
                r = a - b
            elif n.op == "*":
                r = a * b
            else:
                r = _div(a, b)
        elif isinstance(n, Pow):
            r = _pow(ev(n.base), n.exponent)
        else:
            r = _FUNC_IMPL[n.name](ev(n.arg))
        if isinstance(r, complex) or not math.isfinite(r):
            raise DomainError(f"non-finite value while evaluating {to_string(n)!r}")
        memo[key] = r
        return r

    try:
        return ev(e)
    except OverflowError as exc:
        raise DomainError(str(exc)) from None


def compile_expr(exprs: Expression | Sequence[Expression],
                 args: Sequence[str] = ("x", "y")) -> Callable[..., float | tuple]:
    """Compile one expression, or a tuple of them, into a Python function.

    The generated code is straight-line (one temporary per distinct node), so
    arbitrarily deep trees compile without hitting parser nesting limits.
    A single expression yields a function returning a float; a sequence
    yields one returning a tuple.
    """
    single = not isinstance(exprs, (list, tuple))
    roots = [exprs] if single else list(exprs)
    lines: list[str] = []
    names: dict[int, str] = {}
    consts: dict[str, float] = {}
    argset = set(args)

    def emit(n: Expression) -> str:
        # iterative post-order to avoid deep recursion
        stack = [(n, False)]
        while stack:
            node, done = stack.pop()
            if id(node) in names:
                continue
            if isinstance(node, Const):
                cname = f"c{len(consts)}"
                consts[cname] = node.value
                names[id(node)] = cname
                continue
            if isinstance(node, Var):
                if node.name not in argset:
                    raise UnboundVariableError(f"variable {node.name!r} is not an argument")
                names[id(node)] = node.name
                continue
            kids = _children(node)
            if not done:
                stack.append((node, True))
                for k in kids:
                    if id(k) not in names:
                        stack.append((k, False))
                continue
            t = f"t{len(lines)}"
            if isinstance(node, Neg):
                code = f"-{names[id(node.arg)]}"
            elif isinstance(node, BinOp):
                a, b = names[id(node.left)], names[id(node.right)]
                code = f"_div({a}, {b})" if node.op == "/" else f"{a} {node.op} {b}"
            elif isinstance(node, Pow):
                ex = node.exponent
                if ex == 2.0:
                    code = f"{names[id(node.base)]} * {names[id(node.base)]}"
                else:
                    code = f"_pow({names[id(node.base)]}, {ex!r})"
            else:
                code = f"_f_{node.name}({names[id(node.arg)]})"
            lines.append(f"    {t} = {code}")
            names[id(node)] = t
        return names[id(n)]

    outs = [emit(r) for r in roots]
    ret = outs[0] if single else "(" + ", ".join(outs) + ("," if len(outs) == 1 else "") + ")"
    src = f"def _compiled({', '.join(args)}):\n" + "\n".join(lines + [f"    return {ret}"]) + "\n"
    namespace: dict = {"_pow": _pow, "_div": _div, **consts}
    for fname, impl in _FUNC_IMPL.items():
        namespace[f"_f_{fname}"] = impl
    exec(compile(src, "<expr>", "exec"), namespace)
    inner = namespace["_compiled"]

    def fn(*values):
        try:
            return inner(*values)
        except (ValueError, OverflowError) as exc:
            raise DomainError(str(exc)) from None

    fn.source = src  # type: ignore[attr-defined]
    return fn


def _children(n: Expression) -> tuple:
    if isinstance(n, (Neg, Func)):
        return (n.arg,)
    if isinstance(n, BinOp):
        return (n.left, n.right)
    if isinstance(n, Pow):
        return (n.base,)
    return ()


def node_count(e: Expression) -> int:
    """Number of nodes of ``e`` counted as a tree (shared subtrees counted each time)."""
    sizes: dict[int, int] = {}
    stack = [(e, False)]
    while stack:
        n, done = stack.pop()
        if id(n) in sizes:
            continue
        kids = _children(n)
        if not done and kids:
            stack.append((n, True))
            stack.extend((k, False) for k in kids if id(k) not in sizes)
            continue
        sizes[id(n)] = 1 + sum(sizes[id(k)] for k in kids)
    return sizes[id(e)]


def variables(e: Expression) -> set[str]:
    out: set[str] = set()
    seen: set[int] = set()
    stack = [e]
    while stack:
        n = stack.pop()
        if id(n) in seen:
            continue
        seen.add(id(n))
        if isinstance(n, Var):
            out.add(n.name)
        stack.extend(_children(n))
    return out


# --------------------------------------------------------------------------
# Smart constructors: constant folding plus the x*0, x+0, x*1 identities only.


def _value(e: Expression) -> float | None:
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Neg) and isinstance(e.arg, Const):
        return -e.arg.value
    return None


def const(v: float) -> Expression:
    v = float(v)
    return Neg(Const(-v)) if v < 0 else Const(v)


def _fold(fn, *vals) -> Expression | None:
    try:
        r = fn(*vals)
    except (ArithmeticError, ValueError):
        return None
    if isinstance(r, complex) or not math.isfinite(r):
        return None
    return const(r)


def neg(a: Expression) -> Expression:
    va = _value(a)
    if va is not None:
        return const(-va)
    return Neg(a)


def add(a: Expression, b: Expression) -> Expression:
    va, vb = _value(a), _value(b)
    if va is not None and vb is not None:
        return const(va + vb)
    if va == 0:
        return b
    if vb == 0:
        return a
    return BinOp("+", a, b)


def sub(a: Expression, b: Expression) -> Expression:
    va, vb = _value(a), _value(b)
    if va is not None and vb is not None:
        return const(va - vb)
    if vb == 0:
        return a
    if va == 0:
        return neg(b)
    return BinOp("-", a, b)


def mul(a: Expression, b: Expression) -> Expression:
    va, vb = _value(a), _value(b)
    if va is not None and vb is not None:
        return const(va * vb)
    if va == 0 or vb == 0:
        return ZERO
    if va == 1:
        return b
    if vb == 1:
        return a
    return BinOp("*", a, b)


def div(a: Expression, b: Expression) -> Expression:
    va, vb = _value(a), _value(b)
    if va is not None and vb is not None and vb != 0:
        return const(va / vb)
    if va == 0 and vb != 0:
        return ZERO
    if vb == 1:
        return a
    return BinOp("/", a, b)


def power(a: Expression, c: float) -> Expression:
    c = float(c)
    if c == 0:
        return ONE
    if c == 1:
        return a
    va = _value(a)
    if va is not None:
        folded = _fold(_pow, va, c)
        if folded is not None:
            return folded
    return Pow(a, c)


def func(name: str, a: Expression) -> Expression:
    va = _value(a)
    if va is not None:
        folded = _fold(_FUNC_IMPL[name], va)
        if folded is not None:
            return folded
    return Func(name, a)


# --------------------------------------------------------------------------
# Differentiation


def differentiate(e: Expression, var: str, max_nodes: int = MAX_NODES) -> Expression:
    """Exact derivative of ``e`` with respect to ``var``.

    ``abs(u)`` differentiates to ``u/abs(u) * u'``, which raises a domain
    error when evaluated where ``u = 0``. Raises
    :class:`ExpressionTooLarge` if the result exceeds ``max_nodes`` nodes.
    """
    memo: dict[int, Expression] = {}

    def d(n: Expression) -> Expression:
        key = id(n)
        if key in memo:
            return memo[key]
        if isinstance(n, Const):
            r = ZERO
        elif isinstance(n, Var):
            r = ONE if n.name == var else ZERO
        elif isinstance(n, Neg):
            r = neg(d(n.arg))
        elif isinstance(n, BinOp):
            da, db = d(n.left), d(n.right)
            if n.op == "+":
                r = add(da, db)
            elif n.op == "-":
                r = sub(da, db)
            elif n.op == "*":
                r = add(mul(da, n.right), mul(n.left, db))
            else:
                r = div(sub(mul(da, n.right), mul(n.left, db)), power(n.right, 2))
        elif isinstance(n, Pow):
            r = mul(mul(const(n.exponent), power(n.base, n.exponent - 1)), d(n.base))
        else:
            u = n.arg
            du = d(u)
            if _value(du) == 0:
                r = ZERO
            elif n.name == "sin":
                r = mul(func("cos", u), du)
            elif n.name == "cos":
                r = mul(neg(func("sin", u)), du)
            elif n.name == "tan":
                r = div(du, power(func("cos", u), 2))
            elif n.name == "atan":
                r = div(du, add(ONE, power(u, 2)))
            elif n.name == "exp":
                r = mul(n, du)
            elif n.name == "ln":
                r = div(du, u)
            elif n.name == "sqrt":
                r = div(du, mul(Const(2.0), n))
            else:  # abs
                r = mul(div(u, n), du)
        memo[key] = r
        return r

    result = d(e)
    if node_count(result) > max_nodes:
        raise ExpressionTooLarge(f"derivative exceeds {max_nodes} nodes")
    return result


def taylor_coefficients(e: Expression, var: str, point: float, max_order: int,
                        bindings: Mapping[str, float] | None = None) -> list[float]:
    """Coefficients ``a_k = f^(k)(point)/k!`` for ``k = 0..max_order``.

    Derivatives are formed symbolically and then evaluated; other variables
    of ``e`` must be supplied in ``bindings``.
    """
    if max_order < 1:
        raise ValueError("max_order must be >= 1")
    env = dict(bindings or {})
    env[var] = point
    out = []
    cur = e
    for k in range(max_order + 1):
        if k:
            cur = differentiate(cur, var)
        out.append(evaluate(cur, env) / math.factorial(k))
    return out


def substitute(e: Expression, mapping: Mapping[str, Expression]) -> Expression:
    """Replace variables by expressions (no simplification of the result)."""
    memo: dict[int, Expression] = {}

    def s(n: Expression) -> Expression:
        key = id(n)
        if key in memo:
            return memo[key]
        if isinstance(n, Const):
            r = n
        elif isinstance(n, Var):
            r = mapping.get(n.name, n)
        elif isinstance(n, Neg):
            r = Neg(s(n.arg))
        elif isinstance(n, BinOp):
            r = BinOp(n.op, s(n.left), s(n.right))
        elif isinstance(n, Pow):
            r = Pow(s(n.base), n.exponent)
        else:
            r = Func(n.name, s(n.arg))
        memo[key] = r
        return r

    return s(e)


# --------------------------------------------------------------------------
# Truncated power series (jets)


def _s_mul(a: list[float], b: list[float]) -> list[float]:
    n = len(a)
    return [math.fsum(a[j] * b[k - j] for j in range(k + 1)) for k in range(n)]


def _s_div(a: list[float], b: list[float]) -> list[float]:
    if b[0] == 0:
        raise DomainError("series division by a series with zero constant term")
    out: list[float] = []
    for k in range(len(a)):
        acc = a[k] - math.fsum(out[j] * b[k - j] for j in range(k))
        out.append(acc / b[0])
    return out


def _s_pow(a: list[float], c: float) -> list[float]:
    n = len(a)
    if c.is_integer() and c >= 0:
        result = [1.0] + [0.0] * (n - 1)
        base, m = a, int(c)
        while m:
            if m & 1:
                result = _s_mul(result, base)
            m >>= 1
            if m:
                base = _s_mul(base, base)
        return result
    if a[0] == 0:
        raise DomainError("series power with zero base and non-natural exponent")
    if c.is_integer():
        return _s_div([1.0] + [0.0] * (n - 1), _s_pow(a, -c))
    b = [_pow(a[0], c)]
    for k in range(1, n):
        acc = math.fsum((c * j - (k - j)) * a[j] * b[k - j] for j in range(1, k + 1))
        b.append(acc / (k * a[0]))
    return b


def _s_exp(a: list[float]) -> list[float]:
    b = [_exp(a[0])]
    for k in range(1, len(a)):
        b.append(math.fsum(j * a[j] * b[k - j] for j in range(1, k + 1)) / k)
    return b


def _s_ln(a: list[float]) -> list[float]:
    b = [_ln(a[0])]
    for k in range(1, len(a)):
        acc = a[k] - math.fsum(j * b[j] * a[k - j] for j in range(1, k)) / k
        b.append(acc / a[0])
    return b


def _s_sincos(a: list[float]) -> tuple[list[float], list[float]]:
    s, c = [math.sin(a[0])], [math.cos(a[0])]
    for k in range(1, len(a)):
        s.append(math.fsum(j * a[j] * c[k - j] for j in range(1, k + 1)) / k)
        c.append(-math.fsum(j * a[j] * s[k - j] for j in range(1, k + 1)) / k)
    return s, c


def _s_atan(a: list[float]) -> list[float]:
    n = len(a)
    da = [(k + 1) * a[k + 1] for k in range(n - 1)]
    if not da:
        return [math.atan(a[0])]
    denom = _s_mul(a, a)[: n - 1]
    denom[0] += 1.0
    q = _s_div(da, denom)
    return [math.atan(a[0])] + [q[k] / (k + 1) for k in range(n - 1)]


def series_evaluate(e: Expression, bindings: Mapping[str, Sequence[float]], order: int) -> list[float]:
    """Evaluate ``e`` on truncated power series in one formal parameter.

    ``bindings`` maps each variable to its coefficient list; the result has
    ``order + 1`` coefficients.
    """
    n = order + 1
    env = {k: (list(v) + [0.0] * n)[:n] for k, v in bindings.items()}
    memo: dict[int, list[float]] = {}

    def ev(node: Expression) -> list[float]:
        key = id(node)
        if key in memo:
            return memo[key]
        if isinstance(node, Const):
            r = [node.value] + [0.0] * (n - 1)
        elif isinstance(node, Var):
            try:
                r = env[node.name]
            except KeyError:
                raise UnboundVariableError(f"variable {node.name!r} is not bound") from None
        elif isinstance(node, Neg):
            r = [-v for v in ev(node.arg)]
        elif isinstance(node, BinOp):
            a, b = ev(node.left), ev(node.right)
            if node.op == "+":
                r = [x + y for x, y in zip(a, b)]
            elif node.op == "-":
                r = [x - y for x, y in zip(a, b)]
            elif node.op == "*":
                r = _s_mul(a, b)
            else:
                r = _s_div(a, b)
        elif isinstance(node, Pow):
            r = _s_pow(ev(node.base), node.exponent)
        else:
            a = ev(node.arg)
            name = node.name
            if name == "exp":
                r = _s_exp(a)
            elif name == "ln":
                r = _s_ln(a)
            elif name == "sqrt":
                r = _s_pow(a, 0.5)
            elif name in ("sin", "cos"):
                s, c = _s_sincos(a)
                r = s if name == "sin" else c
            elif name == "tan":
                s, c = _s_sincos(a)
                r = _s_div(s, c)
            elif name == "atan":
                r = _s_atan(a)
            else:
                if a[0] == 0:
                    raise DomainError("abs is not smooth at zero")
                r = a if a[0] > 0 else [-v for v in a]
        memo[key] = r
        return r

    return list(ev(e))
