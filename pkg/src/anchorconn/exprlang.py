"""Arithmetic expression language for chart-level geometric data.

All scalar inputs to the toolkit (anchor entries, connection coefficients,
section components, curve components, forces) are expressions over a fixed
family of chart variables:

    x1, x2, ...   base coordinates
    y0, y1, ...   fibre coordinates (y0 only on the extended bundle)
    v1, v2, ...   coordinates on the anchored vector bundle
    t             curve parameter

The grammar supports ``+ - * / ^`` (with ``^`` binding tightest and
right-associative, unary minus binding looser than ``^``), parentheses, and
the functions ``sin``, ``cos``, ``exp``, ``log``, ``sqrt``.

Expressions are immutable trees; :func:`evaluate` and :func:`diff` are pure
functions, so expressions may be shared freely across threads.  ``^`` with a
non-integer-literal exponent is defined through ``exp``/``log`` and therefore
requires a positive base; anything else raises :class:`DomainError` instead
of producing a NaN.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterator, Mapping, Union

__all__ = [
    "Expr",
    "Env",
    "Num",
    "Var",
    "Neg",
    "BinOp",
    "Call",
    "ExprError",
    "ExprSyntaxError",
    "UnknownFunctionError",
    "EvalError",
    "UnboundVariableError",
    "DomainError",
    "parse",
    "evaluate",
    "diff",
    "subst",
    "to_source",
    "variables",
    "is_variable_name",
    "x_names",
    "y_names",
    "v_names",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "power",
    "num",
]


class ExprError(Exception):
    """Base class for every error raised by this module."""


class ExprSyntaxError(ExprError):
    """Malformed source text; ``offset`` is the byte offset of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte {offset})")
        self.offset = offset


class UnknownFunctionError(ExprSyntaxError):
    """An identifier that is not a known function was applied to arguments."""


class EvalError(ExprError):
    """Base class for evaluation-time errors."""


class UnboundVariableError(EvalError):
    """A variable of the expression is missing from the environment."""


class DomainError(EvalError):
    """log/sqrt of a non-positive value, division by zero, bad power."""


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * / ^
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    func: str  # one of sin cos exp log sqrt
    arg: "Expr"


Expr = Union[Num, Var, Neg, BinOp, Call]

#: Environments map variable names to real values.  Evaluation raises
#: :class:`UnboundVariableError` on a missing variable; it never defaults.
Env = Mapping[str, float]

FUNCTION_NAMES = ("sin", "cos", "exp", "log", "sqrt")

_VAR_RE = re.compile(r"(?:[xyv]\d+|t)\Z")

_TOKEN_RE = re.compile(
    r"""
      (?P<num>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)
    | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
    | (?P<op>[-+*/^()])
    | (?P<ws>\s+)
    """,
    re.VERBOSE,
)


def is_variable_name(name: str) -> bool:
    """True for the legal variable names: x<i>, y<i>, v<i>, t."""
    return bool(_VAR_RE.match(name))


def x_names(n: int) -> tuple[str, ...]:
    return tuple(f"x{i}" for i in range(1, n + 1))


def y_names(m: int) -> tuple[str, ...]:
    return tuple(f"y{i}" for i in range(1, m + 1))


def v_names(k: int) -> tuple[str, ...]:
    return tuple(f"v{i}" for i in range(1, k + 1))


# ---------------------------------------------------------------------------
# tokenizer / parser
# ---------------------------------------------------------------------------


def _byte_offset(src: str, pos: int) -> int:
    return len(src[:pos].encode("utf-8"))


def _tokenize(src: str) -> Iterator[tuple[str, str, int]]:
    pos = 0
    while pos < len(src):
        match = _TOKEN_RE.match(src, pos)
        if match is None:
            raise ExprSyntaxError(
                f"unexpected character {src[pos]!r}", _byte_offset(src, pos)
            )
        kind = match.lastgroup or ""
        if kind != "ws":
            yield kind, match.group(), pos
        pos = match.end()
    yield "end", "", pos


class _Parser:
    def __init__(self, src: str):
        self.src = src
        self.tokens = list(_tokenize(src))
        self.index = 0

    def _peek(self) -> tuple[str, str, int]:
        return self.tokens[self.index]

    def _advance(self) -> tuple[str, str, int]:
        token = self.tokens[self.index]
        self.index += 1
        return token

    def _error(self, message: str, pos: int) -> ExprSyntaxError:
        return ExprSyntaxError(message, _byte_offset(self.src, pos))

    def parse(self) -> Expr:
        expr = self._expr()
        kind, text, pos = self._peek()
        if kind != "end":
            raise self._error(f"unexpected trailing input {text!r}", pos)
        return expr

    def _expr(self) -> Expr:
        left = self._term()
        while True:
            kind, text, _ = self._peek()
            if kind == "op" and text in "+-":
                self._advance()
                left = BinOp(text, left, self._term())
            else:
                return left

    def _term(self) -> Expr:
        left = self._unary()
        while True:
            kind, text, _ = self._peek()
            if kind == "op" and text in "*/":
                self._advance()
                left = BinOp(text, left, self._unary())
            else:
                return left

    def _unary(self) -> Expr:
        kind, text, _ = self._peek()
        if kind == "op" and text == "-":
            self._advance()
            return Neg(self._unary())
        return self._power()

    def _power(self) -> Expr:
        base = self._atom()
        kind, text, _ = self._peek()
        if kind == "op" and text == "^":
            self._advance()
            # right operand at unary level: "a^-b" and "a^b^c" both work
            return BinOp("^", base, self._unary())
        return base

    def _atom(self) -> Expr:
        kind, text, pos = self._advance()
        if kind == "num":
            return Num(float(text))
        if kind == "name":
            next_kind, next_text, _ = self._peek()
            if next_kind == "op" and next_text == "(":
                if text not in FUNCTION_NAMES:
                    raise UnknownFunctionError(
                        f"unknown function {text!r}", _byte_offset(self.src, pos)
                    )
                self._advance()
                arg = self._expr()
                close_kind, close_text, close_pos = self._advance()
                if close_kind != "op" or close_text != ")":
                    raise self._error("expected ')'", close_pos)
                return Call(text, arg)
            if is_variable_name(text):
                return Var(text)
            raise self._error(f"unknown variable {text!r}", pos)
        if kind == "op" and text == "(":
            expr = self._expr()
            close_kind, close_text, close_pos = self._advance()
            if close_kind != "op" or close_text != ")":
                raise self._error("expected ')'", close_pos)
            return expr
        raise self._error(
            f"expected a number, variable, function or '(', found {text or 'end of input'!r}",
            pos,
        )


def parse(src: str) -> Expr:
    """Parse source text into an expression tree.

    Raises :class:`ExprSyntaxError` (with a byte offset) on malformed input
    and :class:`UnknownFunctionError` when an unknown identifier is applied
    as a function.
    """
    return _Parser(src).parse()


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


def _int_literal(expr: Expr) -> int | None:
    """The exponent as a literal integer, if it is written as one."""
    if isinstance(expr, Num):
        v = expr.value
        if math.isfinite(v) and v == int(v) and abs(v) <= 2**31:
            return int(v)
        return None
    if isinstance(expr, Neg):
        inner = _int_literal(expr.operand)
        return -inner if inner is not None else None
    return None


def evaluate(expr: Expr, env: Env) -> float:
    """IEEE double value of ``expr`` under ``env``; deterministic."""
    if isinstance(expr, Num):
        return expr.value
    if isinstance(expr, Var):
        try:
            return float(env[expr.name])
        except KeyError:
            raise UnboundVariableError(f"unbound variable {expr.name!r}") from None
    if isinstance(expr, Neg):
        return -evaluate(expr.operand, env)
    if isinstance(expr, BinOp):
        op = expr.op
        if op == "+":
            return evaluate(expr.left, env) + evaluate(expr.right, env)
        if op == "-":
            return evaluate(expr.left, env) - evaluate(expr.right, env)
        if op == "*":
            return evaluate(expr.left, env) * evaluate(expr.right, env)
        if op == "/":
            denominator = evaluate(expr.right, env)
            if denominator == 0.0:
                raise DomainError("division by zero")
            return evaluate(expr.left, env) / denominator
        if op == "^":
            return _power_value(expr, env)
        raise ValueError(f"bad operator {op!r}")
    if isinstance(expr, Call):
        u = evaluate(expr.arg, env)
        func = expr.func
        if func == "sin":
            return math.sin(u)
        if func == "cos":
            return math.cos(u)
        if func == "exp":
            try:
                return math.exp(u)
            except OverflowError:
                raise DomainError(f"overflow in exp({u})") from None
        if func == "log":
            if u <= 0.0:
                raise DomainError(f"log of non-positive value {u}")
            return math.log(u)
        if func == "sqrt":
            if u < 0.0:
                raise DomainError(f"sqrt of negative value {u}")
            return math.sqrt(u)
        raise ValueError(f"bad function {func!r}")
    raise TypeError(f"not an expression: {expr!r}")


def _power_value(expr: BinOp, env: Env) -> float:
    n = _int_literal(expr.right)
    base = evaluate(expr.left, env)
    if n is not None:
        if base == 0.0 and n < 0:
            raise DomainError("zero base with negative integer exponent")
        try:
            return float(base**n)
        except OverflowError:
            raise DomainError(f"overflow in {base}^{n}") from None
    exponent = evaluate(expr.right, env)
    if base <= 0.0:
        raise DomainError(
            f"power with non-positive base {base} and non-integer-literal exponent"
        )
    try:
        return math.exp(exponent * math.log(base))
    except OverflowError:
        raise DomainError(f"overflow in {base}^{exponent}") from None


# ---------------------------------------------------------------------------
# construction helpers with light constant folding
# ---------------------------------------------------------------------------
# Folding is limited to the identities 0*e, e*0, e+0, 0+e, e-0, 0-e, 1*e,
# e*1, e/1, e^0, e^1, -(literal), and literal-on-literal arithmetic (the
# same float operation evaluation would perform); enough to bound the growth
# of derivative trees without turning this into a CAS.


def num(value: float) -> Num:
    return Num(float(value))


def _is_zero(expr: Expr) -> bool:
    return isinstance(expr, Num) and expr.value == 0.0


def _is_one(expr: Expr) -> bool:
    return isinstance(expr, Num) and expr.value == 1.0


def _both_nums(a: Expr, b: Expr) -> bool:
    return isinstance(a, Num) and isinstance(b, Num)


def add(a: Expr, b: Expr) -> Expr:
    if _is_zero(a):
        return b
    if _is_zero(b):
        return a
    if _both_nums(a, b):
        return Num(a.value + b.value)
    return BinOp("+", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if _is_zero(b):
        return a
    if _is_zero(a):
        return neg(b)
    if _both_nums(a, b):
        return Num(a.value - b.value)
    return BinOp("-", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if _is_zero(a) or _is_zero(b):
        return Num(0.0)
    if _is_one(a):
        return b
    if _is_one(b):
        return a
    if _both_nums(a, b):
        return Num(a.value * b.value)
    return BinOp("*", a, b)


def div(a: Expr, b: Expr) -> Expr:
    if _is_one(b):
        return a
    if _both_nums(a, b) and b.value != 0.0:
        return Num(a.value / b.value)
    return BinOp("/", a, b)


def neg(a: Expr) -> Expr:
    if isinstance(a, Num):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.operand
    return Neg(a)


def power(a: Expr, b: Expr) -> Expr:
    if isinstance(b, Num):
        if b.value == 1.0:
            return a
        if b.value == 0.0:
            return Num(1.0)
        n = _int_literal(b)
        if isinstance(a, Num) and n is not None and n >= 0:
            return Num(float(a.value**n))
    return BinOp("^", a, b)


# ---------------------------------------------------------------------------
# differentiation
# ---------------------------------------------------------------------------


def diff(expr: Expr, var: str) -> Expr:
    """Exact symbolic partial derivative of ``expr`` with respect to ``var``.

    The result is an expression again (closure under differentiation); it is
    unsimplified apart from the light constant folding above.
    """
    if not is_variable_name(var):
        raise ValueError(f"not a legal variable name: {var!r}")
    return _diff(expr, var)


def _diff(expr: Expr, var: str) -> Expr:
    if isinstance(expr, Num):
        return Num(0.0)
    if isinstance(expr, Var):
        return Num(1.0 if expr.name == var else 0.0)
    if isinstance(expr, Neg):
        return neg(_diff(expr.operand, var))
    if isinstance(expr, BinOp):
        a, b = expr.left, expr.right
        da = _diff(a, var)
        if expr.op == "+":
            return add(da, _diff(b, var))
        if expr.op == "-":
            return sub(da, _diff(b, var))
        if expr.op == "*":
            return add(mul(da, b), mul(a, _diff(b, var)))
        if expr.op == "/":
            return div(sub(mul(da, b), mul(a, _diff(b, var))), power(b, Num(2.0)))
        if expr.op == "^":
            n = _int_literal(b)
            if n is not None:
                return mul(mul(Num(float(n)), power(a, Num(float(n - 1)))), da)
            # general case: a^b * (b' log a + b a'/a); base > 0 required anyway
            return mul(
                power(a, b),
                add(mul(_diff(b, var), Call("log", a)), div(mul(b, da), a)),
            )
        raise ValueError(f"bad operator {expr.op!r}")
    if isinstance(expr, Call):
        u = expr.arg
        du = _diff(u, var)
        if expr.func == "sin":
            return mul(Call("cos", u), du)
        if expr.func == "cos":
            return neg(mul(Call("sin", u), du))
        if expr.func == "exp":
            return mul(Call("exp", u), du)
        if expr.func == "log":
            return div(du, u)
        if expr.func == "sqrt":
            return div(du, mul(Num(2.0), Call("sqrt", u)))
        raise ValueError(f"bad function {expr.func!r}")
    raise TypeError(f"not an expression: {expr!r}")


# ---------------------------------------------------------------------------
# substitution, variable collection, printing
# ---------------------------------------------------------------------------

_BIN_CONSTRUCTORS = {"+": add, "-": sub, "*": mul, "/": div, "^": power}


def subst(expr: Expr, bindings: Mapping[str, Expr | float]) -> Expr:
    """Replace variables by expressions or numbers, folding constants."""
    if isinstance(expr, Num):
        return expr
    if isinstance(expr, Var):
        if expr.name in bindings:
            replacement = bindings[expr.name]
            if isinstance(replacement, (int, float)):
                return Num(float(replacement))
            return replacement
        return expr
    if isinstance(expr, Neg):
        return neg(subst(expr.operand, bindings))
    if isinstance(expr, BinOp):
        return _BIN_CONSTRUCTORS[expr.op](
            subst(expr.left, bindings), subst(expr.right, bindings)
        )
    if isinstance(expr, Call):
        return Call(expr.func, subst(expr.arg, bindings))
    raise TypeError(f"not an expression: {expr!r}")


def variables(expr: Expr) -> frozenset[str]:
    """The set of variable names occurring in the expression."""
    out: set[str] = set()
    stack = [expr]
    while stack:
        node = stack.pop()
        if isinstance(node, Var):
            out.add(node.name)
        elif isinstance(node, Neg):
            stack.append(node.operand)
        elif isinstance(node, BinOp):
            stack.append(node.left)
            stack.append(node.right)
        elif isinstance(node, Call):
            stack.append(node.arg)
    return frozenset(out)


_PREC_ADD, _PREC_MUL, _PREC_UNARY, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4, 5


def _format_number(v: float) -> str:
    if math.isfinite(v) and v == int(v) and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


def _render(expr: Expr) -> tuple[str, int]:
    if isinstance(expr, Num):
        prec = _PREC_UNARY if expr.value < 0 else _PREC_ATOM
        return _format_number(expr.value), prec
    if isinstance(expr, Var):
        return expr.name, _PREC_ATOM
    if isinstance(expr, Call):
        return f"{expr.func}({to_source(expr.arg)})", _PREC_ATOM
    if isinstance(expr, Neg):
        return f"-{_wrap(expr.operand, _PREC_UNARY)}", _PREC_UNARY
    if isinstance(expr, BinOp):
        if expr.op in "+-":
            left = _wrap(expr.left, _PREC_ADD)
            right = _wrap(expr.right, _PREC_ADD + 1)
            return f"{left} {expr.op} {right}", _PREC_ADD
        if expr.op in "*/":
            left = _wrap(expr.left, _PREC_MUL)
            right = _wrap(expr.right, _PREC_MUL + 1)
            return f"{left}{expr.op}{right}", _PREC_MUL
        # '^': left operand must be an atom, right operand a unary expression
        left = _wrap(expr.left, _PREC_POW + 1)
        right = _wrap(expr.right, _PREC_UNARY)
        return f"{left}^{right}", _PREC_POW
    raise TypeError(f"not an expression: {expr!r}")


def _wrap(expr: Expr, min_prec: int) -> str:
    text, prec = _render(expr)
    return f"({text})" if prec < min_prec else text


def to_source(expr: Expr) -> str:
    """Render the tree as source text; reparsing gives a structurally equal tree."""
    return _render(expr)[0]
