"""
Expressions
Scalar fields over (x, y, z) written as text: sources, boundary data and
exact solutions. A small recursive-descent parser builds an immutable AST
that evaluates on numpy arrays, prints back to parseable text and
differentiates symbolically (used to derive manufactured sources).

Precedence, loosest first: + -, * /, unary -, ^ (right associative).
"""
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple, Union
import logging
import math
import re

import numpy as np

from .errors import ExpressionSyntaxError

logger = logging.getLogger(__name__)

VARIABLES = ("x", "y", "z")
CONSTANTS: Dict[str, float] = {"pi": math.pi, "e": math.e}
FUNCTIONS: Dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "sqrt": np.sqrt,
    "log": np.log,
}

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
""", re.VERBOSE)


class Expression:
    """Base node"""

    def evaluate(self, x, y, z) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, points: np.ndarray) -> np.ndarray:
        """Vectorised evaluation at an (N, 3) array of points"""
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        with np.errstate(all='ignore'):
            out = self.evaluate(points[:, 0], points[:, 1], points[:, 2])
        return np.broadcast_to(np.asarray(out, dtype=np.float64), (points.shape[0],)).copy()

    def at(self, x: float, y: float = 0.0, z: float = 0.0) -> float:
        return float(self(np.array([[x, y, z]]))[0])

    def to_string(self) -> str:
        raise NotImplementedError

    def __str__(self) -> str:
        return self.to_string()

    def derivative(self, var: str) -> "Expression":
        raise NotImplementedError

    def laplacian(self) -> "Expression":
        terms = [self.derivative(v).derivative(v) for v in VARIABLES]
        return _add(_add(terms[0], terms[1]), terms[2])

    def is_constant(self) -> bool:
        return False


@dataclass(frozen=True)
class Number(Expression):
    value: float

    def evaluate(self, x, y, z):
        return np.full(np.shape(x), self.value, dtype=np.float64)

    def to_string(self) -> str:
        if self.value < 0:
            return f"(-{abs(self.value)!r})"
        return repr(float(self.value))

    def derivative(self, var):
        return ZERO

    def is_constant(self):
        return True


@dataclass(frozen=True)
class Constant(Expression):
    name: str

    def evaluate(self, x, y, z):
        return np.full(np.shape(x), CONSTANTS[self.name], dtype=np.float64)

    def to_string(self) -> str:
        return self.name

    def derivative(self, var):
        return ZERO

    def is_constant(self):
        return True


@dataclass(frozen=True)
class Variable(Expression):
    name: str

    def evaluate(self, x, y, z):
        return np.asarray({"x": x, "y": y, "z": z}[self.name], dtype=np.float64)

    def to_string(self) -> str:
        return self.name

    def derivative(self, var):
        return ONE if var == self.name else ZERO


@dataclass(frozen=True)
class Negate(Expression):
    operand: Expression

    def evaluate(self, x, y, z):
        return -self.operand.evaluate(x, y, z)

    def to_string(self) -> str:
        return f"(-{self.operand.to_string()})"

    def derivative(self, var):
        return _neg(self.operand.derivative(var))

    def is_constant(self):
        return self.operand.is_constant()


@dataclass(frozen=True)
class Binary(Expression):
    op: str
    left: Expression
    right: Expression

    def evaluate(self, x, y, z):
        a = self.left.evaluate(x, y, z)
        b = self.right.evaluate(x, y, z)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return a * b
        if self.op == "/":
            return a / b
        return np.power(a, b)

    def to_string(self) -> str:
        return f"({self.left.to_string()} {self.op} {self.right.to_string()})"

    def derivative(self, var):
        u, v = self.left, self.right
        du, dv = u.derivative(var), v.derivative(var)
        if self.op == "+":
            return _add(du, dv)
        if self.op == "-":
            return _sub(du, dv)
        if self.op == "*":
            return _add(_mul(du, v), _mul(u, dv))
        if self.op == "/":
            return _div(_sub(_mul(du, v), _mul(u, dv)), _pow(v, Number(2.0)))
        if v.is_constant():
            return _mul(_mul(v, _pow(u, _sub(v, ONE))), du)
        # u^v = exp(v log u)
        return _mul(self, _add(_mul(dv, Call("log", u)), _div(_mul(v, du), u)))

    def is_constant(self):
        return self.left.is_constant() and self.right.is_constant()


@dataclass(frozen=True)
class Call(Expression):
    func: str
    arg: Expression

    def evaluate(self, x, y, z):
        return FUNCTIONS[self.func](self.arg.evaluate(x, y, z))

    def to_string(self) -> str:
        return f"{self.func}({self.arg.to_string()})"

    def derivative(self, var):
        u = self.arg
        du = u.derivative(var)
        if self.func == "sin":
            outer = Call("cos", u)
        elif self.func == "cos":
            outer = _neg(Call("sin", u))
        elif self.func == "exp":
            outer = self
        elif self.func == "sqrt":
            outer = _div(ONE, _mul(Number(2.0), self))
        else:
            outer = _div(ONE, u)
        return _mul(outer, du)

    def is_constant(self):
        return self.arg.is_constant()


ZERO = Number(0.0)
ONE = Number(1.0)


def _is(e: Expression, value: float) -> bool:
    return isinstance(e, Number) and e.value == value


def _add(a, b):
    if _is(a, 0.0):
        return b
    if _is(b, 0.0):
        return a
    if isinstance(a, Number) and isinstance(b, Number):
        return Number(a.value + b.value)
    return Binary("+", a, b)


def _sub(a, b):
    if _is(b, 0.0):
        return a
    if _is(a, 0.0):
        return _neg(b)
    if isinstance(a, Number) and isinstance(b, Number):
        return Number(a.value - b.value)
    return Binary("-", a, b)


def _mul(a, b):
    if _is(a, 0.0) or _is(b, 0.0):
        return ZERO
    if _is(a, 1.0):
        return b
    if _is(b, 1.0):
        return a
    if isinstance(a, Number) and isinstance(b, Number):
        return Number(a.value * b.value)
    return Binary("*", a, b)


def _div(a, b):
    if _is(a, 0.0):
        return ZERO
    if _is(b, 1.0):
        return a
    return Binary("/", a, b)


def _pow(a, b):
    if _is(b, 1.0):
        return a
    if _is(b, 0.0):
        return ONE
    return Binary("^", a, b)


def _neg(a):
    if isinstance(a, Number):
        return Number(-a.value)
    if isinstance(a, Negate):
        return a.operand
    return Negate(a)


class _Parser:
    def __init__(self, src: str):
        self.src = src
        self.tokens: List[Tuple[str, str, int]] = []
        pos = 0
        while pos < len(src):
            m = _TOKEN.match(src, pos)
            if m is None:
                raise ExpressionSyntaxError(f"unexpected character {src[pos]!r}", _byte_offset(src, pos),
                                            ["number", "name", "operator"])
            kind = m.lastgroup
            if kind != "ws":
                self.tokens.append((kind, m.group(), pos))
            pos = m.end()
        self.i = 0

    def peek(self) -> Optional[Tuple[str, str, int]]:
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def offset(self) -> int:
        tok = self.peek()
        return _byte_offset(self.src, tok[2] if tok else len(self.src))

    def accept(self, text: str) -> bool:
        tok = self.peek()
        if tok and tok[0] == "op" and tok[1] == text:
            self.i += 1
            return True
        return False

    def expect(self, text: str):
        if not self.accept(text):
            found = self.peek()[1] if self.peek() else "end of input"
            raise ExpressionSyntaxError(f"found {found!r}", self.offset(), [text])

    def parse(self) -> Expression:
        if not self.tokens:
            raise ExpressionSyntaxError("empty expression", 0, _PRIMARY_START)
        e = self.expr()
        if self.peek() is not None:
            raise ExpressionSyntaxError(f"unexpected {self.peek()[1]!r}", self.offset(),
                                        ["+", "-", "*", "/", "^", "end of input"])
        return e

    def expr(self) -> Expression:
        e = self.term()
        while True:
            if self.accept("+"):
                e = Binary("+", e, self.term())
            elif self.accept("-"):
                e = Binary("-", e, self.term())
            else:
                return e

    def term(self) -> Expression:
        e = self.unary()
        while True:
            if self.accept("*"):
                e = Binary("*", e, self.unary())
            elif self.accept("/"):
                e = Binary("/", e, self.unary())
            else:
                return e

    def unary(self) -> Expression:
        if self.accept("-"):
            return Negate(self.unary())
        return self.power()

    def power(self) -> Expression:
        base = self.primary()
        if self.accept("^"):
            return Binary("^", base, self.unary())
        return base

    def primary(self) -> Expression:
        tok = self.peek()
        if tok is None:
            raise ExpressionSyntaxError("unexpected end of input", self.offset(), _PRIMARY_START)
        kind, text, _ = tok
        if kind == "number":
            self.i += 1
            return Number(float(text))
        if kind == "name":
            offset = self.offset()
            self.i += 1
            if text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(text, arg)
            if text in CONSTANTS:
                return Constant(text)
            if text in VARIABLES:
                return Variable(text)
            raise ExpressionSyntaxError(f"unknown name {text!r}", offset,
                                        list(VARIABLES) + list(CONSTANTS) + list(FUNCTIONS))
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        raise ExpressionSyntaxError(f"unexpected {text!r}", self.offset(), _PRIMARY_START)


_PRIMARY_START = ["number", "(", "-"] + list(VARIABLES) + list(CONSTANTS) + list(FUNCTIONS)


def _byte_offset(src: str, char_index: int) -> int:
    return len(src[:char_index].encode("utf-8"))


def parse(src: str) -> Expression:
    """Parse text into an Expression; raises ExpressionSyntaxError with a byte offset"""
    if not isinstance(src, str):
        raise ExpressionSyntaxError(f"expression must be a string, got {type(src).__name__}", 0)
    return _Parser(src).parse()


def as_field(value: Union[str, float, int, Expression]) -> Expression:
    """Accept text, numbers or ready expressions"""
    if isinstance(value, Expression):
        return value
    if isinstance(value, (int, float)):
        return Number(float(value))
    return parse(value)
