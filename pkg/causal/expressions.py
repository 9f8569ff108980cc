"""
Closed expression language for structural equations.

Grammar:
    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | atom
    atom   := NUMBER | NAME | NAME '(' expr ')' | '(' expr ')'

NAME is a parent node or `U`, the node's own noise. Functions: floor,
sigmoid, bernoulli. `bernoulli(p)` evaluates to 1[U < p] and so needs the
node's noise to be uniform on [0, 1].

Nothing is ever passed to eval(); expressions are parsed into nested tuples
and evaluated over numpy arrays.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

NOISE_NAME = "U"
FUNCTIONS = ("floor", "sigmoid", "bernoulli")

_TOKEN = re.compile(r"\s*(?:(\d+\.\d*|\.\d+|\d+)(?:[eE][-+]?\d+)?|([A-Za-z_][A-Za-z0-9_]*)|(.))")


class ExpressionError(ValueError):
    """Raised for malformed expressions or unknown names."""


def _tokenize(text):
    tokens = []
    pos = 0
    text = text.strip()
    while pos < len(text):
        match = _TOKEN.match(text, pos)
        if not match or match.end() == pos:
            raise ExpressionError(f"Cannot tokenize '{text}' at position {pos}")
        number, name, symbol = match.groups()
        if number is not None:
            tokens.append(("num", float(match.group(0).strip())))
        elif name is not None:
            tokens.append(("name", name))
        elif symbol.strip():
            if symbol not in "+-*/()":
                raise ExpressionError(f"Unexpected character '{symbol}' in '{text}'")
            tokens.append(("sym", symbol))
        pos = match.end()
    return tokens


class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else (None, None)

    def take(self, kind=None, value=None):
        tok = self.peek()
        if tok[0] is None or (kind and tok[0] != kind) or (value and tok[1] != value):
            raise ExpressionError(f"Expected {value or kind} in '{self.text}', got {tok[1]!r}")
        self.i += 1
        return tok

    def parse(self):
        node = self.expr()
        if self.i != len(self.tokens):
            raise ExpressionError(f"Trailing input in '{self.text}' at token {self.peek()[1]!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek() in (("sym", "+"), ("sym", "-")):
            op = self.take()[1]
            node = (op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek() in (("sym", "*"), ("sym", "/")):
            op = self.take()[1]
            node = (op, node, self.unary())
        return node

    def unary(self):
        if self.peek() == ("sym", "-"):
            self.take()
            return ("neg", self.unary())
        return self.atom()

    def atom(self):
        kind, value = self.peek()
        if kind == "num":
            self.take()
            return ("const", value)
        if kind == "name":
            self.take()
            if self.peek() == ("sym", "("):
                if value not in FUNCTIONS:
                    raise ExpressionError(f"Unknown function '{value}' in '{self.text}'")
                self.take("sym", "(")
                arg = self.expr()
                self.take("sym", ")")
                return ("call", value, arg)
            return ("var", value)
        if (kind, value) == ("sym", "("):
            self.take()
            node = self.expr()
            self.take("sym", ")")
            return node
        raise ExpressionError(f"Unexpected token {value!r} in '{self.text}'")


@dataclass(frozen=True)
class Expression:
    """Parsed expression; `source` is the original text."""
    source: str
    tree: tuple

    @classmethod
    def parse(cls, source: str) -> "Expression":
        return cls(source=source, tree=_Parser(source).parse())

    @property
    def names(self) -> set[str]:
        found = set()
        _collect(self.tree, found, "var")
        return found

    @property
    def uses_bernoulli(self) -> bool:
        found = set()
        _collect(self.tree, found, "call")
        return "bernoulli" in found

    def evaluate(self, values: dict, noise) -> np.ndarray:
        """
        Evaluate over arrays.

        Args:
            values: Mapping parent name -> array of parent values
            noise: Array of the node's own noise values
        """
        return np.asarray(_eval(self.tree, values, noise), dtype=float)

    def __str__(self):
        return self.source


def _collect(tree, found, kind):
    tag = tree[0]
    if tag == "var" and kind == "var":
        found.add(tree[1])
    elif tag == "call":
        if kind == "call":
            found.add(tree[1])
        _collect(tree[2], found, kind)
    elif tag == "neg":
        _collect(tree[1], found, kind)
    elif tag in "+-*/":
        _collect(tree[1], found, kind)
        _collect(tree[2], found, kind)


def _eval(tree, values, noise):
    tag = tree[0]
    if tag == "const":
        return tree[1]
    if tag == "var":
        if tree[1] == NOISE_NAME:
            return noise
        try:
            return values[tree[1]]
        except KeyError:
            raise ExpressionError(f"Unbound name '{tree[1]}'") from None
    if tag == "neg":
        return -_eval(tree[1], values, noise)
    if tag == "call":
        arg = _eval(tree[2], values, noise)
        if tree[1] == "floor":
            return np.floor(arg)
        if tree[1] == "sigmoid":
            return expit(arg)
        # bernoulli
        return (np.asarray(noise) < arg).astype(float)
    left = _eval(tree[1], values, noise)
    right = _eval(tree[2], values, noise)
    if tag == "+":
        return left + right
    if tag == "-":
        return left - right
    if tag == "*":
        return left * right
    with np.errstate(divide="ignore", invalid="ignore"):
        return left / right
