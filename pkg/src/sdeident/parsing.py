"""Recursive-descent parser for polynomial / rational expressions.

Grammar::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('+' | '-') unary | power
    power  := atom (('^' | '**') INT)?
    atom   := NUMBER | NAME | '(' expr ')'

Expressions evaluate directly to :class:`~sdeident.polynomial.RatFun`; callers
that need a polynomial call ``as_poly`` (or use :func:`parse_poly`).
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .polynomial import Poly, RatFun


class ParseError(ValueError):
    """Syntax error with a 1-based line/column position."""

    def __init__(self, message: str, line: int = 1, column: int = 1):
        super().__init__(f"line {line}, column {column}: {message}")
        self.message = message
        self.line = line
        self.column = column


class NonPolynomialError(ParseError):
    pass


class UnknownSymbolError(ParseError):
    pass


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    column: int


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)
  | (?P<name>[^\W\d]\w*)
  | (?P<op>\*\*|[-+*/^(),\[\]:])
    """,
    re.VERBOSE | re.UNICODE,
)


def tokenize(text: str, line: int = 1, column_offset: int = 0) -> list[Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, column_offset + pos + 1)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(Token(kind, m.group(), column_offset + pos + 1))
        pos = m.end()
    tokens.append(Token("eof", "", column_offset + len(text) + 1))
    return tokens


class ExpressionParser:
    def __init__(self, text: str, symbols: Sequence[str], line: int = 1, column_offset: int = 0):
        self.symbols = tuple(symbols)
        self.line = line
        self.tokens = tokenize(text, line, column_offset)
        self.pos = 0

    # -- token helpers -----------------------------------------------------
    @property
    def current(self) -> Token:
        return self.tokens[self.pos]

    def _error(self, message: str, tok: Token | None = None, cls=ParseError):
        tok = tok or self.current
        return cls(message, self.line, tok.column)

    def _accept(self, *texts: str) -> Token | None:
        tok = self.current
        if tok.kind == "op" and tok.text in texts:
            self.pos += 1
            return tok
        return None

    def _expect(self, text: str) -> Token:
        tok = self._accept(text)
        if tok is None:
            found = self.current.text or "end of input"
            raise self._error(f"expected {text!r}, found {found!r}")
        return tok

    # -- grammar -----------------------------------------------------------
    def parse(self) -> RatFun:
        value = self.expr()
        if self.current.kind != "eof":
            raise self._error(f"unexpected {self.current.text!r}")
        return value

    def parse_list(self) -> list[RatFun]:
        """``'[' expr (',' expr)* ']'``"""
        self._expect("[")
        items = [self.expr()]
        while self._accept(","):
            items.append(self.expr())
        self._expect("]")
        if self.current.kind != "eof":
            raise self._error(f"unexpected {self.current.text!r}")
        return items

    def expr(self) -> RatFun:
        value = self.term()
        while True:
            if self._accept("+"):
                value = value + self.term()
            elif self._accept("-"):
                value = value - self.term()
            else:
                return value

    def term(self) -> RatFun:
        value = self.unary()
        while True:
            if self._accept("*"):
                value = value * self.unary()
            else:
                tok = self._accept("/")
                if tok is None:
                    return value
                rhs = self.unary()
                if rhs.is_zero():
                    raise self._error("division by zero", tok)
                value = value / rhs

    def unary(self) -> RatFun:
        if self._accept("-"):
            return -self.unary()
        if self._accept("+"):
            return self.unary()
        return self.power()

    def power(self) -> RatFun:
        base = self.atom()
        tok = self._accept("^", "**")
        if tok is None:
            return base
        neg = self._accept("-") is not None
        exp_tok = self.current
        if exp_tok.kind != "number" or not exp_tok.text.isdigit():
            raise self._error("exponent must be a non-negative integer literal", exp_tok, NonPolynomialError)
        if neg:
            raise self._error("negative exponents are not polynomial", exp_tok, NonPolynomialError)
        self.pos += 1
        return base ** int(exp_tok.text)

    def atom(self) -> RatFun:
        tok = self.current
        if tok.kind == "number":
            self.pos += 1
            return RatFun.constant(self.symbols, Fraction(tok.text))
        if tok.kind == "name":
            self.pos += 1
            nxt = self.current
            if nxt.kind == "op" and nxt.text == "(":
                raise self._error(
                    f"function application {tok.text}(...) is not polynomial "
                    "(use '*' for multiplication)",
                    tok,
                    NonPolynomialError,
                )
            if tok.text not in self.symbols:
                raise self._error(f"unknown symbol {tok.text!r}", tok, UnknownSymbolError)
            return RatFun(Poly.var(self.symbols, tok.text), reduce=False)
        if self._accept("("):
            value = self.expr()
            self._expect(")")
            return value
        found = tok.text or "end of input"
        raise self._error(f"unexpected {found!r}")


def parse_expression(text: str, symbols: Sequence[str], line: int = 1, column_offset: int = 0) -> RatFun:
    return ExpressionParser(text, symbols, line, column_offset).parse()


def parse_poly(text: str, symbols: Sequence[str], line: int = 1, column_offset: int = 0) -> Poly:
    value = parse_expression(text, symbols, line, column_offset)
    if not value.is_poly():
        raise NonPolynomialError(f"expression {text.strip()!r} is not polynomial", line, column_offset + 1)
    return value.as_poly()


def parse_poly_list(text: str, symbols: Sequence[str], line: int = 1, column_offset: int = 0) -> list[Poly]:
    items = ExpressionParser(text, symbols, line, column_offset).parse_list()
    out = []
    for item in items:
        if not item.is_poly():
            raise NonPolynomialError(f"entry {item} is not polynomial", line, column_offset + 1)
        out.append(item.as_poly())
    return out
