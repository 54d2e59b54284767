"""Exact multivariate polynomials and rational functions over Q.

Every :class:`Poly` carries an explicit symbol table (a tuple of names); terms
map exponent vectors, one entry per symbol, to :class:`fractions.Fraction`
coefficients.  Values are immutable once built.
"""
from __future__ import annotations

from fractions import Fraction
from math import gcd, isqrt
from typing import Iterable, Mapping, Sequence, Union

Number = Union[int, Fraction]
Monomial = tuple


def _grlex_key(exps: Monomial) -> tuple:
    return (sum(exps), exps)


class NotDivisible(ArithmeticError):
    pass


class Poly:
    """Sparse polynomial with rational coefficients in named symbols."""

    __slots__ = ("symbols", "terms", "_hash")

    def __init__(self, symbols: Sequence[str], terms: Mapping[Monomial, Number] | None = None):
        self.symbols = tuple(symbols)
        n = len(self.symbols)
        clean = {}
        if terms:
            for exps, c in terms.items():
                if c == 0:
                    continue
                if len(exps) != n:
                    raise ValueError(f"exponent vector {exps} does not match symbol table {self.symbols}")
                clean[tuple(exps)] = c if isinstance(c, Fraction) else Fraction(c)
        self.terms = clean
        self._hash = None

    # -- constructors ------------------------------------------------------
    @classmethod
    def constant(cls, symbols: Sequence[str], value: Number) -> "Poly":
        n = len(tuple(symbols))
        return cls(symbols, {(0,) * n: value})

    @classmethod
    def var(cls, symbols: Sequence[str], name: str) -> "Poly":
        symbols = tuple(symbols)
        if name not in symbols:
            raise KeyError(f"unknown symbol {name!r}")
        exps = tuple(1 if s == name else 0 for s in symbols)
        return cls(symbols, {exps: 1})

    @classmethod
    def parse(cls, text: str, symbols: Sequence[str]) -> "Poly":
        from .parsing import parse_expression

        value = parse_expression(text, symbols)
        return value.as_poly()

    @classmethod
    def _raw(cls, symbols: tuple, terms: dict) -> "Poly":
        # trusted constructor: terms already clean
        p = object.__new__(cls)
        p.symbols = symbols
        p.terms = terms
        p._hash = None
        return p

    # -- basic queries -----------------------------------------------------
    def is_zero(self) -> bool:
        return not self.terms

    def is_constant(self) -> bool:
        return all(not any(e) for e in self.terms)

    def constant_value(self) -> Fraction:
        if not self.is_constant():
            raise ValueError("polynomial is not constant")
        return next(iter(self.terms.values()), Fraction(0))

    def is_monomial(self) -> bool:
        return len(self.terms) == 1

    def degree(self, name: str | None = None) -> int:
        if not self.terms:
            return -1
        if name is None:
            return max(sum(e) for e in self.terms)
        k = self.symbols.index(name)
        return max(e[k] for e in self.terms)

    def used_symbols(self) -> tuple:
        used = [False] * len(self.symbols)
        for e in self.terms:
            for k, v in enumerate(e):
                if v:
                    used[k] = True
        return tuple(s for s, u in zip(self.symbols, used) if u)

    def sorted_terms(self) -> list:
        return sorted(self.terms.items(), key=lambda kv: _grlex_key(kv[0]), reverse=True)

    def leading_term(self) -> tuple:
        if not self.terms:
            raise ValueError("zero polynomial has no leading term")
        e = max(self.terms, key=_grlex_key)
        return e, self.terms[e]

    def leading_coefficient(self) -> Fraction:
        return self.leading_term()[1]

    # -- symbol-table handling ----------------------------------------------
    def _check(self, other: "Poly") -> None:
        if self.symbols != other.symbols:
            raise ValueError(f"mismatched symbol tables {self.symbols} vs {other.symbols}")

    def _coerce(self, other) -> "Poly":
        if isinstance(other, Poly):
            self._check(other)
            return other
        if isinstance(other, (int, Fraction)):
            return Poly.constant(self.symbols, other)
        return NotImplemented

    def with_symbols(self, symbols: Sequence[str]) -> "Poly":
        """Re-embed into another symbol table containing every used symbol."""
        symbols = tuple(symbols)
        if symbols == self.symbols:
            return self
        index = {s: k for k, s in enumerate(symbols)}
        n = len(symbols)
        terms = {}
        for e, c in self.terms.items():
            new = [0] * n
            for s, v in zip(self.symbols, e):
                if v:
                    if s not in index:
                        raise ValueError(f"symbol {s!r} used but absent from target table")
                    new[index[s]] = v
            terms[tuple(new)] = c
        return Poly._raw(symbols, terms)

    def split(self, names: Sequence[str], rest: Sequence[str] | None = None) -> dict:
        """Group terms by the exponents of ``names``.

        Returns a map from exponent tuples of ``names`` to coefficient
        polynomials in ``rest`` (default: all remaining symbols).
        """
        idx = [self.symbols.index(s) for s in names]
        if rest is None:
            rest = tuple(s for s in self.symbols if s not in names)
        rest = tuple(rest)
        ridx = [self.symbols.index(s) for s in rest]
        out: dict = {}
        skip = set(idx) | set(ridx)
        for e, c in self.terms.items():
            for k, v in enumerate(e):
                if v and k not in skip:
                    raise ValueError(f"symbol {self.symbols[k]!r} not in split target")
            key = tuple(e[k] for k in idx)
            sub = tuple(e[k] for k in ridx)
            bucket = out.setdefault(key, {})
            bucket[sub] = bucket.get(sub, 0) + c
        return {k: Poly(rest, v) for k, v in out.items() if any(c != 0 for c in v.values())}

    # -- arithmetic --------------------------------------------------------
    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        if not other.terms:
            return self
        terms = dict(self.terms)
        for e, c in other.terms.items():
            v = terms.get(e, 0) + c
            if v:
                terms[e] = v
            else:
                terms.pop(e, None)
        return Poly._raw(self.symbols, terms)

    __radd__ = __add__

    def __neg__(self):
        return Poly._raw(self.symbols, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return other + (-self)

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            if other == 0:
                return Poly._raw(self.symbols, {})
            return Poly._raw(self.symbols, {e: c * other for e, c in self.terms.items()})
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        terms: dict = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                terms[e] = terms.get(e, 0) + c1 * c2
        return Poly._raw(self.symbols, {e: c for e, c in terms.items() if c})

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (int, Fraction)):
            if other == 0:
                raise ZeroDivisionError("division by zero")
            return self * (Fraction(1) / other)
        return RatFun(self, other)

    def __pow__(self, k: int):
        if not isinstance(k, int) or k < 0:
            raise ValueError("exponent must be a non-negative integer")
        result = Poly.constant(self.symbols, 1)
        base = self
        while k:
            if k & 1:
                result = result * base
            k >>= 1
            if k:
                base = base * base
        return result

    def __eq__(self, other):
        if isinstance(other, Poly):
            return self.symbols == other.symbols and self.terms == other.terms
        if isinstance(other, (int, Fraction)):
            return self.is_constant() and self.constant_value() == other
        return NotImplemented

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.symbols, frozenset(self.terms.items())))
        return self._hash

    def __bool__(self):
        return bool(self.terms)

    # -- calculus / evaluation ---------------------------------------------
    def diff(self, name: str) -> "Poly":
        if name not in self.symbols:
            raise KeyError(f"unknown symbol {name!r}")
        k = self.symbols.index(name)
        terms = {}
        for e, c in self.terms.items():
            if e[k]:
                ne = e[:k] + (e[k] - 1,) + e[k + 1:]
                terms[ne] = c * e[k]
        return Poly._raw(self.symbols, terms)

    def eval(self, point: Mapping[str, Number]) -> Fraction:
        """Exact value at ``point`` (which must cover every used symbol)."""
        vals = []
        used = set(self.used_symbols())
        for s in self.symbols:
            if s in point:
                vals.append(Fraction(point[s]))
            elif s in used:
                raise KeyError(f"missing value for symbol {s!r}")
            else:
                vals.append(None)
        total = Fraction(0)
        for e, c in self.terms.items():
            t = c
            for v, k in zip(vals, e):
                if k:
                    t *= v ** k
            total += t
        return total

    def eval_float(self, point: Mapping[str, float]) -> float:
        total = 0.0
        for e, c in self.terms.items():
            t = float(c)
            for s, k in zip(self.symbols, e):
                if k:
                    t *= point[s] ** k
            total += t
        return total

    def subs(self, values: Mapping[str, Number]) -> "Poly":
        """Substitute rational values for some symbols (table unchanged)."""
        idx = {self.symbols.index(s): Fraction(v) for s, v in values.items() if s in self.symbols}
        terms: dict = {}
        for e, c in self.terms.items():
            t = c
            ne = list(e)
            for k, v in idx.items():
                if e[k]:
                    t *= v ** e[k]
                    ne[k] = 0
            ne = tuple(ne)
            terms[ne] = terms.get(ne, 0) + t
        return Poly._raw(self.symbols, {e: c for e, c in terms.items() if c})

    # -- content / normalisation -------------------------------------------
    def monic(self) -> "Poly":
        """Scale so the graded-lex leading coefficient is 1 (zero stays zero)."""
        if not self.terms:
            return self
        lc = self.leading_coefficient()
        return self if lc == 1 else self * (1 / lc)

    def rational_content(self) -> Fraction:
        """Positive rational c with self/c having coprime integer coefficients."""
        from math import gcd, lcm

        if not self.terms:
            return Fraction(0)
        num = 0
        den = 1
        for c in self.terms.values():
            num = gcd(num, c.numerator)
            den = lcm(den, c.denominator)
        return Fraction(num, den)

    def primitive(self) -> "Poly":
        """Integer-primitive form with positive leading coefficient."""
        if not self.terms:
            return self
        c = self.rational_content()
        if self.leading_coefficient() < 0:
            c = -c
        return self * (1 / c)

    # -- rendering ---------------------------------------------------------
    def __str__(self) -> str:
        return render_poly(self)

    def __repr__(self) -> str:
        return f"Poly({str(self)!r})"


def _render_monomial(symbols, exps) -> str:
    parts = []
    for s, k in zip(symbols, exps):
        if k == 1:
            parts.append(s)
        elif k > 1:
            parts.append(f"{s}^{k}")
    return "*".join(parts)


def _render_fraction(c: Fraction) -> str:
    return str(c.numerator) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"


def render_poly(p: Poly) -> str:
    """Canonical text: graded-lex descending terms, explicit ``*`` and ``^``."""
    if not p.terms:
        return "0"
    out = []
    for k, (e, c) in enumerate(p.sorted_terms()):
        mono = _render_monomial(p.symbols, e)
        mag = abs(c)
        if not mono:
            body = _render_fraction(mag)
        elif mag == 1:
            body = mono
        else:
            body = f"{_render_fraction(mag)}*{mono}"
        if k == 0:
            out.append(("-" if c < 0 else "") + body)
        else:
            out.append((" - " if c < 0 else " + ") + body)
    return "".join(out)


# ---------------------------------------------------------------------------
# division and gcd


def divide_exact(f: Poly, g: Poly) -> Poly:
    """Quotient f/g, raising :class:`NotDivisible` when g does not divide f."""
    f._check(g)
    if g.is_zero():
        raise ZeroDivisionError("division by the zero polynomial")
    if g.is_constant():
        return f * (1 / g.constant_value())
    n = len(f.symbols)
    ge, gc = g.leading_term()
    gkey = _grlex_key(ge)
    if g.is_monomial():
        terms = {}
        for e, c in f.terms.items():
            d = tuple(a - b for a, b in zip(e, ge))
            if min(d) < 0:
                raise NotDivisible(f"{g} does not divide {f}")
            terms[d] = c / gc
        return Poly._raw(f.symbols, terms)
    rem = dict(f.terms)
    quot: dict = {}
    while rem:
        re = max(rem, key=_grlex_key)
        if _grlex_key(re) < gkey:
            raise NotDivisible(f"{g} does not divide {f}")
        d = tuple(a - b for a, b in zip(re, ge))
        if min(d) < 0:
            raise NotDivisible(f"{g} does not divide {f}")
        q = rem[re] / gc
        quot[d] = quot.get(d, 0) + q
        for e, c in g.terms.items():
            t = tuple(a + b for a, b in zip(e, d))
            v = rem.get(t, 0) - q * c
            if v:
                rem[t] = v
            else:
                rem.pop(t, None)
    return Poly._raw(f.symbols, {e: c for e, c in quot.items() if c})


def divides(g: Poly, f: Poly) -> bool:
    try:
        divide_exact(f, g)
    except NotDivisible:
        return False
    return True


def _monomial_content(p: Poly) -> tuple:
    it = iter(p.terms)
    m = list(next(it))
    for e in it:
        for k, v in enumerate(e):
            if v < m[k]:
                m[k] = v
    return tuple(m)


def _mono(symbols, exps) -> Poly:
    return Poly._raw(symbols, {tuple(exps): Fraction(1)})


def _as_univariate(p: Poly, k: int) -> dict:
    """Coefficients of p viewed as a polynomial in symbol index k."""
    out: dict = {}
    for e, c in p.terms.items():
        d = e[k]
        ne = e[:k] + (0,) + e[k + 1:]
        out.setdefault(d, {})[ne] = c
    return {d: Poly._raw(p.symbols, t) for d, t in out.items()}


def _from_univariate(coeffs: dict, k: int, symbols) -> Poly:
    terms = {}
    for d, cp in coeffs.items():
        for e, c in cp.terms.items():
            terms[e[:k] + (d,) + e[k + 1:]] = c
    return Poly._raw(symbols, terms)


def _content_in(p: Poly, k: int) -> Poly:
    g = None
    for cp in _as_univariate(p, k).values():
        g = cp if g is None else _gcd(g, cp)
        if g.is_constant():
            return Poly.constant(p.symbols, 1)
    return g


def _prem(a: Poly, b: Poly, k: int) -> Poly:
    """Pseudo-remainder of a by b in symbol index k."""
    bu = _as_univariate(b, k)
    db = max(bu)
    lcb = bu[db]
    rest_b = _from_univariate({d: c for d, c in bu.items() if d != db}, k, b.symbols)
    r = a
    left = a.degree(a.symbols[k]) - db + 1    # prem multiplies by lcb exactly this often
    while not r.is_zero():
        ru = _as_univariate(r, k)
        dr = max(ru)
        if dr < db:
            break
        shift = [0] * len(a.symbols)
        shift[k] = dr - db
        x = _mono(a.symbols, shift)
        lower = _from_univariate({d: c for d, c in ru.items() if d != dr}, k, a.symbols)
        r = lower * lcb - ru[dr] * x * rest_b
        left -= 1
    if left > 0 and not r.is_zero():
        r = r * lcb ** left
    return r


def _gcd(f: Poly, g: Poly) -> Poly:
    if f.is_zero():
        return g.monic()
    if g.is_zero():
        return f.monic()
    symbols = f.symbols
    if f.is_constant() or g.is_constant():
        return Poly.constant(symbols, 1)
    mf = _monomial_content(f)
    mg = _monomial_content(g)
    m = tuple(min(a, b) for a, b in zip(mf, mg))
    if f.is_monomial() or g.is_monomial():
        return _mono(symbols, m)
    if any(mf):
        f = divide_exact(f, _mono(symbols, mf))
    if any(mg):
        g = divide_exact(g, _mono(symbols, mg))
    mpoly = _mono(symbols, m)
    if f.is_constant() or g.is_constant():
        return mpoly
    uf = set(f.used_symbols())
    ug = set(g.used_symbols())
    common = [s for s in symbols if s in uf and s in ug]
    if not common:
        return mpoly
    # a symbol present in only one argument cannot occur in the gcd
    for s in symbols:
        if (s in uf) != (s in ug):
            k = symbols.index(s)
            if s in uf:
                return (mpoly * _gcd(_content_in(f, k), g)).monic()
            return (mpoly * _gcd(f, _content_in(g, k))).monic()
    k = symbols.index(max(common, key=lambda s: max(f.degree(s), g.degree(s))))
    cf = _content_in(f, k)
    cg = _content_in(g, k)
    c = _gcd(cf, cg)
    pf = divide_exact(f, cf)
    pg = divide_exact(g, cg)
    if pf.degree(symbols[k]) < pg.degree(symbols[k]):
        pf, pg = pg, pf
    if _coprime_by_specialisation(pf, pg, k):
        return (mpoly * c).monic()
    h = _heuristic_gcd(pf, pg)
    if h is None:
        h = _subresultant_gcd(pf, pg, k)
    return (mpoly * c * h).monic()


# -- heuristic gcd -------------------------------------------------------------
# Evaluate one symbol at a large integer, recurse, rebuild the gcd from its
# balanced xi-adic digits and keep it only if it divides both inputs exactly
# and leaves coprime cofactors.


def _integer_terms(p: Poly) -> dict:
    den = 1
    for c in p.terms.values():
        den = den * c.denominator // gcd(den, c.denominator)
    return {e: int(c * den) for e, c in p.terms.items()}


def _int_content(t: dict) -> int:
    g = 0
    for c in t.values():
        g = gcd(g, c)
        if g == 1:
            break
    return g


def _eval_int(t: dict, k: int, xi: int) -> dict:
    out: dict = {}
    for e, c in t.items():
        ne = e[:k] + (0,) + e[k + 1:]
        out[ne] = out.get(ne, 0) + c * xi ** e[k]
    return {e: c for e, c in out.items() if c}


def _interpolate(t: dict, k: int, xi: int) -> dict:
    out = {}
    i = 0
    half = xi // 2
    while t:
        digit = {}
        for e, c in t.items():
            r = c % xi
            if r > half:
                r -= xi
            if r:
                digit[e] = r
        for e, r in digit.items():
            out[e[:k] + (i,) + e[k + 1:]] = r
        t = {e: (c - digit.get(e, 0)) // xi for e, c in t.items()}
        t = {e: c for e, c in t.items() if c}
        i += 1
    return out


def _divides_int(h: dict, f: dict, symbols) -> bool:
    try:
        divide_exact(Poly._raw(symbols, {e: Fraction(c) for e, c in f.items()}),
                     Poly._raw(symbols, {e: Fraction(c) for e, c in h.items()}))
    except NotDivisible:
        return False
    return True


def _heu(f: dict, g: dict, live: list, symbols, depth: int = 0):
    if not live:
        return {next(iter(f)): gcd(next(iter(f.values())), next(iter(g.values())))}
    cf, cg = _int_content(f), _int_content(g)
    f = {e: c // cf for e, c in f.items()}
    g = {e: c // cg for e, c in g.items()}
    h = _heu_primitive(f, g, live, symbols, depth)
    if h is None:
        return None
    common = gcd(cf, cg)
    return {e: c * common for e, c in h.items()}


def _heu_primitive(f: dict, g: dict, live: list, symbols, depth: int):
    k = live[-1]
    fn = max(abs(c) for c in f.values())
    gn = max(abs(c) for c in g.values())
    bound = 2 * min(fn, gn) + 29
    xi = max(min(bound, 99 * isqrt(bound)), 2)
    for _ in range(6):
        if xi.bit_length() > 4000:
            return None
        ff, gg = _eval_int(f, k, xi), _eval_int(g, k, xi)
        if ff and gg:
            h = _heu(ff, gg, live[:-1], symbols, depth + 1)
            if h is not None:
                h = _interpolate(h, k, xi)
                cont = _int_content(h)
                h = {e: c // cont for e, c in h.items()}
                if _divides_int(h, f, symbols) and _divides_int(h, g, symbols):
                    return h
        xi = xi * 73794 * isqrt(isqrt(xi)) // 27011
    return None


def _heuristic_gcd(f: Poly, g: Poly):
    symbols = f.symbols
    live = sorted(set(symbols.index(s) for s in f.used_symbols() + g.used_symbols()))
    h = _heu(_integer_terms(f), _integer_terms(g), live, symbols)
    if h is None:
        return None
    hp = Poly._raw(symbols, {e: Fraction(c) for e, c in h.items()})
    # the division test alone does not rule out a proper divisor of the gcd;
    # accept only when the cofactors are provably coprime in every symbol
    cf, cg = divide_exact(f, hp), divide_exact(g, hp)
    for k in live:
        s = symbols[k]
        if cf.degree(s) > 0 and cg.degree(s) > 0 and not _coprime_by_specialisation(cf, cg, k):
            return None
    return hp


def _leading_coeff_in(p: Poly, k: int) -> Poly:
    u = _as_univariate(p, k)
    return u[max(u)]


def _subresultant_gcd(f: Poly, g: Poly, k: int) -> Poly:
    """gcd of polynomials primitive in symbol k, deg_k f >= deg_k g, via the subresultant PRS."""
    name = f.symbols[k]
    one = Poly.constant(f.symbols, 1)
    r0, r1 = f, g
    gg, hh = one, one
    while True:
        delta = r0.degree(name) - r1.degree(name)
        r = _prem(r0, r1, k)
        if r.is_zero():
            break
        if r.degree(name) == 0:
            return one
        r0, r1 = r1, divide_exact(r, gg * hh ** delta)
        gg = _leading_coeff_in(r0, k)
        if delta == 1:
            hh = gg
        elif delta > 1:
            hh = divide_exact(gg ** delta, hh ** (delta - 1))
    return divide_exact(r1, _content_in(r1, k))


_PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47)


def _coprime_by_specialisation(f: Poly, g: Poly, k: int) -> bool:
    """True when gcd(f, g) provably has degree 0 in symbol k.

    Fix every other symbol at an integer point where neither leading coefficient
    in symbol k vanishes; the gcd degree can only grow under such a
    specialisation, so a constant univariate gcd settles it.  False means
    "unknown", never "not coprime".
    """
    symbols = f.symbols
    lf = _as_univariate(f, k)
    lg = _as_univariate(g, k)
    lcf, lcg = lf[max(lf)], lg[max(lg)]
    others = [s for i, s in enumerate(symbols) if i != k]
    for shift in range(3):
        point = {s: _PRIMES[(i + shift) % len(_PRIMES)] + shift for i, s in enumerate(others)}
        if lcf.eval({**point, symbols[k]: 0}) == 0 or lcg.eval({**point, symbols[k]: 0}) == 0:
            continue
        a, b = f.subs(point), g.subs(point)
        while not b.is_zero():
            a, b = b, _univariate_rem(a, b, k)
        return a.degree(symbols[k]) == 0
    return False


def _univariate_rem(a: Poly, b: Poly, k: int) -> Poly:
    """Remainder over Q for polynomials in symbol index k only."""
    bu = _as_univariate(b, k)
    db = max(bu)
    lcb = bu[db].constant_value()
    r = a
    while not r.is_zero():
        ru = _as_univariate(r, k)
        dr = max(ru)
        if dr < db:
            break
        shift = [0] * len(a.symbols)
        shift[k] = dr - db
        r = r - b * _mono(a.symbols, shift) * (ru[dr].constant_value() / lcb)
    return r


def poly_gcd(f: Poly, g: Poly) -> Poly:
    """Greatest common divisor, normalised to graded-lex leading coefficient 1."""
    f._check(g)
    return _gcd(f, g)


def poly_lcm(f: Poly, g: Poly) -> Poly:
    if f.is_zero() or g.is_zero():
        return Poly.constant(f.symbols, 0)
    return divide_exact(f * g, poly_gcd(f, g)).monic()


def poly_arith(lhs: Poly, rhs: Poly, op: str) -> Poly:
    if op == "add":
        return lhs + rhs
    if op == "sub":
        return lhs - rhs
    if op == "mul":
        return lhs * rhs
    raise ValueError(f"unknown operation {op!r}")


def poly_diff(f: Poly, wrt: str) -> Poly:
    return f.diff(wrt)


def poly_eval(f: Poly, point: Mapping[str, Number]) -> Fraction:
    return f.eval(point)


# ---------------------------------------------------------------------------


class RatFun:
    """Reduced ratio of two polynomials; the denominator is monic."""

    __slots__ = ("num", "den", "_hash")

    def __init__(self, num: Poly, den: Poly | None = None, *, reduce: bool = True):
        if den is None:
            den = Poly.constant(num.symbols, 1)
        num._check(den)
        if den.is_zero():
            raise ZeroDivisionError("RatFun with zero denominator")
        if reduce:
            if num.is_zero():
                den = Poly.constant(num.symbols, 1)
            elif not den.is_constant():
                g = poly_gcd(num, den)
                if not g.is_constant():
                    num = divide_exact(num, g)
                    den = divide_exact(den, g)
            lc = den.leading_coefficient()
            if lc != 1:
                num = num * (1 / lc)
                den = den * (1 / lc)
        self.num = num
        self.den = den
        self._hash = None

    @property
    def symbols(self) -> tuple:
        return self.num.symbols

    @classmethod
    def constant(cls, symbols, value: Number) -> "RatFun":
        return cls(Poly.constant(symbols, value), reduce=False)

    @classmethod
    def parse(cls, text: str, symbols: Sequence[str]) -> "RatFun":
        from .parsing import parse_expression

        return parse_expression(text, symbols)

    def is_zero(self) -> bool:
        return self.num.is_zero()

    def is_constant(self) -> bool:
        return self.num.is_constant() and self.den.is_constant()

    def is_poly(self) -> bool:
        return self.den.is_constant()

    def as_poly(self) -> Poly:
        if not self.den.is_constant():
            raise ValueError(f"{self} is not a polynomial")
        return self.num * (1 / self.den.constant_value())

    def _coerce(self, other):
        if isinstance(other, RatFun):
            if other.symbols != self.symbols:
                raise ValueError("mismatched symbol tables")
            return other
        if isinstance(other, Poly):
            if other.symbols != self.symbols:
                raise ValueError("mismatched symbol tables")
            return RatFun(other, reduce=False)
        if isinstance(other, (int, Fraction)):
            return RatFun.constant(self.symbols, other)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        if other.num.is_zero():
            return self
        if self.num.is_zero():
            return other
        if self.den == other.den:
            return RatFun(self.num + other.num, self.den)
        g = poly_gcd(self.den, other.den)
        d1 = divide_exact(self.den, g)
        d2 = divide_exact(other.den, g)
        return RatFun(self.num * d2 + other.num * d1, self.den * d2)

    __radd__ = __add__

    def __neg__(self):
        return RatFun(-self.num, self.den, reduce=False)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return other + (-self)

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            if other == 0:
                return RatFun.constant(self.symbols, 0)
            return RatFun(self.num * other, self.den, reduce=False)
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        if self.is_zero() or other.is_zero():
            return RatFun.constant(self.symbols, 0)
        g1 = poly_gcd(self.num, other.den)
        g2 = poly_gcd(other.num, self.den)
        n1, d2 = divide_exact(self.num, g1), divide_exact(other.den, g1)
        n2, d1 = divide_exact(other.num, g2), divide_exact(self.den, g2)
        return RatFun(n1 * n2, d1 * d2, reduce=False)._normalised()

    __rmul__ = __mul__

    def _normalised(self) -> "RatFun":
        lc = self.den.leading_coefficient()
        if lc == 1:
            return self
        return RatFun(self.num * (1 / lc), self.den * (1 / lc), reduce=False)

    def inverse(self) -> "RatFun":
        if self.is_zero():
            raise ZeroDivisionError("inverse of zero")
        return RatFun(self.den, self.num, reduce=False)._normalised()

    def __truediv__(self, other):
        if isinstance(other, (int, Fraction)):
            if other == 0:
                raise ZeroDivisionError("division by zero")
            return self * (Fraction(1) / other)
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self * other.inverse()

    def __rtruediv__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return other * self.inverse()

    def __pow__(self, k: int):
        if k < 0:
            return self.inverse() ** (-k)
        return RatFun(self.num ** k, self.den ** k, reduce=False)._normalised()

    def __eq__(self, other):
        if isinstance(other, (int, Fraction, Poly)):
            other = self._coerce(other)
        if isinstance(other, RatFun):
            # both reduced with monic denominators: representation is canonical
            return self.num == other.num and self.den == other.den
        return NotImplemented

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.num, self.den))
        return self._hash

    def diff(self, name: str) -> "RatFun":
        n, d = self.num, self.den
        if d.is_constant():
            return RatFun(n.diff(name), d, reduce=False)
        return RatFun(n.diff(name) * d - n * d.diff(name), d * d)

    def eval(self, point: Mapping[str, Number]) -> Fraction:
        dv = self.den.eval(point)
        if dv == 0:
            raise ZeroDivisionError("denominator vanishes at evaluation point")
        return self.num.eval(point) / dv

    def subs(self, values: Mapping[str, Number]) -> "RatFun":
        return RatFun(self.num.subs(values), self.den.subs(values))

    def with_symbols(self, symbols) -> "RatFun":
        return RatFun(self.num.with_symbols(symbols), self.den.with_symbols(symbols), reduce=False)

    def used_symbols(self) -> tuple:
        used = set(self.num.used_symbols()) | set(self.den.used_symbols())
        return tuple(s for s in self.symbols if s in used)

    def __str__(self) -> str:
        if self.den.is_constant():
            return render_poly(self.as_poly())
        num = render_poly(self.num)
        if len(self.num.terms) > 1:
            num = f"({num})"
        den = render_poly(self.den)
        if len(self.den.terms) > 1 or not self.den.is_monomial() or "*" in den:
            den = f"({den})"
        return f"{num}/{den}"

    def __repr__(self) -> str:
        return f"RatFun({str(self)!r})"


def as_ratfun(value: Union[Poly, RatFun]) -> RatFun:
    return value if isinstance(value, RatFun) else RatFun(value, reduce=False)


def symbol_union(*tables: Iterable[str]) -> tuple:
    seen = []
    for t in tables:
        for s in t:
            if s not in seen:
                seen.append(s)
    return tuple(seen)
