"""Raw-moment equations of two-state polynomial SDEs via Ito's lemma.

For an observed state x and unobserved state y, ``moment_ode(model, i, j)``
returns the right-hand side of d/dt <x^i y^j> as a linear combination of raw
moments m[p,q] with rational-function coefficients in the parameters.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, NamedTuple

from .models import ModelSpec
from .polynomial import Poly, RatFun


class MomentSymbol(NamedTuple):
    i: int
    j: int
    deriv: int = 0

    @property
    def order(self) -> int:
        return self.i + self.j

    @property
    def observed(self) -> bool:
        return self.j == 0

    def derivative(self, k: int = 1) -> "MomentSymbol":
        return MomentSymbol(self.i, self.j, self.deriv + k)

    def __str__(self) -> str:
        return f"m[{self.i},{self.j}]" + "'" * self.deriv


def pivot_key(sym: MomentSymbol) -> tuple:
    """Highest derivative, then highest moment order, then lexicographic."""
    return (sym.deriv, sym.order, sym.i, sym.j)


class MomentExpr:
    """Linear combination of moment symbols plus a constant, with RatFun coefficients."""

    __slots__ = ("symbols", "terms", "constant")

    def __init__(self, symbols, terms: Mapping[MomentSymbol, RatFun] | None = None, constant: RatFun | None = None):
        self.symbols = tuple(symbols)
        self.terms = {s: c for s, c in (terms or {}).items() if not c.is_zero()}
        self.constant = constant if constant is not None else RatFun.constant(self.symbols, 0)

    @classmethod
    def of(cls, symbols, sym: MomentSymbol) -> "MomentExpr":
        one = RatFun.constant(symbols, 1)
        if sym.i == 0 and sym.j == 0:
            return cls(symbols, {}, one if sym.deriv == 0 else None)
        return cls(symbols, {sym: one})

    def is_zero(self) -> bool:
        return not self.terms and self.constant.is_zero()

    def coefficient(self, sym: MomentSymbol) -> RatFun:
        return self.terms.get(sym, RatFun.constant(self.symbols, 0))

    def moment_symbols(self) -> list:
        return sorted(self.terms, key=pivot_key, reverse=True)

    def __add__(self, other: "MomentExpr") -> "MomentExpr":
        terms = dict(self.terms)
        for s, c in other.terms.items():
            terms[s] = terms[s] + c if s in terms else c
        return MomentExpr(self.symbols, terms, self.constant + other.constant)

    def __neg__(self) -> "MomentExpr":
        return MomentExpr(self.symbols, {s: -c for s, c in self.terms.items()}, -self.constant)

    def __sub__(self, other: "MomentExpr") -> "MomentExpr":
        return self + (-other)

    def scale(self, factor) -> "MomentExpr":
        return MomentExpr(self.symbols, {s: c * factor for s, c in self.terms.items()}, self.constant * factor)

    def without(self, sym: MomentSymbol) -> "MomentExpr":
        terms = dict(self.terms)
        terms.pop(sym, None)
        return MomentExpr(self.symbols, terms, self.constant)

    def derivative(self, k: int = 1) -> "MomentExpr":
        """Time derivative; coefficients are time-independent."""
        if k == 0:
            return self
        return MomentExpr(self.symbols, {s.derivative(k): c for s, c in self.terms.items()})

    def substitute(self, sym: MomentSymbol, replacement: "MomentExpr") -> "MomentExpr":
        if sym not in self.terms:
            return self
        coeff = self.terms[sym]
        return self.without(sym) + replacement.scale(coeff)

    def __eq__(self, other):
        if not isinstance(other, MomentExpr):
            return NotImplemented
        return self.terms == other.terms and self.constant == other.constant

    def __str__(self) -> str:
        parts = []
        for s in self.moment_symbols():
            parts.append(_term_text(self.terms[s], str(s)))
        if not self.constant.is_zero() or not parts:
            parts.append(_term_text(self.constant, ""))
        text = " + ".join(parts)
        return text.replace("+ -", "- ")

    def __repr__(self) -> str:
        return f"MomentExpr({str(self)!r})"


def _term_text(coeff: RatFun, sym: str) -> str:
    text = str(coeff)
    if not sym:
        return text if coeff.is_poly() and len(coeff.num.terms) == 1 or coeff.is_constant() else f"({text})"
    if text == "1":
        return sym
    if text == "-1":
        return f"-{sym}"
    if coeff.is_poly() and len(coeff.num.terms) == 1:
        return f"{text}*{sym}"
    return f"({text})*{sym}"


# ---------------------------------------------------------------------------


def _check_two_state(model: ModelSpec) -> tuple:
    if len(model.states) != 2 or len(model.observed) != 1:
        raise ValueError(
            f"model {model.name!r} needs exactly 2 states with 1 observed for moment analysis"
        )
    return model.observed[0], model.unobserved[0]


def _ito_terms(model: ModelSpec):
    """Yield (kind, ex, ey, coeff) for every drift / noise-covariance term.

    kind is one of 'fx', 'fy', 'gxx', 'gxy', 'gyy'; ex, ey are the powers of
    the observed / unobserved state; coeff is a Poly over the parameters.
    """
    xs, ys = _check_two_state(model)
    names = model.state_names
    ix, iy = names.index(xs), names.index(ys)
    G = model.noise_cov()
    parts = (
        ("fx", model.drift[ix]),
        ("fy", model.drift[iy]),
        ("gxx", G[ix][ix]),
        ("gxy", G[ix][iy]),
        ("gyy", G[iy][iy]),
    )
    for kind, poly in parts:
        for (ex, ey), c in poly.split((xs, ys), model.params).items():
            yield kind, ex, ey, c


_OFFSETS = {
    # kind -> (d_i, d_j) added to (ex, ey)
    "fx": (-1, 0),
    "fy": (0, -1),
    "gxx": (-2, 0),
    "gxy": (-1, -1),
    "gyy": (0, -2),
}


def _multiplier(kind: str, i, j):
    if kind == "fx":
        return i
    if kind == "fy":
        return j
    if kind == "gxx":
        return i * (i - 1) / 2
    if kind == "gxy":
        return i * j
    return j * (j - 1) / 2


def moment_ode(model: ModelSpec, i: int, j: int) -> MomentExpr:
    """Right-hand side of m[i,j]' for the given model."""
    if i < 0 or j < 0 or (i == 0 and j == 0):
        raise ValueError("moment indices must be non-negative and not both zero")
    params = model.params
    acc: dict = {}
    for kind, ex, ey, c in _ito_terms(model):
        mult = Fraction(_multiplier(kind, Fraction(i), Fraction(j)))
        if mult == 0:
            continue
        di, dj = _OFFSETS[kind]
        key = (i + ex + di, j + ey + dj)
        acc[key] = acc.get(key, Poly.constant(params, 0)) + c * mult
    terms = {}
    const = RatFun.constant(params, 0)
    for (p, q), coeff in acc.items():
        if coeff.is_zero():
            continue
        if p < 0 or q < 0:
            raise AssertionError(f"negative moment index ({p},{q}) with nonzero coefficient")
        if p == 0 and q == 0:
            const = RatFun(coeff, reduce=False)
        else:
            terms[MomentSymbol(p, q)] = RatFun(coeff, reduce=False)
    return MomentExpr(params, terms, const)


# ---------------------------------------------------------------------------

_I, _J = "__i", "__j"


def recurrence(model: ModelSpec) -> dict:
    """Generic recurrence: offset (dp, dq) -> coefficient Poly in (i, j, params).

    i and j are kept as formal symbols so no binomial factor such as i(i-1)
    vanishes, which sampling small (i, j) would do.
    """
    table = (_I, _J) + model.params
    i = Poly.var(table, _I)
    j = Poly.var(table, _J)
    out: dict = {}
    for kind, ex, ey, c in _ito_terms(model):
        di, dj = _OFFSETS[kind]
        key = (ex + di, ey + dj)
        term = _multiplier(kind, i, j) * c.with_symbols(table)
        out[key] = out.get(key, Poly.constant(table, 0)) + term
    return {k: v for k, v in out.items() if not v.is_zero()}


def render_recurrence_coeff(poly: Poly) -> str:
    return str(poly).replace(_I, "i").replace(_J, "j")


@dataclass(frozen=True)
class Stencil:
    offsets: frozenset

    def grid(self) -> str:
        """Text grid: rows are dp (ascending), columns dq (ascending)."""
        if not self.offsets:
            return "(empty)"
        ps = [p for p, _ in self.offsets] + [0]
        qs = [q for _, q in self.offsets] + [0]
        rows = []
        for p in range(min(ps), max(ps) + 1):
            cells = []
            for q in range(min(qs), max(qs) + 1):
                if (p, q) in self.offsets:
                    cells.append(_cell_name(p, q))
                else:
                    cells.append("-")
            rows.append(cells)
        width = max(len(c) for r in rows for c in r)
        return "\n".join("  ".join(c.ljust(width) for c in r) for r in rows)

    def __contains__(self, item) -> bool:
        return tuple(item) in self.offsets

    def __iter__(self):
        return iter(sorted(self.offsets))

    def __len__(self):
        return len(self.offsets)


def _cell_name(p: int, q: int) -> str:
    def fmt(base, d):
        return base if d == 0 else f"{base}{d:+d}"

    return f"m[{fmt('i', p)},{fmt('j', q)}]"


def stencil(model: ModelSpec) -> Stencil:
    return Stencil(frozenset(recurrence(model)))


@dataclass(frozen=True)
class Applicability:
    applicable: bool
    reason: str | None = None
    notes: tuple = ()

    def __bool__(self) -> bool:
        return self.applicable


def check_applicability(model: ModelSpec) -> Applicability:
    """Every offset must have dq <= 0, or dq == +1 with dp <= -1."""
    try:
        st = stencil(model)
    except ValueError as exc:
        return Applicability(False, str(exc))
    bad = sorted(o for o in st.offsets if not (o[1] <= 0 or (o[1] == 1 and o[0] <= -1)))
    if bad:
        text = ", ".join(f"({p},{q:+d})" for p, q in bad)
        reason = f"stencil offset {text} violates q <= j or (q = j + 1 and p < i)"
        return Applicability(False, reason)
    notes = []
    if (-1, 1) not in st.offsets:
        notes.append("no (-1,+1) coupling offset: unobserved moments cannot be solved for")
    deep = sorted(o for o in st.offsets if o[1] == 1 and o[0] <= -2)
    if deep:
        text = ", ".join(f"({p},{q:+d})" for p, q in deep)
        notes.append(f"offset {text} couples moments within one j-level: solve iteratively, smallest i first")
    return Applicability(True, None, tuple(notes))


def moment_equations(model: ModelSpec, max_order: int) -> list:
    """All (symbol, rhs) pairs with 1 <= i + j <= max_order."""
    out = []
    for order in range(1, max_order + 1):
        for i in range(order, -1, -1):
            out.append((MomentSymbol(i, order - i), moment_ode(model, i, order - i)))
    return out


def closed_linear_system(model: ModelSpec, max_order: int, theta: Mapping[str, float]):
    """Numeric (M, c, index) with d/dt m = M m + c over moments of order <= max_order.

    Raises ValueError when the equations reference higher-order moments.
    """
    import numpy as np

    syms = [s for order in range(1, max_order + 1) for s in
            (MomentSymbol(i, order - i) for i in range(order, -1, -1))]
    index = {s: k for k, s in enumerate(syms)}
    n = len(syms)
    M = np.zeros((n, n))
    c = np.zeros(n)
    point = {k: Fraction(v) if not isinstance(v, float) else v for k, v in theta.items()}
    for s in syms:
        rhs = moment_ode(model, s.i, s.j)
        for t, coeff in rhs.terms.items():
            if t not in index:
                raise ValueError(f"moment system not closed at order {max_order}: {s} depends on {t}")
            M[index[s], index[t]] = float(_eval_float(coeff, point))
        c[index[s]] = float(_eval_float(rhs.constant, point))
    return M, c, syms


def _eval_float(coeff: RatFun, point) -> float:
    if all(isinstance(v, Fraction) for v in point.values()):
        return float(coeff.eval(point))
    return coeff.num.eval_float(point) / coeff.den.eval_float(point)
