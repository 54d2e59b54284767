"""Elimination of unobserved moments and construction of necessarily
satisfied equations (NSEs) in the observed moments m[i,0] and their derivatives.

Each unobserved moment m[p,q] (q >= 1) is solved from the equation for
m[p+1,q-1]', where it enters through the (-1,+1) stencil offset.  Solutions
are reduced recursively (q descending, then p descending) until only observed
moments remain; an NSE of order k is then d/dt m[0,k] minus its governing
right-hand side, both written in observed moments.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import gcd, lcm as ilcm

from .models import ModelSpec
from .moments import MomentExpr, MomentSymbol, check_applicability, moment_ode, pivot_key
from .polynomial import Poly, RatFun, divide_exact, poly_gcd, poly_lcm


class CannotSolve(ArithmeticError):
    pass


class NotApplicable(ValueError):
    pass


@dataclass(frozen=True)
class SolvedMoment:
    target: MomentSymbol
    source: MomentSymbol          # m[p+1,q-1]: the equation it was solved from
    expr: MomentExpr              # before reduction to observed moments
    divisor: RatFun               # coefficient of target in the source equation


@dataclass(frozen=True)
class NSE:
    order: int
    expr: MomentExpr
    conditions: tuple = ()        # Polys assumed nonzero
    provenance: tuple = ()        # ((target, source), ...) in elimination order
    warnings: tuple = ()

    def __str__(self) -> str:
        return f"0 = {self.expr}"

    def text(self) -> str:
        return str(self)


def solve_for(source: MomentSymbol, rhs: MomentExpr, target: MomentSymbol) -> SolvedMoment:
    """Solve ``source' = rhs`` for ``target``: (source' - rest) / coeff."""
    coeff = rhs.coefficient(target)
    if coeff.is_zero():
        raise CannotSolve(f"{target} does not appear in the equation for {source}'")
    lhs = MomentExpr.of(rhs.symbols, source.derivative())
    expr = (lhs - rhs.without(target)).scale(coeff.inverse())
    return SolvedMoment(target, source, expr, coeff)


class Eliminator:
    """Memoised elimination for one model; reuse it across NSE orders."""

    def __init__(self, model: ModelSpec, check: bool = True):
        if check:
            verdict = check_applicability(model)
            if not verdict:
                raise NotApplicable(verdict.reason)
        self.model = model
        self.params = model.params
        self._ode: dict = {}
        self._solved: dict = {}       # (p, q) -> SolvedMoment
        self._reduced: dict = {}      # (p, q) -> MomentExpr in observed moments
        self._active: set = set()
        self.provenance: list = []
        self.conditions: list = []

    def ode(self, i: int, j: int) -> MomentExpr:
        key = (i, j)
        if key not in self._ode:
            self._ode[key] = moment_ode(self.model, i, j)
        return self._ode[key]

    def solved(self) -> dict:
        return dict(self._solved)

    def observed_form(self, sym: MomentSymbol) -> MomentExpr:
        """``sym`` (any derivative order) written in observed moments only."""
        if sym.j == 0:
            return MomentExpr.of(self.params, sym)
        return self._reduce(sym.i, sym.j).derivative(sym.deriv)

    def _reduce(self, p: int, q: int) -> MomentExpr:
        key = (p, q)
        if key in self._reduced:
            return self._reduced[key]
        if key in self._active:
            raise CannotSolve(f"cyclic dependency while eliminating m[{p},{q}]")
        self._active.add(key)
        try:
            source = MomentSymbol(p + 1, q - 1)
            sol = solve_for(source, self.ode(p + 1, q - 1), MomentSymbol(p, q))
            self._solved[key] = sol
            self.provenance.append((sol.target, source))
            self._add_condition(sol.divisor)
            expr = self.substitute_unobserved(sol.expr)
        finally:
            self._active.discard(key)
        self._reduced[key] = expr
        return expr

    def substitute_unobserved(self, expr: MomentExpr) -> MomentExpr:
        """Replace every unobserved symbol, highest (j, i) first."""
        pending = sorted((s for s in expr.terms if s.j > 0), key=lambda s: (s.j, s.i, s.deriv), reverse=True)
        out = expr
        for s in pending:
            out = out.substitute(s, self.observed_form(s))
        return out

    def _add_condition(self, divisor: RatFun) -> None:
        for poly in (divisor.num,):
            if poly.is_constant():
                continue
            norm = poly.primitive()
            if norm not in self.conditions:
                self.conditions.append(norm)

    def raw_nse(self, order: int) -> MomentExpr:
        """Unnormalised NSE (RatFun coefficients) of the given order."""
        if order < 1:
            raise ValueError("NSE order must be >= 1")
        head = MomentSymbol(0, order)
        lhs = self.observed_form(head.derivative())
        rhs = self.substitute_unobserved(self.ode(0, order))
        return lhs - rhs

    def nse(self, order: int) -> NSE:
        raw = self.raw_nse(order)
        if raw.is_zero():
            raise CannotSolve(f"order-{order} equation vanishes identically (degenerate model)")
        expr, _, warnings = clear_denominators(raw)
        needed = _needed_targets(self, MomentSymbol(0, order))
        used = [sol for key, sol in self._solved.items() if key in needed]
        used.sort(key=lambda sol: (sol.target.j, sol.target.i), reverse=True)
        conds = []
        for sol in used:
            if not sol.divisor.num.is_constant():
                c = sol.divisor.num.primitive()
                if c not in conds:
                    conds.append(c)
        prov = tuple((sol.target, sol.source) for sol in used)
        return NSE(order, expr, tuple(conds), prov, tuple(warnings))


def _needed_targets(elim: Eliminator, head: MomentSymbol) -> set:
    needed = set()
    stack = [(head.i, head.j)] + [(s.i, s.j) for s in elim.ode(head.i, head.j).terms if s.j > 0]
    while stack:
        key = stack.pop()
        if key in needed:
            continue
        needed.add(key)
        sol = elim._solved.get(key)
        if sol is not None:
            stack.extend((s.i, s.j) for s in sol.expr.terms if s.j > 0)
    return needed


def clear_denominators(expr: MomentExpr):
    """Multiply through by the LCM of denominators and strip common content.

    Returns (expr with polynomial coefficients, lcm, warnings).  The result is
    integer-primitive with the pivot coefficient's leading coefficient positive.
    """
    symbols = expr.symbols
    lcm = Poly.constant(symbols, 1)
    for c in list(expr.terms.values()) + [expr.constant]:
        if not c.den.is_constant():
            lcm = poly_lcm(lcm, c.den)
    polys = {s: c.num * divide_exact(lcm, c.den) for s, c in expr.terms.items()}
    const = expr.constant.num * divide_exact(lcm, expr.constant.den)
    everything = list(polys.values()) + ([const] if not const.is_zero() else [])
    # smallest first so monomials short-circuit the running gcd
    everything.sort(key=lambda p: len(p.terms))
    g = everything[0]
    for p in everything[1:]:
        if g.is_constant():
            break
        g = poly_gcd(g, p)
    # g is monic, so after dividing what remains is a rational scale
    polys = {s: divide_exact(p, g) for s, p in polys.items()}
    const = divide_exact(const, g)
    everything = list(polys.values()) + ([const] if not const.is_zero() else [])
    num = den = 0
    for p in everything:
        c = p.rational_content()
        num = gcd(num, c.numerator)
        den = c.denominator if den == 0 else ilcm(den, c.denominator)
    factor = Fraction(den, num)
    pivot = max(polys, key=pivot_key)
    if polys[pivot].leading_coefficient() < 0:
        factor = -factor
    out = MomentExpr(
        symbols,
        {s: RatFun(p * factor, reduce=False) for s, p in polys.items()},
        RatFun(const * factor, reduce=False),
    )
    warnings = []
    if not lcm.is_constant():
        for s, p in polys.items():
            if not poly_gcd(lcm, p).is_constant():
                warnings.append(f"cleared denominator {lcm} shares a factor with the coefficient of {s}")
    return out, lcm, warnings


def derive_nse(model: ModelSpec, order: int, eliminator: Eliminator | None = None) -> NSE:
    elim = eliminator or Eliminator(model)
    return elim.nse(order)


def resubstitution_residuals(elim: Eliminator) -> dict:
    """For every solved moment, its source equation with all unobserved
    moments replaced by their observed forms; each value must be zero."""
    out = {}
    for key, sol in elim.solved().items():
        src = sol.source
        lhs = elim.observed_form(src.derivative())
        rhs = elim.substitute_unobserved(elim.ode(src.i, src.j))
        out[key] = lhs - rhs
    return out
