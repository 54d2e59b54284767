"""Identifiable parameter combinations from NSEs, heuristic reduction, and
numeric (exact-rational) Jacobian rank certificates."""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from .elimination import NSE, Eliminator
from .models import ModelSpec, builtin_model
from .moments import pivot_key
from .parsing import parse_expression
from .polynomial import NotDivisible, Poly, RatFun, as_ratfun, divide_exact, symbol_union


class DegenerateNSE(ValueError):
    pass


@dataclass
class IdentSet:
    combos: list                          # RatFuns over `params`
    params: tuple
    source_orders: list = field(default_factory=list)
    rank: int = 0
    rank_points: list = field(default_factory=list)
    reduced: bool = False
    notes: list = field(default_factory=list)
    labels: list = field(default_factory=list)   # display text, when it differs from str(combo)

    def texts(self) -> list:
        return [str(c) for c in self.combos]


# ---------------------------------------------------------------------------
# normalisation helpers


def normalize_combo(r) -> RatFun:
    """Canonical representative up to a nonzero rational factor."""
    r = as_ratfun(r)
    if r.is_zero():
        return r
    return RatFun(r.num.primitive(), r.den, reduce=False)


def _dedupe(combos: Iterable[RatFun]) -> list:
    out = []
    for c in combos:
        c = normalize_combo(c)
        if c.is_constant() or c in out:
            continue
        out.append(c)
    return out


def _common_table(combos: Sequence, params: Sequence[str] | None) -> tuple:
    tables = [c.symbols for c in combos]
    if params is not None:
        tables.append(tuple(params))
    return symbol_union(*tables)


# ---------------------------------------------------------------------------
# extraction


def extract_combos(nse: NSE, pivot=None) -> list:
    """Divide the NSE by the pivot coefficient and return the other coefficients.

    The pivot defaults to the highest-derivative, highest-order observed moment.
    Constant-valued coefficients carry no information and are dropped; the
    constant term of the NSE is included.
    """
    expr = nse.expr
    nonzero = [s for s, c in expr.terms.items() if not c.is_zero()]
    n_terms = len(nonzero) + (0 if expr.constant.is_zero() else 1)
    if n_terms < 2:
        raise DegenerateNSE(f"order-{nse.order} equation has a single term; nothing to normalise against")
    if pivot is None:
        pivot = max(nonzero, key=pivot_key)
    lead = expr.terms[pivot]
    others = sorted((s for s in nonzero if s != pivot), key=pivot_key, reverse=True)
    coeffs = [expr.terms[s] / lead for s in others]
    if not expr.constant.is_zero():
        coeffs.append(expr.constant / lead)
    return _dedupe(coeffs)


# ---------------------------------------------------------------------------
# rank certificates


def _rank(rows: list) -> int:
    m = [list(r) for r in rows]
    rank = 0
    ncols = len(m[0]) if m else 0
    for col in range(ncols):
        piv = next((r for r in range(rank, len(m)) if m[r][col] != 0), None)
        if piv is None:
            continue
        m[rank], m[piv] = m[piv], m[rank]
        pv = m[rank][col]
        for r in range(rank + 1, len(m)):
            f = m[r][col]
            if f:
                f /= pv
                m[r] = [x - f * y for x, y in zip(m[r], m[rank])]
        rank += 1
        if rank == len(m):
            break
    return rank


def random_points(params: Sequence[str], trials: int, seed: int) -> list:
    rng = random.Random(seed)
    points = []
    for _ in range(trials):
        pt = {}
        for s in params:
            num = 0
            while num == 0:
                num = rng.randint(-97, 97)
            pt[s] = Fraction(num, rng.randint(1, 13))
        points.append(pt)
    return points


class _Jacobian:
    def __init__(self, combos: Sequence, params: Sequence[str]):
        table = _common_table(combos, params)
        self.params = tuple(params)
        self.entries = [[as_ratfun(c).with_symbols(table).diff(p) for p in self.params] for c in combos]
        self.table = table

    def at(self, point) -> list:
        full = {s: point.get(s, Fraction(1)) for s in self.table}
        return [[e.eval(full) for e in row] for row in self.entries]


def _points_for(jacs: Sequence[_Jacobian], params, trials: int, seed: int) -> list:
    """Random points avoiding poles of every Jacobian entry."""
    rng_seed = seed
    points = []
    attempts = 0
    while len(points) < trials:
        if attempts > 100 * trials:
            raise RuntimeError("could not find evaluation points avoiding poles")
        cand = random_points(params, 1, rng_seed + 7919 * attempts)[0]
        attempts += 1
        try:
            mats = [j.at(cand) for j in jacs]
        except ZeroDivisionError:
            continue
        points.append((cand, mats))
    return points


def _params_of(combos: Sequence, params) -> tuple:
    if params is not None:
        return tuple(params)
    used = []
    for c in combos:
        for s in as_ratfun(c).used_symbols():
            if s not in used:
                used.append(s)
    return tuple(used)


def jacobian_rank(combos: Sequence, params: Sequence[str] | None = None, trials: int = 3, seed: int = 0,
                  return_points: bool = False):
    """Generic rank of d(combos)/d(params): max over exact evaluations at random rationals."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    params = _params_of(combos, params)
    if not combos or not params:
        return (0, []) if return_points else 0
    jac = _Jacobian(combos, params)
    pts = _points_for([jac], params, trials, seed)
    rank = max(_rank(mats[0]) for _, mats in pts)
    if return_points:
        return rank, [pt for pt, _ in pts]
    return rank


def same_information(set_a: Sequence, set_b: Sequence, params: Sequence[str] | None = None,
                     trials: int = 5, seed: int = 0) -> bool:
    """rank(J_A) = rank(J_B) = rank([J_A; J_B]) at every sampled point."""
    params = _params_of(list(set_a) + list(set_b), params)
    if not params:
        return True
    ja, jb = _Jacobian(set_a, params), _Jacobian(set_b, params)
    for _, (ma, mb) in _points_for([ja, jb], params, trials, seed):
        ra, rb, rab = _rank(ma), _rank(mb), _rank(ma + mb)
        if not (ra == rb == rab):
            return False
    return True


# ---------------------------------------------------------------------------
# reduction


def _known_symbols(combos: Sequence[RatFun]) -> dict:
    """symbol -> k for combos that are (a multiple of) a single symbol power s^k."""
    known = {}
    for c in combos:
        if not c.is_poly():
            continue
        p = c.as_poly()
        if not p.is_monomial():
            continue
        (e,) = p.terms
        nz = [(k, v) for k, v in enumerate(e) if v]
        if len(nz) == 1:
            k, v = nz[0]
            name = p.symbols[k]
            known[name] = min(v, known.get(name, v))
    return known


def _is_known_monomial(symbols, exps, known: dict) -> bool:
    for s, v in zip(symbols, exps):
        if v and (s not in known or v % known[s]):
            return False
    return True


def _simplify_one(c: RatFun, others: list, known: dict):
    """One sound simplification of c given the rest of the set, or None."""
    num, den = c.num, c.den
    syms = c.symbols
    # strip a factor that is a monomial in known symbols
    if known and len(num.terms) > 0:
        content = [min(e[k] for e in num.terms) for k in range(len(syms))]
        strip = [0] * len(syms)
        for k, s in enumerate(syms):
            if s in known and content[k] >= known[s]:
                strip[k] = content[k] - content[k] % known[s]
        if any(strip) and not (num.is_monomial() and sum(1 for v in content if v) == 1):
            mono = Poly._raw(syms, {tuple(strip): Fraction(1)})
            reduced = RatFun(divide_exact(num, mono), den)
            if not reduced.is_constant():
                return reduced
    # drop terms built only from known symbols
    if known and c.is_poly() and len(num.terms) > 1:
        keep = {e: v for e, v in num.terms.items() if not _is_known_monomial(syms, e, known)}
        if not keep:
            return "drop"
        if len(keep) < len(num.terms):
            cand = Poly._raw(syms, keep)
            if not cand.is_constant():
                return RatFun(cand, den, reduce=False)
    # a denominator that is another combo (or known) can be multiplied away
    if not den.is_constant():
        dnorm = normalize_combo(RatFun(den, reduce=False))
        if dnorm in others or (den.is_monomial() and _is_known_monomial(syms, next(iter(den.terms)), known)):
            cand = RatFun(num, reduce=False)
            if not cand.is_constant():
                return cand
    # exact division of the numerator by another polynomial combo
    for o in others:
        if not o.is_poly() or o.is_constant():
            continue
        op = o.as_poly()
        if op.degree() > num.degree():
            continue
        try:
            q = divide_exact(num, op)
        except NotDivisible:
            continue
        if q.is_constant():
            return "drop"
        return RatFun(q, den)
    # subtract rational multiples of linear combos
    if c.is_poly() and num.degree() > 1:
        for o in others:
            if not o.is_poly() or o.num.degree() != 1:
                continue
            op = o.as_poly()
            lm, lc = op.leading_term()
            if lm in num.terms:
                cand = num - op * (num.terms[lm] / lc)
                if len(cand.terms) <= len(num.terms) and not cand.is_constant():
                    return RatFun(cand, reduce=False)
    if c.is_poly():
        red = _subalgebra_reduce(c.as_poly(), others)
        if red is not None:
            if red.is_constant():
                return "drop"
            if len(red.terms) <= len(num.terms):
                return RatFun(red, reduce=False)
    return None


def _find_product(target: tuple, gens: list, depth: int = 4):
    """A product of generators whose leading monomials multiply to ``target``."""
    if not any(target):
        return []
    if depth == 0:
        return None
    for k, (lm, _) in enumerate(gens):
        if all(t >= e for t, e in zip(target, lm)):
            rest = tuple(t - e for t, e in zip(target, lm))
            sub = _find_product(rest, gens[k:], depth - 1)
            if sub is not None:
                return [k] + [k + j for j in sub]
    return None


def _subalgebra_reduce(p: Poly, others: list, max_steps: int = 40) -> Poly | None:
    """Cancel leading terms of p with products of other combos (stays in the generated algebra)."""
    gens = []
    for o in others:
        if o.is_poly() and not o.is_constant():
            op = o.as_poly()
            gens.append((op.leading_term()[0], op))
    if not gens:
        return None
    gens.sort(key=lambda g: _grlex(g[0]), reverse=True)
    r = p
    changed = False
    for _ in range(max_steps):
        if r.is_constant():
            break
        lm, lc = r.leading_term()
        picks = _find_product(lm, gens)
        if picks is None:
            break
        prod = Poly.constant(p.symbols, 1)
        for k in picks:
            prod = prod * gens[k][1]
        r = r - prod * (lc / prod.leading_coefficient())
        changed = True
    return r if changed else None


def _grlex(e: tuple) -> tuple:
    return (sum(e), e)


def _linear_rref(combos: list) -> list | None:
    """Q-linear echelon form of the degree-1 combos; None when nothing to gain."""
    polys = [c for c in combos if c.is_poly() and c.num.degree() == 1]
    if len(polys) < 2:
        return None
    monos = sorted({e for c in polys for e in c.num.terms}, key=lambda e: (sum(e), e), reverse=True)
    idx = {e: k for k, e in enumerate(monos)}
    rows = []
    for c in polys:
        row = [Fraction(0)] * len(monos)
        for e, v in c.as_poly().terms.items():
            row[idx[e]] = v
        rows.append(row)
    # reduced row echelon form
    lead = 0
    r = 0
    for col in range(len(monos)):
        piv = next((k for k in range(r, len(rows)) if rows[k][col] != 0), None)
        if piv is None:
            continue
        rows[r], rows[piv] = rows[piv], rows[r]
        pv = rows[r][col]
        rows[r] = [x / pv for x in rows[r]]
        for k in range(len(rows)):
            if k != r and rows[k][col] != 0:
                f = rows[k][col]
                rows[k] = [x - f * y for x, y in zip(rows[k], rows[r])]
        r += 1
        lead += 1
    syms = polys[0].symbols
    new = []
    for row in rows[:r]:
        terms = {monos[k]: v for k, v in enumerate(row) if v}
        new.append(RatFun(Poly._raw(syms, terms), reduce=False))
    new = _dedupe(new)
    size_old = sum(len(c.num.terms) for c in polys)
    size_new = sum(len(c.num.terms) for c in new)
    if size_new >= size_old:
        return None
    rest = [c for c in combos if not any(c is q for q in polys)]
    return new + rest


def reduce_combos(combos: Sequence, params: Sequence[str] | None = None, trials: int = 3, seed: int = 0) -> list:
    """Best-effort smaller generating set; every accepted step keeps the Jacobian rank."""
    combos = list(combos)
    if not combos:
        return []
    table = _common_table([as_ratfun(c) for c in combos], params)
    cur = _dedupe(as_ratfun(c).with_symbols(table) for c in combos)
    params = _params_of(cur, params)
    target = jacobian_rank(cur, params, trials, seed)

    def accept(candidate):
        return jacobian_rank(candidate, params, trials, seed) == target

    changed = True
    while changed:
        changed = False
        known = _known_symbols(cur)
        by_size = sorted(range(len(cur)), key=lambda k: (cur[k].num.degree(), len(cur[k].num.terms)))
        for i in by_size:
            c = cur[i]
            others = cur[:i] + cur[i + 1:]
            step = _simplify_one(c, others, known)
            if step is None:
                continue
            if step == "drop":
                cand = others
            else:
                cand = _dedupe(cur[:i] + [step] + cur[i + 1:])
            if cand != cur and accept(cand):
                cur = cand
                changed = True
                break
        if not changed:
            lin = _linear_rref(cur)
            if lin is not None and lin != cur and accept(lin):
                cur = lin
                changed = True
    assert jacobian_rank(cur, params, trials, seed) == target
    return cur


# ---------------------------------------------------------------------------
# catalog of published sets

_OU = "a b c d e f p r s"

_KNOWN = {
    ("ou2", "stationary"): (_OU, ["a + d", "a*d - b*c", "e", "p", "(d*p - b*r)^2 + b^2*s^2"]),
    ("ou2", "constant_ic"): (
        _OU + " x0 y0",
        ["a + d", "a*d - b*c", "e", "p", "d*p - b*r", "b^2*s^2", "d*(x0 - e) + b*(y0 - f)"],
    ),
    ("ou2", "perturbed_ic"): (_OU, ["a", "b*c", "d", "e", "p", "(d*p - b*r)^2 + b^2*s^2"]),
    ("ou2", "independent_xy"): (
        _OU,
        ["a + d", "a*d - b*c", "e", "f", "p", "r^2 + s^2", "(c*p - a*r)^2 + a^2*s^2", "(d*p - b*r)^2 + b^2*s^2"],
    ),
    ("geometric2", "default"): (_OU, ["a", "d", "b*c", "b*f", "e", "p*r", "r^2", "s^2"]),
    ("semilogistic", "default"): (
        _OU,
        ["a*b", "a + f", "a*f - c*d", "a*b*f - c*d*e", "p", "c^2", "(f*p - c*r)^2 + c^2*s^2"],
    ),
    ("lv_simple", "default"): ("a b c d p s", ["a", "c", "d", "p^2", "b^2*s^2"]),
    ("cle", "default"): (
        "alpha beta gamma delta epsilon zeta",
        ["alpha", "delta", "beta + zeta", "(beta + delta)*zeta", "2*beta*gamma + (beta + delta)*epsilon",
         "4*epsilon + 3*zeta"],
    ),
}

KNOWN_PAIRS = tuple(_KNOWN)


def regimes(model_id: str) -> list:
    return [r for (m, r) in _KNOWN if m == model_id]


def known_results(model_id: str, regime: str = "default", trials: int = 3, seed: int = 0) -> IdentSet:
    if regime is None:
        regime = "default"
    key = (model_id, regime)
    if key not in _KNOWN:
        options = ", ".join(f"{m}/{r}" for m, r in _KNOWN)
        raise KeyError(f"no published set for {model_id}/{regime}; known: {options}")
    params, texts = _KNOWN[key]
    params = tuple(params.split())
    combos = [parse_expression(t, params) for t in texts]
    rank, pts = jacobian_rank(combos, params, trials, seed, return_points=True)
    return IdentSet(combos, params, [], rank, pts, reduced=False, labels=list(texts))


# ---------------------------------------------------------------------------
# full analysis


@dataclass
class OrderResult:
    order: int
    nse: NSE
    combos: list


@dataclass
class Analysis:
    model: ModelSpec
    orders: list
    raw: list                   # all extracted combos, deduplicated
    ident: IdentSet
    conditions: list
    warnings: list


def analyze(model: ModelSpec, max_order: int = 3, seed: int = 0, trials: int = 3,
            reduce: bool = True) -> Analysis:
    """NSEs up to ``max_order``, their combos, and the reduced set with its rank."""
    if max_order < 1:
        raise ValueError("max_order must be >= 1")
    elim = Eliminator(model)
    orders = []
    raw: list = []
    source: list = []
    conditions: list = []
    warnings: list = []
    for k in range(1, max_order + 1):
        nse = elim.nse(k)
        combos = extract_combos(nse)
        orders.append(OrderResult(k, nse, combos))
        for c in combos:
            if c not in raw:
                raw.append(c)
                source.append(k)
        for c in nse.conditions:
            if c not in conditions:
                conditions.append(c)
        warnings.extend(nse.warnings)
    params = model.params
    combos = reduce_combos(raw, params, trials, seed) if reduce else list(raw)
    rank, pts = jacobian_rank(combos, params, trials, seed, return_points=True)
    notes = [f"exhaustiveness not guaranteed: only NSE orders 1..{max_order} were examined",
             "rank certifies local identifiability only"]
    if reduce:
        notes.append("reduced: heuristic")
    ident = IdentSet(combos, params, sorted(set(source)), rank, pts, reduced=reduce, notes=notes)
    return Analysis(model, orders, raw, ident, conditions, warnings)


def compare_with_known(result: Analysis, model_id: str, regime: str = "default", trials: int = 5,
                       seed: int = 0) -> dict:
    ref = known_results(model_id, regime)
    table = symbol_union(result.model.params, ref.params)
    ours = [c.with_symbols(table) for c in result.ident.combos]
    theirs = [c.with_symbols(table) for c in ref.combos]
    same = same_information(ours, theirs, table, trials, seed)
    return {"model": model_id, "regime": regime, "published": ref.texts(), "same_information": same}


def analyze_builtin(model_id: str, **kw) -> Analysis:
    return analyze(builtin_model(model_id), **kw)
