"""Shared test utilities."""
from sdeident.moments import MomentSymbol, pivot_key
from sdeident.polynomial import RatFun


def nse_table(text_terms, params):
    """{MomentSymbol or 1: RatFun} from a list of (coefficient text, (i, j, deriv) or None)."""
    out = {}
    for coeff, key in text_terms:
        k = 1 if key is None else MomentSymbol(*key)
        out[k] = RatFun.parse(coeff, params)
    return out


def monic_table(expr):
    """Coefficients of a MomentExpr divided by the pivot coefficient."""
    pivot = max(expr.terms, key=pivot_key)
    lead = expr.terms[pivot]
    out = {s: c / lead for s, c in expr.terms.items()}
    if not expr.constant.is_zero():
        out[1] = expr.constant / lead
    return out


def monic_of(table):
    pivot = max((k for k in table if k != 1), key=pivot_key)
    lead = table[pivot]
    return {k: v / lead for k, v in table.items()}


def symbolic_rank(combos, params):
    """Generic Jacobian rank from symbolic minors: the largest k with a k x k minor
    that is not identically zero.  Independent of the numeric elimination route."""
    from itertools import combinations

    from sdeident.polynomial import as_ratfun, symbol_union

    table = symbol_union(*[as_ratfun(c).symbols for c in combos], tuple(params))
    J = [[as_ratfun(c).with_symbols(table).diff(p) for p in params] for c in combos]

    def det(rows, cols):
        if len(rows) == 1:
            return J[rows[0]][cols[0]]
        total = None
        for k, c in enumerate(cols):
            entry = J[rows[0]][c]
            if entry.is_zero():
                continue
            term = entry * det(rows[1:], cols[:k] + cols[k + 1:])
            term = term if k % 2 == 0 else -term
            total = term if total is None else total + term
        return total if total is not None else J[rows[0]][cols[0]] * 0

    best = 0
    for k in range(1, min(len(combos), len(params)) + 1):
        if any(not det(list(r), list(c)).is_zero()
               for r in combinations(range(len(combos)), k)
               for c in combinations(range(len(params)), k)):
            best = k
        else:
            break
    return best
