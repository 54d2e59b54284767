"""Hypothesis suites shared by the acceptance run.

Kept out of pytest's collection pattern so each suite runs once, from the
acceptance test.  Every suite bumps ``COUNTS`` per generated case.
"""
from collections import Counter
from fractions import Fraction
from functools import lru_cache

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from sdeident.elimination import Eliminator, resubstitution_residuals
from sdeident.models import builtin_model, parse_model
from sdeident.moments import MomentSymbol, closed_linear_system
from sdeident.polynomial import Poly, poly_gcd, divide_exact
from sdeident.simulation import SimConfig, default_theta, simulate

N_CASES = 1000
COUNTS = Counter()
SETTINGS = settings(max_examples=N_CASES, deadline=None, derandomize=True,
                    suppress_health_check=[HealthCheck.too_slow, HealthCheck.filter_too_much])

SYMS = ("u", "v", "w")
fractions = st.fractions(min_value=-6, max_value=6, max_denominator=6)
exps = st.tuples(*(st.integers(0, 3) for _ in SYMS))
polys = st.dictionaries(exps, fractions, max_size=5).map(lambda t: Poly(SYMS, t))


# ---------------------------------------------------------------------------
# ring axioms


@SETTINGS
@given(polys, polys, polys)
def ring_axioms(p, q, r):
    COUNTS["ring"] += 1
    zero, one = Poly.constant(SYMS, 0), Poly.constant(SYMS, 1)
    assert p + q == q + p
    assert p * q == q * p
    assert (p + q) + r == p + (q + r)
    assert (p * q) * r == p * (q * r)
    assert p * (q + r) == p * q + p * r
    assert p + zero == p and p * one == p
    assert (p - p).is_zero()
    assert all(c != 0 for c in (p * q).terms.values())
    # gcd divides both arguments; d/du respects the product rule
    if not (p.is_zero() and q.is_zero()):
        g = poly_gcd(p, q)
        if not p.is_zero():
            assert divide_exact(p, g) * g == p
        if not q.is_zero():
            assert divide_exact(q, g) * g == q
    # a common factor must survive into the gcd
    if not (p * r).is_zero() and not (q * r).is_zero():
        divide_exact(poly_gcd(p * r, q * r), r)
    assert (p * q).diff("u") == p.diff("u") * q + p * q.diff("u")
    point = {"u": Fraction(2, 3), "v": Fraction(-5, 2), "w": Fraction(7)}
    assert (p * q + r).eval(point) == p.eval(point) * q.eval(point) + r.eval(point)


# ---------------------------------------------------------------------------
# re-substitution identity on random applicable models

small = st.fractions(min_value=-4, max_value=4, max_denominator=5)


def _q(v: Fraction) -> str:
    return f"({v.numerator}/{v.denominator})"


@st.composite
def random_models(draw):
    c = [draw(small) for _ in range(3)]
    d = [draw(small) for _ in range(5)]
    g = [draw(small) for _ in range(4)]
    text = f"""model rnd
states: x observed, y
params: k
drift:
  x: {_q(c[0])} + {_q(c[1])}*x + {_q(c[2])}*x^2 + k*y
  y: {_q(d[0])} + {_q(d[1])}*x + {_q(d[2])}*x^2 + {_q(d[3])}*y + {_q(d[4])}*x*y
diffusion:
  x: [{_q(g[0])} + {_q(g[1])}*x, 0]
  y: [{_q(g[2])}, {_q(g[3])}]
"""
    return parse_model(text)


@SETTINGS
@given(random_models())
def resubstitution_identity(model):
    COUNTS["resubstitution"] += 1
    elim = Eliminator(model)
    elim.nse(1)
    elim.nse(2)
    residuals = resubstitution_residuals(elim)
    assert residuals
    for key, r in residuals.items():
        assert r.is_zero(), key


# ---------------------------------------------------------------------------
# NSE numeric residual on closed models


@lru_cache(maxsize=None)
def _closed_nses(model_id: str):
    model = builtin_model(model_id)
    elim = Eliminator(model)
    return model, [elim.nse(1), elim.nse(2)]


def _derivatives(model, theta, x0, y0, t, max_order, max_deriv):
    Mx, c, syms = closed_linear_system(model, max_order, theta)
    n = len(syms)
    aug = np.zeros((n + 1, n + 1))
    aug[:n, :n], aug[:n, n] = Mx, c
    v = np.zeros(n + 1)
    for k, s in enumerate(syms):
        v[k] = x0 ** s.i * y0 ** s.j
    v[n] = 1.0
    v = expm(aug * t) @ v
    out = {}
    cur = v
    for d in range(max_deriv + 1):
        for k, s in enumerate(syms):
            out[MomentSymbol(s.i, s.j, d)] = cur[k]
        cur = aug @ cur
    return out


coef = st.floats(min_value=0.2, max_value=1.5)


@st.composite
def closed_cases(draw):
    model_id = draw(st.sampled_from(["ou2", "geometric2"]))
    theta = {k: draw(coef) * draw(st.sampled_from([-1.0, 1.0])) for k in "bcefprs"}
    theta["a"], theta["d"] = draw(coef) + 0.5, draw(coef) + 0.5
    x0, y0 = draw(st.floats(-2, 2)), draw(st.floats(-2, 2))
    t = draw(st.floats(0.0, 2.0))
    order = draw(st.sampled_from([1, 2]))
    return model_id, theta, x0, y0, t, order


@SETTINGS
@given(closed_cases())
def nse_numeric_residual(case):
    COUNTS["nse_residual"] += 1
    model_id, theta, x0, y0, t, order = case
    model, nses = _closed_nses(model_id)
    nse = nses[order - 1]
    max_deriv = max(s.deriv for s in nse.expr.terms)
    vals = _derivatives(model, theta, x0, y0, t, order, max_deriv)
    terms = [c.num.eval_float(theta) / c.den.eval_float(theta) * vals[s] for s, c in nse.expr.terms.items()]
    terms.append(nse.expr.constant.num.eval_float(theta) / nse.expr.constant.den.eval_float(theta))
    scale = max(1.0, sum(abs(v) for v in terms))
    assert abs(sum(terms)) / scale <= 1e-8


# ---------------------------------------------------------------------------
# seed determinism across worker counts


@SETTINGS
@given(st.integers(0, 2 ** 31 - 1), st.integers(1, 60), st.integers(1, 25), st.integers(2, 6),
       st.sampled_from(["ou2", "cle", "semilogistic"]))
def seed_determinism(seed, n_paths, chunk, workers, model_id):
    import os

    COUNTS["determinism"] += 1
    model = builtin_model(model_id)
    theta = default_theta(model_id, seed % 7)
    cfg = SimConfig(dt=0.05, T=0.5, n_paths=n_paths, seed=seed, n_record=3, chunk=chunk, block=4)
    old = os.environ.get("IDENT_THREADS")
    try:
        os.environ["IDENT_THREADS"] = "1"
        a = simulate(model, theta, cfg)
        os.environ["IDENT_THREADS"] = str(workers)
        b = simulate(model, theta, cfg)
    finally:
        if old is None:
            os.environ.pop("IDENT_THREADS", None)
        else:
            os.environ["IDENT_THREADS"] = old
    assert np.array_equal(a.x, b.x) and np.array_equal(a.y, b.y)
    assert a.clamped == b.clamped


SUITES = {
    "ring axioms": (ring_axioms, "ring"),
    "re-substitution identity": (resubstitution_identity, "resubstitution"),
    "NSE numeric residual <= 1e-8 on closed models": (nse_numeric_residual, "nse_residual"),
    "seed determinism": (seed_determinism, "determinism"),
}
