"""Exact structural identifiability of partially observed polynomial SDEs
through moment recurrences, plus simulation-based checks."""

__version__ = "0.1.0"

from .polynomial import Poly, RatFun, poly_arith, poly_diff, poly_eval, poly_gcd, poly_lcm  # noqa: F401
from .parsing import ParseError, parse_expression, parse_poly  # noqa: F401
from .models import ModelSpec, builtin_model, load_model, parse_model, resolve_model  # noqa: F401
from .moments import MomentExpr, MomentSymbol, check_applicability, moment_ode, recurrence, stencil  # noqa: F401
from .elimination import NSE, CannotSolve, Eliminator, NotApplicable, derive_nse  # noqa: F401
from .identifiability import (  # noqa: F401
    IdentSet,
    analyze,
    extract_combos,
    jacobian_rank,
    known_results,
    reduce_combos,
    same_information,
)
