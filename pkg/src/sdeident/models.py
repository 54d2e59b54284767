"""Textual SDE model definitions and the builtin model catalog.

A model file looks like::

    model ou2
    states: x observed, y
    params: a b c d e f p r s
    drift:
      x: -a*(x - e) - b*(y - f)
      y: -c*(x - e) - d*(y - f)
    diffusion:
      x: [p, 0]
      y: [r, s]

``diffusion_sq:`` may replace ``diffusion:`` and gives the noise covariance
G = g g^T entrywise (``x y: <expr>``); this is how square-root diffusion
terms such as chemical Langevin noise are written.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

from .parsing import ParseError, parse_poly, parse_poly_list
from .polynomial import Poly, render_poly


class ModelError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ModelSpec:
    name: str
    states: tuple          # ((symbol, observed), ...)
    params: tuple
    drift: tuple           # one Poly per state, over ``symbols``
    diffusion: tuple | None = None      # per-state rows of Polys (columns = Wiener components)
    diffusion_sq: tuple | None = None   # symmetric n x n matrix of Polys
    warnings: tuple = field(default=())

    @property
    def state_names(self) -> tuple:
        return tuple(s for s, _ in self.states)

    @property
    def observed(self) -> tuple:
        return tuple(s for s, o in self.states if o)

    @property
    def unobserved(self) -> tuple:
        return tuple(s for s, o in self.states if not o)

    @property
    def symbols(self) -> tuple:
        return self.state_names + self.params

    def noise_cov(self) -> tuple:
        """G = g g^T as a tuple of tuples of Polys."""
        if self.diffusion_sq is not None:
            return self.diffusion_sq
        rows = self.diffusion
        n = len(rows)
        zero = Poly.constant(self.symbols, 0)
        out = []
        for k in range(n):
            row = []
            for m in range(n):
                acc = zero
                for gk, gm in zip(rows[k], rows[m]):
                    if gk and gm:
                        acc = acc + gk * gm
                row.append(acc)
            out.append(tuple(row))
        return tuple(out)

    def drift_of(self, state: str) -> Poly:
        return self.drift[self.state_names.index(state)]

    def __eq__(self, other):
        if not isinstance(other, ModelSpec):
            return NotImplemented
        return (
            self.name == other.name
            and self.states == other.states
            and self.params == other.params
            and self.drift == other.drift
            and self.diffusion == other.diffusion
            and self.diffusion_sq == other.diffusion_sq
        )

    def __hash__(self):
        return hash((self.name, self.states, self.params))

    def render(self) -> str:
        return render_model(self)


# ---------------------------------------------------------------------------
# parsing

_SECTION_RE = re.compile(r"^(model|states|params|drift|diffusion|diffusion_sq)\b\s*:?\s*(.*)$")


def _strip_comment(line: str) -> str:
    k = line.find("#")
    return line if k < 0 else line[:k]


def parse_model(text: str) -> ModelSpec:
    """Parse model text into a validated :class:`ModelSpec`."""
    name = None
    states: list = []
    params: list = []
    sections: dict = {}
    current = None
    header_lines = {}

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw).rstrip()
        if not line.strip():
            continue
        indented = line[0].isspace()
        body = line.strip()
        col0 = len(line) - len(line.lstrip()) + 1
        m = _SECTION_RE.match(body) if not indented else None
        if m:
            key, rest = m.group(1), m.group(2).strip()
            if key in header_lines:
                raise ParseError(f"duplicate section {key!r}", lineno, col0)
            header_lines[key] = lineno
            if key == "model":
                if not rest or not re.fullmatch(r"[\w.\-()]+", rest):
                    raise ParseError("expected 'model <name>'", lineno, col0)
                name = rest
                current = None
            elif key == "states":
                states = _parse_states(rest, lineno, col0 + len(body) - len(rest))
                current = None
            elif key == "params":
                params = [p for p in re.split(r"[\s,]+", rest) if p]
                for p in params:
                    if not re.fullmatch(r"[^\W\d]\w*", p):
                        raise ParseError(f"invalid parameter name {p!r}", lineno, col0)
                current = None
            else:
                if rest:
                    raise ParseError(f"section {key!r} takes indented entries", lineno, col0)
                current = key
                sections[key] = []
            continue
        if current is None:
            raise ParseError(f"unexpected line {body!r}", lineno, col0)
        if ":" not in body:
            raise ParseError("expected '<state>: <expr>'", lineno, col0)
        head, expr = body.split(":", 1)
        sections[current].append((head.strip(), expr, lineno, col0 + len(head) + 1))

    if name is None:
        raise ParseError("missing 'model <name>' line", 1, 1)
    if not states:
        raise ParseError("missing 'states:' line", 1, 1)

    state_names = [s for s, _ in states]
    if len(set(state_names)) != len(state_names):
        dup = next(s for s in state_names if state_names.count(s) > 1)
        raise ModelError(f"duplicate state {dup!r}")
    if len(set(params)) != len(params):
        dup = next(p for p in params if params.count(p) > 1)
        raise ModelError(f"duplicate parameter {dup!r}")
    clash = set(state_names) & set(params)
    if clash:
        raise ModelError(f"symbols declared as both state and parameter: {sorted(clash)}")
    symbols = tuple(state_names) + tuple(params)

    if "drift" not in sections:
        raise ModelError("missing 'drift:' section")
    has_g = "diffusion" in sections
    has_gsq = "diffusion_sq" in sections
    if has_g == has_gsq:
        raise ModelError("exactly one of 'diffusion:' or 'diffusion_sq:' must be present")

    drift = {}
    for head, expr, lineno, col in sections["drift"]:
        if head not in state_names:
            raise ModelError(f"line {lineno}: drift entry for unknown state {head!r}")
        if head in drift:
            raise ModelError(f"line {lineno}: duplicate drift entry for {head!r}")
        drift[head] = parse_poly(expr, symbols, lineno, col)
    zero = Poly.constant(symbols, 0)
    drift_t = tuple(drift.get(s, zero) for s in state_names)

    diffusion = None
    diffusion_sq = None
    if has_g:
        rows = {}
        for head, expr, lineno, col in sections["diffusion"]:
            if head not in state_names:
                raise ModelError(f"line {lineno}: diffusion row for unknown state {head!r}")
            if head in rows:
                raise ModelError(f"line {lineno}: duplicate diffusion row for {head!r}")
            rows[head] = parse_poly_list(expr.strip(), symbols, lineno, col)
        widths = {len(r) for r in rows.values()}
        if len(widths) > 1:
            raise ModelError("diffusion rows have differing numbers of Wiener components")
        width = widths.pop() if widths else 1
        diffusion = tuple(tuple(rows.get(s, [zero] * width)) for s in state_names)
    else:
        n = len(state_names)
        mat = [[None] * n for _ in range(n)]
        for head, expr, lineno, col in sections["diffusion_sq"]:
            pair = head.split()
            if len(pair) != 2 or any(p not in state_names for p in pair):
                raise ModelError(f"line {lineno}: expected '<state> <state>: <expr>'")
            k, m = state_names.index(pair[0]), state_names.index(pair[1])
            value = parse_poly(expr, symbols, lineno, col)
            for u, v in ((k, m), (m, k)):
                if mat[u][v] is not None and mat[u][v] != value:
                    raise ModelError(f"line {lineno}: inconsistent symmetric entries for {pair}")
                mat[u][v] = value
        diffusion_sq = tuple(tuple(zero if v is None else v for v in row) for row in mat)

    warnings = []
    n_obs = sum(1 for _, o in states if o)
    if len(states) != 2 or n_obs != 1:
        warnings.append(
            f"{len(states)} states with {n_obs} observed: only the Ornstein-Uhlenbeck tools "
            "accept this model (elimination needs 2 states with exactly 1 observed)"
        )
    return ModelSpec(
        name=name,
        states=tuple(states),
        params=tuple(params),
        drift=drift_t,
        diffusion=diffusion,
        diffusion_sq=diffusion_sq,
        warnings=tuple(warnings),
    )


def _parse_states(rest: str, lineno: int, col: int) -> list:
    out = []
    for item in rest.split(","):
        words = item.replace("[", " ").replace("]", " ").split()
        if not words:
            raise ParseError("empty state entry", lineno, col)
        sym = words[0]
        if not re.fullmatch(r"[^\W\d]\w*", sym):
            raise ParseError(f"invalid state name {sym!r}", lineno, col)
        flags = words[1:]
        if any(f != "observed" for f in flags) or len(flags) > 1:
            raise ParseError(f"unknown state flag in {item.strip()!r}", lineno, col)
        out.append((sym, bool(flags)))
    return out


def load_model(path: str | Path) -> ModelSpec:
    return parse_model(Path(path).read_text(encoding="utf-8"))


def resolve_model(ref: str) -> ModelSpec:
    """``builtin:<id>`` or a path to a model file."""
    if ref.startswith("builtin:"):
        return builtin_model(ref[len("builtin:"):])
    return load_model(ref)


def render_model(model: ModelSpec) -> str:
    states = ", ".join(f"{s} observed" if o else s for s, o in model.states)
    lines = [f"model {model.name}", f"states: {states}", f"params: {' '.join(model.params)}", "drift:"]
    for s, f in zip(model.state_names, model.drift):
        lines.append(f"  {s}: {render_poly(f)}")
    if model.diffusion is not None:
        lines.append("diffusion:")
        for s, row in zip(model.state_names, model.diffusion):
            lines.append(f"  {s}: [{', '.join(render_poly(g) for g in row)}]")
    else:
        lines.append("diffusion_sq:")
        names = model.state_names
        for k in range(len(names)):
            for m in range(k, len(names)):
                g = model.diffusion_sq[k][m]
                if not g.is_zero():
                    lines.append(f"  {names[k]} {names[m]}: {render_poly(g)}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# builtin catalog

_BUILTINS = {
    "ou2": """
model ou2
states: x observed, y
params: a b c d e f p r s
drift:
  x: -a*(x - e) - b*(y - f)
  y: -c*(x - e) - d*(y - f)
diffusion:
  x: [p, 0]
  y: [r, s]
""",
    "geometric2": """
model geometric2
states: x observed, y
params: a b c d e f p r s
drift:
  x: -a*(x - e) - b*(y - f)
  y: -c*(x - e) - d*(y - f)
diffusion:
  x: [p*x, 0]
  y: [r*y, s*y]
""",
    "semilogistic": """
model semilogistic
states: x observed, y
params: a b c d e f p r s
drift:
  x: a*x*(1 - b*x) + c*y
  y: d*x*(1 - e*x) + f*y
diffusion:
  x: [p, 0]
  y: [r, s]
""",
    "lv_full": """
model lv_full
states: x observed, y
params: a b c d p s
drift:
  x: a*x + b*x*y
  y: c*y + d*x*y
diffusion:
  x: [p, 0]
  y: [0, s]
""",
    "lv_simple": """
model lv_simple
states: x observed, y
params: a b c d p s
drift:
  x: a*x + b*y
  y: c*y + d*x*y
diffusion:
  x: [p, 0]
  y: [0, s]
""",
    # chemical Langevin form of 2X <-> Y (alpha, beta), 0 <-> Y (gamma, delta), 0 <-> X (epsilon, zeta)
    "cle": """
model cle
states: x observed, y
params: alpha beta gamma delta epsilon zeta
drift:
  x: -x*(2*alpha*x + zeta) + 2*beta*y + epsilon
  y: alpha*x^2 - (beta + delta)*y + gamma
diffusion_sq:
  x x: 4*alpha*x^2 + 4*beta*y + epsilon + zeta*x^2
  x y: -2*alpha*x^2 - 2*beta*y
  y y: alpha*x^2 + beta*y + gamma + delta*y
""",
}

BUILTIN_IDS = ("ou2", "geometric2", "semilogistic", "lv_full", "lv_simple", "cle", "linear_unobs(n)")


def _linear_unobs_text(n: int) -> str:
    cs = [f"c{k}" for k in range(n + 1)]
    ds = [f"d{k}" for k in range(n + 1)]

    def poly(coeffs):
        parts = [coeffs[0]] + [f"{c}*x" if k == 1 else f"{c}*x^{k}" for k, c in enumerate(coeffs) if k]
        return " + ".join(parts)

    return f"""
model linear_unobs({n})
states: x observed, y
params: {' '.join(cs)} a {' '.join(ds)} b p r s
drift:
  x: {poly(cs)} + a*y
  y: {poly(ds)} + b*y
diffusion:
  x: [p, 0]
  y: [r, s]
"""


def builtin_model(model_id: str, n: int | None = None) -> ModelSpec:
    """Return a catalog model; ``linear_unobs`` takes its degree as ``n`` or ``linear_unobs(n)``."""
    m = re.fullmatch(r"linear_unobs(?:\((\d+)\)|:(\d+))?", model_id)
    if m:
        deg = m.group(1) or m.group(2)
        deg = int(deg) if deg is not None else n
        if deg is None or deg < 1:
            raise KeyError("linear_unobs needs a polynomial degree n >= 1")
        return parse_model(_linear_unobs_text(deg))
    try:
        return parse_model(_BUILTINS[model_id])
    except KeyError:
        raise KeyError(f"unknown builtin model {model_id!r}; known: {', '.join(BUILTIN_IDS)}") from None
