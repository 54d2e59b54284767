"""Euler-Maruyama ensembles, moment and autocovariance estimators, matched
parameter pairs and indistinguishability reports for two-state models."""
from __future__ import annotations

import math
import os
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .identifiability import known_results
from .models import ModelSpec, builtin_model
from .ou import OUSystem, conditional_init, ou_from_model, stationary_cov
from .polynomial import Poly

Z_THRESHOLD = 4.0
CLAMP_LIMIT = 1e-3


class NoMatchedPair(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class Init:
    """Initial law.

    kinds: ``point`` (x0, y0 fixed), ``conditional_stationary`` (x0 fixed,
    y from the stationary law given x0), ``stationary`` (joint stationary law),
    ``perturbed`` (x0 fixed, y from its stationary marginal, independent).
    """

    kind: str = "point"
    x0: float | None = None
    y0: float | None = None

    KINDS = ("point", "conditional_stationary", "stationary", "perturbed")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown init kind {self.kind!r}; expected one of {', '.join(self.KINDS)}")


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    T: float = 10.0
    n_paths: int = 10_000
    seed: int = 0
    init: Init = field(default_factory=Init)
    n_record: int = 101
    burn_in: float | None = None
    chunk: int = 2500
    block: int = 50

    def __post_init__(self):
        if self.dt <= 0 or self.T <= 0:
            raise ValueError("dt and T must be positive")
        if self.dt > self.T:
            raise ValueError("dt must not exceed T")
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if self.n_record < 2:
            raise ValueError("n_record must be >= 2")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    def record_steps(self) -> np.ndarray:
        return np.unique(np.linspace(0, self.n_steps, self.n_record).round().astype(int))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["init"] = asdict(self.init)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "SimConfig":
        d = dict(d)
        init = d.pop("init", None) or {}
        if isinstance(init, str):
            init = {"kind": init}
        return cls(init=Init(**init), **d)


@dataclass
class PathEnsemble:
    times: np.ndarray
    x: np.ndarray                # (n_paths, n_record) observed state
    y: np.ndarray                # unobserved state
    clamped: int = 0
    steps: int = 0
    flagged: np.ndarray | None = None

    @property
    def n_paths(self) -> int:
        return self.x.shape[0]

    @property
    def clamp_fraction(self) -> float:
        return self.clamped / self.steps if self.steps else 0.0

    @property
    def unreliable(self) -> bool:
        return self.clamp_fraction > CLAMP_LIMIT


@dataclass
class MomentEstimate:
    grid: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    degenerate: bool = False


# ---------------------------------------------------------------------------
# compiled polynomials


def _numeric_theta(theta: Mapping) -> dict:
    return {k: Fraction(v) if not isinstance(v, Fraction) else v for k, v in theta.items()}


def _compile(poly: Poly, xname: str, yname: str, theta: Mapping):
    """Float evaluator f(x, y) for a polynomial in the two states."""
    params = {k: v for k, v in theta.items() if k in poly.symbols and k not in (xname, yname)}
    p = poly.subs(params)
    kx, ky = p.symbols.index(xname), p.symbols.index(yname)
    terms = []
    for e, c in p.terms.items():
        if any(v for k, v in enumerate(e) if k not in (kx, ky)):
            missing = [p.symbols[k] for k, v in enumerate(e) if v and k not in (kx, ky)]
            raise KeyError(f"missing parameter values: {', '.join(missing)}")
        terms.append((float(c), e[kx], e[ky]))
    if not terms:
        return 0.0
    if all(i == 0 and j == 0 for _, i, j in terms):
        return sum(c for c, _, _ in terms)

    def f(x, y):
        total = 0.0
        for c, i, j in terms:
            t = c
            if i:
                t = t * (x if i == 1 else x ** i)
            if j:
                t = t * (y if j == 1 else y ** j)
            total = total + t
        return total

    return f


def _call(f, x, y):
    return f(x, y) if callable(f) else f


class _Stepper:
    def __init__(self, model: ModelSpec, theta: Mapping):
        if len(model.states) != 2 or len(model.observed) != 1:
            raise ValueError("simulation supports two-state models with one observed state")
        self.xn, self.yn = model.observed[0], model.unobserved[0]
        th = _numeric_theta({k: v for k, v in theta.items() if k in model.params})
        missing = [p for p in model.params if p not in th]
        if missing:
            raise KeyError(f"missing parameter values: {', '.join(missing)}")
        self.fx = _compile(model.drift_of(self.xn), self.xn, self.yn, th)
        self.fy = _compile(model.drift_of(self.yn), self.xn, self.yn, th)
        names = model.state_names
        ix, iy = names.index(self.xn), names.index(self.yn)
        if model.diffusion is not None:
            self.sq = False
            self.gx = [_compile(g, self.xn, self.yn, th) for g in model.diffusion[ix]]
            self.gy = [_compile(g, self.xn, self.yn, th) for g in model.diffusion[iy]]
            self.k = len(self.gx)
        else:
            self.sq = True
            G = model.diffusion_sq
            self.g11 = _compile(G[ix][ix], self.xn, self.yn, th)
            self.g12 = _compile(G[ix][iy], self.xn, self.yn, th)
            self.g22 = _compile(G[iy][iy], self.xn, self.yn, th)
            self.k = 2

    def noise(self, x, y):
        """(coefficients on dW for x, for y, clamp mask)."""
        if not self.sq:
            return [_call(g, x, y) for g in self.gx], [_call(g, x, y) for g in self.gy], None
        g11 = np.broadcast_to(_call(self.g11, x, y), x.shape)
        g12 = np.broadcast_to(_call(self.g12, x, y), x.shape)
        g22 = np.broadcast_to(_call(self.g22, x, y), x.shape)
        l11 = np.sqrt(np.maximum(g11, 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            l21 = np.where(l11 > 0, g12 / np.where(l11 > 0, l11, 1.0), 0.0)
        rest = g22 - l21 * l21
        l22 = np.sqrt(np.maximum(rest, 0.0))
        tol = 1e-12 * (1.0 + np.abs(g22))
        clamp = (g11 < -tol) | (rest < -tol)
        return [l11, 0.0], [l21, l22], clamp


def _initial_state(model: ModelSpec, theta: Mapping, init: Init, n: int, rng: np.random.Generator):
    x0 = init.x0 if init.x0 is not None else theta.get("x0")
    y0 = init.y0 if init.y0 is not None else theta.get("y0")
    if init.kind == "point":
        if x0 is None or y0 is None:
            raise ValueError("point initial condition needs x0 and y0")
        return np.full(n, float(x0)), np.full(n, float(y0))
    sys = ou_from_model(model, {k: float(v) for k, v in theta.items() if k in model.params})
    if init.kind == "stationary":
        sigma = stationary_cov(sys)
        L = np.linalg.cholesky(sigma + 1e-300 * np.eye(2))
        z = rng.standard_normal((2, n))
        xs = sys.b[:, None] + L @ z
        return xs[0].copy(), xs[1].copy()
    if x0 is None:
        raise ValueError(f"{init.kind} initial condition needs x0")
    if init.kind == "conditional_stationary":
        mu, cov = conditional_init(sys, [float(x0)])
        var = max(cov[1, 1], 0.0)
        return np.full(n, float(x0)), mu[1] + math.sqrt(var) * rng.standard_normal(n)
    # perturbed: y from its stationary marginal, independent of x0
    sigma = stationary_cov(sys)
    return np.full(n, float(x0)), sys.b[1] + math.sqrt(max(sigma[1, 1], 0.0)) * rng.standard_normal(n)


def _chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(chunk,))
    return np.random.Generator(np.random.Philox(ss))


def _run_chunk(model, theta, cfg: SimConfig, stepper: _Stepper, chunk: int, n: int):
    rng = _chunk_rng(cfg.seed, chunk)
    x, y = _initial_state(model, theta, cfg.init, n, rng)
    dt = cfg.dt
    sq = math.sqrt(dt)
    rec = cfg.record_steps()
    rec_pos = {int(s): k for k, s in enumerate(rec)}
    xs = np.empty((n, len(rec)))
    ys = np.empty((n, len(rec)))
    clamped = 0
    flagged = np.zeros(n, dtype=bool)
    burn = int(round(cfg.burn_in / dt)) if cfg.burn_in else 0
    total = burn + cfg.n_steps
    if burn == 0:
        xs[:, 0], ys[:, 0] = x, y
    step = 0
    while step < total:
        nb = min(cfg.block, total - step)
        dW = rng.standard_normal((nb, stepper.k, n)) * sq
        for b in range(nb):
            fx = _call(stepper.fx, x, y)
            fy = _call(stepper.fy, x, y)
            gx, gy, clamp = stepper.noise(x, y)
            if clamp is not None:
                hits = int(np.count_nonzero(clamp))
                if hits:
                    clamped += hits
                    flagged |= clamp
            w = dW[b]
            nx = x + fx * dt
            ny = y + fy * dt
            for k in range(stepper.k):
                if not (isinstance(gx[k], float) and gx[k] == 0.0):
                    nx = nx + gx[k] * w[k]
                if not (isinstance(gy[k], float) and gy[k] == 0.0):
                    ny = ny + gy[k] * w[k]
            x, y = nx, ny
            step += 1
            if step >= burn:
                k_rec = rec_pos.get(step - burn)
                if k_rec is not None:
                    xs[:, k_rec], ys[:, k_rec] = x, y
    return xs, ys, clamped, flagged


def _workers() -> int:
    env = os.environ.get("IDENT_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return max(1, min(4, os.cpu_count() or 1))


def simulate(model: ModelSpec, theta: Mapping, cfg: SimConfig) -> PathEnsemble:
    """Euler-Maruyama ensemble on the recording grid.

    Paths are split into fixed-size chunks, each with its own counter-based
    stream derived from ``cfg.seed``; results do not depend on worker count.
    """
    stepper = _Stepper(model, theta)
    sizes = []
    left = cfg.n_paths
    while left > 0:
        sizes.append(min(cfg.chunk, left))
        left -= sizes[-1]
    workers = min(_workers(), len(sizes))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda a: _run_chunk(model, theta, cfg, stepper, *a), enumerate(sizes)))
    else:
        parts = [_run_chunk(model, theta, cfg, stepper, k, n) for k, n in enumerate(sizes)]
    x = np.concatenate([p[0] for p in parts])
    y = np.concatenate([p[1] for p in parts])
    times = cfg.record_steps() * cfg.dt
    clamped = sum(p[2] for p in parts)
    flagged = np.concatenate([p[3] for p in parts])
    steps = cfg.n_paths * (cfg.n_steps + (int(round(cfg.burn_in / cfg.dt)) if cfg.burn_in else 0))
    return PathEnsemble(times, x, y, clamped, steps, flagged)


# ---------------------------------------------------------------------------
# estimators


def empirical_moments(paths: PathEnsemble, i: int, j: int = 0) -> MomentEstimate:
    """Ensemble average of x^i y^j; the jackknife stderr of a mean is s/sqrt(n)."""
    if i < 0 or j < 0 or i + j < 1:
        raise ValueError("moment order must be >= 1")
    vals = paths.x ** i * paths.y ** j
    n = vals.shape[0]
    mean = vals.mean(axis=0)
    if n > 1:
        se = vals.std(axis=0, ddof=1) / math.sqrt(n)
    else:
        se = np.zeros_like(mean)
    degenerate = bool(np.all(se == 0))
    return MomentEstimate(paths.times, mean, se, degenerate)


def _jackknife_cov(u: np.ndarray, v: np.ndarray) -> tuple:
    """Covariance estimate (1/n normalisation) with its delete-one jackknife stderr."""
    n = u.shape[0]
    su, sv, suv = u.sum(axis=0), v.sum(axis=0), (u * v).sum(axis=0)
    est = suv / n - (su / n) * (sv / n)
    if n < 2:
        return est, np.zeros_like(est)
    m = n - 1
    loo = (suv - u * v) / m - ((su - u) / m) * ((sv - v) / m)
    mean_loo = loo.mean(axis=0)
    var = (n - 1) / n * ((loo - mean_loo) ** 2).sum(axis=0)
    return est, np.sqrt(var)


def empirical_autocov(paths: PathEnsemble, lags: Sequence[int] | None = None, ref: int = 0,
                      pair: str = "xx") -> MomentEstimate:
    """Cov(a(t_ref), b(t_ref + lag)) across paths for a, b in {x, y}; lags are grid offsets."""
    series = {"x": paths.x, "y": paths.y}
    a, b = series[pair[0]], series[pair[1]]
    n_rec = a.shape[1]
    if lags is None:
        lags = range(0, n_rec - ref)
    lags = np.asarray(list(lags), dtype=int)
    u = np.repeat(a[:, ref:ref + 1], len(lags), axis=1)
    v = b[:, ref + lags]
    est, se = _jackknife_cov(u, v)
    grid = paths.times[ref + lags] - paths.times[ref]
    return MomentEstimate(grid, est, se, bool(np.all(se == 0)))


def z_scores(a: MomentEstimate, b: MomentEstimate) -> np.ndarray:
    diff = a.values - b.values
    se = np.sqrt(a.stderr ** 2 + b.stderr ** 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, diff / np.where(se > 0, se, 1.0), np.where(np.abs(diff) > 1e-12, np.inf, 0.0))
    return z


def z_against(est: MomentEstimate, exact: np.ndarray) -> np.ndarray:
    diff = est.values - exact
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(est.stderr > 0, diff / np.where(est.stderr > 0, est.stderr, 1.0),
                        np.where(np.abs(diff) > 1e-9, np.inf, 0.0))


# ---------------------------------------------------------------------------
# matched parameter pairs


@dataclass
class MatchedPair:
    model_id: str
    regime: str
    theta: dict
    theta_star: dict
    residuals: dict              # combo text -> exact difference (all zero)
    direction: str


def _frac(v) -> Fraction:
    if isinstance(v, Fraction):
        return v
    if isinstance(v, float):
        return Fraction(repr(v))
    return Fraction(v)


def _lyap2(a, b, c, d, p, r, s):
    """Exact stationary covariance for the 2-D OU drift [[a, b], [c, d]] and S = [[p, 0], [r, s]]."""
    q11, q12, q22 = p * p, p * r, r * r + s * s
    # unknowns (x, y, z) = (S11, S12, S22) of A X + X A^T = Q
    M = [[2 * a, 2 * b, 0], [c, a + d, b], [0, 2 * c, 2 * d]]
    rhs = [q11, q12, q22]
    sol = _solve3(M, rhs)
    return [[sol[0], sol[1]], [sol[1], sol[2]]]


def _solve3(M, rhs):
    A = [list(map(Fraction, row)) + [Fraction(v)] for row, v in zip(M, rhs)]
    n = 3
    for col in range(n):
        piv = next(r for r in range(col, n) if A[r][col] != 0)
        A[col], A[piv] = A[piv], A[col]
        for r in range(n):
            if r != col and A[r][col] != 0:
                f = A[r][col] / A[col][col]
                A[r] = [x - f * y for x, y in zip(A[r], A[col])]
    return [A[k][n] / A[k][k] for k in range(n)]


def _kappa(seed: int) -> Fraction:
    return random.Random(seed).choice([Fraction(2), Fraction(3, 2), Fraction(1, 2), Fraction(5, 2), Fraction(2, 3)])


def _rotate(th: dict, kappa: Fraction) -> dict:
    """b -> kappa b, c -> c / kappa, rotate (dp - br, bs) by the rational angle (3/5, 4/5)."""
    a, b, c, d, p, r, s = (th[k] for k in "abcdprs")
    u, v = d * p - b * r, b * s
    ct, st = Fraction(3, 5), Fraction(4, 5)
    u2, v2 = ct * u - st * v, st * u + ct * v
    b2 = kappa * b
    out = dict(th)
    out.update(b=b2, c=c / kappa, r=(d * p - u2) / b2, s=v2 / b2)
    return out


def matched_parameters(model_id: str, regime: str, theta: Mapping, seed: int = 0) -> MatchedPair:
    """A distinct parameter vector agreeing exactly on every published combination."""
    th = {k: _frac(v) for k, v in theta.items()}
    ref = known_results(model_id, regime)
    kappa = _kappa(seed)
    if model_id == "ou2" and regime in ("stationary", "perturbed_ic"):
        if th["b"] == 0:
            raise NoMatchedPair("b = 0 leaves no free direction in this construction")
        star = _rotate(th, kappa)
        star["f"] = th["f"] + 1
        direction = f"b*{kappa}, c/{kappa}, rotation of (dp - br, bs), f + 1"
    elif model_id == "ou2" and regime == "constant_ic":
        star = dict(th)
        f2 = th["f"] + 1
        star.update(b=kappa * th["b"], c=th["c"] / kappa, r=th["r"] / kappa, s=th["s"] / kappa, f=f2)
        star["y0"] = f2 + (th["y0"] - th["f"]) / kappa
        direction = f"y -> f* + (y - f)/{kappa}"
    elif model_id == "ou2" and regime == "independent_xy":
        a, b, c, d, p, r, s = (th[k] for k in "abcdprs")
        S = _lyap2(a, b, c, d, p, r, s)
        det = S[0][0] * S[1][1] - S[0][1] ** 2
        Si = [[S[1][1] / det, -S[0][1] / det], [-S[0][1] / det, S[0][0] / det]]
        At = [[a, c], [b, d]]
        M = [[sum(S[i][k] * At[k][j] for k in range(2)) for j in range(2)] for i in range(2)]
        R = [[sum(M[i][k] * Si[k][j] for k in range(2)) for j in range(2)] for i in range(2)]
        star = dict(th)
        star.update(a=R[0][0], b=R[0][1], c=R[1][0], d=R[1][1])
        direction = "time reversal A -> Sigma A^T Sigma^-1"
    elif model_id == "geometric2":
        star = dict(th)
        star.update(b=kappa * th["b"], c=th["c"] / kappa, f=th["f"] / kappa)
        if "y0" in th:
            star["y0"] = th["y0"] / kappa
        direction = f"y -> y/{kappa}"
    elif model_id == "lv_simple":
        star = dict(th)
        star.update(b=kappa * th["b"], s=th["s"] / kappa)
        if "y0" in th:
            star["y0"] = th["y0"] / kappa
        direction = f"y -> y/{kappa}"
    elif model_id == "semilogistic":
        star = dict(th)
        star.update(c=-th["c"], d=-th["d"], r=-th["r"], s=-th["s"])
        if "y0" in th:
            star["y0"] = -th["y0"]
        direction = "y -> -y"
    else:
        raise NoMatchedPair(f"{model_id}/{regime}: published set has full rank; no free direction")
    if star == th:
        raise NoMatchedPair("construction returned the original parameters (degenerate theta)")
    residuals = {}
    for combo in ref.combos:
        point = {s: th[s] for s in combo.used_symbols()}
        point_star = {s: star[s] for s in combo.used_symbols()}
        residuals[str(combo)] = combo.eval(point_star) - combo.eval(point)
    return MatchedPair(model_id, regime, th, star, residuals, direction)


# ---------------------------------------------------------------------------
# default parameters and regimes

REGIME_INIT = {
    ("ou2", "stationary"): "conditional_stationary",
    ("ou2", "constant_ic"): "point",
    ("ou2", "perturbed_ic"): "perturbed",
    ("ou2", "independent_xy"): "stationary",
}


def init_for(model_id: str, regime: str) -> str:
    return REGIME_INIT.get((model_id, regime), "point")


def default_theta(model_id: str, seed: int = 0) -> dict:
    """Seeded rational parameters inside the stable region of each builtin."""
    rng = random.Random(seed)

    def q(lo, hi, den=20):
        return Fraction(rng.randint(int(lo * den), int(hi * den)), den)

    if model_id == "ou2":
        while True:
            a, d = q(0.5, 2), q(0.5, 2)
            b, c = q(-1, 1), q(-1, 1)
            if a * d - b * c > Fraction(1, 4) and b != 0 and abs(b) > Fraction(1, 5):
                break
        e, f = q(-1, 1), q(-1, 1)
        p, r, s = q(0.4, 1), q(0.2, 1), q(0.3, 1)
        return dict(a=a, b=b, c=c, d=d, e=e, f=f, p=p, r=r, s=s, x0=e + 1, y0=f - Fraction(1, 2))
    if model_id == "geometric2":
        return dict(a=q(0.8, 1.5), b=q(0.2, 0.5), c=q(-0.5, -0.2), d=q(0.8, 1.5), e=q(1, 2), f=q(1, 2),
                    p=q(0.1, 0.3), r=q(0.1, 0.3), s=q(0.1, 0.3), x0=Fraction(1), y0=Fraction(1))
    if model_id == "semilogistic":
        return dict(a=q(0.5, 1), b=q(0.3, 0.6), c=q(0.1, 0.3), d=q(0.1, 0.3), e=q(0.2, 0.5), f=q(-1.5, -0.8),
                    p=q(0.1, 0.3), r=q(0.1, 0.3), s=q(0.1, 0.3), x0=Fraction(1), y0=Fraction(1, 2))
    if model_id == "lv_simple":
        return dict(a=q(-1, -0.5), b=q(0.2, 0.5), c=q(-1, -0.5), d=q(-0.3, -0.1), p=q(0.1, 0.3), s=q(0.1, 0.3),
                    x0=Fraction(1), y0=Fraction(1))
    if model_id == "cle":
        return dict(alpha=q(0.05, 0.1), beta=q(0.5, 1), gamma=q(1, 2), delta=q(0.5, 1), epsilon=q(5, 10),
                    zeta=q(0.5, 1), x0=Fraction(5), y0=Fraction(5))
    raise KeyError(f"no default parameters for {model_id!r}")


# ---------------------------------------------------------------------------
# verification


@dataclass
class StatCheck:
    name: str
    grid: list
    z: list
    max_abs_z: float
    passed: bool
    observed: bool


@dataclass
class VerifyReport:
    observed: list
    unobserved: list
    verdict: str
    threshold: float
    n_tests: int
    notes: list
    clamp: dict
    estimates: dict = field(default_factory=dict)

    @property
    def observed_pass(self) -> bool:
        return all(c.passed for c in self.observed)

    @property
    def unobserved_differs(self) -> bool:
        return any(not c.passed for c in self.unobserved)

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "threshold": self.threshold,
            "n_tests": self.n_tests,
            "observed": [asdict(c) for c in self.observed],
            "unobserved": [asdict(c) for c in self.unobserved],
            "notes": self.notes,
            "clamp": self.clamp,
        }


def _check(name, grid, z, observed, skip_first=False) -> StatCheck:
    z = np.asarray(z, dtype=float)
    zz = z[1:] if skip_first else z
    m = float(np.max(np.abs(zz))) if zz.size else 0.0
    return StatCheck(name, [float(t) for t in grid], [float(v) for v in z], m, m <= Z_THRESHOLD, observed)


def _ref_index(paths: PathEnsemble, init_kind: str) -> int:
    if init_kind == "stationary":
        return 0
    return max(1, (len(paths.times) - 1) // 10)


def verify_indistinguishable(model: ModelSpec, theta: Mapping, theta_star: Mapping, cfg: SimConfig,
                             compare_exact_autocov: bool = False) -> VerifyReport:
    """Two-ensemble z-tests on observed statistics (must pass) and unobserved ones (reported)."""
    cfg_star = replace(cfg, seed=cfg.seed + 1)
    run = simulate(model, theta, cfg)
    run_star = simulate(model, theta_star, cfg_star)
    observed, unobserved = [], []
    est = {}
    for i in (1, 2):
        a, b = empirical_moments(run, i), empirical_moments(run_star, i)
        est[f"m[{i},0]"] = (a, b)
        observed.append(_check(f"m[{i},0]", a.grid, z_scores(a, b), True))
    ref = _ref_index(run, cfg.init.kind)
    a = empirical_autocov(run, ref=ref, pair="xx")
    b = empirical_autocov(run_star, ref=ref, pair="xx")
    est["cov(x,x)"] = (a, b)
    observed.append(_check("cov(x(t0), x(t0+tau))", a.grid, z_scores(a, b), True))
    a, b = empirical_moments(run, 0, 1), empirical_moments(run_star, 0, 1)
    est["m[0,1]"] = (a, b)
    unobserved.append(_check("m[0,1]", a.grid, z_scores(a, b), False))
    a = empirical_autocov(run, ref=ref, pair="xy")
    b = empirical_autocov(run_star, ref=ref, pair="xy")
    est["cov(x,y)"] = (a, b)
    unobserved.append(_check("cov(x(t0), y(t0+tau))", a.grid, z_scores(a, b), False))
    a = empirical_autocov(run, ref=ref, pair="yy")
    b = empirical_autocov(run_star, ref=ref, pair="yy")
    est["cov(y,y)"] = (a, b)
    unobserved.append(_check("cov(y(t0), y(t0+tau))", a.grid, z_scores(a, b), False))
    notes = [
        f"z threshold {Z_THRESHOLD} applied per grid point without multiplicity correction; "
        f"a Bonferroni bound over {sum(len(c.z) for c in observed)} observed tests would be looser",
        "a pass is consistent with indistinguishability; it cannot prove it",
    ]
    clamp = {"theta": run.clamp_fraction, "theta_star": run_star.clamp_fraction,
             "unreliable": bool(run.unreliable or run_star.unreliable)}
    if clamp["unreliable"]:
        notes.append("more than 0.1% of steps clamped a non-PSD noise covariance; results unreliable")
    verdict = "consistent with indistinguishable" if all(c.passed for c in observed) else "distinguishable"
    n_tests = sum(len(c.z) for c in observed)
    report = VerifyReport(observed, unobserved, verdict, Z_THRESHOLD, n_tests, notes, clamp, est)
    if compare_exact_autocov:
        report.estimates["runs"] = (run, run_star)
    return report


def plot_report(report: VerifyReport, outdir: str, title: str = "") -> list:
    """SVG figures: observed moments with 2-stderr bands, matched run dashed."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    os.makedirs(outdir, exist_ok=True)
    files = []
    panels = [("moments", ["m[1,0]", "m[2,0]", "m[0,1]"]), ("autocov", ["cov(x,x)", "cov(x,y)", "cov(y,y)"])]
    colours = {"m[1,0]": "tab:purple", "m[2,0]": "tab:cyan", "m[0,1]": "tab:red",
               "cov(x,x)": "tab:blue", "cov(x,y)": "tab:orange", "cov(y,y)": "tab:red"}
    for stem, keys in panels:
        fig, ax = plt.subplots(figsize=(6, 4))
        for key in keys:
            if key not in report.estimates:
                continue
            a, b = report.estimates[key]
            ax.plot(a.grid, a.values, color=colours[key], label=key)
            ax.fill_between(a.grid, a.values - 2 * a.stderr, a.values + 2 * a.stderr, color=colours[key], alpha=0.2)
            ax.plot(b.grid, b.values, "k--", lw=1)
        ax.set_xlabel("t" if stem == "moments" else "lag")
        ax.set_title(title or stem)
        ax.legend(fontsize=8)
        path = os.path.join(outdir, f"{stem}.svg")
        fig.savefig(path, format="svg")
        plt.close(fig)
        files.append(path)
    return files


def write_paths_csv(paths: PathEnsemble, out, max_paths: int | None = None) -> None:
    n = paths.n_paths if max_paths is None else min(max_paths, paths.n_paths)
    out.write("path,t,x,y\n")
    for k in range(n):
        for t, xv, yv in zip(paths.times, paths.x[k], paths.y[k]):
            out.write(f"{k},{t:.10g},{xv:.17g},{yv:.17g}\n")


def builtin_id(model: ModelSpec) -> str:
    return model.name
