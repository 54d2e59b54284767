"""Closed-form Gaussian quantities for n-dimensional Ornstein-Uhlenbeck processes

    dX = -A (X - b) dt + S dW

with the first ``m`` coordinates observed.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy.linalg import expm

from .models import ModelSpec
from .polynomial import Poly


class StationaryUndefined(ValueError):
    pass


class SingularObservedBlock(ValueError):
    pass


class EigenvaluesNotDistinct(ValueError):
    pass


@dataclass(frozen=True)
class OUSystem:
    A: np.ndarray
    b: np.ndarray
    S: np.ndarray
    m: int = 1

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        n = A.shape[0]
        b = np.asarray(self.b, dtype=float).reshape(n)
        S = np.atleast_2d(np.asarray(self.S, dtype=float))
        if A.shape != (n, n) or S.shape != (n, n):
            raise ValueError("A and S must be square matrices of the same size")
        if not 0 < self.m <= n:
            raise ValueError("number of observed states must be in 1..n")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "S", S)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def noise(self) -> np.ndarray:
        return self.S @ self.S.T

    def is_stable(self) -> bool:
        return bool(np.all(np.linalg.eigvals(self.A).real > 0))

    def is_lower_triangular(self) -> bool:
        return bool(np.allclose(self.S, np.tril(self.S)))


def kron_sum(A: np.ndarray) -> np.ndarray:
    n = A.shape[0]
    eye = np.eye(n)
    return np.kron(A, eye) + np.kron(eye, A)


def _vec(M: np.ndarray) -> np.ndarray:
    return M.reshape(-1, order="F")


def _unvec(v: np.ndarray, n: int) -> np.ndarray:
    return v.reshape((n, n), order="F")


def stationary_cov(sys: OUSystem) -> np.ndarray:
    """Solve A X + X A^T = S S^T through vec(X) = (A (+) A)^-1 vec(S S^T)."""
    if not sys.is_stable():
        raise StationaryUndefined("A has an eigenvalue with non-positive real part; no stationary law")
    K = kron_sum(sys.A)
    try:
        v = np.linalg.solve(K, _vec(sys.noise()))
    except np.linalg.LinAlgError as exc:
        raise StationaryUndefined("Kronecker sum A (+) A is singular") from exc
    X = _unvec(v, sys.n)
    return (X + X.T) / 2


def autocov(sys: OUSystem, t: float) -> np.ndarray:
    """Cov(X(t+tau), X(tau)) at stationarity: exp(-A t) Sigma_inf.

    Entry [k, l] is Cov(X_k(t), X_l(0)); the observed/unobserved cross term
    Cov(x(0), y(t)) is therefore entry [1, 0].
    """
    if t < 0:
        raise ValueError("lag must be non-negative")
    return expm(-sys.A * t) @ stationary_cov(sys)


def autocov_spectral(sys: OUSystem, t: float, gap: float = 1e-8) -> np.ndarray:
    """Same quantity as :func:`autocov` written as a sum of exponentials over eigenpairs."""
    lam, V = np.linalg.eig(sys.A)
    scale = max(1.0, float(np.max(np.abs(lam))))
    for i in range(len(lam)):
        for j in range(i + 1, len(lam)):
            if abs(lam[i] - lam[j]) < gap * scale:
                raise EigenvaluesNotDistinct("spectral route needs distinct eigenvalues")
    W = np.linalg.inv(V)
    sigma = stationary_cov(sys)
    out = np.zeros((sys.n, sys.n), dtype=complex)
    for k in range(len(lam)):
        out += np.exp(-lam[k] * t) * np.outer(V[:, k], W[k, :]) @ sigma
    return out.real


def conditional_init(sys: OUSystem, x0) -> tuple:
    """Condition N(b, Sigma_inf) on the observed block equal to x0."""
    m = sys.m
    x0 = np.asarray(x0, dtype=float).reshape(m)
    sigma = stationary_cov(sys)
    s11 = sigma[:m, :m]
    s21 = sigma[m:, :m]
    s22 = sigma[m:, m:]
    if abs(np.linalg.det(s11)) < 1e-300 or np.linalg.cond(s11) > 1e14:
        raise SingularObservedBlock("observed block of the stationary covariance is singular")
    gain = np.linalg.solve(s11.T, s21.T).T
    mu = np.concatenate([x0, sys.b[m:] + gain @ (x0 - sys.b[:m])])
    cov = np.zeros_like(sigma)
    cov[m:, m:] = s22 - gain @ s21.T
    cov = (cov + cov.T) / 2
    return mu, cov


def time_mean(sys: OUSystem, mu0, t: float) -> np.ndarray:
    return sys.b + expm(-sys.A * t) @ (np.asarray(mu0, dtype=float) - sys.b)


def time_cov(sys: OUSystem, init: tuple, t: float) -> np.ndarray:
    """Sigma(t) = (A(+)A)^-1 (I - exp(-(A(+)A) t)) vec(SS^T) + exp(-At) Sigma0 exp(-A^T t)."""
    if t < 0:
        raise ValueError("time must be non-negative")
    _, sigma0 = init
    n = sys.n
    K = kron_sum(sys.A)
    rhs = (np.eye(n * n) - expm(-K * t)) @ _vec(sys.noise())
    driven = _unvec(np.linalg.solve(K, rhs), n)
    E = expm(-sys.A * t)
    out = driven + E @ np.asarray(sigma0, dtype=float) @ E.T
    return (out + out.T) / 2


# ---------------------------------------------------------------------------


def ou_from_model(model: ModelSpec, theta: Mapping[str, float]) -> OUSystem:
    """Numeric OU system for a model with affine drift and constant diffusion.

    Observed states are placed first.
    """
    order = list(model.observed) + list(model.unobserved)
    n = len(order)
    full = dict(theta)
    missing = [p for p in model.params if p not in full]
    if missing:
        raise KeyError(f"missing parameter values: {', '.join(missing)}")
    A = np.zeros((n, n))
    k = np.zeros(n)
    for row, name in enumerate(order):
        drift = model.drift_of(name)
        if _state_degree(drift, order) > 1:
            raise ValueError(f"drift of {name} is not affine in the states")
        zero = {s: 0 for s in order}
        k[row] = float(drift.subs(zero).eval_float(full))
        for col, other in enumerate(order):
            A[row, col] = -float(drift.diff(other).subs(zero).eval_float(full))
    G = model.noise_cov()
    idx = [model.state_names.index(s) for s in order]
    Gm = np.zeros((n, n))
    for r in range(n):
        for c in range(n):
            g = G[idx[r]][idx[c]]
            if _state_degree(g, order) > 0:
                raise ValueError("diffusion depends on the state; not an OU process")
            Gm[r, c] = float(g.eval_float({**{s: 0.0 for s in order}, **full}))
    try:
        b = np.linalg.solve(A, k)
    except np.linalg.LinAlgError as exc:
        raise StationaryUndefined("drift matrix is singular") from exc
    S = _psd_cholesky(Gm)
    return OUSystem(A, b, S, m=len(model.observed))


def _state_degree(p: Poly, states) -> int:
    ks = [p.symbols.index(s) for s in states]
    if p.is_zero():
        return 0
    return max(sum(e[k] for k in ks) for e in p.terms)


def _psd_cholesky(G: np.ndarray) -> np.ndarray:
    """Lower-triangular L with L L^T = G for PSD G (zero pivots allowed)."""
    n = G.shape[0]
    L = np.zeros_like(G)
    for j in range(n):
        d = G[j, j] - L[j, :j] @ L[j, :j]
        L[j, j] = np.sqrt(max(d, 0.0))
        for i in range(j + 1, n):
            L[i, j] = (G[i, j] - L[i, :j] @ L[j, :j]) / L[j, j] if L[j, j] > 0 else 0.0
    return L
