import numpy as np
import pytest
from scipy.linalg import solve_continuous_lyapunov

from sdeident.models import builtin_model, parse_model
from sdeident.ou import (
    EigenvaluesNotDistinct,
    OUSystem,
    SingularObservedBlock,
    StationaryUndefined,
    autocov,
    autocov_spectral,
    conditional_init,
    kron_sum,
    ou_from_model,
    stationary_cov,
    time_cov,
    time_mean,
)
from sdeident.simulation import default_theta, matched_parameters


def random_stable(n, rng):
    # diagonally dominant with positive diagonal -> eigenvalues in the right half plane
    A = rng.normal(size=(n, n)) * 0.5
    A += np.diag(np.abs(A).sum(axis=1) + rng.uniform(0.2, 1.5, n))
    S = np.tril(rng.normal(size=(n, n)))
    return OUSystem(A, rng.normal(size=n), S, m=1)


def ou2_system(theta):
    return ou_from_model(builtin_model("ou2"), {k: float(v) for k, v in theta.items()})


def test_scalar_stationary_variance():
    sys = OUSystem([[2.0]], [0.0], [[3.0]])
    assert stationary_cov(sys)[0, 0] == pytest.approx(9.0 / 4.0)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_lyapunov_against_scipy(n):
    rng = np.random.default_rng(n)
    for _ in range(10):
        sys = random_stable(n, rng)
        ours = stationary_cov(sys)
        ref = solve_continuous_lyapunov(sys.A, sys.noise())
        assert np.allclose(ours, ref, atol=1e-12, rtol=1e-10)
        assert np.allclose(ours, ours.T)


def test_kron_sum_shape():
    A = np.arange(4.0).reshape(2, 2)
    K = kron_sum(A)
    assert K.shape == (4, 4)
    assert np.allclose(K, np.kron(A, np.eye(2)) + np.kron(np.eye(2), A))


def test_unstable_has_no_stationary_law():
    with pytest.raises(StationaryUndefined):
        stationary_cov(OUSystem([[-1.0, 0], [0, 1.0]], [0, 0], np.eye(2)))


def test_ou2_unobserved_variance_matches_closed_form():
    theta = {k: float(v) for k, v in default_theta("ou2", 4).items()}
    a, b, c, d, p, r, s = (theta[k] for k in "abcdprs")
    sigma = stationary_cov(ou2_system(theta))
    closed = (c * c * p * p + a * (a + d) * (r * r + s * s) - c * (2 * a * p * r + b * (r * r + s * s))) / (
        2 * (a + d) * (a * d - b * c))
    assert sigma[1, 1] == pytest.approx(closed, rel=1e-12)


def test_autocov_scalar_and_zero_lag():
    sys = OUSystem([[0.7]], [1.0], [[1.3]])
    for t in (0.0, 0.5, 2.0):
        assert autocov(sys, t)[0, 0] == pytest.approx(np.exp(-0.7 * t) * 1.69 / 1.4)
    rng = np.random.default_rng(0)
    s3 = random_stable(3, rng)
    assert np.allclose(autocov(s3, 0.0), stationary_cov(s3))


def test_autocov_spectral_route():
    rng = np.random.default_rng(5)
    for _ in range(20):
        sys = random_stable(int(rng.integers(2, 5)), rng)
        for t in rng.uniform(0, 3, 3):
            assert np.allclose(autocov(sys, t), autocov_spectral(sys, t), atol=1e-8)


def test_spectral_needs_distinct_eigenvalues():
    with pytest.raises(EigenvaluesNotDistinct):
        autocov_spectral(OUSystem(np.eye(2), [0, 0], np.eye(2)), 1.0)


def test_conditional_init_diagonal_case():
    sys = OUSystem(np.diag([1.0, 2.0]), [0.5, -1.0], np.diag([1.0, 2.0]))
    mu, cov = conditional_init(sys, [3.0])
    assert mu[1] == pytest.approx(-1.0)
    assert cov[1, 1] == pytest.approx(stationary_cov(sys)[1, 1])
    assert cov[0, 0] == 0


def test_conditional_init_schur_complement():
    rng = np.random.default_rng(9)
    for _ in range(10):
        sys = random_stable(3, rng)
        x0 = rng.normal()
        mu, cov = conditional_init(sys, [x0])
        sig = stationary_cov(sys)
        # brute force: joint Gaussian conditioning with explicit inverses
        inv11 = 1.0 / sig[0, 0]
        want_mu = sys.b[1:] + sig[1:, 0] * inv11 * (x0 - sys.b[0])
        want_cov = sig[1:, 1:] - np.outer(sig[1:, 0], sig[0, 1:]) * inv11
        assert np.allclose(mu[1:], want_mu)
        assert np.allclose(cov[1:, 1:], want_cov)


def test_singular_observed_block():
    # x is driven by neither noise nor y, so its stationary variance is zero
    sys = OUSystem(np.eye(2), [0, 0], np.array([[0.0, 0], [0, 1.0]]))
    with pytest.raises(SingularObservedBlock):
        conditional_init(sys, [0.0])


def test_time_cov_limits():
    rng = np.random.default_rng(2)
    sys = random_stable(3, rng)
    init = conditional_init(sys, [0.3])
    assert np.allclose(time_cov(sys, init, 0.0), init[1])
    assert np.allclose(time_cov(sys, init, 80.0), stationary_cov(sys), atol=1e-10)


def test_time_cov_derivative_at_zero():
    rng = np.random.default_rng(4)
    for _ in range(5):
        sys = random_stable(2, rng)
        init = conditional_init(sys, [0.1])
        h = 1e-5
        fd = (-time_cov(sys, init, 2 * h)[0, 0] + 4 * time_cov(sys, init, h)[0, 0]
              - 3 * time_cov(sys, init, 0.0)[0, 0]) / (2 * h)
        assert fd == pytest.approx(sys.noise()[0, 0], rel=1e-6)


def test_observable_q3_preserved_by_matched_pair():
    theta = default_theta("ou2", 1)
    pair = matched_parameters("ou2", "stationary", theta, seed=1)
    x0 = float(theta["x0"])

    def q3(th, t):
        sys = ou2_system({k: v for k, v in th.items() if k not in ("x0", "y0")})
        mu, _ = conditional_init(sys, [x0])
        m10, m01 = time_mean(sys, mu, t)
        b, d, e, f = (float(th[k]) for k in "bdef")
        return d * m10 - b * m01 + b * f - d * e

    for t in (0.0, 0.4, 1.5, 6.0):
        assert q3(pair.theta, t) == pytest.approx(q3(pair.theta_star, t), abs=1e-10)


def test_ou_from_model_rejects_state_dependent_noise():
    with pytest.raises(ValueError):
        ou_from_model(builtin_model("geometric2"), {k: 1.0 for k in builtin_model("geometric2").params})


def test_ou_from_model_three_states():
    text = """
model ou3
states: x observed, y, z
params: k
drift:
  x: -x + y
  y: -2*y + z
  z: -3*z + k
diffusion:
  x: [1, 0, 0]
  y: [0, 1, 0]
  z: [0, 0, 1]
"""
    sys = ou_from_model(parse_model(text), {"k": 3.0})
    assert sys.n == 3 and sys.m == 1
    assert np.allclose(sys.b, [0.5, 0.5, 1.0])
    assert sys.is_stable() and sys.is_lower_triangular()
