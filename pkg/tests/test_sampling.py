import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from bsmrmr.sampling import (
    DomainError,
    FactorizationError,
    cholesky,
    draw_beta,
    draw_gamma,
    draw_invgamma,
    draw_mvn,
    draw_mvn_precision,
    draw_truncnorm_pos,
    invgamma_logpdf,
    rng_stream,
    spd_inverse,
    spd_logdet,
    spd_solve,
)

N = 100_000


def test_stream_reproducible():
    a = rng_stream(11, 3).standard_normal(50)
    b = rng_stream(11, 3).standard_normal(50)
    assert np.array_equal(a, b)


def test_streams_differ_and_look_independent():
    a = rng_stream(11, 0).standard_normal(N)
    b = rng_stream(11, 1).standard_normal(N)
    assert not np.array_equal(a[:10], b[:10])
    assert abs(np.corrcoef(a, b)[0, 1]) < 5 / math.sqrt(N)


def test_mvn_standard():
    r = rng_stream(1)
    x = np.array([draw_mvn([0, 0], np.eye(2), r) for _ in range(N)])
    assert np.all(np.abs(x.mean(0)) < 0.02)


def test_mvn_degenerate_covariance():
    x = draw_mvn([1.0, 2.0], np.diag([1e-12, 1e-12]), rng_stream(2))
    assert np.allclose(x, [1, 2], atol=1e-5)


def test_mvn_correlation():
    r = rng_stream(3)
    cov = np.array([[1, 0.5], [0.5, 1]])
    L = cholesky(cov)
    x = r.standard_normal((N, 2)) @ L.T  # same construction, vectorized
    assert abs(np.corrcoef(x.T)[0, 1] - 0.5) < 0.01
    y = np.array([draw_mvn(np.zeros(2), cov, r) for _ in range(20_000)])
    assert abs(np.corrcoef(y.T)[0, 1] - 0.5) < 0.02


def test_mvn_shape_mismatch():
    with pytest.raises(ValueError):
        draw_mvn([0, 0, 0], np.eye(2), rng_stream(0))


def test_mvn_non_spd_names_pivot():
    with pytest.raises(FactorizationError) as ei:
        draw_mvn([0, 0], np.array([[1, 2], [2, 1]]), rng_stream(0))
    assert ei.value.pivot == 1


def test_mvn_precision_moments():
    P = np.array([[2.0, 0.3], [0.3, 1.0]])
    b = np.array([1.0, -1.0])
    r = rng_stream(4)
    x = np.array([draw_mvn_precision(b, P, r) for _ in range(40_000)])
    cov = np.linalg.inv(P)
    assert np.allclose(x.mean(0), cov @ b, atol=5 * np.sqrt(np.diag(cov) / len(x)).max())
    assert np.allclose(np.cov(x.T), cov, atol=0.03)


def test_truncnorm_half_normal_mean():
    r = rng_stream(5)
    x = np.array([draw_truncnorm_pos(0.0, 1.0, r) for _ in range(N)])
    assert np.all(x > 0)
    assert abs(x.mean() - math.sqrt(2 / math.pi)) < 0.01


def test_truncnorm_inactive_truncation():
    r = rng_stream(6)
    x = np.array([draw_truncnorm_pos(100.0, 1.0, r) for _ in range(N)])
    assert abs(x.mean() - 100) < 0.02


@pytest.mark.parametrize("mu", [-50.0, -1e3, -12.0])
def test_truncnorm_far_tail_terminates(mu):
    r = rng_stream(7)
    x = np.array([draw_truncnorm_pos(mu, 1.0, r) for _ in range(2000)])
    assert np.all(np.isfinite(x)) and np.all(x > 0)
    # tail of N(mu,1) beyond 0 is approximately Exp(|mu|)
    assert abs(x.mean() - 1 / abs(mu)) < 0.1 / abs(mu)


@pytest.mark.parametrize("mu,s2", [(-1.0, 1.0), (-3.0, 0.5), (0.7, 2.0)])
def test_truncnorm_matches_scipy(mu, s2):
    r = rng_stream(8)
    x = np.array([draw_truncnorm_pos(mu, s2, r) for _ in range(20_000)])
    sd = math.sqrt(s2)
    dist = stats.truncnorm(-mu / sd, np.inf, loc=mu, scale=sd)
    assert stats.kstest(x, dist.cdf).pvalue > 1e-3


@pytest.mark.parametrize("s2", [0.0, -1.0, float("inf"), float("nan")])
def test_truncnorm_domain(s2):
    with pytest.raises(DomainError):
        draw_truncnorm_pos(0.0, s2, rng_stream(0))


def test_gamma_mean():
    x = draw_gamma(3.0, 2.0, rng_stream(9), size=N)
    assert abs(x.mean() - 1.5) < 0.02


def test_gamma_variance():
    x = draw_gamma(0.5, 0.5, rng_stream(10), size=N)
    assert abs(x.var() / 2.0 - 1) < 0.03


def test_gamma_exponential_tail():
    x = draw_gamma(1.0, 1.0, rng_stream(11), size=N)
    assert abs(np.mean(x > 1) - math.exp(-1)) < 0.01


@pytest.mark.parametrize("shape,rate", [(0, 1), (1, 0), (-1, 2)])
def test_gamma_domain(shape, rate):
    with pytest.raises(DomainError):
        draw_gamma(shape, rate, rng_stream(0))


def test_beta_uniform_ks():
    x = draw_beta(1.0, 1.0, rng_stream(12), size=N)
    assert stats.kstest(x, "uniform").statistic < 0.01


@pytest.mark.parametrize("a,b", [(20, 40), (22, 42)])
def test_beta_mean(a, b):
    x = draw_beta(a, b, rng_stream(13), size=N)
    assert abs(x.mean() - a / (a + b)) < 0.005


def test_beta_domain():
    with pytest.raises(DomainError):
        draw_beta(0.0, 1.0, rng_stream(0))


def test_invgamma_mean():
    x = draw_invgamma(3.0, 4.0, rng_stream(14), size=N)
    assert abs(x.mean() - 2.0) < 0.05


def test_invgamma_is_reciprocal_gamma():
    d = 2.5
    a = draw_invgamma(1.0, d, rng_stream(15), size=100)
    b = 1.0 / draw_gamma(1.0, d, rng_stream(15), size=100)
    assert np.array_equal(a, b)


def test_invgamma_density_value():
    assert math.isclose(math.exp(invgamma_logpdf(1.0, 2.0, 1.0)), math.exp(-1), rel_tol=1e-12)


@given(st.floats(0.05, 50), st.floats(0.05, 50), st.floats(0.01, 100))
def test_invgamma_density_matches_scipy(a, b, x):
    assert math.isclose(invgamma_logpdf(x, a, b), stats.invgamma.logpdf(x, a, scale=b),
                        rel_tol=1e-9, abs_tol=1e-9)


def test_cholesky_identity():
    assert np.array_equal(cholesky(np.eye(4)), np.eye(4))


def test_cholesky_hand_case():
    L = cholesky(np.array([[4.0, 2.0], [2.0, 3.0]]))
    assert np.allclose(L, [[2, 0], [1, math.sqrt(2)]], atol=1e-14)


def test_cholesky_rejects_tiny_pivot():
    m = np.diag([1.0, 1e-13])
    with pytest.raises(FactorizationError) as ei:
        cholesky(m)
    assert ei.value.pivot == 1


def test_cholesky_rejects_nan():
    with pytest.raises(FactorizationError):
        cholesky(np.array([[1.0, np.nan], [np.nan, 1.0]]))


def test_cholesky_rejects_indefinite():
    with pytest.raises(FactorizationError) as ei:
        cholesky(np.array([[1.0, 0, 0], [0, -1.0, 0], [0, 0, 1.0]]))
    assert ei.value.pivot == 1


def _spd(seed, d):
    a = np.random.default_rng(seed).standard_normal((d, d))
    return a @ a.T + d * np.eye(d)


@given(st.integers(0, 10_000), st.integers(1, 12))
def test_spd_kernels(seed, d):
    m = _spd(seed, d)
    L = cholesky(m)
    assert np.max(np.abs(L @ L.T - m)) < 1e-9 * np.max(np.abs(m))
    inv = spd_inverse(m)
    assert np.allclose(m @ inv, np.eye(d), atol=1e-8)
    assert np.array_equal(inv, inv.T)
    cholesky(inv)  # SPD closure
    rhs = np.arange(d * 2, dtype=float).reshape(d, 2)
    assert np.allclose(spd_solve(m, rhs), np.linalg.solve(m, rhs), atol=1e-9)
    assert math.isclose(spd_logdet(m), np.linalg.slogdet(m)[1], rel_tol=1e-10, abs_tol=1e-10)
