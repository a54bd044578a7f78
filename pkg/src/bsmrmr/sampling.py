"""Seeded random draws and small dense SPD kernels used by the Gibbs steps."""

import math

import numpy as np
from scipy.linalg.lapack import dpotrf, dpotrs, dtrtrs
from scipy.special import gammaln

__all__ = [
    "DomainError",
    "FactorizationError",
    "rng_stream",
    "draw_mvn",
    "draw_mvn_precision",
    "draw_truncnorm_pos",
    "draw_gamma",
    "draw_beta",
    "draw_invgamma",
    "invgamma_logpdf",
    "cholesky",
    "spd_inverse",
    "spd_solve",
    "spd_logdet",
    "chol_solve",
    "tri_solve",
]

# pivots smaller than this fraction of the largest diagonal entry are rejected
PIVOT_RTOL = 1e-12


class DomainError(ValueError):
    """A distribution parameter is outside its support."""


class FactorizationError(np.linalg.LinAlgError):
    """Cholesky factorization failed.

    ``pivot`` is the 0-based index of the first non-positive (or numerically
    negligible) pivot.
    """

    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


def rng_stream(seed, *stream):
    """Return a PCG64 generator for ``(seed, stream...)``.

    The same key always gives the same sequence; distinct stream ids give
    independent sequences (SeedSequence spawn keys).
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.PCG64(ss))


def cholesky(m):
    """Lower Cholesky factor of a symmetric positive definite matrix.

    Raises FactorizationError naming the offending pivot instead of
    returning NaNs.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise FactorizationError(f"expected a square matrix, got shape {m.shape}")
    if not np.isfinite(m).all():
        raise FactorizationError("matrix has non-finite entries")
    L, info = dpotrf(m, lower=1, clean=1, overwrite_a=0)
    if info > 0:
        raise FactorizationError(
            f"matrix is not positive definite (pivot {info - 1})", pivot=info - 1
        )
    if info < 0:
        raise FactorizationError(f"dpotrf argument error {info}")
    piv = L.diagonal() ** 2
    scale = np.abs(m.diagonal()).max() if m.size else 0.0
    if m.size and piv.min() <= PIVOT_RTOL * scale:
        bad = np.flatnonzero(piv <= PIVOT_RTOL * scale)
        raise FactorizationError(
            f"matrix is numerically singular (pivot {bad[0]} = {piv[bad[0]]:.3g})",
            pivot=int(bad[0]),
        )
    return L


def chol_solve(L, rhs):
    """Solve (L L') x = rhs given the lower Cholesky factor L."""
    x, info = dpotrs(L, np.asarray(rhs, dtype=float), lower=1)
    if info != 0:
        raise FactorizationError(f"dpotrs argument error {info}")
    return x


def tri_solve(L, rhs, trans=False):
    """Solve L x = rhs (or L' x = rhs with ``trans``) for lower-triangular L."""
    x, info = dtrtrs(L, np.asarray(rhs, dtype=float), lower=1, trans=1 if trans else 0)
    if info != 0:
        raise FactorizationError(f"triangular solve failed (info {info})")
    return x


def spd_solve(m, rhs):
    return chol_solve(cholesky(m), rhs)


def spd_inverse(m):
    m = np.asarray(m, dtype=float)
    inv = spd_solve(m, np.eye(m.shape[0]))
    return 0.5 * (inv + inv.T)


def spd_logdet(m):
    return 2.0 * float(np.sum(np.log(np.diag(cholesky(m)))))


def draw_mvn(mean, covariance, rng):
    """One draw from N(mean, covariance) as mean + L z."""
    mean = np.asarray(mean, dtype=float)
    covariance = np.asarray(covariance, dtype=float)
    if covariance.shape != (mean.size, mean.size):
        raise ValueError(
            f"covariance shape {covariance.shape} does not match mean of length {mean.size}"
        )
    L = cholesky(covariance)
    return mean + L @ rng.standard_normal(mean.size)


def draw_mvn_precision(linear, precision, rng):
    """Draw from N(P^-1 b, P^-1) given the precision P and linear term b.

    Avoids forming the covariance explicitly.
    """
    L = cholesky(precision)
    mean = chol_solve(L, linear)
    z = rng.standard_normal(np.shape(linear))
    return mean + tri_solve(L, z, trans=True)


def draw_truncnorm_pos(mu, sigma2, rng):
    """Draw from N(mu, sigma2) conditioned to be positive.

    Plain rejection when the acceptance region holds reasonable mass,
    otherwise an exponential-proposal tail sampler, which
    terminates quickly even for mu/sigma far below zero.
    """
    if not sigma2 > 0 or not math.isfinite(sigma2):
        raise DomainError(f"sigma2 must be positive and finite, got {sigma2}")
    sd = math.sqrt(sigma2)
    a = -mu / sd  # standardized lower bound
    if a < 0.5:
        while True:
            z = rng.standard_normal()
            if z > a:
                return mu + sd * z
    alpha = 0.5 * (a + math.sqrt(a * a + 4.0))
    while True:
        e = rng.exponential(1.0 / alpha)
        if math.log(rng.random()) <= -0.5 * (a + e - alpha) ** 2:
            # mu + sd*(a + e) == sd*e, without the cancellation
            return sd * e


def draw_gamma(shape, rate, rng, size=None):
    """Gamma draw in the shape-rate convention (mean shape/rate)."""
    if not (shape > 0 and rate > 0):
        raise DomainError(f"gamma needs shape > 0 and rate > 0, got ({shape}, {rate})")
    return rng.gamma(shape, 1.0 / rate, size=size)


def draw_beta(a, b, rng, size=None):
    if not (a > 0 and b > 0):
        raise DomainError(f"beta needs a > 0 and b > 0, got ({a}, {b})")
    return rng.beta(a, b, size=size)


def draw_invgamma(shape, scale, rng, size=None):
    """Inverse-gamma draw: 1 / Gamma(shape, rate=scale)."""
    if not (shape > 0 and scale > 0):
        raise DomainError(f"inverse gamma needs shape > 0 and scale > 0, got ({shape}, {scale})")
    return 1.0 / draw_gamma(shape, scale, rng, size=size)


def invgamma_logpdf(x, shape, scale):
    """log of b^a x^-(a+1) exp(-b/x) / Gamma(a)."""
    x = np.asarray(x, dtype=float)
    return shape * np.log(scale) - (shape + 1.0) * np.log(x) - scale / x - gammaln(shape)
