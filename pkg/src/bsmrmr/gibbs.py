"""Gibbs sampler for Bayesian sparse multivariate regression with mixed responses.

One sweep updates, in order: the latent predictors Xi (with the Gaussian
response variances), the unpenalized intercept, each coefficient group
B_tilde_g, every row scale tau, the sparsity probabilities and sigma_tau^2,
and finally the precision matrix Omega with its edge indicators. During
burn-in the inverse-gamma scale ``d`` is adapted by Monte Carlo EM and the
random-walk step of the non-Gaussian latent slots is tuned.
"""

from __future__ import annotations

import functools
import logging
import math
from typing import NamedTuple

import numpy as np
from scipy.special import expit, log_ndtr

from .model import (
    CHAIN_FIELDS,
    Hyperparameters,
    ModelState,
    PosteriorChain,
    chain_field_shapes,
    response_links,
)
from .sampling import (
    FactorizationError,
    chol_solve,
    cholesky,
    draw_beta,
    draw_gamma,
    draw_invgamma,
    draw_mvn_precision,
    draw_truncnorm_pos,
    spd_inverse,
    tri_solve,
)

logger = logging.getLogger(__name__)

VAR_FLOOR = 1e-12
LOG2 = math.log(2.0)

STEP_NAMES = ("xi", "sigma2", "intercept", "coefficients", "tau", "sparsity",
              "sigma_tau2", "omega")
TARGET_ACCEPT = (0.30, 0.45)


class SamplerError(RuntimeError):
    """A Gibbs step failed; ``partial`` holds the draws retained so far."""

    def __init__(self, sweep, step, cause, partial=None):
        super().__init__(f"sweep {sweep}, step '{step}': {cause}")
        self.sweep = sweep
        self.step = step
        self.partial = partial


class LatentUpdateError(FloatingPointError):
    pass


class GroupUpdateWorkspace(NamedTuple):
    """Cholesky factor of Psi^-1 = I + V X'X V, the slab mean M and pi_B."""

    psi_inv_chol: np.ndarray
    M: np.ndarray
    pi_B: float
    logdet_psi: float

    @property
    def Psi(self):
        L = self.psi_inv_chol
        return chol_solve(L, np.eye(L.shape[0]))


def residual(state, data):
    """Xi - 1 b0' - X B."""
    return state.Xi - state.intercept - data.X @ state.B


def _log_mix(log_a, log_b):
    """Probability of component a from two log-weights, safe for +-inf."""
    if log_a == -np.inf:
        return 0.0
    if log_b == -np.inf:
        return 1.0
    return float(expit(log_a - log_b))


# latent predictors and Gaussian variances

def _count_loglik(x, y):
    return y * x - np.exp(x)


def _binary_loglik(x, y):
    return y * x - np.logaddexp(0.0, x)


def sample_latent_xi(state, data, rng, hyper=None):
    """Update every latent row xi_i from its full conditional.

    Continuous slots get an exact joint Gaussian draw given the other slots;
    count and binary slots are updated one at a time by random-walk
    Metropolis-Hastings with per-slot step ``state.mh_step``.
    """
    l, m, k = data.l, data.m, data.k
    q = l + m + k
    Om = state.Omega
    Xi = state.Xi
    mean = data.X @ state.B + state.intercept
    if l:
        s2 = np.maximum(state.sigma2_gauss, VAR_FLOOR)
        prec = Om[:l, :l] + np.diag(1.0 / s2)
        lin = mean[:, :l] @ Om[:l, :l] + data.U / s2
        if l < q:
            lin -= (Xi[:, l:] - mean[:, l:]) @ Om[l:, :l]
        Xi[:, :l] = draw_mvn_precision(lin.T, prec, rng).T

    if l == q:
        return Xi
    n = data.n
    steps = state.mh_step
    accept = np.empty(m + k)
    dev = Xi - mean
    for j in range(l, q):
        w = Om[j, j]
        cm = mean[:, j] - (dev @ Om[:, j] - w * dev[:, j]) / w
        if j < l + m:
            y, loglik = data.Z[:, j - l], _count_loglik
        else:
            y, loglik = data.W[:, j - l - m], _binary_loglik
        cur = Xi[:, j]
        prop = cur + steps[j - l] * rng.standard_normal(n)
        with np.errstate(over="ignore"):
            f_cur = -0.5 * w * (cur - cm) ** 2 + loglik(cur, y)
            f_prop = -0.5 * w * (prop - cm) ** 2 + loglik(prop, y)
        if not np.all(np.isfinite(f_cur)):
            i = int(np.flatnonzero(~np.isfinite(f_cur))[0])
            raise LatentUpdateError(
                f"non-finite latent log-density at observation {i}, component {j}"
            )
        f_prop = np.where(np.isnan(f_prop), -np.inf, f_prop)
        acc = np.log(rng.random(n)) < f_prop - f_cur
        Xi[acc, j] = prop[acc]
        dev[:, j] = Xi[:, j] - mean[:, j]
        accept[j - l] = acc.mean()
    state.mh_accept = accept
    return Xi


def sample_gaussian_variances(state, data, rng, hyper):
    """Draw each continuous-response variance from its inverse-gamma conditional.

    Conjugate form IG(a0 + n/2, b0 + SS/2). With
    ``hyper.unsquared_sigma_update`` the variant IG(a0 + n, b0 + sum(resid)/2)
    is used instead, its scale floored at VAR_FLOOR.
    """
    n = data.n
    if n < 1:
        raise ValueError("cannot update Gaussian variances with no observations")
    l = data.l
    if l == 0:
        return state.sigma2_gauss
    resid = data.U - state.Xi[:, :l]
    a0, b0 = hyper.gauss_var_shape, hyper.gauss_var_scale
    out = np.empty(l)
    for j in range(l):
        if hyper.unsquared_sigma_update:
            shape = a0 + n
            scale = max(b0 + 0.5 * resid[:, j].sum(), VAR_FLOOR)
        else:
            shape = a0 + 0.5 * n
            scale = b0 + 0.5 * float(resid[:, j] @ resid[:, j])
        out[j] = max(draw_invgamma(shape, scale, rng), VAR_FLOOR)
    state.sigma2_gauss = out
    return out


def sample_intercept(state, data, rng):
    """Flat-prior intercept: b0 | rest ~ N(mean residual, (n Omega)^-1)."""
    n = data.n
    r = state.Xi - data.X @ state.B
    prec = n * state.Omega
    state.intercept = draw_mvn_precision(prec @ r.mean(axis=0), prec, rng)
    return state.intercept


# coefficient groups

def group_workspace(g, state, data, resid_g):
    """Build Psi, M and pi_B for group g from the residual without group g."""
    sl = data.groups.slice(g)
    A = data.X[:, sl] * state.tau[sl]
    prec = np.eye(A.shape[1]) + A.T @ A
    try:
        Lp = cholesky(prec)
    except FactorizationError as exc:
        raise FactorizationError(f"group {g}: {exc}", pivot=exc.pivot) from exc
    C = A.T @ resid_g
    M = chol_solve(Lp, C)
    logdet_psi = -2.0 * float(np.sum(np.log(np.diag(Lp))))
    pi1 = state.pi1
    q = resid_g.shape[1]
    if pi1 >= 1.0:
        pi_B = 1.0
    elif pi1 <= 0.0:
        pi_B = 0.0
    else:
        quad = float(np.sum(state.Omega * (M.T @ C)))
        log_slab = math.log1p(-pi1) + 0.5 * q * logdet_psi + 0.5 * quad
        pi_B = _log_mix(math.log(pi1), log_slab)
        if not 0.0 <= pi_B <= 1.0:
            raise FloatingPointError(f"group {g}: inclusion probability {pi_B} out of range")
    return GroupUpdateWorkspace(Lp, M, pi_B, logdet_psi)


def _group_residual(g, state, data, resid=None):
    if resid is None:
        resid = residual(state, data)
    sl = data.groups.slice(g)
    return resid + data.X[:, sl] @ (state.tau[sl, None] * state.B_tilde[sl])


def compute_group_inclusion_prob(g, state, data):
    """Posterior probability that group g is excluded (B_tilde_g = 0)."""
    return group_workspace(g, state, data, _group_residual(g, state, data)).pi_B


def _draw_group(ws, omega_chol, rng):
    # matrix normal MN(M, Psi, Omega^-1): rows via Psi factor, columns via Omega^-1 factor
    Lp = ws.psi_inv_chol
    Z = rng.standard_normal(ws.M.shape)
    rows = tri_solve(Lp, Z, trans=True)
    return ws.M + tri_solve(omega_chol, rows.T, trans=True).T


def sample_coefficient_group(g, state, data, rng, resid_g=None, omega_chol=None):
    """Spike-or-slab draw of B_tilde_g; updates ``state`` in place."""
    if resid_g is None:
        resid_g = _group_residual(g, state, data)
    if omega_chol is None:
        omega_chol = cholesky(state.Omega)
    ws = group_workspace(g, state, data, resid_g)
    sl = data.groups.slice(g)
    if rng.random() < ws.pi_B:
        state.B_tilde[sl] = 0.0
        state.group_included[g] = False
    else:
        state.B_tilde[sl] = _draw_group(ws, omega_chol, rng)
        state.group_included[g] = True
    return state.B_tilde[sl], bool(state.group_included[g])


def sample_coefficients(state, data, rng):
    """All groups in order, keeping the running residual current."""
    E = residual(state, data)
    L = cholesky(state.Omega)
    for g, sl in enumerate(data.groups.slices()):
        Xg = data.X[:, sl]
        R = E + Xg @ (state.tau[sl, None] * state.B_tilde[sl])
        sample_coefficient_group(g, state, data, rng, resid_g=R, omega_chol=L)
        E = R - Xg @ (state.tau[sl, None] * state.B_tilde[sl])
    return state.B_tilde


# row scales tau

def tau_conditional(xtx, b, Omega, Rtx, sigma_tau2, pi2):
    """(mu, sigma2, pi_tau) of the tau full conditional for one predictor row.

    ``b`` is the B_tilde row, ``xtx`` the squared column norm and ``Rtx`` is
    R'x for the residual R that excludes this row's contribution.
    """
    Ob = Omega @ b
    s2 = 1.0 / (xtx * float(b @ Ob) + 1.0 / sigma_tau2)
    mu = s2 * float(Rtx @ Ob)
    if pi2 >= 1.0:
        return mu, s2, 1.0
    if pi2 <= 0.0:
        return mu, s2, 0.0
    log_slab = (math.log1p(-pi2) + LOG2 - 0.5 * math.log(sigma_tau2) + 0.5 * math.log(s2)
                + 0.5 * mu * mu / s2 + float(log_ndtr(mu / math.sqrt(s2))))
    return mu, s2, _log_mix(math.log(pi2), log_slab)


def sample_tau(g, j, state, data, rng, resid=None):
    """Update tau for predictor j of group g (0-based within the group)."""
    col = data.groups.offsets[g] + j
    if resid is None:
        resid = residual(state, data)
    x = data.X[:, col]
    b = state.B_tilde[col]
    xtx = float(x @ x)
    Rtx = resid.T @ x + xtx * state.tau[col] * b
    mu, s2, pi_tau = tau_conditional(xtx, b, state.Omega, Rtx, state.sigma_tau2, state.pi2)
    if rng.random() < pi_tau:
        new = 0.0
    else:
        new = draw_truncnorm_pos(mu, max(s2, VAR_FLOOR), rng)
    state.tau[col] = new
    return new


def sample_taus(state, data, rng):
    E = residual(state, data)
    X = data.X
    for col in range(data.p):
        x = X[:, col]
        b = state.B_tilde[col]
        old = state.tau[col]
        xtx = float(x @ x)
        Rtx = E.T @ x + xtx * old * b
        mu, s2, pi_tau = tau_conditional(xtx, b, state.Omega, Rtx, state.sigma_tau2, state.pi2)
        if rng.random() < pi_tau:
            new = 0.0
        else:
            new = draw_truncnorm_pos(mu, max(s2, VAR_FLOOR), rng)
        state.tau[col] = new
        if new != old and np.any(b):
            E -= np.outer(x, (new - old) * b)
    return state.tau


# sparsity probabilities, sigma_tau^2 and d

def sparsity_counts(state):
    iu = np.triu_indices(state.Omega.shape[0], 1)
    n_excl = int(np.sum(~state.group_included))
    n_tau0 = int(np.sum(state.tau == 0))
    n_edge = int(np.sum(state.edge_ind[iu] != 0))
    return {
        "groups_zero": n_excl,
        "groups_nonzero": int(state.group_included.size - n_excl),
        "tau_zero": n_tau0,
        "tau_nonzero": int(state.tau.size - n_tau0),
        "edges_nonzero": n_edge,
        "edges_zero": int(iu[0].size - n_edge),
    }


def sparsity_posterior_params(state, hyper):
    """Beta parameters of (pi1, pi2, pi3). pi3 counts nonzero edges first."""
    c = sparsity_counts(state)
    return (
        (hyper.a1 + c["groups_zero"], hyper.a2 + c["groups_nonzero"]),
        (hyper.a3 + c["tau_zero"], hyper.a4 + c["tau_nonzero"]),
        (hyper.a5 + c["edges_nonzero"], hyper.a6 + c["edges_zero"]),
    )


def sample_sparsity_probs(state, rng, hyper):
    (a, b), (c, d), (e, f) = sparsity_posterior_params(state, hyper)
    state.pi1 = float(draw_beta(a, b, rng))
    state.pi2 = float(draw_beta(c, d, rng))
    state.pi3 = float(draw_beta(e, f, rng))
    return state.pi1, state.pi2, state.pi3


def sample_sigma_tau2(state, rng):
    nz = int(np.sum(state.tau != 0))
    shape = 1.0 + 0.5 * nz
    scale = state.d + 0.5 * float(state.tau @ state.tau)
    state.sigma_tau2 = float(draw_invgamma(shape, scale, rng))
    return state.sigma_tau2


def update_d_mcem(sigma_tau2_segment):
    """Monte Carlo EM step: d = 1 / mean(1 / sigma_tau^2) over the segment."""
    seg = np.asarray(sigma_tau2_segment, dtype=float)
    if seg.size < 1:
        raise ValueError("MC-EM segment is empty")
    return float(1.0 / np.mean(1.0 / seg))


# precision matrix

def precision_statistics(state, data, hyper, resid=None):
    """Theta = E'E + B_tilde'B_tilde and alpha = n + sum_g p_g 1{included}."""
    if resid is None:
        resid = residual(state, data)
    theta = resid.T @ resid + state.B_tilde.T @ state.B_tilde
    sizes = np.asarray(data.groups.sizes)
    alpha = data.n + float(np.sum(sizes[state.group_included])) + hyper.alpha0
    return theta, alpha


def edge_inclusion_prob(w, pi3, sigma0, sigma1):
    """p(z_ij = 1 | omega_ij) for the two-component normal mixture."""
    w = np.asarray(w, dtype=float)
    if pi3 <= 0.0:
        return np.zeros_like(w)
    if pi3 >= 1.0:
        return np.ones_like(w)
    log1 = math.log(pi3) - math.log(sigma1) - 0.5 * w * w / sigma1 ** 2
    log0 = math.log1p(-pi3) - math.log(sigma0) - 0.5 * w * w / sigma0 ** 2
    return expit(log1 - log0)


@functools.lru_cache(maxsize=32)
def _leave_one_out(q):
    full = np.arange(q)
    return tuple(np.delete(full, j) for j in range(q))


@functools.lru_cache(maxsize=32)
def _upper(q):
    return np.triu_indices(q, 1)


def sample_omega_given(Omega, edge_ind, theta, alpha, pi3, hyper, rng):
    """Column-wise block update of Omega, then the edge indicators.

    Returns new (Omega, edge_ind). Each column draws
    eta ~ N(-S theta_12, S) with S = ((theta_22+lam) Omega_11^-1 + diag(h_12)^-1)^-1
    and zeta ~ Gamma(alpha/2 + 1, (theta_22 + lam)/2), so the Schur
    complement stays positive and Omega remains positive definite.
    """
    q = Omega.shape[0]
    lam = hyper.lam
    Om = Omega.copy()
    v = np.where(edge_ind != 0, hyper.sigma1 ** 2, hyper.sigma0 ** 2)
    if q == 1:
        Om[0, 0] = draw_gamma(0.5 * alpha + 1.0, 0.5 * (theta[0, 0] + lam), rng)
        return Om, edge_ind.copy()
    Sig = spd_inverse(Om)
    for j, idx in enumerate(_leave_one_out(q)):
        s12 = Sig[idx, j]
        o11_inv = Sig[idx][:, idx] - np.outer(s12, s12) / Sig[j, j]
        t22 = theta[j, j] + lam
        prec = t22 * o11_inv
        prec.flat[:: q] += 1.0 / v[idx, j]
        try:
            eta = draw_mvn_precision(-theta[idx, j], prec, rng)
        except FactorizationError as exc:
            raise FactorizationError(f"Omega column {j}: {exc}", pivot=exc.pivot) from exc
        zeta = draw_gamma(0.5 * alpha + 1.0, 0.5 * t22, rng)
        c = o11_inv @ eta
        Om[idx, j] = eta
        Om[j, idx] = eta
        Om[j, j] = zeta + float(eta @ c)
        Sig[idx[:, None], idx] = o11_inv + np.outer(c, c) / zeta
        Sig[idx, j] = -c / zeta
        Sig[j, idx] = -c / zeta
        Sig[j, j] = 1.0 / zeta
    iu = _upper(q)
    p1 = edge_inclusion_prob(Om[iu], pi3, hyper.sigma0, hyper.sigma1)
    z = (rng.random(p1.size) < p1).astype(float)
    E = np.zeros((q, q))
    E[iu] = z
    E = E + E.T
    return Om, E


def sample_precision_matrix(state, data, rng, hyper, resid=None):
    theta, alpha = precision_statistics(state, data, hyper, resid)
    state.Omega, state.edge_ind = sample_omega_given(
        state.Omega, state.edge_ind, theta, alpha, state.pi3, hyper, rng
    )
    return state.Omega, state.edge_ind


# chain driver

def initial_state(data, hyper, rng):
    """Overdispersed but feasible starting point.

    Xi starts at the data (u, log(z + 0.5), +-1 logits); every group is
    included with small random B_tilde so that inclusion flags and
    nonzero blocks agree from the first sweep.
    """
    l, m, k, q, p = data.l, data.m, data.k, data.q, data.p
    Xi = np.hstack([data.U, np.log(data.Z + 0.5), 2.0 * data.W - 1.0])
    intercept = Xi.mean(axis=0) if hyper.fit_intercept else np.zeros(q)
    return ModelState(
        Xi=Xi,
        B_tilde=0.01 * rng.standard_normal((p, q)),
        tau=np.ones(p),
        group_included=np.ones(data.groups.n_groups, dtype=bool),
        Omega=np.eye(q),
        edge_ind=np.zeros((q, q)),
        pi1=hyper.a1 / (hyper.a1 + hyper.a2),
        pi2=hyper.a3 / (hyper.a3 + hyper.a4),
        pi3=hyper.a5 / (hyper.a5 + hyper.a6),
        sigma_tau2=1.0,
        sigma2_gauss=np.ones(l),
        intercept=intercept,
        d=hyper.d,
        mh_step=np.full(m + k, hyper.mh_step),
        mh_accept=np.zeros(m + k),
    )


class _Recorder:
    def __init__(self, data, n_keep):
        shapes = chain_field_shapes(data.p, data.q, data.l, data.groups.n_groups)
        self.draws = {name: np.empty((n_keep,) + shapes[name]) for name in CHAIN_FIELDS}
        self.iterations = np.empty(n_keep, dtype=np.int64)
        self.count = 0

    def record(self, it, s):
        i = self.count
        d = self.draws
        d["B"][i] = s.B
        d["B_tilde"][i] = s.B_tilde
        d["tau"][i] = s.tau
        d["group_included"][i] = s.group_included
        d["intercept"][i] = s.intercept
        d["Omega"][i] = s.Omega
        d["edge_ind"][i] = s.edge_ind
        d["pi"][i] = (s.pi1, s.pi2, s.pi3)
        d["sigma_tau2"][i] = s.sigma_tau2
        d["d"][i] = s.d
        d["sigma2_gauss"][i] = s.sigma2_gauss
        self.iterations[i] = it
        self.count += 1

    def chain(self, data, n_burnin, seed, stream, truncated=False):
        c = self.count
        return PosteriorChain(
            draws={k: v[:c].copy() for k, v in self.draws.items()},
            iterations=self.iterations[:c].copy(),
            n_burnin=n_burnin,
            l=data.l, m=data.m, k=data.k,
            group_sizes=data.groups.sizes,
            seed=seed,
            stream=tuple(stream),
            truncated=truncated,
        )


def gibbs_sweep(state, data, rng, hyper, frozen=()):
    """One pass of all non-frozen updates in the fixed order. Yields step names."""
    if "xi" not in frozen:
        yield "xi"
        sample_latent_xi(state, data, rng, hyper)
    if "sigma2" not in frozen and data.l:
        yield "sigma2"
        sample_gaussian_variances(state, data, rng, hyper)
    if hyper.fit_intercept and "intercept" not in frozen:
        yield "intercept"
        sample_intercept(state, data, rng)
    if "coefficients" not in frozen:
        yield "coefficients"
        sample_coefficients(state, data, rng)
    if "tau" not in frozen:
        yield "tau"
        sample_taus(state, data, rng)
    if "sparsity" not in frozen:
        yield "sparsity"
        sample_sparsity_probs(state, rng, hyper)
    if "sigma_tau2" not in frozen:
        yield "sigma_tau2"
        sample_sigma_tau2(state, rng)
    if "omega" not in frozen:
        yield "omega"
        sample_precision_matrix(state, data, rng, hyper)


def run_chain(data, hyper=None, rng=None, *, seed=None, stream=(), init=None, frozen=(),
              callback=None):
    """Run ``hyper.n_iter`` sweeps and keep the draws after ``hyper.n_burnin``.

    ``frozen`` names steps to skip (their parameters stay at the initial
    value); ``callback(sweep, state)`` is called after every sweep. The
    generator is taken from ``rng`` or built from ``(seed, *stream)``.
    """
    from .sampling import rng_stream

    hyper = (hyper or Hyperparameters()).resolve(data.q)
    if rng is None:
        rng = rng_stream(0 if seed is None else seed, *stream)
    unknown = set(frozen) - set(STEP_NAMES) - {"d", "adapt"}
    if unknown:
        raise ValueError(f"unknown step names in frozen: {sorted(unknown)}")
    state = init.copy() if init is not None else initial_state(data, hyper, rng)
    if state.mh_step is None:
        state.mh_step = np.full(data.m + data.k, hyper.mh_step)
    n_keep = len(range(hyper.n_burnin, hyper.n_iter, hyper.thin))
    rec = _Recorder(data, n_keep)
    segment = []
    acc_sum = np.zeros(data.m + data.k)
    acc_n = 0
    for it in range(hyper.n_iter):
        step = "init"
        try:
            for step in gibbs_sweep(state, data, rng, hyper, frozen):
                pass
            step = "check"
            cholesky(state.Omega)
        except Exception as exc:
            partial = rec.chain(data, hyper.n_burnin, seed, stream, truncated=True)
            raise SamplerError(it, step, exc, partial) from exc
        if it < hyper.n_burnin:
            segment.append(state.sigma_tau2)
            if "d" not in frozen and (it + 1) % hyper.em_interval == 0:
                state.d = update_d_mcem(segment)
                segment = []
            if "xi" not in frozen and "adapt" not in frozen and state.mh_accept is not None:
                acc_sum += state.mh_accept
                acc_n += 1
                if acc_n == hyper.adapt_interval:
                    rate = acc_sum / acc_n
                    state.mh_step = np.where(rate < TARGET_ACCEPT[0], state.mh_step * 0.8,
                                             np.where(rate > TARGET_ACCEPT[1], state.mh_step * 1.25,
                                                      state.mh_step))
                    acc_sum[:] = 0.0
                    acc_n = 0
        elif (it - hyper.n_burnin) % hyper.thin == 0:
            rec.record(it, state)
        if callback is not None:
            callback(it, state)
    logger.debug("chain done: %d draws, final d=%.4g", rec.count, state.d)
    return rec.chain(data, hyper.n_burnin, seed, stream)


# prediction

class Prediction(NamedTuple):
    """Percentile summaries for each new row and response.

    ``latent`` and ``response`` have shape (3, n_new, q) holding the lower,
    median and upper percentiles on the latent and response (mu, lambda,
    gamma) scales. ``point`` is the response-scale median with binary slots
    turned into 0/1 at the 0.5 cut-off (ties go to 0).
    """

    latent: np.ndarray
    response: np.ndarray
    point: np.ndarray
    levels: tuple

    @property
    def lower(self):
        return self.response[0]

    @property
    def median(self):
        return self.response[1]

    @property
    def upper(self):
        return self.response[2]


def posterior_predict(chain, X_new, mode="mean", rng=None, level=0.95):
    """Median and equal-tailed credible interval of the predictions.

    ``mode="mean"`` pushes b0 + B'x through each retained draw;
    ``mode="predictive"`` also adds latent noise eps ~ N(0, Omega^-1) and,
    on continuous slots, the Gaussian measurement noise, so the intervals
    target a new observed response.
    """
    if chain.n_draws < 1:
        raise ValueError("chain has no retained draws")
    if mode not in ("mean", "predictive"):
        raise ValueError(f"mode must be 'mean' or 'predictive', got {mode!r}")
    X_new = np.atleast_2d(np.asarray(X_new, dtype=float))
    if X_new.shape[1] != chain.p:
        raise ValueError(f"X_new has {X_new.shape[1]} columns, chain expects {chain.p}")
    xi = np.einsum("np,spq->snq", X_new, chain["B"]) + chain["intercept"][:, None, :]
    if mode == "predictive":
        if rng is None:
            raise ValueError("predictive mode needs an rng")
        L = np.linalg.cholesky(chain["Omega"])
        z = rng.standard_normal((chain.n_draws, chain.q, X_new.shape[0]))
        eps = np.linalg.solve(np.swapaxes(L, 1, 2), z)  # cov Omega^-1
        xi = xi + np.swapaxes(eps, 1, 2)
    mu, lam, gamma = response_links(xi, chain.l, chain.m, chain.k)
    if mode == "predictive" and chain.l:
        sd = np.sqrt(chain["sigma2_gauss"])[:, None, :]
        mu = mu + sd * rng.standard_normal(mu.shape)
    resp = np.concatenate([mu, lam, gamma], axis=-1)
    tail = 0.5 * (1.0 - level)
    levels = (tail, 0.5, 1.0 - tail)
    latent_q = np.quantile(xi, levels, axis=0)
    resp_q = np.quantile(resp, levels, axis=0)
    point = resp_q[1].copy()
    b = slice(chain.l + chain.m, chain.q)
    point[:, b] = (point[:, b] > 0.5).astype(float)
    return Prediction(latent_q, resp_q, point, levels)
