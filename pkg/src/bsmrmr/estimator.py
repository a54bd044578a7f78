"""scikit-learn style wrapper around the Gibbs sampler."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .gibbs import posterior_predict, run_chain
from .model import GroupStructure, Hyperparameters, MixedResponseDataset, PosteriorChain
from .sampling import rng_stream

__all__ = ["BSMRMRRegressor", "fit_chains"]


def fit_chains(data, hyper, seed, n_chains=1, n_jobs=1):
    """Run ``n_chains`` independent chains on streams ``(seed, c)`` and pool them.

    Results do not depend on ``n_jobs``: each chain owns its stream and the
    pooled draws are concatenated in chain order.
    """
    if n_jobs > 1 and n_chains > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=n_jobs) as ex:
            futs = [ex.submit(run_chain, data, hyper, seed=seed, stream=(c,)) for c in range(n_chains)]
            chains = [f.result() for f in futs]
    else:
        chains = [run_chain(data, hyper, seed=seed, stream=(c,)) for c in range(n_chains)]
    return chains[0] if n_chains == 1 else PosteriorChain.merge(chains)


class BSMRMRRegressor(BaseEstimator):
    """Bayesian sparse multivariate regression for mixed responses.

    ``Y`` columns are ordered continuous, count, binary with block widths
    ``n_continuous``, ``n_count`` and ``n_binary`` (when all three are None
    every column is treated as continuous). ``groups`` lists the predictor
    group sizes; None puts each predictor in its own group.

    Fitted attributes: ``coef_`` (p x q posterior median of B),
    ``intercept_``, ``precision_`` (median Omega), ``support_`` (majority
    vote), ``edge_support_`` and the pooled ``chain_``.
    """

    def __init__(self, n_continuous=None, n_count=None, n_binary=None, groups=None, *,
                 a1=20.0, a2=40.0, a3=20.0, a4=40.0, a5=None, a6=None,
                 sigma0=0.1, sigma1=3.0, lam=None, alpha0=0.0,
                 n_iter=10000, n_burnin=2000, thin=1, fit_intercept=True,
                 unsquared_sigma_update=False, n_chains=1, n_jobs=1,
                 prediction_mode="mean", random_state=0):
        self.n_continuous = n_continuous
        self.n_count = n_count
        self.n_binary = n_binary
        self.groups = groups
        self.a1 = a1
        self.a2 = a2
        self.a3 = a3
        self.a4 = a4
        self.a5 = a5
        self.a6 = a6
        self.sigma0 = sigma0
        self.sigma1 = sigma1
        self.lam = lam
        self.alpha0 = alpha0
        self.n_iter = n_iter
        self.n_burnin = n_burnin
        self.thin = thin
        self.fit_intercept = fit_intercept
        self.unsquared_sigma_update = unsquared_sigma_update
        self.n_chains = n_chains
        self.n_jobs = n_jobs
        self.prediction_mode = prediction_mode
        self.random_state = random_state

    def _hyper(self):
        return Hyperparameters(
            a1=self.a1, a2=self.a2, a3=self.a3, a4=self.a4, a5=self.a5, a6=self.a6,
            sigma0=self.sigma0, sigma1=self.sigma1, lam=self.lam, alpha0=self.alpha0,
            n_iter=self.n_iter, n_burnin=self.n_burnin, thin=self.thin,
            fit_intercept=self.fit_intercept,
            unsquared_sigma_update=self.unsquared_sigma_update,
        )

    def _blocks(self, q):
        l, m, k = self.n_continuous, self.n_count, self.n_binary
        if l is None and m is None and k is None:
            return q, 0, 0
        l, m, k = (0 if v is None else int(v) for v in (l, m, k))
        if l + m + k != q:
            raise ValueError(f"n_continuous + n_count + n_binary = {l + m + k} but Y has {q} columns")
        return l, m, k

    def _seed(self):
        rs = self.random_state
        if rs is None:
            return int(np.random.SeedSequence().entropy % (2**63))
        if isinstance(rs, (int, np.integer)):
            return int(rs)
        raise ValueError("random_state must be an int or None")

    def fit(self, X, Y):
        X, Y = check_X_y(X, Y, multi_output=True, y_numeric=True)
        if Y.ndim == 1:
            Y = Y[:, None]
        l, m, k = self._blocks(Y.shape[1])
        sizes = (1,) * X.shape[1] if self.groups is None else tuple(int(g) for g in self.groups)
        data = MixedResponseDataset.from_responses(X, Y, l, m, k, GroupStructure(sizes))
        hyper = self._hyper()
        chain = fit_chains(data, hyper, self._seed(), self.n_chains, self.n_jobs)
        self.chain_ = chain
        self.coef_ = chain.median("B")
        self.intercept_ = chain.median("intercept")
        self.precision_ = chain.median("Omega")
        self.support_ = chain.support("B")
        self.edge_support_ = chain.edge_support()
        self.n_features_in_ = X.shape[1]
        self.blocks_ = (l, m, k)
        return self

    def _check(self, X):
        check_is_fitted(self, "chain_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, model was fitted with {self.n_features_in_}")
        return X

    def _predict(self, X, level):
        rng = rng_stream(self._seed(), 99)
        return posterior_predict(self.chain_, X, mode=self.prediction_mode, rng=rng, level=level)

    def predict(self, X):
        """Posterior-median responses; binary columns are 0/1 at the 0.5 cut-off."""
        return self._predict(self._check(X), 0.95).point

    def predict_interval(self, X, level=0.95):
        """(lower, median, upper) on the response scale."""
        pred = self._predict(self._check(X), level)
        return pred.lower, pred.median, pred.upper
