"""Datasets, group structure, hyperparameters and the Gibbs state."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields, replace

import numpy as np
from scipy.special import expit

__all__ = [
    "GroupStructure",
    "MixedResponseDataset",
    "Hyperparameters",
    "ModelState",
    "PosteriorChain",
    "CHAIN_FIELDS",
    "effective_coefficients",
    "linear_predictor",
    "response_links",
]

# largest log-mean we are willing to exponentiate for a count slot
MAX_LOG_RATE = 700.0


@dataclass(frozen=True)
class GroupStructure:
    """Contiguous partition of the p predictors into G groups."""

    sizes: tuple

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        if len(sizes) < 1:
            raise ValueError("at least one group is required")
        if any(s < 1 for s in sizes):
            raise ValueError(f"group sizes must be positive, got {sizes}")
        object.__setattr__(self, "sizes", sizes)

    @property
    def n_groups(self):
        return len(self.sizes)

    @property
    def n_features(self):
        return sum(self.sizes)

    @property
    def offsets(self):
        return np.concatenate([[0], np.cumsum(self.sizes)]).astype(int)

    def slice(self, g):
        off = self.offsets
        return slice(int(off[g]), int(off[g + 1]))

    def slices(self):
        return [self.slice(g) for g in range(self.n_groups)]

    def group_index(self):
        """Group id of every predictor column."""
        return np.repeat(np.arange(self.n_groups), self.sizes)


@dataclass
class MixedResponseDataset:
    """Predictors plus continuous (U), count (Z) and binary (W) responses."""

    X: np.ndarray
    U: np.ndarray
    Z: np.ndarray
    W: np.ndarray
    groups: GroupStructure

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim != 2:
            raise ValueError("X must be a 2-d array")
        n = self.X.shape[0]
        self.U = _as_block(self.U, n, "U")
        self.Z = _as_block(self.Z, n, "Z")
        self.W = _as_block(self.W, n, "W")
        if not isinstance(self.groups, GroupStructure):
            self.groups = GroupStructure(tuple(self.groups))
        if n < 1:
            raise ValueError("dataset has no rows")
        if self.q < 1:
            raise ValueError("at least one response is required")
        if self.groups.n_features != self.p:
            raise ValueError(
                f"group sizes sum to {self.groups.n_features} but X has {self.p} columns"
            )
        for name, a in (("X", self.X), ("U", self.U), ("Z", self.Z), ("W", self.W)):
            if not np.all(np.isfinite(a)):
                i, j = np.argwhere(~np.isfinite(a))[0]
                raise ValueError(f"{name} has a missing or non-finite value at ({i}, {j})")
        bad = (self.Z < 0) | (self.Z != np.round(self.Z))
        if bad.any():
            i, j = np.argwhere(bad)[0]
            raise ValueError(f"count response Z[{i}, {j}] = {self.Z[i, j]} is not a nonnegative integer")
        bad = (self.W != 0) & (self.W != 1)
        if bad.any():
            i, j = np.argwhere(bad)[0]
            raise ValueError(f"binary response W[{i}, {j}] = {self.W[i, j]} is not 0/1")

    @classmethod
    def from_responses(cls, X, Y, l, m, k, groups):
        """Split an n x q response matrix ordered (continuous, count, binary)."""
        Y = np.asarray(Y, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        if Y.shape[1] != l + m + k:
            raise ValueError(f"Y has {Y.shape[1]} columns, expected l+m+k = {l + m + k}")
        return cls(X, Y[:, :l], Y[:, l:l + m], Y[:, l + m:], groups)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    @property
    def l(self):
        return self.U.shape[1]

    @property
    def m(self):
        return self.Z.shape[1]

    @property
    def k(self):
        return self.W.shape[1]

    @property
    def q(self):
        return self.l + self.m + self.k

    @property
    def Y(self):
        return np.hstack([self.U, self.Z, self.W])


def _as_block(a, n, name):
    if a is None:
        return np.zeros((n, 0))
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2 or a.shape[0] != n:
        raise ValueError(f"{name} must have {n} rows, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class Hyperparameters:
    """Prior constants and chain settings.

    ``a5``, ``a6`` and ``lam`` default to q, q(q-1)/2 and q once the number
    of responses is known (see :meth:`resolve`). ``alpha0`` adds extra
    degrees of freedom to the precision-matrix update (|Omega|^(alpha0/2)
    prior factor); it is 0 in the base model and only used by the
    sensitivity sweep.
    """

    a1: float = 20.0
    a2: float = 40.0
    a3: float = 20.0
    a4: float = 40.0
    a5: float | None = None
    a6: float | None = None
    sigma0: float = 0.1
    sigma1: float = 3.0
    lam: float | None = None
    d: float = 1.0
    alpha0: float = 0.0
    gauss_var_shape: float = 0.5
    gauss_var_scale: float = 0.5
    n_iter: int = 10000
    n_burnin: int = 2000
    thin: int = 1
    mh_step: float = 0.5
    em_interval: int = 100
    adapt_interval: int = 50
    fit_intercept: bool = True
    unsquared_sigma_update: bool = False

    def __post_init__(self):
        for name in ("a1", "a2", "a3", "a4", "sigma0", "sigma1", "d", "gauss_var_shape",
                     "gauss_var_scale", "mh_step"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("a5", "a6", "lam"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} must be positive, got {v}")
        if self.alpha0 < 0:
            raise ValueError("alpha0 must be nonnegative")
        if not self.sigma0 < self.sigma1:
            raise ValueError(f"sigma0 ({self.sigma0}) must be smaller than sigma1 ({self.sigma1})")
        if self.n_iter < 1 or self.n_burnin < 0:
            raise ValueError("n_iter must be positive and n_burnin nonnegative")
        if not self.n_burnin < self.n_iter:
            raise ValueError(f"n_burnin ({self.n_burnin}) must be smaller than n_iter ({self.n_iter})")
        if self.thin < 1 or self.em_interval < 1 or self.adapt_interval < 1:
            raise ValueError("thin, em_interval and adapt_interval must be >= 1")

    def resolve(self, q):
        """Fill in the q-dependent defaults."""
        return replace(
            self,
            a5=float(q) if self.a5 is None else self.a5,
            a6=(q * (q - 1) / 2 if q > 1 else 1.0) if self.a6 is None else self.a6,
            lam=float(q) if self.lam is None else self.lam,
        )

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class ModelState:
    """One full Gibbs state.

    ``B_tilde`` rows of excluded groups are exact zeros; ``tau`` is stored
    flat (length p) and a zero entry removes that predictor row from the
    effective coefficients.
    """

    Xi: np.ndarray
    B_tilde: np.ndarray
    tau: np.ndarray
    group_included: np.ndarray
    Omega: np.ndarray
    edge_ind: np.ndarray
    pi1: float
    pi2: float
    pi3: float
    sigma_tau2: float
    sigma2_gauss: np.ndarray
    intercept: np.ndarray
    d: float
    mh_step: np.ndarray = field(default=None)
    mh_accept: np.ndarray = field(default=None)

    @property
    def B(self):
        return effective_coefficients(self)

    def copy(self):
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = v.copy() if isinstance(v, np.ndarray) else v
        return ModelState(**out)

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: (np.array(v) if isinstance(v, (list, np.ndarray)) else v)
                      for k, v in d.items()})

    def support_violations(self, groups):
        """Descriptions of every broken support/positivity invariant (empty if none)."""
        out = []
        B = self.B
        for g, sl in enumerate(groups.slices()):
            block_zero = not np.any(self.B_tilde[sl])
            if block_zero == bool(self.group_included[g]):
                out.append(f"group {g}: included={bool(self.group_included[g])} but zero block={block_zero}")
        for j in np.flatnonzero(self.tau == 0):
            if np.any(B[j]):
                out.append(f"row {j}: tau = 0 but effective row is nonzero")
        if np.any(self.tau < 0):
            out.append("negative tau")
        if not np.allclose(self.Omega, self.Omega.T, rtol=0, atol=1e-10):
            out.append("Omega is not symmetric")
        try:
            np.linalg.cholesky(self.Omega)
        except np.linalg.LinAlgError:
            out.append("Omega is not positive definite")
        return out


def effective_coefficients(state):
    """B = diag(tau) B_tilde, i.e. row j scaled by tau_j."""
    return state.tau[:, None] * state.B_tilde


def linear_predictor(B, x, intercept=None):
    """B^T x (plus an optional intercept). Works row-wise for a 2-d ``x``."""
    B = np.asarray(B, dtype=float)
    out = np.asarray(x, dtype=float) @ B
    if intercept is not None:
        out = out + intercept
    return out


def response_links(xi, l, m, k):
    """Map latent predictors to (mu, lambda, gamma) via identity/log/logit links.

    The last axis of ``xi`` holds the q = l+m+k slots in (continuous,
    count, binary) order.
    """
    xi = np.asarray(xi, dtype=float)
    if xi.shape[-1] != l + m + k:
        raise ValueError(f"xi has {xi.shape[-1]} slots, expected {l + m + k}")
    mu = xi[..., :l]
    eta = xi[..., l:l + m]
    if np.any(eta > MAX_LOG_RATE):
        raise OverflowError(f"count-slot linear predictor exceeds {MAX_LOG_RATE}; exp would overflow")
    lam = np.exp(eta)
    gamma = expit(xi[..., l + m:])
    return mu, lam, gamma


# fields recorded for each retained draw, in on-disk order
CHAIN_FIELDS = ("B", "B_tilde", "tau", "group_included", "intercept", "Omega",
                "edge_ind", "pi", "sigma_tau2", "d", "sigma2_gauss")


def chain_field_shapes(p, q, l, G):
    return {
        "B": (p, q),
        "B_tilde": (p, q),
        "tau": (p,),
        "group_included": (G,),
        "intercept": (q,),
        "Omega": (q, q),
        "edge_ind": (q, q),
        "pi": (3,),
        "sigma_tau2": (),
        "d": (),
        "sigma2_gauss": (l,),
    }


@dataclass
class PosteriorChain:
    """Retained draws from one or more chains.

    ``draws[name]`` has shape (n_draws, *field_shape). Summaries only ever
    see the retained (post burn-in) draws.
    """

    draws: dict
    iterations: np.ndarray
    n_burnin: int
    l: int
    m: int
    k: int
    group_sizes: tuple
    seed: int | None = None
    stream: tuple = ()
    truncated: bool = False

    @property
    def n_draws(self):
        return len(self.iterations)

    @property
    def q(self):
        return self.l + self.m + self.k

    @property
    def p(self):
        return int(sum(self.group_sizes))

    def __getitem__(self, name):
        return self.draws[name]

    def median(self, name):
        return np.median(self.draws[name], axis=0)

    def quantile(self, name, qs):
        return np.quantile(self.draws[name], qs, axis=0)

    def support(self, name="B"):
        """Majority-vote support: entry nonzero in more than half the draws."""
        return np.mean(self.draws[name] != 0, axis=0) > 0.5

    def edge_support(self):
        """Majority vote of the edge indicators (strict upper triangle meaningful)."""
        return np.mean(self.draws["edge_ind"], axis=0) > 0.5

    def digest(self):
        h = hashlib.sha256()
        for name in CHAIN_FIELDS:
            h.update(name.encode())
            h.update(np.ascontiguousarray(self.draws[name], dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.iterations, dtype="<i8").tobytes())
        return h.hexdigest()

    @classmethod
    def merge(cls, chains):
        """Pool the retained draws of several chains (same model dimensions)."""
        chains = list(chains)
        if not chains:
            raise ValueError("nothing to merge")
        first = chains[0]
        for c in chains[1:]:
            if (c.l, c.m, c.k, tuple(c.group_sizes)) != (first.l, first.m, first.k, tuple(first.group_sizes)):
                raise ValueError("chains have different model dimensions")
        return cls(
            draws={name: np.concatenate([c.draws[name] for c in chains]) for name in CHAIN_FIELDS},
            iterations=np.concatenate([c.iterations for c in chains]),
            n_burnin=first.n_burnin,
            l=first.l, m=first.m, k=first.k,
            group_sizes=tuple(first.group_sizes),
            seed=first.seed,
            stream=first.stream,
            truncated=any(c.truncated for c in chains),
        )
