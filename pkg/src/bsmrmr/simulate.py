"""Synthetic scenarios: precision structures, sparse coefficient patterns, mixed responses."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from .model import GroupStructure, MixedResponseDataset
from .sampling import FactorizationError, cholesky, rng_stream

__all__ = [
    "SimulationScenario",
    "SyntheticData",
    "make_omega",
    "make_coefficients",
    "generate_dataset",
    "COUNT_CAP",
]

COUNT_CAP = 10_000
MAX_REDRAWS = 100

# (group sizes, nonzero row blocks as 0-based [start, stop)) per coefficient pattern
_PATTERNS = {
    1: ((5, 5, 5, 5), [(0, 2), (4, 5), (10, 12), (14, 15)]),
    2: ((5, 5, 5, 5), [(5, 7), (9, 12), (14, 15)]),
    3: ((10, 20, 10, 10, 20, 10), [(5, 10), (30, 35), (50, 55)]),
    4: ((20, 10, 10, 20, 10, 10), [(25, 30), (30, 35), (40, 45)]),
}


@dataclass(frozen=True)
class SimulationScenario:
    """Generator settings; (p, l, m, k, G) follow from the coefficient pattern.

    ``sigma_X`` is the predictor covariance scale, X ~ N(0, sigma_X I);
    ``noise_var`` is the variance of the continuous responses around their
    latent means.
    """

    omega_id: int = 1
    coeff_id: int = 1
    n: int = 100
    n_test: int = 100
    M: int | None = None
    sigma_X: float = 1.0
    l_B: float = 0.3
    u_B: float = 0.8
    noise_var: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.omega_id not in (1, 2, 3, 4, 5):
            raise ValueError(f"omega_id must be 1..5, got {self.omega_id}")
        if self.coeff_id not in _PATTERNS:
            raise ValueError(f"coeff_id must be 1..4, got {self.coeff_id}")
        if self.n < 1 or self.n_test < 1:
            raise ValueError("n and n_test must be positive")
        if not self.sigma_X > 0:
            raise ValueError("sigma_X must be positive")
        if not self.noise_var > 0:
            raise ValueError("noise_var must be positive")
        if not self.l_B < self.u_B:
            raise ValueError(f"need l_B < u_B, got ({self.l_B}, {self.u_B})")

    @property
    def group_sizes(self):
        return _PATTERNS[self.coeff_id][0]

    @property
    def p(self):
        return sum(self.group_sizes)

    @property
    def G(self):
        return len(self.group_sizes)

    @property
    def l(self):
        return 2 if self.coeff_id in (1, 2) else 5

    m = k = l

    @property
    def q(self):
        return self.l + self.m + self.k

    @property
    def n_blocks(self):
        if self.M is not None:
            return self.M
        return 3 if self.p == 20 else 5

    def to_dict(self):
        d = asdict(self)
        d.update(p=self.p, q=self.q, l=self.l, m=self.m, k=self.k, G=self.G, M=self.n_blocks)
        return d


def _omega_banded(q):
    lag = np.abs(np.subtract.outer(np.arange(q), np.arange(q)))
    vals = {0: 1.0, 1: 0.5, 2: 0.3, 3: 0.1}
    return np.vectorize(lambda d: vals.get(d, 0.0))(lag).astype(float)


def make_omega(omega_id, q, M=3, rng=None):
    """Precision matrix for one of the five dependence scenarios.

    Scenario 2 permutes Omega_1 with ``rng.permutation(q)``; scenario 4
    splits ``rng.permutation(q)`` into M nearly equal blocks (the first
    q mod M blocks get one extra index).
    """
    if omega_id == 1:
        om = _omega_banded(q)
    elif omega_id == 2:
        perm = rng.permutation(q)
        om = _omega_banded(q)[np.ix_(perm, perm)]
    elif omega_id == 3:
        lag = np.abs(np.subtract.outer(np.arange(q), np.arange(q)))
        om = 0.5 ** lag
    elif omega_id == 4:
        if not 1 <= M <= q:
            raise ValueError(f"need 1 <= M <= q, got M={M}, q={q}")
        om = np.eye(q)
        for block in np.array_split(rng.permutation(q), M):
            ix = np.ix_(block, block)
            om[ix] = 0.4
            om[block, block] = 1.0
    elif omega_id == 5:
        if q < 4:
            raise ValueError("scenario 5 needs q >= 4")
        om = np.eye(q)
        om[:4, :4] = 0.5
        np.fill_diagonal(om, 1.0)
    else:
        raise ValueError(f"unknown omega scenario {omega_id}")
    try:
        cholesky(om)
    except FactorizationError as exc:
        raise FactorizationError(f"scenario {omega_id} matrix is not positive definite: {exc}",
                                 pivot=exc.pivot) from exc
    return om


def make_coefficients(coeff_id, l_B, u_B, rng, q=None):
    """Coefficient matrix, its support mask and group sizes for a pattern.

    Every entry of a nonzero row is an independent Unif(l_B, u_B) draw.
    """
    sizes, blocks = _PATTERNS[coeff_id]
    p = sum(sizes)
    if q is None:
        q = 6 if coeff_id in (1, 2) else 15
    support = np.zeros((p, q), dtype=bool)
    for a, b in blocks:
        support[a:b] = True
    B = np.zeros((p, q))
    B[support] = rng.uniform(l_B, u_B, size=int(support.sum()))
    return B, support, sizes


class SyntheticData(NamedTuple):
    train: MixedResponseDataset
    test: MixedResponseDataset
    truth: dict


def _responses(Xi, l, m, k, rng, noise_var=1.0):
    n = Xi.shape[0]
    U = Xi[:, :l] + np.sqrt(noise_var) * rng.standard_normal((n, l))
    Z = rng.poisson(np.exp(np.minimum(Xi[:, l:l + m], 50.0))).astype(float)
    W = (rng.random((n, k)) < 1.0 / (1.0 + np.exp(-Xi[:, l + m:]))).astype(float)
    return U, Z, W


def generate_dataset(scenario, rng=None):
    """Draw train/test data and the ground truth for a scenario.

    Replicates whose largest count exceeds ``COUNT_CAP`` are redrawn (with
    the same B and Omega).
    """
    if rng is None:
        rng = rng_stream(scenario.seed)
    q, l, m, k = scenario.q, scenario.l, scenario.m, scenario.k
    omega = make_omega(scenario.omega_id, q, scenario.n_blocks, rng)
    B, support, sizes = make_coefficients(scenario.coeff_id, scenario.l_B, scenario.u_B, rng, q)
    groups = GroupStructure(sizes)
    L = cholesky(omega)
    sd_x = np.sqrt(scenario.sigma_X)
    n_tot = scenario.n + scenario.n_test
    for attempt in range(MAX_REDRAWS):
        X = sd_x * rng.standard_normal((n_tot, scenario.p))
        eps = np.linalg.solve(L.T, rng.standard_normal((q, n_tot))).T  # cov Omega^-1
        Xi = X @ B + eps
        U, Z, W = _responses(Xi, l, m, k, rng, scenario.noise_var)
        if Z.size == 0 or Z.max() <= COUNT_CAP:
            break
    else:
        raise RuntimeError(f"no replicate with counts <= {COUNT_CAP} after {MAX_REDRAWS} draws")
    tr, te = slice(0, scenario.n), slice(scenario.n, n_tot)
    train = MixedResponseDataset(X[tr], U[tr], Z[tr], W[tr], groups)
    test = MixedResponseDataset(X[te], U[te], Z[te], W[te], groups)
    truth = {
        "B": B,
        "Omega": omega,
        "support": support,
        "Xi_train": Xi[tr],
        "Xi_test": Xi[te],
        "redraws": attempt,
        "scenario": scenario.to_dict(),
    }
    return SyntheticData(train, test, truth)
