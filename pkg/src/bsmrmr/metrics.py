"""Loss measures, selection error, prediction error and replicate studies."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .gibbs import posterior_predict, run_chain
from .model import Hyperparameters
from .sampling import rng_stream
from .simulate import generate_dataset

__all__ = [
    "loss_matrix",
    "fsl",
    "rmse",
    "misclassification",
    "interval_coverage",
    "EvaluationReport",
    "evaluate_fit",
    "replicate_study",
    "METRIC_NAMES",
]

METRIC_NAMES = (
    "loss_B",
    "loss_Omega",
    "fsl_B",
    "fsl_Omega",
    "rmse_continuous",
    "rmse_count",
    "misclass_rate",
)

# column headings used in the table-style CSV
_TABLE_LABELS = {
    "loss_B": "L(B)",
    "loss_Omega": "L(Omega)",
    "fsl_B": "FSL(B)",
    "fsl_Omega": "FSL(Omega)",
    "rmse_continuous": "RMSE(N)",
    "rmse_count": "RMSE(P)",
    "misclass_rate": "ME",
}


def _pair(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def loss_matrix(true, est):
    """Root-mean-square difference over all entries."""
    a, b = _pair(true, est)
    if a.size == 0:
        raise ValueError("empty matrices")
    return float(np.sqrt(np.mean((a - b) ** 2)))


def fsl(true_support, est_support, upper=False):
    """False positives plus false negatives, as a fraction of the entries compared.

    With ``upper=True`` only the strict upper triangle is used (precision
    matrix edges; the diagonal is always nonzero).
    """
    t = np.asarray(true_support, dtype=bool)
    e = np.asarray(est_support, dtype=bool)
    if t.shape != e.shape:
        raise ValueError(f"shape mismatch: {t.shape} vs {e.shape}")
    if upper:
        if t.ndim != 2 or t.shape[0] != t.shape[1]:
            raise ValueError("upper=True needs square masks")
        iu = np.triu_indices(t.shape[0], 1)
        t, e = t[iu], e[iu]
    if t.size == 0:
        return 0.0
    return float(np.count_nonzero(t != e) / t.size)


def rmse(y, yhat):
    a, b = _pair(y, yhat)
    if a.size == 0:
        raise ValueError("empty input")
    return float(np.sqrt(np.mean((a - b) ** 2)))


def misclassification(y, gamma_hat):
    """Error rate of the rule 1{gamma_hat > 0.5}; a tie at exactly 0.5 predicts 0."""
    y, g = _pair(y, gamma_hat)
    if y.size == 0:
        raise ValueError("empty input")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("y must be 0/1")
    return float(np.mean((g > 0.5) != (y == 1)))


def interval_coverage(truth, intervals):
    """Fraction of truth values inside the closed intervals [lo, hi].

    ``intervals`` is a sequence of (lo, hi) pairs or an array whose last
    axis has length 2.
    """
    t = np.asarray(truth, dtype=float).ravel()
    iv = np.asarray(intervals, dtype=float).reshape(-1, 2)
    if iv.shape[0] != t.size:
        raise ValueError(f"{t.size} truth values but {iv.shape[0]} intervals")
    if t.size == 0:
        raise ValueError("empty input")
    return float(np.mean((iv[:, 0] <= t) & (t <= iv[:, 1])))


@dataclass
class EvaluationReport:
    """Per-replicate metrics plus mean and standard error of each."""

    replicates: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def add(self, row):
        missing = set(METRIC_NAMES) - set(row)
        if missing:
            raise ValueError(f"replicate row lacks {sorted(missing)}")
        self.replicates.append({k: float(row[k]) for k in METRIC_NAMES})

    @property
    def n_replicates(self):
        return len(self.replicates)

    def values(self, name):
        return np.array([r[name] for r in self.replicates], dtype=float)

    def mean(self, name):
        return float(np.mean(self.values(name)))

    def stderr(self, name):
        v = self.values(name)
        if v.size < 2:
            return 0.0
        return float(np.std(v, ddof=1) / math.sqrt(v.size))

    def __getattr__(self, name):
        # report.loss_B etc. give the replicate mean
        if name in METRIC_NAMES:
            return self.mean(name)
        raise AttributeError(name)

    def summary(self):
        return {k: {"mean": self.mean(k), "se": self.stderr(k)} for k in METRIC_NAMES}

    def to_dict(self):
        return {
            "n_replicates": self.n_replicates,
            "summary": self.summary(),
            "replicates": self.replicates,
            "meta": self.meta,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d):
        rep = cls(meta=dict(d.get("meta", {})))
        for row in d["replicates"]:
            rep.add(row)
        return rep

    def to_csv(self, label="BS-MRMR"):
        """One row per method; each cell reads ``mean (se)`` with 3 decimals."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method"] + [_TABLE_LABELS[k] for k in METRIC_NAMES])
        w.writerow([label] + [f"{self.mean(k):.3f} ({self.stderr(k):.3f})" for k in METRIC_NAMES])
        return buf.getvalue()


def evaluate_fit(chain, test, truth):
    """All metrics for one fitted chain against the generating truth and test set.

    Point estimates are element-wise posterior medians; supports are the
    majority vote over retained draws.
    """
    l, m = chain.l, chain.m
    pred = posterior_predict(chain, test.X, mode="mean")
    Y = test.Y
    cont, cnt, bnr = slice(0, l), slice(l, l + m), slice(l + m, chain.q)
    nan = float("nan")
    return {
        "loss_B": loss_matrix(truth["B"], chain.median("B")),
        "loss_Omega": loss_matrix(truth["Omega"], chain.median("Omega")),
        "fsl_B": fsl(truth["support"], chain.support("B")),
        "fsl_Omega": fsl(np.asarray(truth["Omega"]) != 0, chain.edge_support(), upper=True),
        "rmse_continuous": rmse(Y[:, cont], pred.point[:, cont]) if l else nan,
        "rmse_count": rmse(Y[:, cnt], pred.point[:, cnt]) if m else nan,
        "misclass_rate": misclassification(Y[:, bnr], pred.median[:, bnr]) if chain.k else nan,
    }


def run_replicate(scenario, r, hyper, seed):
    """Generate, fit and score replicate ``r``; data and chain use separate streams."""
    data = generate_dataset(scenario, rng_stream(seed, r, 0))
    chain = run_chain(data.train, hyper, rng=rng_stream(seed, r, 1), seed=seed, stream=(r, 1))
    return evaluate_fit(chain, data.test, data.truth), chain


def replicate_study(scenario, n_replicates, hyper=None, seed=0, replicate_ids=None,
                    progress=None):
    """Repeat generate, fit and evaluate over independent replicates.

    Replicate ``r`` draws its data from stream ``(seed, r, 0)`` and its
    chain from ``(seed, r, 1)``, so a study is reproducible from ``seed``
    and individual replicates can be rerun alone. ``replicate_ids``
    overrides the default ids ``0..n_replicates-1`` (repeating an id
    repeats the replicate exactly).
    """
    hyper = hyper or Hyperparameters()
    ids = list(range(n_replicates)) if replicate_ids is None else [int(i) for i in replicate_ids]
    if not ids:
        raise ValueError("need at least one replicate")
    report = EvaluationReport(meta={
        "scenario": scenario.to_dict(),
        "hyperparameters": hyper.to_dict(),
        "seed": int(seed),
        "replicate_ids": ids,
    })
    for r in ids:
        row, _ = run_replicate(scenario, r, hyper, seed)
        report.add(row)
        if progress is not None:
            progress(r, row)
    return report
