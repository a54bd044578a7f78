"""Trace extraction, autocorrelation and effective sample size for retained draws."""

from __future__ import annotations

import csv
import io
import re
import warnings
from typing import NamedTuple

import numpy as np

from .io import atomic_write

__all__ = [
    "TraceSeries",
    "DegenerateSeriesWarning",
    "acf",
    "effective_sample_size",
    "parse_param_id",
    "extract_trace",
    "export_traces",
    "read_traces",
    "summarize",
]


class DegenerateSeriesWarning(UserWarning):
    """The series has zero variance; ESS is reported as 1."""


class TraceSeries(NamedTuple):
    param: str
    values: np.ndarray


# "B[3,2]", "Omega[1,4]", "tau[5]", "sigma_tau2"; indices are 1-based
_ID = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*(?:\[\s*(\d+)\s*(?:,\s*(\d+)\s*)?\])?\s*$")
_ALIASES = {"Ω": "Omega", "omega": "Omega", "b": "B"}


def parse_param_id(param):
    """Split ``"B[3,2]"`` into ``("B", (2, 1))`` (0-based index tuple)."""
    param = param.replace("Ω", "Omega")
    mt = _ID.match(param)
    if mt is None:
        raise ValueError(f"cannot parse parameter id {param!r}")
    name = _ALIASES.get(mt.group(1), mt.group(1))
    idx = tuple(int(g) - 1 for g in mt.group(2, 3) if g is not None)
    if any(i < 0 for i in idx):
        raise ValueError(f"indices in {param!r} are 1-based")
    return name, idx


def _values(x):
    if isinstance(x, TraceSeries):
        x = x.values
    return np.asarray(x, dtype=float).ravel()


def acf(series, max_lag):
    """Sample autocorrelation at lags 0..max_lag (biased 1/N normalization).

    A constant series has acf 1 at lag 0 and 0 elsewhere.
    """
    x = _values(series)
    n = x.size
    max_lag = int(max_lag)
    if max_lag < 0:
        raise ValueError("max_lag must be nonnegative")
    if n <= max_lag:
        raise ValueError(f"series of length {n} is too short for max_lag={max_lag}")
    x = x - x.mean()
    c0 = np.dot(x, x) / n
    out = np.zeros(max_lag + 1)
    out[0] = 1.0
    if c0 <= 0.0:
        return out
    # FFT autocovariance, zero-padded to avoid wraparound
    size = 1 << int(np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(x, size)
    cov = np.fft.irfft(f * np.conj(f), size)[: max_lag + 1] / n
    out[1:] = np.clip(cov[1:] / c0, -1.0, 1.0)
    return out


def effective_sample_size(series):
    """ESS via the initial monotone sequence estimator.

    Sums autocorrelation pairs Gamma_k = rho(2k) + rho(2k+1) while they stay
    positive, enforcing monotone decrease. A constant series yields 1 and a
    DegenerateSeriesWarning.
    """
    x = _values(series)
    n = x.size
    if n == 0:
        raise ValueError("empty series")
    if n < 4 or np.ptp(x) == 0.0:
        if np.ptp(x) == 0.0:
            warnings.warn("constant series; ESS set to 1", DegenerateSeriesWarning, stacklevel=2)
        return 1.0
    rho = acf(x, n - 1)
    n_pairs = n // 2
    gam = rho[0: 2 * n_pairs: 2] + rho[1: 2 * n_pairs: 2]
    total = 0.0
    prev = np.inf
    for g in gam:
        if g <= 0.0:
            break
        g = min(g, prev)
        total += g
        prev = g
    tau = -1.0 + 2.0 * total
    tau = max(tau, 1.0 / np.log10(max(n, 10)))  # guard against antithetic blowup
    return float(min(n / tau, n * np.log10(n)))


def extract_trace(chain, param):
    name, idx = parse_param_id(param)
    if name not in chain.draws:
        raise KeyError(f"unknown parameter {name!r} in {param!r}")
    arr = chain.draws[name]
    if len(idx) != arr.ndim - 1:
        raise ValueError(f"{param!r} needs {arr.ndim - 1} indices for field {name}")
    try:
        vals = arr[(slice(None),) + idx]
    except IndexError as exc:
        raise IndexError(f"{param!r} out of range for shape {arr.shape[1:]}") from exc
    return TraceSeries(param, np.array(vals, dtype=float))


def export_traces(chain, params, path):
    """Write ``iter,<param ids>`` CSV (UTF-8, LF) with 17 significant digits.

    Ids containing commas, such as ``B[1,2]``, are quoted in the header.
    """
    traces = [extract_trace(chain, p) for p in params]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iter"] + [t.param for t in traces])
    for i, it in enumerate(chain.iterations):
        w.writerow([str(int(it))] + ["%.17g" % t.values[i] for t in traces])
    atomic_write(path, buf.getvalue())
    return path


def read_traces(path):
    """Inverse of :func:`export_traces`: (iterations, list of TraceSeries)."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or not rows[0] or rows[0][0] != "iter":
        raise ValueError(f"{path}: not a trace file (missing 'iter' header)")
    header = rows[0][1:]
    body = np.array(rows[1:], dtype=float).reshape(len(rows) - 1, len(header) + 1)
    iters = body[:, 0].astype(np.int64)
    return iters, [TraceSeries(h, body[:, j + 1].copy()) for j, h in enumerate(header)]


def summarize(chain, params, max_lag=30):
    """Per-parameter mean, sd, ESS and ACF out to ``max_lag``."""
    out = {}
    for p in params:
        t = extract_trace(chain, p)
        lag = min(max_lag, t.values.size - 1)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateSeriesWarning)
            ess = effective_sample_size(t)
        out[p] = {
            "mean": float(np.mean(t.values)),
            "sd": float(np.std(t.values)),
            "ess": ess,
            "acf": acf(t, lag).tolist(),
        }
    return out
