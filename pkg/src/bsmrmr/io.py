"""File formats: dataset CSV + schema, chain binaries, run configs, JSON artifacts.

Every writer goes through a temporary ``<path>.tmp`` file followed by an
atomic rename, so an interrupted run never leaves a half-written artifact
under its final name.
"""

from __future__ import annotations

import csv
import io as _io
import json
import os
from dataclasses import dataclass, field, fields

import numpy as np
import tomli
import tomli_w

from .model import CHAIN_FIELDS, Hyperparameters, MixedResponseDataset, PosteriorChain, chain_field_shapes

__all__ = [
    "FormatError",
    "atomic_write",
    "write_json",
    "read_json",
    "dataset_header",
    "save_dataset",
    "load_dataset",
    "save_chain",
    "load_chain",
    "export_chain_csv",
    "RunConfig",
    "load_config",
    "save_config",
]

CHAIN_MAGIC = "bsmrmr-chain"
CHAIN_VERSION = 1


class FormatError(ValueError):
    """A file does not match the expected format; the message says where."""


def atomic_write(path, data):
    path = os.fspath(path)
    tmp = path + ".tmp"
    mode = "wb" if isinstance(data, (bytes, bytearray)) else "w"
    kw = {} if mode == "wb" else {"encoding": "utf-8", "newline": ""}
    with open(tmp, mode, **kw) as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)
    return path


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    if isinstance(x, tuple):
        return list(x)
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


def write_json(path, obj):
    text = json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n"
    return atomic_write(path, text)


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


# datasets

def dataset_header(p, l, m, k):
    return ([f"x{i}" for i in range(1, p + 1)] + [f"u{i}" for i in range(1, l + 1)]
            + [f"z{i}" for i in range(1, m + 1)] + [f"w{i}" for i in range(1, k + 1)])


def _fmt(v):
    return repr(float(v)) if v != int(v) or abs(v) >= 1e16 else str(int(v))


def save_dataset(data, csv_path, schema_path=None):
    """Write the CSV (and, if given, the TOML schema sidecar)."""
    rows = [",".join(dataset_header(data.p, data.l, data.m, data.k))]
    full = np.hstack([data.X, data.Y])
    for r in full:
        rows.append(",".join(_fmt(v) for v in r))
    atomic_write(csv_path, "\n".join(rows) + "\n")
    if schema_path is not None:
        schema = {"l": data.l, "m": data.m, "k": data.k, "group_sizes": list(data.groups.sizes)}
        atomic_write(schema_path, tomli_w.dumps(schema))


def _read_schema(path):
    try:
        with open(path, "rb") as fh:
            s = tomli.load(fh)
    except tomli.TOMLDecodeError as exc:
        raise FormatError(f"{path}: invalid schema file: {exc}") from exc
    allowed = {"l", "m", "k", "group_sizes"}
    extra = set(s) - allowed
    if extra:
        raise FormatError(f"{path}: unknown schema key {sorted(extra)[0]!r}")
    missing = allowed - set(s)
    if missing:
        raise FormatError(f"{path}: schema lacks {sorted(missing)}")
    for key in ("l", "m", "k"):
        if not isinstance(s[key], int) or s[key] < 0:
            raise FormatError(f"{path}: {key} must be a nonnegative integer")
    gs = s["group_sizes"]
    if not isinstance(gs, list) or not gs or not all(isinstance(g, int) and g > 0 for g in gs):
        raise FormatError(f"{path}: group_sizes must be a non-empty list of positive integers")
    return s


def load_dataset(csv_path, schema_path):
    """Read and validate a dataset. Errors carry 1-based (row, column) positions."""
    schema = _read_schema(schema_path)
    l, m, k, sizes = schema["l"], schema["m"], schema["k"], schema["group_sizes"]
    with open(csv_path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FormatError(f"{csv_path}: empty file")
    header = [h.strip() for h in rows[0]]
    n_x = sum(1 for h in header if h.startswith("x"))
    if sum(sizes) != n_x:
        raise FormatError(
            f"{schema_path}: group_sizes sum to {sum(sizes)} but {csv_path} has {n_x} predictor columns"
        )
    expect = dataset_header(n_x, l, m, k)
    if header != expect:
        raise FormatError(f"{csv_path}: header does not match schema; expected {','.join(expect)}")
    width = len(expect)
    body = np.empty((len(rows) - 1, width))
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise FormatError(f"{csv_path}: row {i} has {len(row)} fields, expected {width}")
        for j, cell in enumerate(row):
            try:
                body[i - 2, j] = float(cell)
            except ValueError:
                raise FormatError(f"{csv_path}: row {i}, column {j + 1} ({expect[j]}): "
                                  f"not a number: {cell!r}") from None
    p = n_x
    Z = body[:, p + l:p + l + m]
    bad = (Z < 0) | (Z != np.round(Z)) | ~np.isfinite(Z)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise FormatError(f"{csv_path}: row {i + 2}, column {p + l + j + 1} (z{j + 1}): "
                          f"count {Z[i, j]!r} is not a nonnegative integer")
    W = body[:, p + l + m:]
    bad = (W != 0) & (W != 1)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise FormatError(f"{csv_path}: row {i + 2}, column {p + l + m + j + 1} (w{j + 1}): "
                          f"binary value {W[i, j]!r} is not 0/1")
    try:
        return MixedResponseDataset(body[:, :p], body[:, p:p + l], Z, W, tuple(sizes))
    except ValueError as exc:
        raise FormatError(f"{csv_path}: {exc}") from exc


# chains

def save_chain(chain, path):
    """One JSON header line, then every field's draws as little-endian float64."""
    header = {
        "format": CHAIN_MAGIC,
        "version": CHAIN_VERSION,
        "n_draws": chain.n_draws,
        "n_burnin": chain.n_burnin,
        "l": chain.l, "m": chain.m, "k": chain.k,
        "group_sizes": list(chain.group_sizes),
        "fields": list(CHAIN_FIELDS),
        "seed": chain.seed,
        "stream": list(chain.stream),
        "truncated": bool(chain.truncated),
        "digest": chain.digest(),
    }
    parts = [json.dumps(header, sort_keys=True).encode() + b"\n",
             np.ascontiguousarray(chain.iterations, dtype="<f8").tobytes()]
    for name in CHAIN_FIELDS:
        parts.append(np.ascontiguousarray(chain.draws[name], dtype="<f8").tobytes())
    return atomic_write(path, b"".join(parts))


def load_chain(path):
    with open(path, "rb") as fh:
        line = fh.readline()
        payload = fh.read()
    try:
        h = json.loads(line)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: chain header is not valid JSON") from exc
    if h.get("format") != CHAIN_MAGIC:
        raise FormatError(f"{path}: not a chain file")
    if h.get("version") != CHAIN_VERSION:
        raise FormatError(f"{path}: unsupported chain version {h.get('version')}")
    if list(h["fields"]) != list(CHAIN_FIELDS):
        raise FormatError(f"{path}: unexpected field list {h['fields']}")
    n = h["n_draws"]
    p = sum(h["group_sizes"])
    q = h["l"] + h["m"] + h["k"]
    shapes = chain_field_shapes(p, q, h["l"], len(h["group_sizes"]))
    sizes = [n] + [n * int(np.prod(shapes[f], dtype=int)) for f in CHAIN_FIELDS]
    if len(payload) != 8 * sum(sizes):
        raise FormatError(f"{path}: payload has {len(payload)} bytes, expected {8 * sum(sizes)}")
    flat = np.frombuffer(payload, dtype="<f8").astype(float)
    offs = np.cumsum([0] + sizes)
    iterations = flat[offs[0]:offs[1]].astype(np.int64)
    draws = {f: flat[offs[i + 1]:offs[i + 2]].reshape((n,) + shapes[f]).copy()
             for i, f in enumerate(CHAIN_FIELDS)}
    stream = tuple(h.get("stream") or ())
    chain = PosteriorChain(draws, iterations, h["n_burnin"], h["l"], h["m"], h["k"],
                           tuple(h["group_sizes"]), h.get("seed"), stream, bool(h["truncated"]))
    if h.get("digest") and chain.digest() != h["digest"]:
        raise FormatError(f"{path}: digest mismatch, file is corrupt")
    return chain


def export_chain_csv(chain, path, thin=1, fields_=("B", "Omega", "pi", "sigma_tau2")):
    """Thinned, human-readable view of selected fields (1-based element ids)."""
    if thin < 1:
        raise ValueError("thin must be >= 1")
    cols, names = [], []
    for f in fields_:
        arr = chain.draws[f].reshape(chain.n_draws, -1)
        shape = chain.draws[f].shape[1:]
        for flat_i, idx in enumerate(np.ndindex(*shape) if shape else [()]):
            names.append(f if not idx else f"{f}[{','.join(str(i + 1) for i in idx)}]")
            cols.append(arr[:, flat_i])
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iter"] + names)
    for s in range(0, chain.n_draws, thin):
        w.writerow([str(int(chain.iterations[s]))] + ["%.17g" % c[s] for c in cols])
    return atomic_write(path, buf.getvalue())


# run configuration

_HYPER_KEYS = tuple(f.name for f in fields(Hyperparameters))
_SCENARIO_KEYS = ("omega_id", "coeff_id", "n", "n_test", "M", "sigma_X", "l_B", "u_B", "noise_var")


@dataclass
class RunConfig:
    """Flat run configuration.

    Data comes either from ``data``/``schema`` (plus optional ``test_data``
    and ``test_schema``) or from the scenario keys. Hyperparameter keys are
    those of :class:`Hyperparameters`.
    """

    data: str | None = None
    schema: str | None = None
    test_data: str | None = None
    test_schema: str | None = None
    out: str | None = None
    seed: int = 0
    n_chains: int = 1
    n_replicates: int = 10
    cv_folds: int = 10
    prediction_mode: str = "mean"
    scenario: dict = field(default_factory=dict)
    hyper: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.prediction_mode not in ("mean", "predictive"):
            raise ValueError(f"prediction_mode must be 'mean' or 'predictive', got {self.prediction_mode!r}")
        for name in ("n_chains", "n_replicates", "cv_folds"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if int(self.seed) < 0:
            raise ValueError("seed must be nonnegative")
        # build once so bad values fail before any compute
        self.hyperparameters()
        self.simulation_scenario()

    def hyperparameters(self):
        return Hyperparameters(**self.hyper)

    def simulation_scenario(self, seed=None):
        from .simulate import SimulationScenario

        return SimulationScenario(**self.scenario, seed=self.seed if seed is None else seed)

    @classmethod
    def from_mapping(cls, flat):
        top = {f.name for f in fields(cls)} - {"scenario", "hyper"}
        kw, scen, hyp = {}, {}, {}
        for key, val in flat.items():
            if key in top:
                kw[key] = val
            elif key in _SCENARIO_KEYS:
                scen[key] = val
            elif key in _HYPER_KEYS:
                hyp[key] = val
            else:
                raise KeyError(f"unknown config key {key!r}")
        return cls(**kw, scenario=scen, hyper=hyp)

    def to_mapping(self):
        out = {f.name: getattr(self, f.name) for f in fields(self) if f.name not in ("scenario", "hyper")}
        out.update(self.scenario)
        out.update(self.hyper)
        return {k: v for k, v in out.items() if v is not None}


def load_config(path):
    try:
        with open(path, "rb") as fh:
            flat = tomli.load(fh)
    except tomli.TOMLDecodeError as exc:
        raise FormatError(f"{path}: invalid config: {exc}") from exc
    nested = [k for k, v in flat.items() if isinstance(v, dict)]
    if nested:
        raise FormatError(f"{path}: config must be flat, found table {nested[0]!r}")
    try:
        return RunConfig.from_mapping(flat)
    except (KeyError, TypeError, ValueError) as exc:
        msg = exc.args[0] if exc.args else str(exc)
        raise FormatError(f"{path}: {msg}") from exc


def save_config(cfg, path):
    return atomic_write(path, tomli_w.dumps(cfg.to_mapping()))
