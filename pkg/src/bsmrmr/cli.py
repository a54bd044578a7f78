"""Command-line entry point: ``bsmrmr <verb> [options]``.

Exit status is 0 on success, 1 for numerical failures inside the sampler
and 2 for I/O or configuration problems. Errors are printed to standard
error as a single JSON object.
"""

from __future__ import annotations

import argparse
import csv
import io as _io
import itertools
import json
import logging
import os
import re
import sys
from dataclasses import replace

import numpy as np

from . import io
from .diagnostics import export_traces, summarize
from .estimator import fit_chains
from .gibbs import SamplerError, posterior_predict, run_chain
from .metrics import (
    EvaluationReport,
    evaluate_fit,
    misclassification,
    replicate_study,
    rmse,
)
from .model import MixedResponseDataset
from .sampling import DomainError, FactorizationError, rng_stream
from .simulate import generate_dataset

log = logging.getLogger("bsmrmr")

EXIT_OK, EXIT_NUMERIC, EXIT_IO = 0, 1, 2


class UsageError(Exception):
    pass


# helpers

def _config(args):
    cfg = io.load_config(args.config) if args.config else io.RunConfig()
    upd = {}
    if args.seed is not None:
        upd["seed"] = args.seed
    if args.chains is not None:
        upd["n_chains"] = args.chains
    if args.out is not None:
        upd["out"] = args.out
    for key in ("data", "schema", "test_data", "test_schema"):
        v = getattr(args, key, None)
        if v is not None:
            upd[key] = v
    if getattr(args, "mode", None):
        upd["prediction_mode"] = args.mode
    if getattr(args, "replicates", None):
        upd["n_replicates"] = args.replicates
    if getattr(args, "folds", None):
        upd["cv_folds"] = args.folds
    hyp = dict(cfg.hyper)
    for key in ("n_iter", "n_burnin"):
        v = getattr(args, key, None)
        if v is not None:
            hyp[key] = v
    scen = dict(cfg.scenario)
    for key in ("omega_id", "coeff_id"):
        v = getattr(args, key, None)
        if v is not None:
            scen[key] = v
    return replace(cfg, **upd, hyper=hyp, scenario=scen)


def _outdir(cfg):
    out = cfg.out or "."
    os.makedirs(out, exist_ok=True)
    return out


def _need(path, what):
    if not path:
        raise UsageError(f"missing {what}")
    if not os.path.exists(path):
        raise FileNotFoundError(f"{what} not found: {path}")
    return path


def _schema_for(csv_path, schema):
    return schema or os.path.splitext(csv_path)[0] + ".schema.toml"


def _load(csv_path, schema, what="dataset"):
    _need(csv_path, what)
    return io.load_dataset(csv_path, _need(_schema_for(csv_path, schema), f"{what} schema"))


# verbs

def cmd_simulate(cfg, args):
    out = _outdir(cfg)
    sc = cfg.simulation_scenario()
    data = generate_dataset(sc, rng_stream(cfg.seed, 0))
    io.save_dataset(data.train, os.path.join(out, "train.csv"), os.path.join(out, "train.schema.toml"))
    io.save_dataset(data.test, os.path.join(out, "test.csv"), os.path.join(out, "test.schema.toml"))
    truth = {k: data.truth[k] for k in ("B", "Omega", "support", "scenario", "redraws")}
    io.write_json(os.path.join(out, "truth.json"), truth)
    return {"train": os.path.join(out, "train.csv"), "test": os.path.join(out, "test.csv")}


def cmd_fit(cfg, args):
    out = _outdir(cfg)
    data = _load(cfg.data, cfg.schema)
    chain = fit_chains(data, cfg.hyperparameters(), cfg.seed, cfg.n_chains, args.threads)
    path = os.path.join(out, "chain.bin")
    io.save_chain(chain, path)
    summary = {
        "n_draws": chain.n_draws,
        "digest": chain.digest(),
        "B": chain.median("B"),
        "intercept": chain.median("intercept"),
        "Omega": chain.median("Omega"),
        "support": chain.support("B").astype(int),
    }
    io.write_json(os.path.join(out, "fit.json"), summary)
    if args.csv_thin:
        io.export_chain_csv(chain, os.path.join(out, "chain.csv"), thin=args.csv_thin)
    return {"chain": path, "digest": summary["digest"]}


def _chain_arg(args, cfg):
    path = args.chain or os.path.join(cfg.out or ".", "chain.bin")
    return io.load_chain(_need(path, "chain file"))


def cmd_predict(cfg, args):
    out = _outdir(cfg)
    chain = _chain_arg(args, cfg)
    src = cfg.test_data or cfg.data
    data = _load(src, cfg.test_schema if cfg.test_data else cfg.schema)
    rng = rng_stream(cfg.seed, 3)
    pred = posterior_predict(chain, data.X, mode=cfg.prediction_mode, rng=rng)
    names = io.dataset_header(0, chain.l, chain.m, chain.k)
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["row"] + [f"{n}_{s}" for n in names for s in ("point", "lower", "median", "upper")])
    for i in range(data.n):
        cells = [str(i + 1)]
        for j in range(chain.q):
            cells += ["%.17g" % v for v in (pred.point[i, j], pred.lower[i, j], pred.median[i, j], pred.upper[i, j])]
        w.writerow(cells)
    path = os.path.join(out, "predictions.csv")
    io.atomic_write(path, buf.getvalue())
    return {"predictions": path}


def cmd_evaluate(cfg, args):
    out = _outdir(cfg)
    chain = _chain_arg(args, cfg)
    test = _load(cfg.test_data, cfg.test_schema, "test dataset")
    truth_path = _need(args.truth or os.path.join(out, "truth.json"), "truth file")
    t = io.read_json(truth_path)
    truth = {"B": np.array(t["B"]), "Omega": np.array(t["Omega"]), "support": np.array(t["support"], dtype=bool)}
    rep = EvaluationReport(meta={"chain_digest": chain.digest()})
    rep.add(evaluate_fit(chain, test, truth))
    io.write_json(os.path.join(out, "report.json"), rep.to_dict())
    io.atomic_write(os.path.join(out, "report.csv"), rep.to_csv())
    return rep.summary()


def _default_params(chain):
    rng = rng_stream(0, 7)
    ids = []
    for _ in range(3):
        i, j = rng.integers(chain.p), rng.integers(chain.q)
        ids.append(f"B[{i + 1},{j + 1}]")
    for _ in range(3):
        i, j = sorted(rng.choice(chain.q, 2, replace=False)) if chain.q > 1 else (0, 0)
        ids.append(f"Omega[{i + 1},{j + 1}]")
    return ids


def cmd_diagnose(cfg, args):
    out = _outdir(cfg)
    chain = _chain_arg(args, cfg)
    if args.params:
        # commas inside brackets belong to the index, not the list
        params = [p.strip() for p in re.findall(r"[^,\[]+(?:\[[^\]]*\])?", args.params) if p.strip()]
    else:
        params = _default_params(chain)
    export_traces(chain, params, os.path.join(out, "traces.csv"))
    summ = summarize(chain, params, max_lag=args.max_lag)
    io.write_json(os.path.join(out, "diagnostics.json"), summ)
    return {p: {"ess": v["ess"]} for p, v in summ.items()}


def cmd_replicate_study(cfg, args):
    out = _outdir(cfg)
    rep = replicate_study(cfg.simulation_scenario(), cfg.n_replicates, cfg.hyperparameters(),
                          seed=cfg.seed,
                          progress=lambda r, row: log.info("replicate %d: %s", r, row))
    io.write_json(os.path.join(out, "report.json"), rep.to_dict())
    io.atomic_write(os.path.join(out, "report.csv"), rep.to_csv())
    return rep.summary()


SWEEP_FACTORS = ("a1_a2", "a3_a4", "a5_a6", "alpha_lam", "sigma0_sigma1")


def sweep_design(p, q):
    """The 2^5 full factorial over five hyperparameter pairs, first factor varying fastest."""
    levels = [
        [(1.0, 1.0), (2.0, 2.0)],
        [(2.0 * p, float(p)), (float(p), float(p))],
        [(float(q), max(q * (q - 1) / 2.0, 1.0)), (float(q), float(q))],
        [(q / 2.0, float(q)), (float(q), float(q))],
        [(0.1, 3.0), (0.2, 2.0)],
    ]
    rows = []
    for combo in itertools.product(range(2), repeat=5):
        lv = combo[::-1]  # product varies the last index fastest
        (a1, a2), (a3, a4), (a5, a6), (al, lam), (s0, s1) = (levels[f][lv[f]] for f in range(5))
        rows.append({"a1": a1, "a2": a2, "a3": a3, "a4": a4, "a5": a5, "a6": a6,
                     "alpha0": al, "lam": lam, "sigma0": s0, "sigma1": s1})
    return rows


def _subset(data, idx):
    return MixedResponseDataset(data.X[idx], data.U[idx], data.Z[idx], data.W[idx], data.groups)


def cmd_sweep(cfg, args):
    out = _outdir(cfg)
    if cfg.data:
        data = _load(cfg.data, cfg.schema)
    else:
        data = generate_dataset(cfg.simulation_scenario(), rng_stream(cfg.seed, 0)).train
    folds = min(cfg.cv_folds, data.n)
    perm = rng_stream(cfg.seed, 2).permutation(data.n)
    blocks = np.array_split(perm, folds) if folds > 1 else [perm]
    base = cfg.hyperparameters()
    l, m = data.l, data.m
    header = ["doe"] + list(sweep_design(1, 1)[0]) + ["rmse_continuous", "rmse_count", "misclass_rate"]
    lines = [",".join(header)]
    for d, setting in enumerate(sweep_design(data.p, data.q)):
        hyper = replace(base, **setting)
        scores = []
        for f, test_idx in enumerate(blocks):
            train_idx = np.setdiff1d(perm, test_idx) if folds > 1 else perm
            chain = run_chain(_subset(data, train_idx), hyper, seed=cfg.seed, stream=(4, d, f))
            test = _subset(data, test_idx)
            pred = posterior_predict(chain, test.X)
            pt, med = pred.point, pred.median
            Y = test.Y
            scores.append([
                rmse(Y[:, :l], pt[:, :l]) if l else np.nan,
                rmse(Y[:, l:l + m], pt[:, l:l + m]) if m else np.nan,
                misclassification(Y[:, l + m:], med[:, l + m:]) if data.k else np.nan,
            ])
        s = np.mean(scores, axis=0)
        lines.append(",".join([str(d + 1)] + ["%.6g" % v for v in setting.values()] + ["%.6g" % v for v in s]))
        log.info("design %d done", d + 1)
    path = os.path.join(out, "sweep.csv")
    io.atomic_write(path, "\n".join(lines) + "\n")
    return {"sweep": path, "rows": len(lines) - 1}


VERBS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "diagnose": cmd_diagnose,
    "replicate-study": cmd_replicate_study,
    "sweep": cmd_sweep,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat TOML run configuration")
    common.add_argument("--seed", type=int, help="root seed (overrides config)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--chains", type=int, help="number of chains")
    common.add_argument("--threads", type=int, default=1, help="worker processes for chains")
    common.add_argument("--n-iter", dest="n_iter", type=int)
    common.add_argument("--n-burnin", dest="n_burnin", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="bsmrmr", description="Sparse Bayesian regression for mixed responses.")
    sub = p.add_subparsers(dest="verb", required=True)

    s = sub.add_parser("simulate", parents=[common], help="generate a synthetic scenario")
    s.add_argument("--omega", dest="omega_id", type=int)
    s.add_argument("--coeff", dest="coeff_id", type=int)

    s = sub.add_parser("fit", parents=[common], help="run the Gibbs sampler")
    s.add_argument("--data")
    s.add_argument("--schema")
    s.add_argument("--csv-thin", type=int, default=0, help="also write a thinned CSV of the draws")

    for name in ("predict", "evaluate", "diagnose"):
        s = sub.add_parser(name, parents=[common])
        s.add_argument("--chain", help="chain file (default <out>/chain.bin)")
        if name in ("predict", "evaluate"):
            s.add_argument("--data")
            s.add_argument("--schema")
            s.add_argument("--test-data", dest="test_data")
            s.add_argument("--test-schema", dest="test_schema")
        if name == "predict":
            s.add_argument("--mode", choices=("mean", "predictive"))
        if name == "evaluate":
            s.add_argument("--truth")
        if name == "diagnose":
            s.add_argument("--params", help="comma-separated ids such as B[1,2],Omega[1,3]")
            s.add_argument("--max-lag", type=int, default=30)

    s = sub.add_parser("replicate-study", parents=[common])
    s.add_argument("--replicates", type=int)
    s.add_argument("--omega", dest="omega_id", type=int)
    s.add_argument("--coeff", dest="coeff_id", type=int)

    s = sub.add_parser("sweep", parents=[common], help="32-run hyperparameter sensitivity sweep")
    s.add_argument("--data")
    s.add_argument("--schema")
    s.add_argument("--folds", type=int)
    return p


def _fail(code, exc):
    msg = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    if isinstance(exc, SamplerError):
        msg.update(sweep=exc.sweep, step=exc.step)
    sys.stderr.write(json.dumps(msg) + "\n")
    return code


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = _config(args)
        result = VERBS[args.verb](cfg, args)
    except (SamplerError, FactorizationError, np.linalg.LinAlgError, FloatingPointError,
            OverflowError, DomainError) as exc:
        return _fail(EXIT_NUMERIC, exc)
    except (OSError, io.FormatError, UsageError, KeyError, ValueError, TypeError) as exc:
        return _fail(EXIT_IO, exc)
    sys.stdout.write(json.dumps(result, default=io._jsonable, sort_keys=True) + "\n")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
