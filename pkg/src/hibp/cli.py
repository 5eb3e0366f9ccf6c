"""Command-line interface: generate, loglik, infer, predict, fof.

Exit codes: 0 success, 2 usage or validation error, 3 numeric failure.
Groups are numbered from 1 on the command line.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .errors import NumericError, ParameterError
from .generate import sample_allocation
from .infer import mcmc_config_from_dict, run_mh, summarize, traces_to_csv
from .laplace import BetaProcess, GeneralizedGamma, GroupLevySpec, group_spec_from_dict
from .likelihood import log_marginal, log_marginal_bernoulli_profile
from .model import (BaseCrmSpec, FeatureAllocation, GroupConfig, dumps_json, load_allocation,
                    load_config, validate)
from .posterior import predict_rows
from .stats import fof, fof_to_csv

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("HIBP_THREADS", "1")))
    except ValueError:
        return 1


def write_atomic(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dumps(obj) -> str:
    return dumps_json(obj, indent=2) + "\n"


def _replicate_rng(seed: int, i: int) -> np.random.Generator:
    return np.random.default_rng([seed, i])


def cmd_generate(args) -> int:
    config = load_config(args.config)
    errs = validate(config)
    if errs:
        for e in errs:
            print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    if args.replicates < 0:
        raise ParameterError("--replicates must be >= 0")
    seed = config.seed if args.seed is None else args.seed
    config = replace(config, seed=seed)
    out = Path(args.out)

    def one(i):
        alloc = sample_allocation(config, _replicate_rng(seed, i))
        stem = out / f"alloc_{i:04d}"
        if args.format in ("json", "both"):
            write_atomic(stem.with_suffix(".json"), alloc.to_json() + "\n")
        if args.format in ("csv", "both"):
            write_atomic(stem.with_suffix(".csv"), alloc.to_csv())
        return alloc.r

    idx = range(args.replicates)
    if _threads() > 1 and args.replicates > 1:
        with ThreadPoolExecutor(_threads()) as ex:
            rs = list(ex.map(one, idx))
    else:
        rs = [one(i) for i in idx]
    for i, r in zip(idx, rs):
        print(f"replicate {i}: {r} features")
    return EXIT_OK


def _parse_params(text: str):
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise ParameterError(f"--params expects theta0,theta,alpha (got {text!r})")
    if len(vals) != 3:
        raise ParameterError(f"--params expects three values (got {text!r})")
    return vals


def reparametrize(alloc: FeatureAllocation, theta0: float, theta: float, alpha: float) -> FeatureAllocation:
    """Same data under the tied GG-Beta model at (theta0, theta, alpha)."""
    cfg = alloc.config
    z = cfg.base.levy.zeta
    base = BaseCrmSpec(GeneralizedGamma(alpha, z, theta0), cfg.base.mass)
    spec = GroupLevySpec(BetaProcess(theta), cfg.groups[0].spec.slab)
    groups = tuple(GroupConfig(spec, g.M) for g in cfg.groups)
    return FeatureAllocation(replace(cfg, base=base, groups=groups), alloc.columns)


def cmd_loglik(args) -> int:
    alloc = load_allocation(args.alloc)
    out = {}
    if args.params:
        t0, t, a = _parse_params(args.params)
        out["params"] = {"theta0": t0, "theta": t, "alpha": a}
        out["profile"] = log_marginal_bernoulli_profile(alloc, t0, t, a)
        alloc = reparametrize(alloc, t0, t, a)
    out["breakdown"] = log_marginal(alloc).to_dict()
    out["phi"] = alloc.config.phi()
    text = _dumps(out)
    if args.out:
        write_atomic(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_infer(args) -> int:
    alloc = load_allocation(args.alloc)
    with open(args.mcmc_config) as fh:
        mcmc = mcmc_config_from_dict(json.load(fh))
    if args.seed is not None:
        mcmc = replace(mcmc, seed=args.seed)
    traces = run_mh(alloc, mcmc.check(), threads=_threads())
    out = Path(args.out_dir)
    write_atomic(out / "traces.csv", traces_to_csv(traces))
    write_atomic(out / "summary.json", _dumps(summarize(traces)))
    print(f"wrote {out / 'traces.csv'} and {out / 'summary.json'}")
    return EXIT_OK


def cmd_predict(args) -> int:
    alloc = load_allocation(args.alloc)
    J = alloc.config.J
    if not 1 <= args.group <= J + 1:
        raise ParameterError(f"--group must be in 1..{J + 1} (got {args.group})")
    if args.rows < 0:
        raise ParameterError("--rows must be >= 0")
    new_spec = None
    if args.new_spec:
        with open(args.new_spec) as fh:
            new_spec = group_spec_from_dict(json.load(fh))
    j = args.group - 1
    rng = np.random.default_rng([args.seed, 0])
    M0 = alloc.config.groups[j].M if j < J else 0
    if args.rows == 0:
        ext = alloc
    else:
        ext = predict_rows(alloc, j, args.rows, rng, new_spec=new_spec)
    if args.out_json:
        write_atomic(args.out_json, ext.to_json() + "\n")
    # CSV holds only the predicted rows of the target group
    lines = ["group,row,feature_index,count"]
    if j < ext.config.J:
        dense = ext.to_dense(j)
        for i in range(M0, dense.shape[0]):
            for k in np.flatnonzero(dense[i]):
                lines.append(f"{j + 1},{i + 1},{int(k)},{int(dense[i, k])}")
    write_atomic(args.out, "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_fof(args) -> int:
    alloc = load_allocation(args.alloc)
    group = None if args.group is None else args.group - 1
    write_atomic(args.out, fof_to_csv(fof(alloc, args.level, group)))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hibp", description="Hierarchical spike-and-slab IBP toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="forward-sample allocations from a config")
    g.add_argument("config")
    g.add_argument("out", help="output directory")
    g.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    g.add_argument("--replicates", type=int, default=1)
    g.add_argument("--format", choices=("json", "csv", "both"), default="both")
    g.set_defaults(func=cmd_generate)

    ll = sub.add_parser("loglik", help="marginal log-likelihood breakdown")
    ll.add_argument("alloc")
    ll.add_argument("--params", help="theta0,theta,alpha for the tied GG-Beta model")
    ll.add_argument("--out")
    ll.set_defaults(func=cmd_loglik)

    inf = sub.add_parser("infer", help="random-walk MH over (theta0, theta, alpha)")
    inf.add_argument("alloc")
    inf.add_argument("mcmc_config")
    inf.add_argument("out_dir")
    inf.add_argument("--seed", type=int, default=None)
    inf.set_defaults(func=cmd_infer)

    pr = sub.add_parser("predict", help="append predicted rows to a group")
    pr.add_argument("alloc")
    pr.add_argument("out", help="CSV of predicted rows")
    pr.add_argument("--group", type=int, required=True, help="1-based; J+1 opens a new group")
    pr.add_argument("--rows", type=int, default=1)
    pr.add_argument("--seed", type=int, default=0)
    pr.add_argument("--new-spec", help="group spec JSON for a new group (default: copy of group J)")
    pr.add_argument("--out-json", help="also write the extended allocation")
    pr.set_defaults(func=cmd_predict)

    f = sub.add_parser("fof", help="frequency-of-frequency table")
    f.add_argument("alloc")
    f.add_argument("out")
    f.add_argument("--level", choices=("total", "group", "dense"), default="total")
    f.add_argument("--group", type=int, default=None, help="1-based group for --level group")
    f.set_defaults(func=cmd_fof)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
