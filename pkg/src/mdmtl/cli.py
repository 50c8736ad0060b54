"""Command-line experiment runner.

Usage::

    mdmtl synth     [--config FILE] [--set section.key=value ...] [--out DIR]
    mdmtl train     [--config FILE] [--set ...] [--seed N] [--out DIR]
    mdmtl zsda      [--config FILE] [--set ...] [--seed N] [--out DIR]
    mdmtl eval      --model FILE [--data FILE [--header FILE]] [--config FILE]
    mdmtl gradcheck [--seed N] [--out DIR]
    mdmtl inspect   PATH

Exit status: 0 success, 1 invalid input (configuration, data or model
files), 2 runtime failure (divergence, failed gradient check).
"""

import argparse
import logging
import os
import sys

import numpy as np

from . import __version__
from .config import load_config, validate_ranks
from .datasets import load_delimited, save_delimited
from .errors import (
    ConfigError,
    DataFormatError,
    DescriptorError,
    DivergenceError,
    ModelFormatError,
    ShapeError,
)
from .experiments import (
    _atomic,
    _per_domain,
    gradcheck_table,
    human_table,
    load_data,
    run_gradcheck,
    run_mdl,
    run_zsda,
    write_result,
)
from .losses import error_rate
from .persist import MAGIC, load_model, save_model

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_RUNTIME = 2

_INVALID = (ConfigError, DataFormatError, ModelFormatError, DescriptorError, ShapeError, FileNotFoundError)


def _config(args):
    overrides = list(args.set or ())
    if getattr(args, "seed", None) is not None:
        overrides.append(f"eval.seed={args.seed}")
    if getattr(args, "out", None):
        overrides.append(f"output.dir={args.out}")
    return load_config(args.config, overrides)


def _emit(args, text):
    if not args.quiet:
        sys.stdout.write(text)


def cmd_synth(args):
    cfg = _config(args)
    if cfg.synth is None:
        raise ConfigError("data.source: synth needs data.source = synthetic")
    pool, planted = load_data(cfg)
    os.makedirs(cfg.out_dir, exist_ok=True)
    path = os.path.join(cfg.out_dir, "data.csv")
    save_delimited(pool, path)
    if planted is not None:
        save_model(planted, os.path.join(cfg.out_dir, "planted.bin"))
    _atomic(os.path.join(cfg.out_dir, "config.ini"), cfg.echo())
    _emit(args, f"wrote {pool.N} instances, {pool.M} domains, D={pool.D} to {path}\n")
    return EXIT_OK


def _check_file_ranks(cfg, pool):
    if cfg.source == "file":
        validate_ranks(cfg, pool.D, pool.n_classes, pool.B)


def cmd_train(args):
    cfg = _config(args)
    pool, planted = load_data(cfg)
    _check_file_ranks(cfg, pool)
    result = run_zsda(cfg, pool, planted) if cfg.protocol == "lodo" else run_mdl(cfg, pool, planted, keep_models=True)
    write_result(result, cfg.out_dir)
    _emit(args, human_table(result))
    return EXIT_OK


def cmd_zsda(args):
    cfg = _config(args)
    pool, planted = load_data(cfg)
    _check_file_ranks(cfg, pool)
    result = run_zsda(cfg, pool, planted)
    write_result(result, cfg.out_dir)
    _emit(args, human_table(result))
    return EXIT_OK


def cmd_eval(args):
    model = load_model(args.model)
    if args.data:
        ds = load_delimited(args.data, args.header)
    else:
        ds, _ = load_data(_config(args))
    if ds.B != model.dims[2] or ds.D != model.dims[0]:
        raise ShapeError(f"model dims (D, C, B) = {model.dims} do not fit data D={ds.D}, B={ds.B}")
    scores = model.forward(ds.X, ds.Z)
    overall = error_rate(scores, ds.y)
    per = _per_domain(scores, ds)
    lines = ["format=1", "domain,n,error", f"all,{ds.N},{overall!r}"]
    lines += [f"{lab},{n},{e!r}" for lab, n, e in zip(ds.domain_labels, ds.domain_counts(), per)]
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _atomic(os.path.join(args.out, "eval.csv"), "\n".join(lines) + "\n")
    table = [f"error {100 * overall:.2f}% on {ds.N} instances"]
    table += [f"  {lab:>12}  {100 * e:6.2f}%" for lab, e in zip(ds.domain_labels, per)]
    _emit(args, "\n".join(table) + "\n")
    return EXIT_OK


def cmd_gradcheck(args):
    rows, passed = run_gradcheck(seed=args.seed or 0, corrupt=args.corrupt)
    text = gradcheck_table(rows)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _atomic(os.path.join(args.out, "gradcheck.csv"), text)
    _emit(args, text)
    worst = max((r.error for r in rows), default=0.0)
    if not passed:
        sys.stderr.write(f"gradient check FAILED (max relative error {worst:.3e})\n")
        return EXIT_RUNTIME
    _emit(args, f"gradient check passed (max relative error {worst:.3e})\n")
    return EXIT_OK


def _describe_model(model):
    d, c, b = model.dims
    out = [f"kind: {model.kind}", f"dims: D={d} C={c} B={b}"]
    if model.schema is not None:
        out.append(f"schema: {model.schema.mode.value}, B={model.schema.length}")
    out.append(f"frozen: {', '.join(sorted(model.frozen)) or '-'}")
    out.append(f"learned parameters: {model.n_params}")
    for name in model.blocks:
        arr = getattr(model, name)
        out.append(f"  {name:<4} {str(arr.shape):<14} |.|_F = {np.linalg.norm(arr):.6g}")
    return out


def _describe_data(ds):
    out = [f"instances: {ds.N}", f"features: {ds.D}", f"classes: {ds.n_classes}", f"schema: {ds.schema.mode.value}, B={ds.B}"]
    for lab, n, z in zip(ds.domain_labels, ds.domain_counts(), ds.descriptors):
        out.append(f"  {lab:>12}  n={n:<6} z={np.array2string(z, separator=',')}")
    return out


def cmd_inspect(args):
    with open(args.path, "rb") as fh:
        head = fh.read(len(MAGIC))
    if head == MAGIC:
        lines = _describe_model(load_model(args.path))
    else:
        lines = _describe_data(load_delimited(args.path, args.header))
    _emit(args, "\n".join(lines) + "\n")
    return EXIT_OK


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config file ([section] / key = value)")
    common.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override a config value (repeatable)")
    common.add_argument("--seed", type=int, help="base seed for splits and training (eval.seed)")
    common.add_argument("--out", help="output directory (output.dir)")
    common.add_argument("--quiet", action="store_true", help="no report on stdout")

    parser = argparse.ArgumentParser(prog="mdmtl", description="Multi-domain / multi-task learning with descriptor-generated weights.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="write the configured synthetic benchmark to a data file")
    p.set_defaults(func=cmd_synth)
    p = sub.add_parser("train", parents=[common], help="train and evaluate every configured method")
    p.set_defaults(func=cmd_train)
    p = sub.add_parser("zsda", parents=[common], help="leave-one-domain-out zero-shot domain adaptation")
    p.set_defaults(func=cmd_zsda)
    p = sub.add_parser("eval", parents=[common], help="error of a saved model on a data set")
    p.add_argument("--model", required=True, help="model file")
    p.add_argument("--data", help="data file (default: the configured data source)")
    p.add_argument("--header", help="header file (default: DATA.header)")
    p.set_defaults(func=cmd_eval)
    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference check of all analytic gradients")
    p.add_argument("--corrupt", metavar="BLOCK", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)
    p = sub.add_parser("inspect", parents=[common], help="describe a model or data file")
    p.add_argument("path")
    p.add_argument("--header", help="header file for a data file")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except _INVALID as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INVALID
    except DivergenceError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_RUNTIME
    except (OSError, ValueError, RuntimeError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
