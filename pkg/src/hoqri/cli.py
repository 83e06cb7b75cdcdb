"""Command line entry point: ``hoqri {decompose,bench,gen,convert}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .errors import HoqriError
from .harness import (
    DATASETS,
    ExperimentSpec,
    SyntheticSource,
    bench_kernel,
    gen_synthetic,
    run_experiment,
)
from .solvers import SolverConfig, init_factors
from .sparse_tensor import load_tns, write_tns


def _int_list(text: str):
    try:
        values = [int(t) for t in text.replace("x", ",").split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _add_source(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", help=".tns file")
    src.add_argument("--synthetic", type=_int_list, metavar="I1,I2,...",
                     help="generate a random tensor with these dims")
    p.add_argument("--nnz", type=int, help="nonzeros for --synthetic (default 10 * max dim)")
    p.add_argument("--data-seed", type=int, default=0)
    p.add_argument("--dims", type=_int_list, help="override the dims of --input")


def _source(args):
    if args.synthetic:
        nnz = args.nnz if args.nnz is not None else 10 * max(args.synthetic)
        return SyntheticSource(args.synthetic, nnz, args.data_seed)
    return args.input


def _ranks(args, order: int):
    ranks = args.rank
    if len(ranks) == 1:
        ranks = ranks * order
    return ranks


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hoqri", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decompose", help="run HOQRI and/or HOOI and write traces")
    _add_source(p)
    p.add_argument("--rank", type=_int_list, required=True, metavar="K1,K2,...")
    p.add_argument("--max-sweeps", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--init", choices=("random", "hosvd"), default="random")
    p.add_argument("--solver", choices=("hoqri", "hooi", "both"), default="hoqri")
    p.add_argument("--kernel", choices=("elementwise", "matrix"), default="matrix")
    p.add_argument("--stop-on", choices=("fit", "gradient"), default="fit")
    p.add_argument("--no-gradients", action="store_true", help="skip gradient diagnostics")
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--parallel-reps", action="store_true")
    p.add_argument("--out", default="runs")

    p = sub.add_parser("bench", help="time one TTMcTC kernel")
    _add_source(p)
    p.add_argument("--rank", type=_int_list, required=True)
    p.add_argument("--mode", type=int, default=0)
    p.add_argument("--kernel", choices=("elementwise", "matrix"), default="matrix")
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("gen", help="write a random sparse tensor in .tns format")
    p.add_argument("--dims", type=_int_list, required=True)
    p.add_argument("--nnz", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True)

    p = sub.add_parser("convert", help="validate and normalize a .tns file")
    p.add_argument("--input", required=True)
    p.add_argument("--output")
    p.add_argument("--dims", type=_int_list)
    p.add_argument("--expect", help="I1,...,IN,nnz or a dataset name: " + ", ".join(DATASETS))
    return parser


def _expectation(text: str):
    if text.lower() in DATASETS:
        dims, nnz = DATASETS[text.lower()]
        return tuple(dims), nnz
    values = _int_list(text)
    if len(values) < 2:
        raise argparse.ArgumentTypeError("--expect needs dims followed by nnz")
    return tuple(values[:-1]), values[-1]


def cmd_decompose(args) -> int:
    config = SolverConfig(
        ranks=args.rank,
        max_sweeps=args.max_sweeps,
        tol_fit_change=args.tol,
        seed=args.seed,
        init_mode=args.init,
        trace_gradients=not args.no_gradients,
        kernel_variant=args.kernel,
        stop_on=args.stop_on,
    )
    order = len(args.synthetic) if args.synthetic else None
    if order is None and len(args.rank) == 1:
        order = load_tns(args.input, dims=args.dims).order
    if order is not None:
        config.ranks = tuple(_ranks(args, order))
    spec = ExperimentSpec(
        _source(args), config, args.solver, args.reps, args.out, args.dims, args.parallel_reps
    )
    paths = run_experiment(spec)
    for path in paths:
        print(path)
    return 0


def cmd_bench(args) -> int:
    spec_src = _source(args)
    if isinstance(spec_src, SyntheticSource):
        X = gen_synthetic(spec_src.dims, spec_src.nnz, spec_src.seed)
    else:
        X = load_tns(spec_src, dims=args.dims)
    ranks = _ranks(args, X.order)
    factors = init_factors(X.shape, ranks, SolverConfig(ranks, seed=args.seed))
    res = bench_kernel(X, factors, args.mode, args.kernel, args.reps)
    out = dict(vars(res))
    out["peak_over_ik"] = res.peak_over_ik
    print(json.dumps(out, indent=1))
    return 0


def cmd_gen(args) -> int:
    X = gen_synthetic(args.dims, args.nnz, args.seed)
    write_tns(X, args.output)
    print(f"wrote {X.nnz} entries of shape {X.shape} to {args.output}")
    return 0


def cmd_convert(args) -> int:
    X = load_tns(args.input, dims=args.dims)
    print(json.dumps({"shape": list(X.shape), "nnz": X.nnz}))
    status = 0
    if args.expect:
        dims, nnz = _expectation(args.expect)
        if tuple(X.shape) != dims or X.nnz != nnz:
            print(f"mismatch: expected shape {dims} nnz {nnz}", file=sys.stderr)
            status = 2
    if args.output:
        write_tns(X, args.output)
    return status


COMMANDS = {"decompose": cmd_decompose, "bench": cmd_bench, "gen": cmd_gen, "convert": cmd_convert}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except HoqriError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
