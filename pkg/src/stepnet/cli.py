"""Command-line entry point: ``stepnet {fetch,run,sweep,baseline,plot}``."""

from __future__ import annotations

import argparse
import contextlib
import os
import sys
import urllib.error
import urllib.request
from pathlib import Path

from threadpoolctl import threadpool_limits

from .dataset import load_mnist
from .exceptions import DataError, SweepAborted
from .experiment import (
    SweepResult,
    TrialSpec,
    emit_plot_data,
    read_rows,
    run_baseline,
    run_sweep,
    run_trial,
    summary_line,
    write_results,
)
from .network import NetworkConfig

DATA_ENV = "STEPNET_DATA"
EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_IO = 0, 2, 3, 4
MNIST_FILES = (
    "train-images-idx3-ubyte.gz",
    "train-labels-idx1-ubyte.gz",
    "t10k-images-idx3-ubyte.gz",
    "t10k-labels-idx1-ubyte.gz",
)
DEFAULT_MIRRORS = (
    "https://ossci-datasets.s3.amazonaws.com/mnist/",
    "https://storage.googleapis.com/cvdf-datasets/mnist/",
)


def non_negative_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {value}")
    return value


def positive_int(text: str) -> int:
    value = non_negative_int(text)
    if value == 0:
        raise argparse.ArgumentTypeError("expected a positive integer")
    return value


def depth_range(text: str) -> list[int]:
    """``A..B`` (inclusive), a single ``N``, or a comma list ``0,2,5``."""
    try:
        if ".." in text:
            lo, hi = (int(p) for p in text.split("..", 1))
            values = list(range(lo, hi + 1))
        else:
            values = [int(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad depth range {text!r}; use A..B or a comma list") from None
    if not values or min(values) < 0:
        raise argparse.ArgumentTypeError(f"depth range {text!r} is empty or negative")
    return values


def topk_list(text: str) -> tuple[int, ...]:
    try:
        ks = tuple(sorted({int(p) for p in text.split(",") if p.strip()}))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad --topk {text!r}; use e.g. 1,3") from None
    if not ks or ks[0] < 1 or ks[-1] > 10:
        raise argparse.ArgumentTypeError("--topk values must lie in 1..10")
    return ks


def _add_common(p: argparse.ArgumentParser, *, network: bool = True) -> None:
    p.add_argument("--data", default=os.environ.get(DATA_ENV, "data/mnist"),
                   help=f"MNIST directory (env {DATA_ENV})")
    p.add_argument("--out", required=True, help="result file to write")
    p.add_argument("--format", choices=("csv", "json"), default=None,
                   help="result format; default from --out suffix, csv otherwise")
    p.add_argument("--topk", type=topk_list, default=(1, 3), help="comma-separated k values")
    p.add_argument("--variance-source", choices=("test_outputs", "train_outputs"), default="test_outputs")
    p.add_argument("--threads", type=positive_int, default=None, help="cap on BLAS threads")
    if network:
        p.add_argument("--no-bias", action="store_true", help="disable bias terms")
        p.add_argument("--output-activation", action="store_true", help="apply step to the output layer")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="stepnet", formatter_class=fmt,
                                     description="Random step-network MNIST experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", formatter_class=fmt, help="one trial at one depth and seed")
    p.add_argument("--depth", type=non_negative_int, required=True, help="number of hidden layers")
    p.add_argument("--seed", type=non_negative_int, default=0)
    _add_common(p)

    p = sub.add_parser("sweep", formatter_class=fmt, help="trials over a depth range and several seeds")
    p.add_argument("--depths", type=depth_range, default=list(range(16)), help="A..B inclusive or comma list")
    p.add_argument("--seeds", type=positive_int, default=3, help="number of seeds, run as 0..K-1")
    p.add_argument("--jobs", type=int, default=1, help="trials run concurrently")
    _add_common(p)

    p = sub.add_parser("baseline", formatter_class=fmt, help="nearest centroid on raw pixels")
    _add_common(p, network=False)

    p = sub.add_parser("plot", formatter_class=fmt, help="aggregate a result file into plot columns")
    p.add_argument("--in", dest="infile", required=True, help="result CSV or JSON")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("fetch", formatter_class=fmt, help="download the four MNIST files")
    p.add_argument("--out", required=True, help="destination directory")
    p.add_argument("--mirror", action="append", default=None,
                   help="base URL to try (repeatable); defaults to public mirrors")
    return parser


def _format(args) -> str:
    if args.format:
        return args.format
    return "json" if str(args.out).endswith(".json") else "csv"


def _spec(args, depth: int = 0, seed: int = 0) -> TrialSpec:
    config = NetworkConfig(hidden_layers=depth, seed=seed, bias_enabled=not args.no_bias,
                           output_activation=args.output_activation)
    return TrialSpec(config, args.topk, args.variance_source, args.data)


def _cmd_run(args) -> int:
    result = run_trial(_spec(args, args.depth, args.seed))
    write_results(SweepResult((result,)), args.out, _format(args))
    print(summary_line(result))
    return EXIT_OK


def _cmd_sweep(args) -> int:
    seeds = range(args.seeds)
    try:
        result = run_sweep(args.depths, seeds, _spec(args), n_jobs=args.jobs, checkpoint=args.out,
                           checkpoint_format=_format(args), progress=lambda t: print(summary_line(t), flush=True))
    except SweepAborted as exc:
        cause = exc.__cause__
        print(f"stepnet: {exc}; partial results in {args.out}", file=sys.stderr)
        if isinstance(cause, DataError):
            return EXIT_DATA
        if isinstance(cause, OSError):
            return EXIT_IO
        return 1
    write_results(result, args.out, _format(args))
    print(f"{len(result)} trials written to {args.out}")
    return EXIT_OK


def _cmd_baseline(args) -> int:
    result = run_baseline(args.data, args.topk, variance_source=args.variance_source)
    write_results(SweepResult((result,)), args.out, _format(args))
    print(summary_line(result))
    return EXIT_OK


def _cmd_plot(args) -> int:
    paths = emit_plot_data(read_rows(args.infile), args.out)
    for path in paths:
        print(path)
    return EXIT_OK


def _cmd_fetch(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    mirrors = args.mirror or list(DEFAULT_MIRRORS)
    for name in MNIST_FILES:
        target = out / name
        if target.exists():
            continue
        for base in mirrors:
            url = base.rstrip("/") + "/" + name
            try:
                with urllib.request.urlopen(url, timeout=60) as resp:
                    target.write_bytes(resp.read())
                break
            except (urllib.error.URLError, OSError) as exc:
                print(f"stepnet: {url}: {exc}", file=sys.stderr)
        else:
            print(f"stepnet: could not download {name}. Place the four files "
                  f"{', '.join(MNIST_FILES)} (gzipped or not) in {out} by hand.", file=sys.stderr)
            return EXIT_IO
    for split in ("train", "test"):
        ds = load_mnist(out, split)
        print(f"{split}: {len(ds)} images")
    return EXIT_OK


COMMANDS = {"run": _cmd_run, "sweep": _cmd_sweep, "baseline": _cmd_baseline,
            "plot": _cmd_plot, "fetch": _cmd_fetch}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    threads = getattr(args, "threads", None)
    limits = threadpool_limits(threads) if threads else contextlib.nullcontext()
    try:
        with limits:
            return COMMANDS[args.command](args)
    except DataError as exc:
        print(f"stepnet: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"stepnet: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"stepnet: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
