"""End-to-end trials, depth sweeps, the raw-pixel baseline, and result files."""

from __future__ import annotations

import csv
import json
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from statistics import fmean

from .analysis import VARIANCE_SOURCES, VarianceReport, mean_output_variance
from .classifier import EvalReport, compute_centroids, evaluate
from .dataset import Dataset, load_mnist
from .exceptions import ConfigError, SweepAborted
from .network import GENERATOR_ID, Network, NetworkConfig, forward_batch, init_network

RESULTS_FORMAT = "stepnet.sweep"
RESULTS_VERSION = 1
CSV_COLUMNS = (
    "depth", "seed", "n_test", "top1", "top3", "mean_variance", "min_variance",
    "max_variance", "wall_time_ms", "bias_enabled", "output_activation", "generator_id",
)
CHANCE_TOP1 = 0.10
CHANCE_TOP3 = 0.30
BASELINE_GENERATOR = "none"


@dataclass(frozen=True)
class TrialSpec:
    """What to run. ``network=None`` means the identity transform (baseline)."""

    network: NetworkConfig | None = field(default_factory=NetworkConfig)
    ks: tuple[int, ...] = (1, 3)
    variance_source: str = "test_outputs"
    data_dir: str = "data/mnist"

    def __post_init__(self):
        ks = tuple(sorted({int(k) for k in self.ks}))
        if not ks or ks[0] < 1 or ks[-1] > 10:
            raise ConfigError(f"ks must be a non-empty set of integers in 1..10, got {self.ks!r}")
        object.__setattr__(self, "ks", ks)
        object.__setattr__(self, "data_dir", str(self.data_dir))
        if self.variance_source not in VARIANCE_SOURCES:
            raise ConfigError(f"variance_source must be one of {VARIANCE_SOURCES}")

    def to_dict(self) -> dict:
        return {
            "network": None if self.network is None else self.network.to_dict(),
            "ks": list(self.ks),
            "variance_source": self.variance_source,
            "data_dir": self.data_dir,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TrialSpec":
        net = doc["network"]
        return cls(None if net is None else NetworkConfig(**net), tuple(doc["ks"]),
                   doc["variance_source"], doc["data_dir"])


@dataclass(frozen=True)
class TrialResult:
    spec: TrialSpec
    eval: EvalReport
    variance: VarianceReport
    wall_time_ms: int
    generator_id: str
    timestamp: str

    @property
    def depth(self) -> int | None:
        return None if self.spec.network is None else self.spec.network.hidden_layers

    @property
    def seed(self) -> int | None:
        return None if self.spec.network is None else self.spec.network.seed

    def accuracy(self, k: int) -> float:
        return self.eval.topk_accuracy[k]

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "eval": self.eval.to_dict(),
            "variance": self.variance.to_dict(),
            "wall_time_ms": self.wall_time_ms,
            "generator_id": self.generator_id,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TrialResult":
        return cls(
            TrialSpec.from_dict(doc["spec"]),
            EvalReport.from_dict(doc["eval"]),
            VarianceReport.from_dict(doc["variance"]),
            int(doc["wall_time_ms"]),
            doc["generator_id"],
            doc["timestamp"],
        )


@dataclass(frozen=True)
class SweepResult:
    trials: tuple[TrialResult, ...] = ()
    error: str | None = None

    def __len__(self):
        return len(self.trials)

    def select(self, depth=None, seed=None) -> list[TrialResult]:
        return [t for t in self.trials
                if (depth is None or t.depth == depth) and (seed is None or t.seed == seed)]

    def mean_over_seeds(self, depth: int, metric) -> float:
        """Average ``metric(trial)`` over all seeds run at ``depth``."""
        trials = self.select(depth=depth)
        if not trials:
            raise KeyError(f"no trials at depth {depth}")
        return fmean(metric(t) for t in trials)


_data_lock = threading.Lock()
_data_cache: dict[tuple[str, str], Dataset] = {}


def load_split(data_dir, split: str) -> Dataset:
    """``load_mnist`` with a per-process cache; datasets are read-only."""
    key = (str(Path(data_dir).resolve()), split)
    with _data_lock:
        if key not in _data_cache:
            _data_cache[key] = load_mnist(data_dir, split)
        return _data_cache[key]


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _finish(spec, transform, train, test, generator_id) -> TrialResult:
    start = time.perf_counter()
    train_out = transform(train.vectors)
    bank = compute_centroids(train_out, train.labels)
    test_out = transform(test.vectors)
    report = evaluate(test_out, test.labels, bank, spec.ks)
    elapsed_ms = int(round((time.perf_counter() - start) * 1000))
    source = test_out if spec.variance_source == "test_outputs" else train_out
    variance = mean_output_variance(source, spec.variance_source)
    return TrialResult(spec, report, variance, elapsed_ms, generator_id, _now())


def run_trial(spec: TrialSpec, *, network: Network | None = None, train: Dataset | None = None,
              test: Dataset | None = None, n_jobs: int | None = 1) -> TrialResult:
    """Forward train and test data, build centroids, evaluate, measure variance.

    ``network`` overrides the one sampled from ``spec.network``; ``train`` and
    ``test`` override loading from ``spec.data_dir``. Timing covers the
    forward passes, centroid computation and evaluation only.
    """
    train = load_split(spec.data_dir, "train") if train is None else train
    test = load_split(spec.data_dir, "test") if test is None else test
    if network is None:
        if spec.network is None:
            raise ConfigError("spec.network is None; use run_baseline for the identity transform")
        network = init_network(spec.network)
        generator_id = GENERATOR_ID
    else:
        spec = replace(spec, network=network.config)
        generator_id = "external"
    return _finish(spec, lambda X: forward_batch(network, X, n_jobs=n_jobs), train, test, generator_id)


def run_baseline(data_dir=None, ks=(1, 3), *, train: Dataset | None = None, test: Dataset | None = None,
                 variance_source: str = "test_outputs") -> TrialResult:
    """Nearest-centroid evaluation on raw normalized pixels, no network."""
    spec = TrialSpec(None, tuple(ks), variance_source, str(data_dir))
    train = load_split(data_dir, "train") if train is None else train
    test = load_split(data_dir, "test") if test is None else test
    return _finish(spec, lambda X: X, train, test, BASELINE_GENERATOR)


def run_sweep(depths, seeds, base_spec: TrialSpec, *, train: Dataset | None = None, test: Dataset | None = None,
              n_jobs: int = 1, checkpoint=None, checkpoint_format: str = "csv", progress=None) -> SweepResult:
    """One independent trial per ``(depth, seed)``; results sorted by (depth, seed).

    On the first failing trial the completed trials are flushed to
    ``checkpoint`` (when given) together with an error record, and
    :class:`SweepAborted` is raised carrying the partial result.
    """
    depths = sorted(set(int(d) for d in depths))
    seeds = sorted(set(int(s) for s in seeds))
    if not depths:
        raise ConfigError("depths must be non-empty")
    if not seeds:
        raise ConfigError("seeds must be non-empty")
    if base_spec.network is None:
        raise ConfigError("base_spec needs a network config")
    train = load_split(base_spec.data_dir, "train") if train is None else train
    test = load_split(base_spec.data_dir, "test") if test is None else test

    grid = [(d, s) for d in depths for s in seeds]
    done: dict[tuple[int, int], TrialResult] = {}

    def one(cell):
        d, s = cell
        spec = replace(base_spec, network=replace(base_spec.network, hidden_layers=d, seed=s))
        result = run_trial(spec, train=train, test=test)
        done[cell] = result
        if progress is not None:
            progress(result)
        return result

    try:
        if n_jobs == 1:
            for cell in grid:
                one(cell)
        else:
            with ThreadPoolExecutor(max_workers=None if n_jobs < 0 else n_jobs) as pool:
                list(pool.map(one, grid))
    except Exception as exc:
        partial = SweepResult(tuple(done[c] for c in grid if c in done), error=f"{type(exc).__name__}: {exc}")
        if checkpoint is not None:
            write_results(partial, checkpoint, checkpoint_format)
        raise SweepAborted(f"sweep aborted after {len(partial)} of {len(grid)} trials: {exc}", partial) from exc
    return SweepResult(tuple(done[c] for c in grid))


def _blank(value):
    return "" if value is None else value


def trial_row(trial: TrialResult) -> dict:
    net = trial.spec.network
    acc = trial.eval.topk_accuracy
    return {
        "depth": _blank(trial.depth),
        "seed": _blank(trial.seed),
        "n_test": trial.eval.n_samples,
        "top1": _blank(acc.get(1)),
        "top3": _blank(acc.get(3)),
        "mean_variance": trial.variance.mean_variance,
        "min_variance": trial.variance.min_variance,
        "max_variance": trial.variance.max_variance,
        "wall_time_ms": trial.wall_time_ms,
        "bias_enabled": "" if net is None else str(net.bias_enabled).lower(),
        "output_activation": "" if net is None else str(net.output_activation).lower(),
        "generator_id": trial.generator_id,
    }


def write_results(result: SweepResult, path, fmt: str = "csv") -> None:
    """Write a sweep as CSV (fixed 12 columns) or versioned JSON.

    CSV has no room for the abort record of a failed sweep, so it goes to a
    ``<path>.error`` sidecar file instead.
    """
    path = Path(path)
    if fmt == "csv":
        with path.open("w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
            writer.writeheader()
            for trial in result.trials:
                writer.writerow(trial_row(trial))
        error_path = path.with_name(path.name + ".error")
        if result.error is not None:
            error_path.write_text(result.error + "\n")
    elif fmt == "json":
        doc = {
            "format": RESULTS_FORMAT,
            "version": RESULTS_VERSION,
            "error": result.error,
            "trials": [t.to_dict() for t in result.trials],
        }
        path.write_text(json.dumps(doc, indent=1))
    else:
        raise ValueError(f"unknown format {fmt!r}; use 'csv' or 'json'")


def read_results(path) -> SweepResult:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != RESULTS_FORMAT or doc.get("version") != RESULTS_VERSION:
        raise ValueError(f"{path} is not a version-{RESULTS_VERSION} sweep result")
    return SweepResult(tuple(TrialResult.from_dict(t) for t in doc["trials"]), doc.get("error"))


def _num(text):
    return math.nan if text in ("", None) else float(text)


def read_rows(path) -> list[dict]:
    """Flat per-trial records from either a result CSV or a result JSON file."""
    path = Path(path)
    if path.suffix == ".json":
        rows = []
        for t in read_results(path).trials:
            row = trial_row(t)
            row["across_samples_variance"] = t.variance.across_samples_variance
            rows.append(row)
        return rows
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(CSV_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path} lacks columns {sorted(missing)}")
        return list(reader)


def _series(values):
    values = [v for v in values if not math.isnan(v)]
    if not values:
        return math.nan, math.nan, math.nan
    return fmean(values), min(values), max(values)


def emit_plot_data(result, out_dir) -> list[Path]:
    """Write per-depth aggregates as whitespace-separated columns for gnuplot & co.

    Produces ``accuracy.dat`` (top-1/top-3 mean, min, max over seeds and the
    chance levels) and ``variance.dat`` (within-vector and across-samples
    variance), one row per depth. ``result`` is a :class:`SweepResult` or a
    list of rows from :func:`read_rows`.
    """
    if isinstance(result, SweepResult):
        rows = []
        for t in result.trials:
            row = trial_row(t)
            row["across_samples_variance"] = t.variance.across_samples_variance
            rows.append(row)
    else:
        rows = list(result)
    by_depth: dict[int, list[dict]] = {}
    for row in rows:
        if row["depth"] in ("", None):
            continue
        by_depth.setdefault(int(row["depth"]), []).append(row)
    if not by_depth:
        raise ValueError("no per-depth trials to aggregate")

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    acc_path = out_dir / "accuracy.dat"
    var_path = out_dir / "variance.dat"
    with acc_path.open("w") as fh:
        fh.write("# depth n_seeds top1_mean top1_min top1_max top3_mean top3_min top3_max chance_top1 chance_top3\n")
        for depth in sorted(by_depth):
            group = by_depth[depth]
            top1 = _series(_num(r["top1"]) for r in group)
            top3 = _series(_num(r["top3"]) for r in group)
            cols = [depth, len(group), *top1, *top3, CHANCE_TOP1, CHANCE_TOP3]
            fh.write(" ".join(repr(c) for c in cols) + "\n")
    with var_path.open("w") as fh:
        fh.write("# depth n_seeds within_mean within_min within_max across_mean across_min across_max\n")
        for depth in sorted(by_depth):
            group = by_depth[depth]
            within = _series(_num(r["mean_variance"]) for r in group)
            across = _series(_num(r.get("across_samples_variance")) for r in group)
            cols = [depth, len(group), *within, *across]
            fh.write(" ".join(repr(c) for c in cols) + "\n")
    return [acc_path, var_path]


def summary_line(trial: TrialResult) -> str:
    acc = trial.eval.topk_accuracy
    depth = "raw" if trial.depth is None else trial.depth
    seed = "-" if trial.seed is None else trial.seed
    parts = [f"depth={depth}", f"seed={seed}"]
    parts += [f"top{k}={acc[k]:.4f}" for k in sorted(acc)]
    parts += [f"var={trial.variance.mean_variance:.4f}",
              f"var_across={trial.variance.across_samples_variance:.4f}",
              f"time={trial.wall_time_ms}ms"]
    return " ".join(parts)
