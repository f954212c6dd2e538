"""Backprop-free MNIST classification with fixed random step networks.

Data flows MNIST IDX files -> :mod:`stepnet.dataset` -> a random step network
(:mod:`stepnet.network`) -> nearest-centroid ranking (:mod:`stepnet.classifier`),
with output-variance diagnostics in :mod:`stepnet.analysis` and trial/sweep
orchestration in :mod:`stepnet.experiment`.
"""

from .analysis import VarianceReport, mean_output_variance, vector_variance
from .classifier import (
    CentroidBank,
    EvalReport,
    NearestCentroidClassifier,
    Ranking,
    adapt_centroids,
    compute_centroids,
    euclidean_distance,
    evaluate,
    rank_labels,
)
from .dataset import Dataset, LabelSet, RawImageSet, load_mnist, normalize, parse_idx_images, parse_idx_labels
from .experiment import SweepResult, TrialResult, TrialSpec, run_baseline, run_sweep, run_trial, write_results
from .network import Network, NetworkConfig, RandomStepNetwork, forward, forward_batch, init_network, step

__version__ = "0.1.0"

__all__ = [
    "CentroidBank", "Dataset", "EvalReport", "LabelSet", "NearestCentroidClassifier", "Network",
    "NetworkConfig", "RandomStepNetwork", "Ranking", "RawImageSet", "SweepResult", "TrialResult",
    "TrialSpec", "VarianceReport", "adapt_centroids", "compute_centroids", "euclidean_distance",
    "evaluate", "forward", "forward_batch", "init_network", "load_mnist", "mean_output_variance",
    "normalize", "parse_idx_images", "parse_idx_labels", "rank_labels", "run_baseline", "run_sweep",
    "run_trial", "step", "vector_variance", "write_results",
]
