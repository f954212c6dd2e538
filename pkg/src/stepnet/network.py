"""Fixed random-weight feedforward networks with step activations.

Weights are drawn once from ``U(-bound, bound)`` and never updated. Every
layer is ``width x width``; hidden layers apply a step function, the output
layer is linear unless ``output_activation`` is set.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted, validate_data

from .exceptions import ConfigError, DimensionMismatch

GENERATOR_ID = f"numpy.random.PCG64/numpy-{np.__version__}"
SNAPSHOT_VERSION = 1
DEFAULT_BLOCK_ROWS = 2048


@dataclass(frozen=True)
class NetworkConfig:
    hidden_layers: int = 0
    width: int = 784
    seed: int = 0
    bias_enabled: bool = True
    output_activation: bool = False
    init_bound: float | None = None

    def __post_init__(self):
        if not isinstance(self.hidden_layers, (int, np.integer)) or self.hidden_layers < 0:
            raise ConfigError(f"hidden_layers must be a non-negative integer, got {self.hidden_layers!r}")
        if not isinstance(self.width, (int, np.integer)) or self.width < 1:
            raise ConfigError(f"width must be a positive integer, got {self.width!r}")
        if not isinstance(self.seed, (int, np.integer)) or not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")
        if self.init_bound is None:
            object.__setattr__(self, "init_bound", math.sqrt(1.0 / self.width))
        if not (self.init_bound > 0 and math.isfinite(self.init_bound)):
            raise ConfigError(f"init_bound must be positive and finite, got {self.init_bound!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class Layer:
    weights: np.ndarray  # (width_out, width_in), applied as W @ h
    bias: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class Network:
    config: NetworkConfig
    layers: tuple[Layer, ...] = field(default_factory=tuple)

    @property
    def width(self) -> int:
        return self.config.width

    @classmethod
    def identity(cls, width: int = 784) -> "Network":
        """A single bias-free identity layer; maps every input to itself."""
        config = NetworkConfig(hidden_layers=0, width=width, bias_enabled=False)
        return cls(config, (_frozen_layer(np.eye(width, dtype=np.float32), None),))

    @classmethod
    def from_layers(cls, config: NetworkConfig, layers) -> "Network":
        """Build a network from explicit ``(weights, bias)`` pairs (tests, snapshots)."""
        layers = tuple(_frozen_layer(np.asarray(w, dtype=np.float32), None if b is None else np.asarray(b, dtype=np.float32))
                       for w, b in layers)
        if len(layers) != config.hidden_layers + 1:
            raise ConfigError(f"expected {config.hidden_layers + 1} layers, got {len(layers)}")
        for layer in layers:
            if layer.weights.shape != (config.width, config.width):
                raise DimensionMismatch(f"layer weights {layer.weights.shape} do not match width {config.width}")
            if (layer.bias is not None) != config.bias_enabled:
                raise ConfigError("bias presence must match config.bias_enabled")
            if layer.bias is not None and layer.bias.shape != (config.width,):
                raise DimensionMismatch(f"bias {layer.bias.shape} does not match width {config.width}")
        return cls(config, layers)


def _frozen_layer(weights, bias):
    weights = np.ascontiguousarray(weights, dtype=np.float32)
    weights.flags.writeable = False
    if bias is not None:
        bias = np.ascontiguousarray(bias, dtype=np.float32)
        bias.flags.writeable = False
    return Layer(weights, bias)


def step(x: float) -> float:
    """Heaviside step with ``step(0) == 0``."""
    assert math.isfinite(x), "step() needs a finite input"
    return 1.0 if x > 0 else 0.0


def step_elementwise(z: np.ndarray) -> np.ndarray:
    return (z > 0).astype(np.float32)


def init_network(config: NetworkConfig) -> Network:
    """Sample every layer from ``U(-init_bound, init_bound)`` with a seeded PCG64.

    Draw order is fixed: layers first to last, each weight matrix row-major,
    then that layer's bias.
    """
    rng = np.random.Generator(np.random.PCG64(config.seed))
    bound = config.init_bound
    w = config.width
    layers = []
    for _ in range(config.hidden_layers + 1):
        weights = rng.uniform(-bound, bound, size=(w, w)).astype(np.float32)
        bias = rng.uniform(-bound, bound, size=w).astype(np.float32) if config.bias_enabled else None
        layers.append(_frozen_layer(weights, bias))
    return Network(config, tuple(layers))


def _affine(layer: Layer, h: np.ndarray) -> np.ndarray:
    z = h @ layer.weights.T
    if layer.bias is not None:
        z += layer.bias
    return z


def forward(net: Network, x) -> np.ndarray:
    """Propagate a single ``width``-vector through the network."""
    h = np.asarray(x, dtype=np.float32)
    if h.shape != (net.width,):
        raise DimensionMismatch(f"input shape {h.shape}, expected ({net.width},)")
    *hidden, last = net.layers
    for layer in hidden:
        h = step_elementwise(layer.weights @ h + (0 if layer.bias is None else layer.bias))
    out = last.weights @ h
    if last.bias is not None:
        out = out + last.bias
    if net.config.output_activation:
        out = step_elementwise(out)
    return out.astype(np.float32, copy=False)


def _forward_block(net: Network, block: np.ndarray) -> np.ndarray:
    h = block
    *hidden, last = net.layers
    for layer in hidden:
        h = step_elementwise(_affine(layer, h))
    out = _affine(last, h)
    if net.config.output_activation:
        out = step_elementwise(out)
    return out


def forward_batch(net: Network, inputs, block_rows: int = DEFAULT_BLOCK_ROWS, n_jobs: int | None = 1) -> np.ndarray:
    """Row-wise ``forward`` over an ``(n, width)`` matrix via blocked GEMM.

    Rows are cut into blocks aligned to multiples of ``block_rows``; each block
    is pushed through all layers before the next, which bounds memory to a few
    blocks. Block boundaries do not depend on ``n_jobs``, so results are
    bitwise identical for any thread count.
    """
    X = np.asarray(inputs, dtype=np.float32)
    if X.ndim != 2 or X.shape[1] != net.width:
        raise DimensionMismatch(f"inputs shape {X.shape}, expected (n, {net.width})")
    n = X.shape[0]
    out = np.empty((n, net.width), dtype=np.float32)
    starts = range(0, n, block_rows)

    def run(start):
        stop = min(start + block_rows, n)
        out[start:stop] = _forward_block(net, X[start:stop])

    if n_jobs is None or n_jobs == 1 or n <= block_rows:
        for s in starts:
            run(s)
    else:
        workers = None if n_jobs < 0 else n_jobs
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, starts))
    return out


def hidden_activations(net: Network, inputs) -> list[np.ndarray]:
    """Debug helper: the post-step activation matrix of every hidden layer."""
    h = np.asarray(inputs, dtype=np.float32)
    if h.ndim != 2 or h.shape[1] != net.width:
        raise DimensionMismatch(f"inputs shape {h.shape}, expected (n, {net.width})")
    acts = []
    for layer in net.layers[:-1]:
        h = step_elementwise(_affine(layer, h))
        acts.append(h)
    return acts


def save_network(net: Network, path) -> None:
    """Write a versioned ``.npz`` snapshot of config and layer matrices."""
    arrays = {}
    for i, layer in enumerate(net.layers):
        arrays[f"W{i}"] = layer.weights
        if layer.bias is not None:
            arrays[f"b{i}"] = layer.bias
    meta = {"version": SNAPSHOT_VERSION, "generator_id": GENERATOR_ID, "config": net.config.to_dict()}
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta)), **arrays)


def load_network(path) -> Network:
    with np.load(Path(path), allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("version") != SNAPSHOT_VERSION:
            raise ConfigError(f"unsupported snapshot version {meta.get('version')!r}")
        config = NetworkConfig(**meta["config"])
        layers = [(data[f"W{i}"], data[f"b{i}"] if f"b{i}" in data else None)
                  for i in range(config.hidden_layers + 1)]
    return Network.from_layers(config, layers)


class RandomStepNetwork(TransformerMixin, BaseEstimator):
    """Transformer wrapping a fixed random step network.

    ``fit`` only samples the weights from ``seed``; nothing is learned from
    ``X``. ``transform`` returns the network outputs.

    Parameters
    ----------
    hidden_layers : int, default=0
    width : int, default=784
    seed : int, default=0
    bias_enabled : bool, default=True
    output_activation : bool, default=False
    init_bound : float or None, default=None
        ``None`` means ``sqrt(1 / width)``.
    block_rows : int, default=2048
    n_jobs : int or None, default=1
    """

    def __init__(self, hidden_layers=0, width=784, seed=0, bias_enabled=True,
                 output_activation=False, init_bound=None, block_rows=DEFAULT_BLOCK_ROWS, n_jobs=1):
        self.hidden_layers = hidden_layers
        self.width = width
        self.seed = seed
        self.bias_enabled = bias_enabled
        self.output_activation = output_activation
        self.init_bound = init_bound
        self.block_rows = block_rows
        self.n_jobs = n_jobs

    def _config(self) -> NetworkConfig:
        return NetworkConfig(self.hidden_layers, self.width, self.seed, self.bias_enabled,
                             self.output_activation, self.init_bound)

    def fit(self, X, y=None):
        X = validate_data(self, X, dtype=np.float32)
        if X.shape[1] != self.width:
            raise DimensionMismatch(f"X has {X.shape[1]} features, network width is {self.width}")
        self.network_ = init_network(self._config())
        return self

    def transform(self, X):
        check_is_fitted(self, "network_")
        X = validate_data(self, X, dtype=np.float32, reset=False)
        return forward_batch(self.network_, X, self.block_rows, self.n_jobs)
