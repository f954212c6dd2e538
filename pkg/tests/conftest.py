import gzip
import os
import struct
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "stepnet",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("stepnet")

REPO = Path(__file__).resolve().parents[1]

# (criterion id, passed, detail) lines printed at the end of the session
ACCEPTANCE_LINES = []


def find_mnist_dir():
    candidates = [os.environ.get("STEPNET_DATA"), REPO / "data" / "mnist"]
    for c in candidates:
        if not c:
            continue
        if any((Path(c) / name).exists() for name in ("t10k-labels-idx1-ubyte", "t10k-labels-idx1-ubyte.gz")):
            return Path(c)
    return None


@pytest.fixture(scope="session")
def mnist_dir():
    path = find_mnist_dir()
    if path is None:
        pytest.skip("MNIST files not found; set STEPNET_DATA or run `stepnet fetch --out data/mnist`")
    return path


def idx_images(pixels: np.ndarray) -> bytes:
    count, rows, cols = pixels.shape
    return struct.pack(">IIII", 0x803, count, rows, cols) + pixels.astype(np.uint8).tobytes()


def idx_labels(labels) -> bytes:
    labels = np.asarray(labels, dtype=np.uint8)
    return struct.pack(">II", 0x801, len(labels)) + labels.tobytes()


def write_fake_mnist(directory, n_train=60, n_test=30, seed=0, gz=False):
    """Write small MNIST-shaped IDX files whose classes are separable blobs."""
    rng = np.random.default_rng(seed)
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    prototypes = rng.integers(0, 256, size=(10, 28, 28))
    names = {
        "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte", n_train),
        "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte", n_test),
    }
    for image_name, label_name, n in names.values():
        labels = np.arange(n) % 10
        noise = rng.integers(-40, 41, size=(n, 28, 28))
        pixels = np.clip(prototypes[labels] + noise, 0, 255).astype(np.uint8)
        for name, payload in ((image_name, idx_images(pixels)), (label_name, idx_labels(labels))):
            if gz:
                (directory / (name + ".gz")).write_bytes(gzip.compress(payload))
            else:
                (directory / name).write_bytes(payload)
    return directory


@pytest.fixture
def fake_mnist(tmp_path):
    return write_fake_mnist(tmp_path / "mnist")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for cid, passed, detail in ACCEPTANCE_LINES:
        status = {True: "PASS", False: "FAIL", None: "INFO"}[passed]
        terminalreporter.write_line(f"[{status}] {cid}: {detail}")
