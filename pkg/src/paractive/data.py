"""Datasets, IDX/sparse readers, synthetic generators and stream partitioning."""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from paractive.rng import substream

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801

RAW_RANGE = (0.0, 255.0)


class DataFormatError(ValueError):
    """Malformed or inconsistent input file."""


class EmptyTaskError(ValueError):
    pass


@dataclass(frozen=True)
class Example:
    features: np.ndarray
    label: int
    index: int


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable, ordered collection of examples.

    ``y`` holds the working labels: raw digits after :func:`load_idx`, +/-1
    after :func:`make_binary_task`. ``digits`` keeps the original digit of
    every example (or ``None`` for synthetic data) so one loaded corpus can
    serve several binary tasks.
    """

    X: np.ndarray
    y: np.ndarray
    scale_range: tuple[float, float]
    digits: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        X = np.ascontiguousarray(self.X, dtype=float)
        if X.ndim != 2:
            raise ValueError("features must be a 2-d array")
        y = np.asarray(self.y, dtype=np.int64)
        if y.shape != (X.shape[0],):
            raise ValueError("one label per example required")
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if self.digits is not None:
            d = np.asarray(self.digits, dtype=np.int64)
            d.flags.writeable = False
            object.__setattr__(self, "digits", d)

    def __len__(self):
        return self.X.shape[0]

    def __getitem__(self, i) -> Example:
        i = int(i)
        if i < 0:
            i += len(self)
        return Example(self.X[i], int(self.y[i]), i)

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def take(self, idx) -> Dataset:
        idx = np.asarray(idx, dtype=np.int64)
        digits = None if self.digits is None else self.digits[idx]
        return Dataset(self.X[idx], self.y[idx], self.scale_range, digits, dict(self.meta))

    def split(self, n_first: int) -> tuple[Dataset, Dataset]:
        n = len(self)
        return self.take(np.arange(min(n_first, n))), self.take(np.arange(min(n_first, n), n))


def _read_header(f, n_dims: int, path) -> tuple[int, ...]:
    raw = f.read(4 * (1 + n_dims))
    if len(raw) < 4 * (1 + n_dims):
        raise OSError(f"{path}: truncated header")
    return struct.unpack(f">{1 + n_dims}I", raw)


def load_idx(images_path, labels_path) -> Dataset:
    """Read an IDX image/label pair (MNIST layout) into a raw-pixel dataset."""
    with open(images_path, "rb") as f:
        magic, count, rows, cols = _read_header(f, 3, images_path)
        if magic != IMAGE_MAGIC:
            raise DataFormatError(f"{images_path}: bad image magic 0x{magic:08x}")
        pixels = f.read()
    if len(pixels) < count * rows * cols:
        raise OSError(f"{images_path}: truncated, expected {count * rows * cols} pixel bytes")
    with open(labels_path, "rb") as f:
        raw = f.read(4)
        if len(raw) < 4:
            raise OSError(f"{labels_path}: truncated header")
        (magic,) = struct.unpack(">I", raw)
        if magic != LABEL_MAGIC:
            raise DataFormatError(f"{labels_path}: bad label magic 0x{magic:08x}")
        raw = f.read(4)
        if len(raw) < 4:
            raise OSError(f"{labels_path}: truncated header")
        (n_labels,) = struct.unpack(">I", raw)
        labels = f.read()
    if n_labels != count:
        raise DataFormatError(f"image count {count} != label count {n_labels}")
    if len(labels) < count:
        raise OSError(f"{labels_path}: truncated, expected {count} label bytes")
    X = np.frombuffer(pixels, dtype=np.uint8, count=count * rows * cols)
    X = X.reshape(count, rows * cols).astype(float)
    digits = np.frombuffer(labels, dtype=np.uint8, count=count).astype(np.int64)
    return Dataset(X, digits, RAW_RANGE, digits=digits, meta={"shape": (rows, cols)})


def write_idx(images_path, labels_path, images, labels) -> None:
    """Inverse of :func:`load_idx`; ``images`` is (n, rows, cols) uint8."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n, rows, cols = images.shape
    with open(images_path, "wb") as f:
        f.write(struct.pack(">4I", IMAGE_MAGIC, n, rows, cols))
        f.write(images.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">2I", LABEL_MAGIC, len(labels)))
        f.write(labels.tobytes())


def load_sparse(path, dim: int | None = None, scale_range=(-1.0, 1.0)) -> Dataset:
    """Read ``label idx:val ...`` lines (1-based indices) into a dense dataset.

    Labels are kept as written; ``0`` is mapped to ``-1`` so 0/1 files load
    as binary tasks directly.
    """
    rows, labels, width = [], [], 0
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            try:
                lab = int(float(parts[0]))
                feats = {}
                for tok in parts[1:]:
                    i, v = tok.split(":", 1)
                    i = int(i)
                    if i < 1:
                        raise ValueError("indices are 1-based")
                    feats[i - 1] = float(v)
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from None
            labels.append(-1 if lab == 0 else lab)
            rows.append(feats)
            if feats:
                width = max(width, max(feats) + 1)
    dim = width if dim is None else dim
    if width > dim:
        raise DataFormatError(f"{path}: feature index {width} exceeds dim {dim}")
    X = np.zeros((len(rows), dim))
    for r, feats in enumerate(rows):
        for i, v in feats.items():
            X[r, i] = v
    return Dataset(X, np.asarray(labels, dtype=np.int64), tuple(scale_range))


def make_binary_task(dataset: Dataset, positive_digits, negative_digits) -> Dataset:
    pos, neg = set(positive_digits), set(negative_digits)
    if pos & neg:
        raise ValueError(f"digit sets overlap: {sorted(pos & neg)}")
    digits = dataset.digits if dataset.digits is not None else dataset.y
    is_pos = np.isin(digits, sorted(pos))
    is_neg = np.isin(digits, sorted(neg))
    keep = np.flatnonzero(is_pos | is_neg)
    if keep.size == 0:
        raise EmptyTaskError(f"no examples with digits in {sorted(pos)} or {sorted(neg)}")
    y = np.where(is_pos[keep], 1, -1)
    meta = dict(dataset.meta, task=(sorted(pos), sorted(neg)))
    return Dataset(dataset.X[keep], y, dataset.scale_range, digits[keep], meta)


def scale_pixels(dataset: Dataset, target_range) -> Dataset:
    """Affinely map features from the dataset's current range onto ``target_range``."""
    lo, hi = (float(v) for v in target_range)
    if not hi > lo:
        raise ValueError("empty target range")
    if tuple(dataset.scale_range) == (lo, hi):
        return dataset
    src_lo, src_hi = dataset.scale_range
    X = dataset.X
    if X.size and (X.min() < src_lo or X.max() > src_hi):
        raise ValueError(f"feature values outside declared range [{src_lo}, {src_hi}]")
    scaled = lo + (X - src_lo) * ((hi - lo) / (src_hi - src_lo))
    np.clip(scaled, lo, hi, out=scaled)
    return Dataset(scaled, dataset.y, (lo, hi), dataset.digits, dict(dataset.meta))


def shuffle(dataset: Dataset, seed: int) -> Dataset:
    rng = substream(seed, "shuffle")
    out = dataset.take(rng.permutation(len(dataset)))
    out.meta["shuffled_with"] = int(seed)
    return out


def synth_gaussian(seed: int, n: int, dim: int, separation: float) -> Dataset:
    """Two unit-covariance Gaussians centred at +/-(separation/2) e1, equal priors."""
    if n <= 0 or dim < 1 or separation < 0:
        raise ValueError("need n > 0, dim >= 1, separation >= 0")
    rng = substream(seed, "data")
    y = np.where(rng.random(n) < 0.5, 1, -1)
    X = rng.standard_normal((n, dim))
    X[:, 0] += y * (separation / 2.0)
    lo, hi = float(X.min()), float(X.max())
    return Dataset(X, y, (lo, hi), meta={"generator": "gaussian", "separation": separation})


def synth_checkerboard(seed: int, n: int, grid: int = 20, spread: float = 0.2) -> Dataset:
    """Gaussian blobs of std ``spread`` on a ``grid`` x ``grid`` lattice, labelled by cell parity.

    Every class is a mixture of grid**2 / 2 unit-spaced Gaussians, so a
    kernel learner keeps improving over a long stream instead of saturating
    after a few hundred labels.
    """
    if n <= 0 or grid < 2 or spread <= 0:
        raise ValueError("need n > 0, grid >= 2 and spread > 0")
    rng = substream(seed, "data")
    cells = rng.integers(0, grid, (n, 2))
    y = np.where(cells.sum(axis=1) % 2 == 0, 1, -1)
    X = cells + spread * rng.standard_normal((n, 2))
    lo, hi = float(X.min()), float(X.max())
    return Dataset(X, y, (lo, hi), meta={"generator": "checkerboard", "grid": grid,
                                         "spread": spread})


def synth_threshold(seed: int, n: int, noise_rate: float) -> Dataset:
    """x ~ U[0, 1], label sign(x - 0.5) flipped with probability ``noise_rate``."""
    if not 0.0 <= noise_rate < 0.5:
        raise ValueError("noise_rate must lie in [0, 0.5)")
    if n <= 0:
        raise ValueError("n must be positive")
    rng = substream(seed, "data")
    x = rng.random(n)
    clean = np.where(x >= 0.5, 1, -1)
    flip = rng.random(n) < noise_rate
    y = np.where(flip, -clean, clean)
    meta = {"generator": "threshold", "threshold": 0.5, "noise_rate": noise_rate,
            "flips": int(flip.sum())}
    return Dataset(x[:, None], y, (0.0, 1.0), meta=meta)


@dataclass(frozen=True)
class NodeStream:
    node_id: int
    slices: list  # per-round arrays of dataset row indices

    def rounds(self) -> int:
        return len(self.slices)


def check_batch(k: int, B: int) -> None:
    if k < 1:
        raise ValueError("k must be >= 1")
    if B < k or B % k:
        near = max(k, round(B / k) * k)
        raise ValueError(f"B={B} is not divisible by k={k}; nearest valid B is {near}")


def partition_stream(dataset_or_n, k: int, B: int) -> list[NodeStream]:
    """Split a stream into ``k`` node streams: node i gets [rB + i B/k, rB + (i+1) B/k).

    The final round may be short; the tail is assigned in the same order so
    every example lands on exactly one node.
    """
    check_batch(k, B)
    n = dataset_or_n if isinstance(dataset_or_n, int) else len(dataset_or_n)
    per = B // k
    slices = [[] for _ in range(k)]
    for start in range(0, n, B):
        for i in range(k):
            lo = min(n, start + i * per)
            hi = min(n, start + (i + 1) * per)
            slices[i].append(np.arange(lo, hi))
    return [NodeStream(i, slices[i]) for i in range(k)]
