"""Synthetic hierarchical datasets, Beta target sampling, and dataset files.

Feature files are binary (magic ``SHRF``), label files are one label name
per line.  Synthetic features are drawn by a Gaussian diffusion down the
taxonomy: each node's mean is its parent's mean plus isotropic noise, so
feature-space distances correlate with semantic distances.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    EmptyTaxonomy,
    InvalidShapeParam,
    MalformedFile,
    ShapeMismatch,
    UnknownLabel,
    VersionMismatch,
)
from .hierarchy import Taxonomy

FEATURES_MAGIC = b"SHRF"
FEATURES_VERSION = 1

# keep samples strictly inside (0, 1); clamp margin is far below any
# distance that matters downstream
_OPEN_LO = np.finfo(np.float64).tiny
_OPEN_HI = 1.0 - np.finfo(np.float64).epsneg


@dataclass
class RngState:
    """Deterministic counter-based random stream (Philox).

    Identical seeds produce identical streams; ``split`` derives independent
    child streams (fixed 2^128 jumps apart), so parallel consumers stay
    reproducible.
    """

    seed: int
    generator: np.random.Generator

    @classmethod
    def from_seed(cls, seed: int) -> "RngState":
        return cls(seed=int(seed), generator=np.random.Generator(np.random.Philox(key=int(seed))))

    def split(self, n: int) -> list["RngState"]:
        bg = self.generator.bit_generator
        return [
            RngState(seed=self.seed, generator=np.random.Generator(bg.jumped(i + 1)))
            for i in range(n)
        ]


@dataclass
class Dataset:
    """Feature matrix with leaf-label ids and the ordered label universe."""

    features: np.ndarray  # N x D float32
    labels: np.ndarray  # N leaf node ids
    label_universe: list[int]

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise ShapeMismatch(f"features must be 2-D, got shape {self.features.shape}")
        n = self.features.shape[0]
        if n < 1:
            raise ShapeMismatch("dataset must contain at least one sample")
        if self.labels.shape != (n,):
            raise ShapeMismatch(f"{n} feature rows but {self.labels.shape[0]} labels")
        if not np.all(np.isfinite(self.features)):
            raise ShapeMismatch("features contain non-finite values")
        universe = set(self.label_universe)
        unknown = set(int(v) for v in self.labels) - universe
        if unknown:
            raise UnknownLabel(f"labels {sorted(unknown)} not in label universe")

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


def beta_sample(alpha: float, beta: float, shape: tuple[int, int], rng: RngState) -> np.ndarray:
    """I.i.d. Beta(alpha, beta) draws, clamped into the open interval (0, 1)."""
    if alpha <= 0 or beta <= 0:
        raise InvalidShapeParam(f"alpha and beta must be positive, got {alpha}, {beta}")
    sample = rng.generator.beta(alpha, beta, size=shape)
    return np.clip(sample, _OPEN_LO, _OPEN_HI)


def generate_synthetic(
    t: Taxonomy,
    per_class: int,
    dim: int,
    diffusion: float,
    noise: float,
    rng: RngState,
) -> Dataset:
    """Sample a dataset whose feature geometry mirrors the taxonomy.

    The root mean is the origin; every child mean adds Gaussian(0, diffusion^2)
    offsets; each sample adds Gaussian(0, noise^2) on top of its leaf mean.
    Output has per_class rows for each leaf, grouped in leaf id order.
    """
    if per_class < 1 or dim < 1:
        raise InvalidShapeParam("per_class and dim must be >= 1")
    if diffusion <= 0 or noise < 0:
        raise InvalidShapeParam("diffusion must be > 0 and noise >= 0")
    leaves = t.leaves()
    if not leaves:
        raise EmptyTaxonomy("taxonomy has no leaf labels")

    gen = rng.generator
    means = np.zeros((len(t), dim), dtype=np.float64)
    # breadth-first from the root, children in id order, so draws are ordered
    queue = [t.root]
    while queue:
        node = queue.pop(0)
        for child in t.children(node):
            means[child] = means[node] + diffusion * gen.standard_normal(dim)
            queue.append(child)

    features = np.empty((per_class * len(leaves), dim), dtype=np.float64)
    labels = np.empty(per_class * len(leaves), dtype=np.int64)
    for i, leaf in enumerate(leaves):
        block = slice(i * per_class, (i + 1) * per_class)
        features[block] = means[leaf] + noise * gen.standard_normal((per_class, dim))
        labels[block] = leaf
    return Dataset(
        features=features.astype(np.float32),
        labels=labels,
        label_universe=leaves,
    )


def write_features(path: str | Path, features: np.ndarray) -> None:
    features = np.asarray(features, dtype=np.float32)
    if features.ndim != 2:
        raise ShapeMismatch(f"features must be 2-D, got shape {features.shape}")
    n, d = features.shape
    with open(path, "wb") as fh:
        fh.write(FEATURES_MAGIC)
        fh.write(struct.pack("<III", FEATURES_VERSION, n, d))
        fh.write(np.ascontiguousarray(features, dtype="<f4").tobytes())


def read_features(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    header = struct.calcsize("<4sIII")
    if len(raw) < header:
        raise MalformedFile(f"{path}: truncated header ({len(raw)} bytes)")
    magic, version, n, d = struct.unpack_from("<4sIII", raw)
    if magic != FEATURES_MAGIC:
        raise MalformedFile(f"{path}: bad magic {magic!r}")
    if version != FEATURES_VERSION:
        raise VersionMismatch(f"{path}: unsupported version {version}")
    expected = header + 4 * n * d
    if len(raw) != expected:
        raise MalformedFile(f"{path}: expected {expected} bytes, found {len(raw)}")
    return np.frombuffer(raw, dtype="<f4", offset=header).reshape(n, d).astype(np.float32)


def write_labels(path: str | Path, labels: np.ndarray, t: Taxonomy) -> None:
    names = [t.name(int(label)) for label in labels]
    Path(path).write_text("\n".join(names) + "\n", encoding="utf-8")


def read_labels(path: str | Path, t: Taxonomy) -> np.ndarray:
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln.strip()]
    ids = []
    for name in lines:
        name = name.strip()
        node_id = t.leaf_labels.get(name)
        if node_id is None:
            raise UnknownLabel(f"{path}: label {name!r} is not a leaf of the taxonomy")
        ids.append(node_id)
    return np.asarray(ids, dtype=np.int64)


def save_dataset(ds: Dataset, features_path: str | Path, labels_path: str | Path, t: Taxonomy) -> None:
    write_features(features_path, ds.features)
    write_labels(labels_path, ds.labels, t)


def load_dataset(features_path: str | Path, labels_path: str | Path, t: Taxonomy) -> Dataset:
    features = read_features(features_path)
    labels = read_labels(labels_path, t)
    if features.shape[0] != labels.shape[0]:
        raise ShapeMismatch(
            f"{features.shape[0]} feature rows but {labels.shape[0]} labels"
        )
    return Dataset(features=features, labels=labels, label_universe=t.leaves())
