"""Feed-forward encoder with hand-derived backprop, plus a linear classifier.

The encoder maps D-dimensional features to K-dimensional embeddings through
rectified hidden layers and a logistic output, so every embedding coordinate
lies strictly inside (0, 1).  Gradients are computed analytically; the
``gradient_check`` harness compares any loss's analytic gradient against
central finite differences.
"""
from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .data import RngState
from .errors import (
    MalformedFile,
    NonDeterministicLoss,
    NonFiniteInput,
    ShapeMismatch,
    StaleCache,
    VersionMismatch,
)

CHECKPOINT_MAGIC = b"SHRW"
CHECKPOINT_VERSION = 1

_SIG_LO = np.finfo(np.float64).tiny
_SIG_HI = 1.0 - np.finfo(np.float64).epsneg


@dataclass
class EncoderParams:
    """Ordered (weights, biases) pairs; weights are out x in."""

    layers: list[tuple[np.ndarray, np.ndarray]]
    code_length: int

    def __post_init__(self) -> None:
        if not self.layers:
            raise ShapeMismatch("encoder needs at least one layer")
        prev_out = None
        for i, (w, b) in enumerate(self.layers):
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise ShapeMismatch(f"layer {i}: weights {w.shape} / biases {b.shape}")
            if prev_out is not None and w.shape[1] != prev_out:
                raise ShapeMismatch(
                    f"layer {i}: in-dim {w.shape[1]} != previous out-dim {prev_out}"
                )
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise NonFiniteInput(f"layer {i}: non-finite parameters")
            prev_out = w.shape[0]
        if prev_out != self.code_length:
            raise ShapeMismatch(
                f"final layer out-dim {prev_out} != code length {self.code_length}"
            )

    @property
    def in_dim(self) -> int:
        return self.layers[0][0].shape[1]


@dataclass
class ClassifierParams:
    """Linear head on the continuous embeddings: logits = z W^T + b."""

    weights: np.ndarray  # C x K
    biases: np.ndarray  # C

    def __post_init__(self) -> None:
        if self.weights.ndim != 2 or self.biases.ndim != 1:
            raise ShapeMismatch("classifier weights must be 2-D, biases 1-D")
        if self.weights.shape[0] != self.biases.shape[0]:
            raise ShapeMismatch(
                f"classifier weights {self.weights.shape} / biases {self.biases.shape}"
            )
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.biases))):
            raise NonFiniteInput("classifier has non-finite parameters")

    @property
    def n_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def code_length(self) -> int:
        return self.weights.shape[1]


@dataclass
class EmbeddingBatch:
    """B x K embedding rows, every entry strictly inside (0, 1)."""

    values: np.ndarray
    sample_ids: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        self.sample_ids = np.asarray(self.sample_ids, dtype=np.int64)
        if self.values.ndim != 2 or self.values.shape[0] < 1:
            raise ShapeMismatch(f"embeddings must be B x K with B >= 1, got {self.values.shape}")
        if self.sample_ids.shape != (self.values.shape[0],):
            raise ShapeMismatch("sample_ids length != batch size")
        if not np.all((self.values > 0.0) & (self.values < 1.0)):
            raise ShapeMismatch("embedding values must lie strictly inside (0, 1)")

    @property
    def batch_size(self) -> int:
        return self.values.shape[0]

    @property
    def code_length(self) -> int:
        return self.values.shape[1]


@dataclass
class ForwardCache:
    params: EncoderParams
    inputs: np.ndarray
    pre_activations: list[np.ndarray]
    activations: list[np.ndarray]


def init_encoder(
    in_dim: int, hidden_sizes: Sequence[int], code_length: int, rng: RngState
) -> EncoderParams:
    """Uniform +-sqrt(6/(fan_in+fan_out)) weights, zero biases."""
    sizes = [in_dim, *hidden_sizes, code_length]
    layers = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.generator.uniform(-bound, bound, size=(fan_out, fan_in))
        layers.append((w, np.zeros(fan_out)))
    return EncoderParams(layers=layers, code_length=code_length)


def init_classifier(code_length: int, n_classes: int, rng: RngState) -> ClassifierParams:
    bound = np.sqrt(6.0 / (code_length + n_classes))
    w = rng.generator.uniform(-bound, bound, size=(n_classes, code_length))
    return ClassifierParams(weights=w, biases=np.zeros(n_classes))


def _sigmoid(s: np.ndarray) -> np.ndarray:
    out = np.empty_like(s)
    pos = s >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-s[pos]))
    es = np.exp(s[~pos])
    out[~pos] = es / (1.0 + es)
    return np.clip(out, _SIG_LO, _SIG_HI)


def encoder_forward(
    p: EncoderParams, x: np.ndarray, sample_ids: Optional[np.ndarray] = None
) -> tuple[EmbeddingBatch, ForwardCache]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeMismatch(f"input must be B x D, got shape {x.shape}")
    if x.shape[1] != p.in_dim:
        raise ShapeMismatch(f"input dim {x.shape[1]} != encoder in-dim {p.in_dim}")
    if not np.all(np.isfinite(x)):
        raise NonFiniteInput("input contains non-finite values")
    if sample_ids is None:
        sample_ids = np.arange(x.shape[0], dtype=np.int64)

    pre: list[np.ndarray] = []
    act: list[np.ndarray] = []
    a = x
    last = len(p.layers) - 1
    for i, (w, b) in enumerate(p.layers):
        s = a @ w.T + b
        pre.append(s)
        a = _sigmoid(s) if i == last else np.maximum(s, 0.0)
        act.append(a)
    batch = EmbeddingBatch(values=a, sample_ids=sample_ids)
    cache = ForwardCache(params=p, inputs=x, pre_activations=pre, activations=act)
    return batch, cache


def encoder_backward(
    p: EncoderParams, cache: ForwardCache, grad_z: np.ndarray
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Gradients of sum(grad_z * z) w.r.t. every encoder parameter."""
    if cache.params is not p:
        raise StaleCache("cache was produced by a different parameter set")
    grad_z = np.asarray(grad_z, dtype=np.float64)
    out = cache.activations[-1]
    if grad_z.shape != out.shape:
        raise ShapeMismatch(f"grad_z shape {grad_z.shape} != output shape {out.shape}")

    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(p.layers)  # type: ignore[list-item]
    delta = grad_z * out * (1.0 - out)  # logistic derivative
    for i in range(len(p.layers) - 1, -1, -1):
        w, _ = p.layers[i]
        below = cache.inputs if i == 0 else cache.activations[i - 1]
        grads[i] = (delta.T @ below, delta.sum(axis=0))
        if i > 0:
            delta = (delta @ w) * (cache.pre_activations[i - 1] > 0.0)
    return grads


def classifier_forward(c: ClassifierParams, z) -> np.ndarray:
    values = z.values if isinstance(z, EmbeddingBatch) else np.asarray(z, dtype=np.float64)
    if values.ndim != 2 or values.shape[1] != c.code_length:
        raise ShapeMismatch(
            f"embeddings {values.shape} incompatible with classifier K={c.code_length}"
        )
    return values @ c.weights.T + c.biases


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_param: int
    worst_coord: tuple[int, ...]
    n_checked: int
    analytic_at_worst: float
    numeric_at_worst: float


def gradient_check(
    loss_fn: Callable[[list[np.ndarray]], tuple[float, list[np.ndarray]]],
    params: list[np.ndarray],
    step: float = 1e-5,
    max_coords: int = 10_000,
    rng: Optional[RngState] = None,
) -> GradCheckReport:
    """Compare a loss's analytic gradient against central finite differences.

    The loss callable maps a parameter list to (value, gradient list) and must
    be deterministic.  Every coordinate is checked, or a random subsample when
    there are more than ``max_coords``.  The relative error denominator is
    floored at 1e-6 so rounding noise at near-zero coordinates does not
    register as disagreement.
    """
    v1, analytic = loss_fn(params)
    v2, _ = loss_fn(params)
    if v1 != v2:
        raise NonDeterministicLoss(f"loss evaluations disagree: {v1!r} vs {v2!r}")
    if len(analytic) != len(params):
        raise ShapeMismatch("gradient list length != parameter list length")

    coords = [
        (pi, idx)
        for pi, p in enumerate(params)
        for idx in np.ndindex(*p.shape)
    ]
    if len(coords) > max_coords:
        gen = (rng or RngState.from_seed(0)).generator
        picks = gen.choice(len(coords), size=max_coords, replace=False)
        coords = [coords[i] for i in picks]

    worst = GradCheckReport(0.0, -1, (), len(coords), 0.0, 0.0)
    for pi, idx in coords:
        original = params[pi][idx]
        params[pi][idx] = original + step
        up, _ = loss_fn(params)
        params[pi][idx] = original - step
        down, _ = loss_fn(params)
        params[pi][idx] = original
        numeric = (up - down) / (2.0 * step)
        a = float(analytic[pi][idx])
        rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-6)
        if rel > worst.max_rel_error:
            worst = GradCheckReport(rel, pi, idx, len(coords), a, numeric)
    return worst


# --- checkpoint file ---

def checkpoint_bytes(encoder: EncoderParams, classifier: ClassifierParams) -> bytes:
    if classifier.code_length != encoder.code_length:
        raise ShapeMismatch("classifier K != encoder K")
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(
        struct.pack(
            "<IIIII",
            CHECKPOINT_VERSION,
            encoder.in_dim,
            encoder.code_length,
            classifier.n_classes,
            len(encoder.layers),
        )
    )
    for w, b in encoder.layers:
        buf.write(struct.pack("<I", w.shape[0]))
        buf.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
        buf.write(np.ascontiguousarray(b, dtype="<f8").tobytes())
    buf.write(np.ascontiguousarray(classifier.weights, dtype="<f8").tobytes())
    buf.write(np.ascontiguousarray(classifier.biases, dtype="<f8").tobytes())
    return buf.getvalue()


def save_checkpoint(path: str | Path, encoder: EncoderParams, classifier: ClassifierParams) -> None:
    Path(path).write_bytes(checkpoint_bytes(encoder, classifier))


def load_checkpoint(path: str | Path) -> tuple[EncoderParams, ClassifierParams]:
    raw = Path(path).read_bytes()
    header = struct.calcsize("<4sIIIII")
    if len(raw) < header:
        raise MalformedFile(f"{path}: truncated header")
    magic, version, in_dim, code_length, n_classes, n_layers = struct.unpack_from(
        "<4sIIIII", raw
    )
    if magic != CHECKPOINT_MAGIC:
        raise MalformedFile(f"{path}: bad magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise VersionMismatch(f"{path}: unsupported version {version}")

    offset = header
    layers = []
    prev = in_dim
    for i in range(n_layers):
        if offset + 4 > len(raw):
            raise MalformedFile(f"{path}: truncated at layer {i}")
        (out_dim,) = struct.unpack_from("<I", raw, offset)
        offset += 4
        need = 8 * (out_dim * prev + out_dim)
        if offset + need > len(raw):
            raise MalformedFile(f"{path}: truncated at layer {i}")
        w = np.frombuffer(raw, dtype="<f8", count=out_dim * prev, offset=offset)
        offset += 8 * out_dim * prev
        b = np.frombuffer(raw, dtype="<f8", count=out_dim, offset=offset)
        offset += 8 * out_dim
        layers.append((w.reshape(out_dim, prev).copy(), b.copy()))
        prev = out_dim
    need = 8 * (n_classes * code_length + n_classes)
    if offset + need != len(raw):
        raise MalformedFile(f"{path}: expected {offset + need} bytes, found {len(raw)}")
    cw = np.frombuffer(raw, dtype="<f8", count=n_classes * code_length, offset=offset)
    offset += 8 * n_classes * code_length
    cb = np.frombuffer(raw, dtype="<f8", count=n_classes, offset=offset)
    encoder = EncoderParams(layers=layers, code_length=code_length)
    classifier = ClassifierParams(weights=cw.reshape(n_classes, code_length).copy(), biases=cb.copy())
    return encoder, classifier
