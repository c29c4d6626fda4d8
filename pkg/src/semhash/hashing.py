"""Bit-packed binary codes and exact Hamming-distance retrieval.

Codes are stored as little-endian 64-bit words (bit j of the code is bit
j % 64 of word j // 64).  Retrieval is an exact full scan with word-level
popcounts; ties are broken by ascending sample id so results are
deterministic.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    EmptyIndex,
    LengthMismatch,
    MalformedFile,
    ShapeMismatch,
    VersionMismatch,
)
from .model import EmbeddingBatch

INDEX_MAGIC = b"SHRI"
INDEX_VERSION = 1
WORD_BITS = 64


def _n_words(code_length: int) -> int:
    return (code_length + WORD_BITS - 1) // WORD_BITS


def _pad_mask(code_length: int) -> int:
    used = code_length % WORD_BITS
    return (1 << used) - 1 if used else (1 << WORD_BITS) - 1


@dataclass(frozen=True)
class HashCode:
    """A code_length-bit code; padding bits above the top are zero."""

    words: tuple[int, ...]
    code_length: int

    def __post_init__(self) -> None:
        if self.code_length < 1:
            raise ShapeMismatch("code length must be >= 1")
        if len(self.words) != _n_words(self.code_length):
            raise ShapeMismatch(
                f"{len(self.words)} words for code length {self.code_length}"
            )
        for w in self.words:
            if not 0 <= w < (1 << WORD_BITS):
                raise ShapeMismatch(f"word {w:#x} out of 64-bit range")
        if self.words[-1] & ~_pad_mask(self.code_length) & ((1 << WORD_BITS) - 1):
            raise ShapeMismatch("padding bits above the code length must be zero")


def pack_bits(bits: Sequence[int] | np.ndarray) -> HashCode:
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.ndim != 1 or bits.size < 1:
        raise ShapeMismatch("bits must be a non-empty 1-D sequence")
    k = bits.size
    packed = np.packbits(bits, bitorder="little")
    padded = np.zeros(_n_words(k) * 8, dtype=np.uint8)
    padded[: packed.size] = packed
    words = np.frombuffer(padded.tobytes(), dtype="<u8")
    return HashCode(words=tuple(int(w) for w in words), code_length=k)


def unpack_bits(code: HashCode) -> np.ndarray:
    raw = np.array(code.words, dtype="<u8").tobytes()
    bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8), bitorder="little")
    return bits[: code.code_length]


def binarize(z, threshold: float = 0.5) -> list[HashCode]:
    """Threshold each embedding coordinate: bit = 1 iff value >= threshold."""
    values = z.values if isinstance(z, EmbeddingBatch) else np.asarray(z, dtype=np.float64)
    if values.ndim != 2:
        raise ShapeMismatch(f"embeddings must be B x K, got {values.shape}")
    bits = (values >= threshold).astype(np.uint8)
    return [pack_bits(row) for row in bits]


def hamming(a: HashCode, b: HashCode) -> int:
    if a.code_length != b.code_length:
        raise LengthMismatch(f"code lengths differ: {a.code_length} vs {b.code_length}")
    return sum((wa ^ wb).bit_count() for wa, wb in zip(a.words, b.words))


@dataclass
class HashIndex:
    """Searchable collection of codes with parallel sample ids and labels."""

    words: np.ndarray  # N x W uint64
    ids: np.ndarray  # N
    labels: np.ndarray  # N
    code_length: int

    def __post_init__(self) -> None:
        self.words = np.ascontiguousarray(self.words, dtype=np.uint64)
        self.ids = np.asarray(self.ids, dtype=np.int64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.words.ndim != 2 or self.words.shape[1] != _n_words(self.code_length):
            raise ShapeMismatch(
                f"words shape {self.words.shape} incompatible with K={self.code_length}"
            )
        n = self.words.shape[0]
        if self.ids.shape != (n,) or self.labels.shape != (n,):
            raise LengthMismatch("ids and labels must parallel the code list")
        mask = np.uint64(_pad_mask(self.code_length))
        if n and np.any(self.words[:, -1] & ~mask):
            raise ShapeMismatch("padding bits above the code length must be zero")

    def __len__(self) -> int:
        return self.words.shape[0]

    def codes(self) -> list[HashCode]:
        return [
            HashCode(words=tuple(int(w) for w in row), code_length=self.code_length)
            for row in self.words
        ]


def build_index(
    codes: Sequence[HashCode], ids: Sequence[int], labels: Sequence[int]
) -> HashIndex:
    if not codes:
        raise EmptyIndex("cannot build an index from zero codes")
    k = codes[0].code_length
    for c in codes:
        if c.code_length != k:
            raise LengthMismatch("all codes in an index must share one code length")
    words = np.array([c.words for c in codes], dtype=np.uint64)
    return HashIndex(words=words, ids=np.asarray(ids), labels=np.asarray(labels), code_length=k)


def hamming_to_all(index: HashIndex, q: HashCode) -> np.ndarray:
    """Hamming distance from the query to every indexed code."""
    if q.code_length != index.code_length:
        raise LengthMismatch(
            f"query K={q.code_length} != index K={index.code_length}"
        )
    qw = np.array(q.words, dtype=np.uint64)
    return np.bitwise_count(index.words ^ qw[None, :]).sum(axis=1, dtype=np.int64)


def query_topk(index: HashIndex, q: HashCode, k: int) -> list[tuple[int, int]]:
    """Exact top-k by (Hamming distance, sample id) over a full scan."""
    if len(index) == 0:
        raise EmptyIndex("index is empty")
    if k < 1:
        raise ShapeMismatch(f"k must be >= 1, got {k}")
    dists = hamming_to_all(index, q)
    order = np.lexsort((index.ids, dists))
    top = order[: min(k, len(index))]
    return [(int(index.ids[i]), int(dists[i])) for i in top]


def save_index(path: str | Path, index: HashIndex) -> None:
    w = _n_words(index.code_length)
    entry = np.dtype([("id", "<u8"), ("label", "<u4"), ("words", "<u8", (w,))])
    if np.any(index.ids < 0) or np.any(index.labels < 0) or np.any(index.labels >= 2**32):
        raise ShapeMismatch("ids must be non-negative and labels must fit in 32 bits")
    records = np.empty(len(index), dtype=entry)
    records["id"] = index.ids
    records["label"] = index.labels
    records["words"] = index.words
    with open(path, "wb") as fh:
        fh.write(INDEX_MAGIC)
        fh.write(struct.pack("<III", INDEX_VERSION, index.code_length, len(index)))
        fh.write(records.tobytes())


def load_index(path: str | Path) -> HashIndex:
    raw = Path(path).read_bytes()
    header = struct.calcsize("<4sIII")
    if len(raw) < header:
        raise MalformedFile(f"{path}: truncated header ({len(raw)} bytes)")
    magic, version, code_length, count = struct.unpack_from("<4sIII", raw)
    if magic != INDEX_MAGIC:
        raise MalformedFile(f"{path}: bad magic {magic!r}")
    if version != INDEX_VERSION:
        raise VersionMismatch(f"{path}: unsupported version {version}")
    if code_length < 1:
        raise MalformedFile(f"{path}: invalid code length {code_length}")
    w = _n_words(code_length)
    entry = np.dtype([("id", "<u8"), ("label", "<u4"), ("words", "<u8", (w,))])
    expected = header + count * entry.itemsize
    if len(raw) != expected:
        raise MalformedFile(
            f"{path}: expected {expected} bytes, found {len(raw)} (offset {header})"
        )
    records = np.frombuffer(raw, dtype=entry, offset=header)
    return HashIndex(
        words=records["words"].reshape(count, w),
        ids=records["id"].astype(np.int64),
        labels=records["label"].astype(np.int64),
        code_length=code_length,
    )
