import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semhash.errors import (
    EmptyIndex,
    LengthMismatch,
    MalformedFile,
    ShapeMismatch,
    VersionMismatch,
)
from semhash.hashing import (
    HashCode,
    HashIndex,
    binarize,
    build_index,
    hamming,
    load_index,
    pack_bits,
    query_topk,
    save_index,
    unpack_bits,
)

from oracles import bf_hamming, bf_topk


def random_codes(rng, n, k):
    bits = rng.integers(0, 2, size=(n, k), dtype=np.uint8)
    return [pack_bits(row) for row in bits], bits


class TestBinarize:
    def test_threshold_pair(self):
        codes = binarize(np.array([[0.49, 0.51]]))
        assert unpack_bits(codes[0]).tolist() == [0, 1]

    def test_exactly_half_rounds_up(self):
        codes = binarize(np.array([[0.5]]))
        assert unpack_bits(codes[0]).tolist() == [1]

    def test_matches_scalar_threshold_loop(self):
        rng = np.random.default_rng(0)
        z = rng.uniform(0.0, 1.0, (20, 67))
        codes = binarize(z)
        for row, code in zip(z, codes):
            expected = [1 if v >= 0.5 else 0 for v in row]
            assert unpack_bits(code).tolist() == expected

    def test_padding_bits_zero(self):
        codes = binarize(np.ones((1, 5)))
        assert codes[0].words[0] == 0b11111
        assert codes[0].code_length == 5


class TestPacking:
    @given(st.lists(st.integers(min_value=0, max_value=1), min_size=1, max_size=200))
    @settings(max_examples=80)
    def test_pack_unpack_roundtrip(self, bits):
        code = pack_bits(bits)
        assert unpack_bits(code).tolist() == bits
        assert pack_bits(unpack_bits(code)) == code

    def test_padding_invariant_enforced(self):
        with pytest.raises(ShapeMismatch):
            HashCode(words=(0b1000000,), code_length=5)


class TestHamming:
    def test_identical(self):
        c = pack_bits([1, 0, 1, 1])
        assert hamming(c, c) == 0

    def test_small_example(self):
        a = pack_bits([1, 0, 1, 0])
        b = pack_bits([0, 1, 1, 0])
        assert hamming(a, b) == 2

    def test_matches_bit_loop_on_random_pairs(self):
        rng = np.random.default_rng(1)
        codes, bits = random_codes(rng, 40, 128)
        for i in range(0, 40, 2):
            assert hamming(codes[i], codes[i + 1]) == bf_hamming(bits[i], bits[i + 1])

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            hamming(pack_bits([1, 0]), pack_bits([1, 0, 1]))

    @given(st.integers(min_value=0, max_value=10_000))
    @settings(max_examples=50)
    def test_metric_axioms(self, seed):
        rng = np.random.default_rng(seed)
        (a, b, c), _ = random_codes(rng, 3, 70)
        assert hamming(a, b) == hamming(b, a)
        assert hamming(a, a) == 0
        assert hamming(a, c) <= hamming(a, b) + hamming(b, c)


class TestQueryTopk:
    def test_single_entry(self):
        code = pack_bits([1, 0, 1])
        idx = build_index([code], [7], [0])
        assert query_topk(idx, pack_bits([0, 0, 1]), 5) == [(7, 1)]

    def test_tie_break_by_ascending_id(self):
        code = pack_bits([1, 1])
        idx = build_index([code] * 4, [3, 1, 2, 0], [0, 0, 0, 0])
        assert query_topk(idx, code, 4) == [(0, 0), (1, 0), (2, 0), (3, 0)]

    def test_matches_naive_sort_oracle(self):
        rng = np.random.default_rng(5)
        codes, bits = random_codes(rng, 1000, 48)
        ids = rng.permutation(1000)
        idx = build_index(codes, ids, np.zeros(1000, dtype=int))
        q_bits = rng.integers(0, 2, 48, dtype=np.uint8)
        got = query_topk(idx, pack_bits(q_bits), 50)
        assert got == bf_topk(bits, ids, q_bits, 50)

    def test_full_scan_is_total_order(self):
        rng = np.random.default_rng(6)
        codes, bits = random_codes(rng, 64, 16)
        idx = build_index(codes, np.arange(64), np.zeros(64, dtype=int))
        q = codes[0]
        result = query_topk(idx, q, 64)
        assert len(result) == 64
        keys = [(d, i) for i, d in result]
        assert keys == sorted(keys)

    def test_empty_index(self):
        idx = HashIndex(words=np.zeros((0, 1), dtype=np.uint64), ids=[], labels=[], code_length=8)
        with pytest.raises(EmptyIndex):
            query_topk(idx, pack_bits([0] * 8), 1)

    def test_length_mismatch(self):
        idx = build_index([pack_bits([1, 0])], [0], [0])
        with pytest.raises(LengthMismatch):
            query_topk(idx, pack_bits([1, 0, 1]), 1)


class TestIndexFile:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(9)
        codes, _ = random_codes(rng, 17, 70)
        idx = build_index(codes, rng.integers(0, 1000, 17), rng.integers(0, 30, 17))
        path = tmp_path / "x.index"
        save_index(path, idx)
        back = load_index(path)
        np.testing.assert_array_equal(back.words, idx.words)
        np.testing.assert_array_equal(back.ids, idx.ids)
        np.testing.assert_array_equal(back.labels, idx.labels)
        assert back.code_length == 70

    def test_truncated(self, tmp_path):
        codes, _ = random_codes(np.random.default_rng(0), 3, 16)
        idx = build_index(codes, [0, 1, 2], [0, 0, 0])
        path = tmp_path / "x.index"
        save_index(path, idx)
        path.write_bytes(path.read_bytes()[:-3])
        with pytest.raises(MalformedFile):
            load_index(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "x.index"
        path.write_bytes(b"NOPE" + bytes(12))
        with pytest.raises(MalformedFile):
            load_index(path)

    def test_version_mismatch(self, tmp_path):
        codes, _ = random_codes(np.random.default_rng(0), 1, 8)
        idx = build_index(codes, [0], [0])
        path = tmp_path / "x.index"
        save_index(path, idx)
        raw = bytearray(path.read_bytes())
        raw[4] = 42
        path.write_bytes(bytes(raw))
        with pytest.raises(VersionMismatch):
            load_index(path)

    def test_hand_built_fixture_bytes(self, tmp_path):
        # one entry: id=5, label=3, K=4, code bits 1010 -> word 0b0101 = 5
        raw = b"SHRI" + struct.pack("<III", 1, 4, 1) + struct.pack("<QI", 5, 3) + struct.pack("<Q", 0b0101)
        path = tmp_path / "hand.index"
        path.write_bytes(raw)
        idx = load_index(path)
        assert idx.code_length == 4
        assert idx.ids.tolist() == [5]
        assert idx.labels.tolist() == [3]
        assert unpack_bits(idx.codes()[0]).tolist() == [1, 0, 1, 0]


def test_build_index_rejects_mixed_lengths():
    with pytest.raises(LengthMismatch):
        build_index([pack_bits([1]), pack_bits([1, 0])], [0, 1], [0, 0])


def test_build_index_rejects_empty():
    with pytest.raises(EmptyIndex):
        build_index([], [], [])
