"""Chunking: fixed-length split invariants and pad-row recovery."""

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import rand_tensor
from mhlat import tensor as T
from mhlat.chunking import chunk, global_concat
from mhlat.errors import ConfigError, DataError, ShapeError
from mhlat.tensor import Tape, Tensor


class TestChunk:
    def test_three_chunks_with_tail_padding(self):
        doc = chunk(list(range(1, 1101)), 512)
        assert doc.k == 3
        assert doc.real_lengths() == [512, 512, 76]
        assert doc.n == 1100
        assert all(len(row) == 512 for row in doc.chunks)

    def test_exact_fit_no_padding(self):
        doc = chunk(list(range(1, 513)), 512)
        assert doc.k == 1
        assert doc.real_lengths() == [512]

    def test_single_token(self):
        doc = chunk([7], 512)
        assert doc.k == 1
        assert sum(doc.mask[0]) == 1.0
        assert doc.chunks[0][0] == 7
        assert doc.chunks[0][1] == 0  # pad id

    def test_empty_sequence_rejected(self):
        with pytest.raises(DataError):
            chunk([], 16)

    def test_bad_chunk_length_rejected(self):
        with pytest.raises(ConfigError):
            chunk([1, 2, 3], 0)

    def test_padding_is_contiguous_suffix_and_mask_sums_to_n(self):
        doc = chunk(list(range(1, 38)), 8)
        assert sum(sum(m) for m in doc.mask) == 37.0
        last = doc.mask[-1]
        seen_pad = False
        for flag in last:
            if flag == 0.0:
                seen_pad = True
            else:
                assert not seen_pad, "padding must be a suffix"

    @given(st.integers(1, 200), st.integers(1, 40))
    @settings(max_examples=200, deadline=None)
    def test_flatten_roundtrip_identity(self, n, L):
        tokens = [1 + (i * 7919) % 1000 for i in range(n)]
        doc = chunk(tokens, L)
        assert doc.k == -(-n // L)  # ceil
        assert doc.token_ids() == tokens

    def test_scale_bound_from_generator(self):
        # longest documents the generator is specified to produce
        doc = chunk(list(range(1, 8773)), 512)
        assert doc.k == -(-8772 // 512)
        assert doc.token_ids() == list(range(1, 8773))


class TestGlobalConcat:
    def test_single_unpadded_chunk_is_identity(self):
        rng = random.Random(0)
        doc = chunk([1] * 6, 6)
        f = rand_tensor(rng, 6, 3)
        out, gmask = global_concat([f], doc.mask)
        assert out.tolist() == f.tolist()
        assert list(gmask) == [1.0] * 6

    def test_pad_rows_dropped(self):
        rng = random.Random(1)
        doc = chunk([1] * 13, 8)  # k=2, 3 pad rows in the tail
        feats = [rand_tensor(rng, 8, 4), rand_tensor(rng, 8, 4)]
        out, gmask = global_concat(feats, doc.mask)
        assert out.shape == (2 * 8 - 3, 4)
        assert out.tolist() == feats[0].tolist() + feats[1].tolist()[:5]
        assert sum(gmask) == 13.0

    def test_row_order_preserved(self):
        doc = chunk(list(range(1, 6)), 3)
        feats = [Tensor.from_rows([[1.0], [2.0], [3.0]]),
                 Tensor.from_rows([[4.0], [5.0], [99.0]])]
        out, _ = global_concat(feats, doc.mask)
        assert out.tolist() == [[1.0], [2.0], [3.0], [4.0], [5.0]]

    def test_shape_mismatches_rejected(self):
        doc = chunk([1, 2, 3], 3)
        with pytest.raises(ShapeError):
            global_concat([Tensor(3, 2), Tensor(3, 2)], doc.mask)
        with pytest.raises(ShapeError):
            global_concat([Tensor(2, 2)], doc.mask)  # rows != mask length
        doc2 = chunk([1] * 7, 4)
        with pytest.raises(ShapeError):
            global_concat([Tensor(4, 2), Tensor(4, 3)], doc2.mask)

    def test_backward_routes_to_real_rows_only(self):
        doc = chunk([1] * 5, 4)  # chunk 2 has 1 real + 3 pad rows
        f1 = rand_tensor(random.Random(2), 4, 2, requires_grad=True)
        f2 = rand_tensor(random.Random(3), 4, 2, requires_grad=True)
        with Tape() as tape:
            out, _ = global_concat([f1, f2], doc.mask)
            loss = T.sum_all(out)
        tape.backward(loss)
        assert f1.grad_rows() == [[1.0, 1.0]] * 4
        assert f2.grad_rows() == [[1.0, 1.0]] + [[0.0, 0.0]] * 3

    def test_non_suffix_padding_rejected(self):
        doc = chunk([1, 2, 3], 2)
        doc.mask[1][0], doc.mask[1][1] = 0.0, 1.0  # corrupt: pad then real
        with pytest.raises(ShapeError, match="suffix"):
            global_concat([Tensor(2, 1), Tensor(2, 1)], doc.mask)
