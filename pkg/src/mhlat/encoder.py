"""Parameter-shared per-chunk sequence encoder.

A small trainable transformer (token embedding + learned positions + B
post-norm single-head blocks) that produces one L x d_m feature matrix per
chunk. The same parameters encode every chunk of a document; padded
positions are excluded as self-attention targets, and their rows are
dropped when chunks are stitched back together.

All tensors are registered in a ParamStore under the "encoder" group with
bias/weight kinds: additive offsets (projection biases, feed-forward biases,
layer-norm biases) are "bias"; everything multiplicative (projection and
feed-forward matrices, embedding and position tables, layer-norm gains) is
"weight". That tagging is what the bias-only tuning mode keys off.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

from mhlat import tensor as T
from mhlat.chunking import ChunkedDocument, global_concat
from mhlat.errors import DataError
from mhlat.params import ParamStore, xavier_uniform
from mhlat.tensor import Tensor


def _zeros_row(store: ParamStore, name: str, width: int) -> Tensor:
    return store.register(name, Tensor(1, width), "encoder", "bias")


def _ones_row(width: int) -> Tensor:
    t = Tensor(1, width)
    for i in range(width):
        t.data[i] = 1.0
    return t


@dataclass
class EncoderBlock:
    wq: Tensor
    bq: Tensor
    wk: Tensor
    bk: Tensor
    wv: Tensor
    bv: Tensor
    wo: Tensor
    bo: Tensor
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor
    ln1_g: Tensor
    ln1_b: Tensor
    ln2_g: Tensor
    ln2_b: Tensor


class Encoder:
    """Single-head post-norm transformer encoder over fixed-length chunks."""

    def __init__(self, store: ParamStore, rng: random.Random,
                 vocab_size: int, L: int, d_m: int, blocks: int):
        self.vocab_size = vocab_size
        self.L = L
        self.d_m = d_m
        self.scale = 1.0 / math.sqrt(d_m)
        self.emb = store.register("encoder.emb", xavier_uniform(rng, vocab_size, d_m),
                                  "encoder", "weight")
        self.pos = store.register("encoder.pos", xavier_uniform(rng, L, d_m),
                                  "encoder", "weight")
        self.blocks: list[EncoderBlock] = []
        for b in range(blocks):
            p = f"encoder.block{b}"
            hidden = 4 * d_m

            def w(name: str, rows: int, cols: int) -> Tensor:
                return store.register(f"{p}.{name}", xavier_uniform(rng, rows, cols),
                                      "encoder", "weight")

            blk = EncoderBlock(
                wq=w("wq", d_m, d_m), bq=_zeros_row(store, f"{p}.bq", d_m),
                wk=w("wk", d_m, d_m), bk=_zeros_row(store, f"{p}.bk", d_m),
                wv=w("wv", d_m, d_m), bv=_zeros_row(store, f"{p}.bv", d_m),
                wo=w("wo", d_m, d_m), bo=_zeros_row(store, f"{p}.bo", d_m),
                w1=w("w1", hidden, d_m), b1=_zeros_row(store, f"{p}.b1", hidden),
                w2=w("w2", d_m, hidden), b2=_zeros_row(store, f"{p}.b2", d_m),
                ln1_g=store.register(f"{p}.ln1_g", _ones_row(d_m), "encoder", "weight"),
                ln1_b=_zeros_row(store, f"{p}.ln1_b", d_m),
                ln2_g=store.register(f"{p}.ln2_g", _ones_row(d_m), "encoder", "weight"),
                ln2_b=_zeros_row(store, f"{p}.ln2_b", d_m),
            )
            self.blocks.append(blk)

    def encode_chunk(self, ids: list[int], mask_row) -> Tensor:
        """Encode one L-length chunk; pad columns are masked out of attention."""
        if len(ids) != self.L:
            raise DataError(f"chunk has {len(ids)} tokens, expected L={self.L}")
        for pos, tid in enumerate(ids):
            if not (0 <= tid < self.vocab_size):
                raise DataError(
                    f"token id {tid} at position {pos} is outside the "
                    f"vocabulary (size {self.vocab_size})")
        x = T.add(T.embedding(self.emb, ids), self.pos)
        for blk in self.blocks:
            q = T.affine(x, blk.wq, blk.bq)
            k = T.affine(x, blk.wk, blk.bk)
            v = T.affine(x, blk.wv, blk.bv)
            scores = T.scale(T.matmul_bt(q, k), self.scale)
            attn = T.row_softmax(scores, mask=mask_row)
            ctx = T.affine(T.matmul(attn, v), blk.wo, blk.bo)
            x = T.layer_norm(T.add(x, ctx), blk.ln1_g, blk.ln1_b)
            h = T.affine(T.relu(T.affine(x, blk.w1, blk.b1)), blk.w2, blk.b2)
            x = T.layer_norm(T.add(x, h), blk.ln2_g, blk.ln2_b)
        return x

    def encode_document(self, doc: ChunkedDocument) -> Tensor:
        """Encode every chunk with the same parameters and drop pad rows."""
        feats = [self.encode_chunk(ids, m) for ids, m in zip(doc.chunks, doc.mask)]
        out, _ = global_concat(feats, doc.mask)
        return out
