"""Fixed-length chunking of token sequences and recovery of global positions.

A document of n tokens becomes k = ceil(n / L) chunks of uniform length L;
only the final chunk may be padded, and its padding is a contiguous suffix
(pad token id 0). After per-chunk encoding, `global_concat` drops the pad
rows so downstream attention sees exactly n rows in original token order.
"""

from __future__ import annotations

from array import array
from dataclasses import dataclass
from typing import Sequence

from mhlat.backend import kernels as K
from mhlat.errors import ConfigError, DataError, ShapeError
from mhlat.tensor import Tensor, _record

PAD_ID = 0


@dataclass
class ChunkedDocument:
    chunks: list[list[int]]    # k rows of token ids, each of length L
    mask: list[array]          # k rows of 0.0/1.0 flags ('d' arrays for kernels)
    n: int                     # original token count
    L: int

    @property
    def k(self) -> int:
        return len(self.chunks)

    def real_lengths(self) -> list[int]:
        return [int(sum(m)) for m in self.mask]

    def token_ids(self) -> list[int]:
        """Flatten back to the original sequence (mask-restricted)."""
        out: list[int] = []
        for row, m in zip(self.chunks, self.mask):
            out.extend(tok for tok, flag in zip(row, m) if flag != 0.0)
        return out


def chunk(tokens: Sequence[int], L: int) -> ChunkedDocument:
    """Sequential non-overlapping split into ceil(n/L) chunks padded to L."""
    if L < 1:
        raise ConfigError(f"chunk length must be >= 1, got {L}")
    n = len(tokens)
    if n == 0:
        raise DataError("cannot chunk an empty token sequence")
    chunks: list[list[int]] = []
    masks: list[array] = []
    for start in range(0, n, L):
        piece = list(tokens[start:start + L])
        real = len(piece)
        if real < L:
            piece.extend([PAD_ID] * (L - real))
        m = array("d", bytes(8 * L))
        for i in range(real):
            m[i] = 1.0
        chunks.append(piece)
        masks.append(m)
    return ChunkedDocument(chunks=chunks, mask=masks, n=n, L=L)


def global_concat(features: list[Tensor], mask: list[array]) -> tuple[Tensor, array]:
    """Stack per-chunk features, dropping pad rows.

    Returns the n x d tensor of real-token rows in original order plus the
    flattened k*L validity mask (output row j corresponds to the j-th set
    flag). Padding must be a contiguous suffix of its chunk.
    """
    if len(features) != len(mask):
        raise ShapeError(
            f"global_concat: {len(features)} feature chunks vs {len(mask)} mask rows")
    if not features:
        raise ShapeError("global_concat: no chunks")
    d = features[0].cols
    reals: list[int] = []
    for idx, (f, m) in enumerate(zip(features, mask)):
        if f.cols != d:
            raise ShapeError(
                f"global_concat: chunk {idx} has {f.cols} cols, expected {d}")
        if f.rows != len(m):
            raise ShapeError(
                f"global_concat: chunk {idx} has {f.rows} rows vs mask length {len(m)}")
        real = int(sum(m))
        if any(m[i] == 0.0 for i in range(real)):
            raise ShapeError(f"global_concat: chunk {idx} padding is not a suffix")
        reals.append(real)

    n = sum(reals)
    out = Tensor(n, d)
    offset = 0
    for f, real in zip(features, reals):
        out.data[offset:offset + real * d] = f.data[0:real * d]
        offset += real * d

    def bwd():
        g = out.grad
        if g is None:
            return
        off = 0
        for f, real in zip(features, reals):
            if f.requires_grad:
                K.acc_range(f._gbuf(), 0, g, off, real * d)
            off += real * d

    _record(out, tuple(features), bwd)
    flat_mask = array("d")
    for m in mask:
        flat_mask.extend(m)
    return out, flat_mask
