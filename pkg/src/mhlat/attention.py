"""Multi-hop label-wise attention.

One hop refines token features H (n x d_m) and label representations E
(C x d_m) against each other:

    T     = relu(E W_att^T) (relu(H W_att^T))^T        C x n
    alpha = row_softmax(T)            per-label distribution over tokens
    Z     = alpha H                                    C x d_m
    E~    = [Z ; E] W_map^T + b_map                    C x d_m
    beta  = row_softmax(T^T)          per-token distribution over labels
    D     = beta E                                     n x d_m
    H~    = [D ; H] W_map^T + b_map                    n x d_m

The fusion parameters (W_map, b_map) are shared between the label side and
the token side within a hop. Shapes are preserved, so hops compose; after N
hops the final label representations feed the classifiers. The refined H of
the last hop is never consumed downstream, so it is skipped there.
"""

from __future__ import annotations

import csv
import random
from dataclasses import dataclass

from mhlat import tensor as T
from mhlat.errors import ConfigError, ShapeError
from mhlat.params import ParamStore, xavier_uniform
from mhlat.tensor import Tensor


@dataclass
class HopParams:
    w_att: Tensor   # d_m x d_m
    w_map: Tensor   # d_m x 2*d_m
    b_map: Tensor   # 1 x d_m

    @classmethod
    def create(cls, store: ParamStore, rng: random.Random, d_m: int,
               prefix: str) -> "HopParams":
        return cls(
            w_att=store.register(f"{prefix}.w_att", xavier_uniform(rng, d_m, d_m),
                                 "head", "weight"),
            w_map=store.register(f"{prefix}.w_map", xavier_uniform(rng, d_m, 2 * d_m),
                                 "head", "weight"),
            b_map=store.register(f"{prefix}.b_map", Tensor(1, d_m), "head", "bias"),
        )


def make_hops(store: ParamStore, rng: random.Random, d_m: int, n_hops: int,
              share: bool) -> list[HopParams]:
    """One HopParams per hop, or a single shared instance when `share` is on."""
    if n_hops == 0:
        return []
    if share:
        return [HopParams.create(store, rng, d_m, "head.hop_shared")]
    return [HopParams.create(store, rng, d_m, f"head.hop{i}") for i in range(n_hops)]


def init_label_embedding(store: ParamStore, rng: random.Random, n_labels: int,
                         d_m: int) -> Tensor:
    return store.register("head.label_emb", xavier_uniform(rng, n_labels, d_m),
                          "head", "weight")


def _check_dims(H: Tensor, E: Tensor, p: HopParams) -> None:
    d = H.cols
    if E.cols != d:
        raise ShapeError(f"hop: H is {H.shape} but E is {E.shape}")
    if p.w_att.shape != (d, d):
        raise ShapeError(f"hop: w_att is {p.w_att.shape}, expected {(d, d)}")
    if p.w_map.shape != (d, 2 * d):
        raise ShapeError(f"hop: w_map is {p.w_map.shape}, expected {(d, 2 * d)}")
    if p.b_map.shape != (1, d):
        raise ShapeError(f"hop: b_map is {p.b_map.shape}, expected {(1, d)}")


def _hop_full(H: Tensor, E: Tensor, p: HopParams, skip_context: bool
              ) -> tuple[Tensor | None, Tensor, Tensor, Tensor]:
    """One hop; returns (H~ or None, E~, alpha, beta)."""
    _check_dims(H, E, p)
    t = T.matmul_bt(T.relu(T.matmul_bt(E, p.w_att)), T.relu(T.matmul_bt(H, p.w_att)))
    alpha = T.row_softmax(t)
    z = T.matmul(alpha, H)
    e_new = T.affine(T.concat_cols(z, E), p.w_map, p.b_map)
    beta = T.row_softmax(T.transpose(t))
    if skip_context:
        return None, e_new, alpha, beta
    d = T.matmul(beta, E)
    h_new = T.affine(T.concat_cols(d, H), p.w_map, p.b_map)
    return h_new, e_new, alpha, beta


def hop(H: Tensor, E: Tensor, p: HopParams) -> tuple[Tensor, Tensor]:
    """Single hop: returns the refined (H~, E~) pair."""
    h_new, e_new, _, _ = _hop_full(H, E, p, skip_context=False)
    assert h_new is not None
    return h_new, e_new


def attention_maps(H: Tensor, E: Tensor, p: HopParams) -> tuple[Tensor, Tensor]:
    """The (alpha, beta) attention of one hop, for inspection and tests."""
    _, _, alpha, beta = _hop_full(H, E, p, skip_context=True)
    return alpha, beta


def _hops_for(hops: list[HopParams], n_hops: int) -> list[HopParams]:
    if n_hops == 0:
        return []
    if not hops:
        raise ConfigError(f"{n_hops} hops requested but no hop parameters given")
    if len(hops) == 1:
        return hops * n_hops
    if len(hops) != n_hops:
        raise ConfigError(f"{n_hops} hops requested but {len(hops)} parameter sets given")
    return hops


def multi_hop(H0: Tensor, E0: Tensor, hops: list[HopParams], n_hops: int) -> Tensor:
    """Iterate the hop function n_hops times and return the final label matrix.

    With n_hops = 0 the label embedding is returned unchanged (the degenerate,
    input-independent configuration). A single parameter set is reused for
    every hop when sharing is enabled.
    """
    seq = _hops_for(hops, n_hops)
    h, e = H0, E0
    for i, p in enumerate(seq):
        last = i == n_hops - 1
        h_new, e, _, _ = _hop_full(h, e, p, skip_context=last)
        if not last:
            assert h_new is not None
            h = h_new
    return e


def final_hop_alpha(H0: Tensor, E0: Tensor, hops: list[HopParams],
                    n_hops: int) -> Tensor | None:
    """Label-over-token attention of the final hop (None when n_hops = 0)."""
    seq = _hops_for(hops, n_hops)
    if not seq:
        return None
    h, e = H0, E0
    alpha = None
    for i, p in enumerate(seq):
        last = i == n_hops - 1
        h_new, e, alpha, _ = _hop_full(h, e, p, skip_context=last)
        if not last:
            h = h_new
    return alpha


def write_attention_csv(path, rows: list[tuple[str, str, Tensor]], top: int = 5) -> None:
    """Dump per-label attention rows as CSV.

    Each entry is (doc_id, label, alpha_row_tensor); the written row lists
    the `top` highest-weight (position, weight) pairs in descending weight,
    ties broken by ascending position.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["doc_id", "label_id"]
        for i in range(1, top + 1):
            header += [f"pos_{i}", f"weight_{i}"]
        writer.writerow(header)
        for doc_id, label, alpha_row in rows:
            weights = list(alpha_row.data)
            order = sorted(range(len(weights)), key=lambda j: (-weights[j], j))[:top]
            row: list = [doc_id, label]
            for j in order:
                row += [j, repr(weights[j])]
            writer.writerow(row)
