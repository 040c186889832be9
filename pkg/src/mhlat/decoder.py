"""Label-specific linear classifiers, the multi-label BCE objective, and
threshold/ranking prediction.

Each label i has its own weight row and bias: logit_i = <w_i, e_i> + b_i.
This is a row-wise dot product against label i's own representation, not a
shared projection, so perturbing e_j can only move logit j.
"""

from __future__ import annotations

import json
import random
from array import array
from dataclasses import dataclass

from mhlat import tensor as T
from mhlat.errors import ShapeError
from mhlat.params import ParamStore, xavier_uniform
from mhlat.tensor import Tensor


@dataclass
class ClassifierParams:
    w: Tensor   # C x d_m, row i is label i's weight vector
    b: Tensor   # C x 1

    @classmethod
    def create(cls, store: ParamStore, rng: random.Random, n_labels: int,
               d_m: int) -> "ClassifierParams":
        return cls(
            w=store.register("head.cls_w", xavier_uniform(rng, n_labels, d_m),
                             "head", "weight"),
            b=store.register("head.cls_b", Tensor(n_labels, 1), "head", "bias"),
        )


def score_labels(e_final: Tensor, p: ClassifierParams) -> Tensor:
    """Per-label logits as a C x 1 tensor: logit_i = <w_i, e_i> + b_i."""
    if e_final.shape != p.w.shape:
        raise ShapeError(
            f"score_labels: representations {e_final.shape} vs weights {p.w.shape}")
    if p.b.shape != (e_final.rows, 1):
        raise ShapeError(f"score_labels: bias {p.b.shape}, expected {(e_final.rows, 1)}")
    return T.add(T.row_sum(T.mul(e_final, p.w)), p.b)


def bce_loss(logits: Tensor, y: list[int]) -> Tensor:
    """Binary cross-entropy summed over labels, in stable logit form."""
    if any(v not in (0, 1) for v in y):
        raise ValueError("targets must be 0/1 flags")
    if logits.rows * logits.cols != len(y):
        raise ShapeError(f"bce_loss: {logits.rows * logits.cols} logits vs {len(y)} targets")
    return T.bce_with_logits(logits, [float(v) for v in y])


def probabilities(logits: Tensor) -> list[float]:
    return T.sigmoid_values(logits)


def predict(logits: list[float], threshold: float) -> tuple[list[int], list[int]]:
    """Thresholded flags plus the full label ranking.

    flag_i = [sigmoid(logit_i) > threshold]; the ranking orders labels by
    descending logit with ties broken by ascending label index.
    """
    if not (0.0 < threshold < 1.0):
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    probs = T.sigmoid_values(Tensor(1, len(logits), array("d", logits)))
    flags = [1 if p > threshold else 0 for p in probs]
    ranking = sorted(range(len(logits)), key=lambda i: (-logits[i], i))
    return flags, ranking


def write_predictions_jsonl(path, predictions: list[dict]) -> None:
    """One JSON object per line: {"id", "scores", "predicted"}."""
    with open(path, "w", encoding="utf-8") as fh:
        for pred in predictions:
            fh.write(json.dumps(pred, sort_keys=True) + "\n")
