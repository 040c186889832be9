"""Multi-label evaluation: micro/macro F1, micro/macro AUC, Precision@k.

Conventions:
  - F1 uses 0/0 = 0; macro-F1 averages over all labels including degenerate
    ones, while macro-AUC skips labels lacking a positive or a negative and
    errors only if every label is degenerate.
  - AUC is the exact rank-sum statistic P(s+ > s-) + 0.5 * P(tie), no
    trapezoid approximation.
  - Precision@k ranks by descending score with ties broken by ascending
    label index (the same rule the decoder uses).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from mhlat.errors import ShapeError

P_AT_K_DEFAULT = (5, 8, 15)

Matrix = list[list[float]]
FlagMatrix = list[list[int]]


def _check_same_shape(a, b, what: str) -> None:
    if len(a) != len(b) or any(len(ra) != len(rb) for ra, rb in zip(a, b)):
        raise ShapeError(f"{what}: prediction and gold shapes differ")


def _f1(tp: int, fp: int, fn: int) -> float:
    denom = 2 * tp + fp + fn
    return (2.0 * tp / denom) if denom else 0.0


def micro_f1(pred: FlagMatrix, gold: FlagMatrix) -> float:
    """F1 pooled over every (document, label) cell."""
    _check_same_shape(pred, gold, "micro_f1")
    tp = fp = fn = 0
    for prow, grow in zip(pred, gold):
        for p, g in zip(prow, grow):
            if p and g:
                tp += 1
            elif p:
                fp += 1
            elif g:
                fn += 1
    return _f1(tp, fp, fn)


def macro_f1(pred: FlagMatrix, gold: FlagMatrix) -> float:
    """Per-label F1 (0/0 = 0) averaged over all labels."""
    _check_same_shape(pred, gold, "macro_f1")
    if not pred:
        raise ShapeError("macro_f1: empty prediction matrix")
    n_labels = len(pred[0])
    total = 0.0
    for j in range(n_labels):
        tp = fp = fn = 0
        for prow, grow in zip(pred, gold):
            p, g = prow[j], grow[j]
            if p and g:
                tp += 1
            elif p:
                fp += 1
            elif g:
                fn += 1
        total += _f1(tp, fp, fn)
    return total / n_labels


def precision_at_k(scores: Matrix, gold: FlagMatrix, k: int) -> float:
    """Mean over documents of the gold fraction among the top-k scored labels."""
    _check_same_shape(scores, gold, "precision_at_k")
    if not scores:
        raise ShapeError("precision_at_k: empty score matrix")
    n_labels = len(scores[0])
    if k > n_labels:
        raise ValueError(f"precision_at_k: k={k} exceeds label count {n_labels}")
    if k < 1:
        raise ValueError(f"precision_at_k: k must be >= 1, got {k}")
    total = 0.0
    for srow, grow in zip(scores, gold):
        top = sorted(range(n_labels), key=lambda j: (-srow[j], j))[:k]
        total += sum(1 for j in top if grow[j]) / k
    return total / len(scores)


def _rank_auc(cells: list[tuple[float, int]]) -> float | None:
    """Exact tie-aware AUC of (score, is_positive) cells; None if degenerate."""
    n_pos = sum(flag for _, flag in cells)
    n_neg = len(cells) - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ordered = sorted(cells, key=lambda sc: sc[0])
    rank_pos_sum = 0.0
    i = 0
    while i < len(ordered):
        j = i
        while j < len(ordered) and ordered[j][0] == ordered[i][0]:
            j += 1
        avg_rank = (i + 1 + j) / 2.0   # average of 1-based ranks i+1 .. j
        rank_pos_sum += avg_rank * sum(flag for _, flag in ordered[i:j])
        i = j
    return (rank_pos_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def auc(scores: Matrix, gold: FlagMatrix, mode: str) -> float:
    """Micro pools all cells; macro averages labels with both classes present."""
    _check_same_shape(scores, gold, "auc")
    if mode == "micro":
        cells = [(s, g) for srow, grow in zip(scores, gold)
                 for s, g in zip(srow, grow)]
        result = _rank_auc(cells)
        if result is None:
            side = "positive" if not any(g for _, g in cells) else "negative"
            raise ValueError(f"micro AUC undefined: no {side} cells")
        return result
    if mode == "macro":
        if not scores:
            raise ShapeError("auc: empty score matrix")
        n_labels = len(scores[0])
        vals = []
        for j in range(n_labels):
            col = [(srow[j], grow[j]) for srow, grow in zip(scores, gold)]
            v = _rank_auc(col)
            if v is not None:
                vals.append(v)
        if not vals:
            raise ValueError(
                "macro AUC undefined: every label lacks a positive or a negative")
        return sum(vals) / len(vals)
    raise ValueError(f"auc mode must be 'micro' or 'macro', got {mode!r}")


def best_constant_micro_f1(label_counts: list[int], n_docs: int) -> float:
    """Highest micro-F1 any document-independent prediction can reach.

    The optimal constant set is a prefix of labels sorted by frequency;
    predicting the top-j labels gives F1 = 2*sum(top-j counts) / (j*D + total).
    """
    if n_docs < 1:
        raise ValueError("best_constant_micro_f1: need at least one document")
    total = sum(label_counts)
    counts = sorted(label_counts, reverse=True)
    best = 0.0
    running = 0
    for j, c in enumerate(counts, start=1):
        running += c
        denom = j * n_docs + total
        if denom:
            best = max(best, 2.0 * running / denom)
    return best


def constant_prediction_micro_f1(predicted: list[int], label_counts: list[int],
                                 n_docs: int) -> float:
    """Closed-form micro-F1 of predicting the same flag vector for every doc."""
    if len(predicted) != len(label_counts):
        raise ShapeError("constant_prediction_micro_f1: flag/count length mismatch")
    tp = sum(c for flag, c in zip(predicted, label_counts) if flag)
    fp = sum(n_docs - c for flag, c in zip(predicted, label_counts) if flag)
    fn = sum(c for flag, c in zip(predicted, label_counts) if not flag)
    return _f1(tp, fp, fn)


@dataclass
class MetricsReport:
    macro_f1: float
    micro_f1: float
    macro_auc: float
    micro_auc: float
    p_at_k: dict[int, float] = field(default_factory=dict)
    p_at_k_skipped: dict[int, str] = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "macro_f1": self.macro_f1,
            "micro_f1": self.micro_f1,
            "macro_auc": self.macro_auc,
            "micro_auc": self.micro_auc,
            "p_at_k": {str(k): self.p_at_k.get(k) for k in
                       sorted(set(self.p_at_k) | set(self.p_at_k_skipped))},
            "p_at_k_errors": {str(k): v for k, v in sorted(self.p_at_k_skipped.items())},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=2)

    def format_table(self) -> str:
        lines = [
            f"{'macro-F1':<10} {self.macro_f1:.4f}",
            f"{'micro-F1':<10} {self.micro_f1:.4f}",
            f"{'macro-AUC':<10} {self.macro_auc:.4f}",
            f"{'micro-AUC':<10} {self.micro_auc:.4f}",
        ]
        for k in sorted(set(self.p_at_k) | set(self.p_at_k_skipped)):
            if k in self.p_at_k:
                lines.append(f"{f'P@{k}':<10} {self.p_at_k[k]:.4f}")
            else:
                lines.append(f"{f'P@{k}':<10} n/a ({self.p_at_k_skipped[k]})")
        return "\n".join(lines)


def compute_report(scores: Matrix, pred: FlagMatrix, gold: FlagMatrix,
                   ks: tuple[int, ...] = P_AT_K_DEFAULT) -> MetricsReport:
    report = MetricsReport(
        macro_f1=macro_f1(pred, gold),
        micro_f1=micro_f1(pred, gold),
        macro_auc=auc(scores, gold, "macro"),
        micro_auc=auc(scores, gold, "micro"),
    )
    for k in ks:
        try:
            report.p_at_k[k] = precision_at_k(scores, gold, k)
        except ValueError as exc:
            report.p_at_k_skipped[k] = str(exc)
    return report
