"""Shared test utilities: independent brute-force oracles and builders.

The oracles here deliberately re-derive everything from first principles
(explicit loops, pair enumeration, plain floats) so they share no code with
the implementations they check.
"""

from __future__ import annotations

import math
import random

from mhlat.tensor import Tensor


def assert_close(got, want, tol=1e-12, label=""):
    if isinstance(got, Tensor):
        got = got.tolist()
    if isinstance(want, Tensor):
        want = want.tolist()
    if isinstance(got, (int, float)):
        assert abs(got - want) <= tol, f"{label}: {got} != {want} (tol {tol})"
        return
    assert len(got) == len(want), f"{label}: row count {len(got)} != {len(want)}"
    for i, (gr, wr) in enumerate(zip(got, want)):
        for j, (g, w) in enumerate(zip(gr, wr)):
            assert abs(g - w) <= tol, f"{label}[{i}][{j}]: {g} != {w} (tol {tol})"


def rand_tensor(rng: random.Random, rows: int, cols: int, lo=-1.0, hi=1.0,
                requires_grad=False) -> Tensor:
    t = Tensor(rows, cols, requires_grad=requires_grad)
    for i in range(rows * cols):
        t.data[i] = rng.uniform(lo, hi)
    return t


# ---------------------------------------------------------------------------
# scalar oracle for one attention hop (independent of the tensor library)

def scalar_hop_oracle(H, E, w_att, w_map, b_map):
    """Step-by-step evaluation of one hop on nested float lists.

    Returns (H_new, E_new, alpha, beta). Uses its own naive softmax and
    explicit dot products.
    """
    n, d = len(H), len(H[0])
    C = len(E)

    def mat_w(x):  # x @ w_att^T, then relu
        out = []
        for row in x:
            new = []
            for wrow in w_att:
                s = 0.0
                for a, b in zip(row, wrow):
                    s += a * b
                new.append(s if s > 0.0 else 0.0)
            out.append(new)
        return out

    eh = mat_w(E)
    hh = mat_w(H)
    t = [[sum(eh[i][q] * hh[j][q] for q in range(d)) for j in range(n)]
         for i in range(C)]

    def softmax_rows(m):
        out = []
        for row in m:
            exps = [math.exp(v) for v in row]
            tot = sum(exps)
            out.append([e / tot for e in exps])
        return out

    alpha = softmax_rows(t)
    z = [[sum(alpha[i][j] * H[j][q] for j in range(n)) for q in range(d)]
         for i in range(C)]

    def fuse(left, right):
        out = []
        for lrow, rrow in zip(left, right):
            cat = list(lrow) + list(rrow)
            out.append([sum(w_map[q][p] * cat[p] for p in range(2 * d)) + b_map[q]
                        for q in range(d)])
        return out

    e_new = fuse(z, E)
    t_T = [[t[i][j] for i in range(C)] for j in range(n)]
    beta = softmax_rows(t_T)
    dmat = [[sum(beta[j][i] * E[i][q] for i in range(C)) for q in range(d)]
            for j in range(n)]
    h_new = fuse(dmat, H)
    return h_new, e_new, alpha, beta


# ---------------------------------------------------------------------------
# brute-force metric oracles

def oracle_micro_f1(pred, gold):
    tp = fp = fn = 0
    for prow, grow in zip(pred, gold):
        for p, g in zip(prow, grow):
            tp += 1 if (p == 1 and g == 1) else 0
            fp += 1 if (p == 1 and g == 0) else 0
            fn += 1 if (p == 0 and g == 1) else 0
    return (2 * tp) / (2 * tp + fp + fn) if (2 * tp + fp + fn) > 0 else 0.0


def oracle_macro_f1(pred, gold):
    n_labels = len(pred[0])
    vals = []
    for j in range(n_labels):
        tp = fp = fn = 0
        for prow, grow in zip(pred, gold):
            tp += 1 if (prow[j] == 1 and grow[j] == 1) else 0
            fp += 1 if (prow[j] == 1 and grow[j] == 0) else 0
            fn += 1 if (prow[j] == 0 and grow[j] == 1) else 0
        vals.append((2 * tp) / (2 * tp + fp + fn) if (2 * tp + fp + fn) > 0 else 0.0)
    return sum(vals) / len(vals)


def oracle_precision_at_k(scores, gold, k):
    total = 0.0
    for srow, grow in zip(scores, gold):
        remaining = list(range(len(srow)))
        picked = []
        for _ in range(k):  # repeated argmax with the tie rule
            best = remaining[0]
            for j in remaining[1:]:
                if srow[j] > srow[best] or (srow[j] == srow[best] and j < best):
                    best = j
            picked.append(best)
            remaining.remove(best)
        total += sum(1 for j in picked if grow[j] == 1) / k
    return total / len(scores)


def _oracle_pairs_auc(cells):
    pos = [s for s, g in cells if g == 1]
    neg = [s for s, g in cells if g == 0]
    if not pos or not neg:
        return None
    wins = ties = 0
    for p in pos:
        for q in neg:
            if p > q:
                wins += 1
            elif p == q:
                ties += 1
    return (wins + 0.5 * ties) / (len(pos) * len(neg))


def oracle_auc(scores, gold, mode):
    if mode == "micro":
        cells = [(s, g) for srow, grow in zip(scores, gold)
                 for s, g in zip(srow, grow)]
        return _oracle_pairs_auc(cells)
    vals = []
    for j in range(len(scores[0])):
        v = _oracle_pairs_auc([(srow[j], grow[j])
                               for srow, grow in zip(scores, gold)])
        if v is not None:
            vals.append(v)
    return sum(vals) / len(vals) if vals else None


def oracle_best_constant_micro_f1(label_counts, n_docs):
    """Exhaustive search over all constant prediction sets (small C only)."""
    n_labels = len(label_counts)
    best = 0.0
    for mask in range(1 << n_labels):
        flags = [(mask >> j) & 1 for j in range(n_labels)]
        tp = sum(c for f, c in zip(flags, label_counts) if f)
        fp = sum(n_docs - c for f, c in zip(flags, label_counts) if f)
        fn = sum(c for f, c in zip(flags, label_counts) if not f)
        denom = 2 * tp + fp + fn
        if denom:
            best = max(best, 2 * tp / denom)
    return best
