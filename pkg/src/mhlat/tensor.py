"""Minimal dense 2-D float64 tensor with tape-based reverse-mode autodiff.

Tensors hold a flat row-major `array('d')` buffer plus an optional gradient
buffer of the same shape. Operations execute eagerly through the active
kernel backend; when a `Tape` is active and an operand requires gradients,
a backward closure is recorded. `Tape.backward` replays closures in strict
reverse execution order, which is a valid topological order for any DAG
built while the tape was active. Gradients accumulate additively, so a
tensor consumed by several operations receives the sum of all contributions.
"""

from __future__ import annotations

import math
import threading
from array import array
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

from mhlat.backend import kernels as K
from mhlat.errors import ConfigError, ShapeError

LAYER_NORM_EPS = 1e-5


def _zeros(n: int) -> array:
    return array("d", bytes(8 * n))


class Tensor:
    __slots__ = ("rows", "cols", "data", "grad", "requires_grad")

    def __init__(self, rows: int, cols: int, data: array | None = None, *,
                 requires_grad: bool = False):
        if rows < 0 or cols < 0:
            raise ShapeError(f"negative dimensions: {rows}x{cols}")
        self.rows = rows
        self.cols = cols
        self.data = data if data is not None else _zeros(rows * cols)
        if len(self.data) != rows * cols:
            raise ShapeError(
                f"buffer length {len(self.data)} does not match shape {rows}x{cols}")
        self.grad: array | None = None
        self.requires_grad = requires_grad

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[float]], *,
                  requires_grad: bool = False) -> "Tensor":
        r = len(rows)
        c = len(rows[0]) if r else 0
        buf = array("d")
        for row in rows:
            if len(row) != c:
                raise ShapeError("ragged rows")
            buf.extend(float(v) for v in row)
        return cls(r, c, buf, requires_grad=requires_grad)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    def row(self, i: int) -> list[float]:
        return list(self.data[i * self.cols:(i + 1) * self.cols])

    def tolist(self) -> list[list[float]]:
        return [self.row(i) for i in range(self.rows)]

    def item(self) -> float:
        if self.rows * self.cols != 1:
            raise ShapeError(f"item() on non-scalar tensor {self.rows}x{self.cols}")
        return self.data[0]

    def copy(self) -> "Tensor":
        return Tensor(self.rows, self.cols, array("d", self.data))

    def zero_grad(self) -> None:
        self.grad = None

    def grad_rows(self) -> list[list[float]]:
        """Gradient as nested lists; zeros when no gradient has accumulated."""
        g = self.grad if self.grad is not None else _zeros(self.rows * self.cols)
        return [list(g[i * self.cols:(i + 1) * self.cols]) for i in range(self.rows)]

    def _gbuf(self) -> array:
        if self.grad is None:
            self.grad = _zeros(self.rows * self.cols)
        return self.grad

    def __repr__(self) -> str:
        return f"Tensor({self.rows}x{self.cols}, requires_grad={self.requires_grad})"


_TLS = threading.local()


class Tape:
    """Ordered record of executed operations for backward replay."""

    def __init__(self):
        self._entries: list[Callable[[], None]] = []
        self._used = False

    @staticmethod
    def current() -> "Tape | None":
        return getattr(_TLS, "tape", None)

    def __enter__(self) -> "Tape":
        if Tape.current() is not None:
            raise RuntimeError("a Tape is already active on this thread")
        _TLS.tape = self
        return self

    def __exit__(self, *exc) -> None:
        _TLS.tape = None

    def record(self, fn: Callable[[], None]) -> None:
        self._entries.append(fn)

    def __len__(self) -> int:
        return len(self._entries)

    def backward(self, loss: Tensor) -> None:
        """Populate gradients of everything reachable from a scalar loss."""
        if loss.rows != 1 or loss.cols != 1:
            raise ShapeError(
                f"backward requires a 1x1 loss, got {loss.rows}x{loss.cols}")
        if not loss.requires_grad:
            raise ValueError("loss is not connected to this tape")
        if self._used:
            raise RuntimeError("tape already replayed; build a new Tape")
        self._used = True
        g = loss._gbuf()
        g[0] += 1.0
        for fn in reversed(self._entries):
            fn()


def _record(out: Tensor, inputs: tuple[Tensor, ...], fn: Callable[[], None]) -> None:
    tape = Tape.current()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.record(fn)


# ---------------------------------------------------------------------------
# elementwise / scalar ops

def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"add: shapes differ: {a.shape} vs {b.shape}")
    n = a.rows * a.cols
    out = Tensor(a.rows, a.cols)
    K.add(a.data, b.data, out.data, n)

    def bwd():
        g = out.grad
        if g is None:
            return
        if a.requires_grad:
            K.acc_range(a._gbuf(), 0, g, 0, n)
        if b.requires_grad:
            K.acc_range(b._gbuf(), 0, g, 0, n)

    _record(out, (a, b), bwd)
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"mul: shapes differ: {a.shape} vs {b.shape}")
    n = a.rows * a.cols
    out = Tensor(a.rows, a.cols)
    K.mul(a.data, b.data, out.data, n)

    def bwd():
        g = out.grad
        if g is None:
            return
        if a.requires_grad:
            K.mul_acc(g, b.data, a._gbuf(), n)
        if b.requires_grad:
            K.mul_acc(g, a.data, b._gbuf(), n)

    _record(out, (a, b), bwd)
    return out


def scale(a: Tensor, s: float) -> Tensor:
    n = a.rows * a.cols
    out = Tensor(a.rows, a.cols)
    K.scale(a.data, s, out.data, n)

    def bwd():
        g = out.grad
        if g is None:
            return
        if a.requires_grad:
            K.scale_acc(g, s, a._gbuf(), n)

    _record(out, (a,), bwd)
    return out


def relu(a: Tensor) -> Tensor:
    """Elementwise max(0, x); gradient is 0 at x <= 0."""
    n = a.rows * a.cols
    out = Tensor(a.rows, a.cols)
    K.relu(a.data, out.data, n)

    def bwd():
        g = out.grad
        if g is None:
            return
        if a.requires_grad:
            K.relu_bwd_acc(a.data, g, a._gbuf(), n)

    _record(out, (a,), bwd)
    return out


def sum_all(a: Tensor) -> Tensor:
    n = a.rows * a.cols
    out = Tensor(1, 1, array("d", [K.sum_all(a.data, n)]))

    def bwd():
        g = out.grad
        if g is None:
            return
        if a.requires_grad:
            K.scalar_acc(a._gbuf(), g[0], n)

    _record(out, (a,), bwd)
    return out


def row_sum(a: Tensor) -> Tensor:
    out = Tensor(a.rows, 1)
    K.row_sum(a.data, out.data, a.rows, a.cols)

    def bwd():
        g = out.grad
        if g is None:
            return
        if a.requires_grad:
            K.row_sum_bwd_acc(g, a._gbuf(), a.rows, a.cols)

    _record(out, (a,), bwd)
    return out


# ---------------------------------------------------------------------------
# products / layout

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.cols != b.rows:
        raise ShapeError(
            f"matmul: inner dimensions differ: {a.rows}x{a.cols} vs {b.rows}x{b.cols}")
    out = Tensor(a.rows, b.cols)
    K.matmul(a.data, b.data, out.data, a.rows, a.cols, b.cols)

    def bwd():
        g = out.grad
        if g is None:
            return
        if a.requires_grad:
            K.matmul_nt_acc(g, b.data, a._gbuf(), a.rows, b.cols, a.cols)
        if b.requires_grad:
            K.matmul_tn_acc(a.data, g, b._gbuf(), b.rows, a.rows, b.cols)

    _record(out, (a, b), bwd)
    return out


def matmul_bt(a: Tensor, b: Tensor) -> Tensor:
    """a @ b^T without materializing the transpose."""
    if a.cols != b.cols:
        raise ShapeError(
            f"matmul_bt: inner dimensions differ: {a.rows}x{a.cols} vs {b.rows}x{b.cols}^T")
    out = Tensor(a.rows, b.rows)
    K.matmul_nt(a.data, b.data, out.data, a.rows, a.cols, b.rows)

    def bwd():
        g = out.grad
        if g is None:
            return
        if a.requires_grad:
            K.matmul_acc(g, b.data, a._gbuf(), a.rows, b.rows, a.cols)
        if b.requires_grad:
            K.matmul_tn_acc(g, a.data, b._gbuf(), b.rows, a.rows, b.cols)

    _record(out, (a, b), bwd)
    return out


def transpose(a: Tensor) -> Tensor:
    out = Tensor(a.cols, a.rows)
    K.transpose(a.data, out.data, a.rows, a.cols)

    def bwd():
        g = out.grad
        if g is None:
            return
        if a.requires_grad:
            K.transpose_acc(g, a._gbuf(), a.cols, a.rows)

    _record(out, (a,), bwd)
    return out


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x @ w^T + b with b (1 x q) broadcast over rows; db sums over rows."""
    r, p = x.shape
    q = w.rows
    if w.cols != p:
        raise ShapeError(f"affine: x is {x.shape}, w is {w.shape}; need w cols == {p}")
    if b.shape != (1, q):
        raise ShapeError(f"affine: b is {b.shape}; need 1x{q}")
    out = Tensor(r, q)
    K.affine(x.data, w.data, b.data, out.data, r, p, q)

    def bwd():
        g = out.grad
        if g is None:
            return
        if x.requires_grad:
            K.matmul_acc(g, w.data, x._gbuf(), r, q, p)
        if w.requires_grad:
            K.matmul_tn_acc(g, x.data, w._gbuf(), q, r, p)
        if b.requires_grad:
            K.col_sum_acc(g, b._gbuf(), r, q)

    _record(out, (x, w, b), bwd)
    return out


def concat_cols(a: Tensor, b: Tensor) -> Tensor:
    if a.rows != b.rows:
        raise ShapeError(f"concat_cols: row counts differ: {a.shape} vs {b.shape}")
    r, p, q = a.rows, a.cols, b.cols
    out = Tensor(r, p + q)
    K.concat_cols(a.data, b.data, out.data, r, p, q)

    def bwd():
        g = out.grad
        if g is None:
            return
        if a.requires_grad:
            K.split_cols_left_acc(g, a._gbuf(), r, p, q)
        if b.requires_grad:
            K.split_cols_right_acc(g, b._gbuf(), r, p, q)

    _record(out, (a, b), bwd)
    return out


def concat_rows(a: Tensor, b: Tensor) -> Tensor:
    if a.cols != b.cols:
        raise ShapeError(f"concat_rows: column counts differ: {a.shape} vs {b.shape}")
    na, nb = a.rows * a.cols, b.rows * b.cols
    buf = array("d", a.data)
    buf.extend(b.data)
    out = Tensor(a.rows + b.rows, a.cols, buf)

    def bwd():
        g = out.grad
        if g is None:
            return
        if a.requires_grad:
            K.acc_range(a._gbuf(), 0, g, 0, na)
        if b.requires_grad:
            K.acc_range(b._gbuf(), 0, g, na, nb)

    _record(out, (a, b), bwd)
    return out


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    if not (0 <= start <= stop <= a.rows):
        raise ShapeError(f"slice_rows: [{start}:{stop}] out of range for {a.rows} rows")
    c = a.cols
    out = Tensor(stop - start, c, a.data[start * c:stop * c])

    def bwd():
        g = out.grad
        if g is None:
            return
        if a.requires_grad:
            K.acc_range(a._gbuf(), start * c, g, 0, (stop - start) * c)

    _record(out, (a,), bwd)
    return out


def embedding(table: Tensor, ids: Sequence[int]) -> Tensor:
    """Gather rows of `table` by id; backward scatter-adds into the table."""
    idbuf = ids if isinstance(ids, array) else array("q", ids)
    n, d = len(idbuf), table.cols
    out = Tensor(n, d)
    K.gather_rows(table.data, idbuf, out.data, n, d)

    def bwd():
        g = out.grad
        if g is None:
            return
        if table.requires_grad:
            K.scatter_rows_acc(g, idbuf, table._gbuf(), n, d)

    _record(out, (table,), bwd)
    return out


# ---------------------------------------------------------------------------
# softmax / normalization / loss

def _as_mask(mask, cols: int) -> array:
    buf = mask if isinstance(mask, array) else array("d", (float(v) for v in mask))
    if len(buf) != cols:
        raise ShapeError(f"mask length {len(buf)} does not match {cols} columns")
    return buf


def row_softmax(a: Tensor, mask=None) -> Tensor:
    """Per-row softmax with max-subtraction; masked columns get exactly 0."""
    r, c = a.shape
    out = Tensor(r, c)
    if mask is None:
        if c == 0:
            raise ShapeError("row_softmax over zero columns")
        K.row_softmax(a.data, out.data, r, c)
    else:
        mbuf = _as_mask(mask, c)
        if not any(v != 0.0 for v in mbuf):
            raise ValueError("row_softmax: mask excludes every column")
        K.row_softmax_masked(a.data, mbuf, out.data, r, c)

    def bwd():
        g = out.grad
        if g is None:
            return
        if a.requires_grad:
            K.row_softmax_bwd_acc(out.data, g, a._gbuf(), r, c)

    _record(out, (a,), bwd)
    return out


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor,
               eps: float = LAYER_NORM_EPS) -> Tensor:
    r, c = x.shape
    if gain.shape != (1, c) or bias.shape != (1, c):
        raise ShapeError(
            f"layer_norm: gain {gain.shape} / bias {bias.shape} must be 1x{c}")
    out = Tensor(r, c)
    xhat = _zeros(r * c)
    inv_std = _zeros(r)
    K.layer_norm(x.data, gain.data, bias.data, out.data, xhat, inv_std, r, c, eps)

    def bwd():
        g = out.grad
        if g is None:
            return
        dx = x._gbuf() if x.requires_grad else _zeros(r * c)
        dgain = gain._gbuf() if gain.requires_grad else _zeros(c)
        dbias = bias._gbuf() if bias.requires_grad else _zeros(c)
        K.layer_norm_bwd_acc(g, gain.data, xhat, inv_std, dx, dgain, dbias, r, c)

    _record(out, (x, gain, bias), bwd)
    return out


def bce_with_logits(logits: Tensor, targets: Sequence[float]) -> Tensor:
    """Sum of binary cross-entropy terms in stable logit form (1x1 tensor).

    Never materializes log(0); the gradient w.r.t. each logit is
    sigmoid(logit) - target.
    """
    n = logits.rows * logits.cols
    tbuf = targets if isinstance(targets, array) else array("d", (float(v) for v in targets))
    if len(tbuf) != n:
        raise ShapeError(f"bce: {n} logits vs {len(tbuf)} targets")
    out = Tensor(1, 1, array("d", [K.bce_logits_sum(logits.data, tbuf, n)]))

    def bwd():
        g = out.grad
        if g is None:
            return
        if logits.requires_grad:
            K.bce_logits_bwd_acc(logits.data, tbuf, g[0], logits._gbuf(), n)

    _record(out, (logits,), bwd)
    return out


def sigmoid_values(logits: Tensor) -> list[float]:
    """Forward-only elementwise sigmoid, returned as a flat list."""
    n = logits.rows * logits.cols
    out = _zeros(n)
    K.sigmoid(logits.data, out, n)
    return list(out)


# ---------------------------------------------------------------------------
# gradient verification oracle

@dataclass
class FiniteDiffReport:
    max_rel_error: float
    worst_name: str
    worst_index: int
    per_tensor: dict[str, float]

    def worst_by_prefix(self, split: str = ".") -> dict[str, float]:
        """Max error per top-level name component (e.g. per module)."""
        out: dict[str, float] = {}
        for name, err in self.per_tensor.items():
            key = name.split(split, 1)[0]
            if err > out.get(key, -1.0):
                out[key] = err
        return out


def finite_diff_check(f: Callable[[], Tensor],
                      probes: Mapping[str, Tensor] | Iterable[tuple[str, Tensor]],
                      eps: float = 1e-5) -> FiniteDiffReport:
    """Compare autodiff gradients of a scalar function against central differences.

    `f` must rebuild its forward pass on every call (it is evaluated twice per
    probed coordinate with the coordinate nudged by +/-eps). Relative error
    uses denominator max(|analytic|, |numeric|, 1e-8).
    """
    if not (1e-7 <= eps <= 1e-3):
        raise ConfigError(f"eps {eps} outside [1e-7, 1e-3]")
    items = list(probes.items() if isinstance(probes, Mapping) else probes)

    for _, t in items:
        t.zero_grad()
    with Tape() as tape:
        loss = f()
    if loss.rows != 1 or loss.cols != 1:
        raise ShapeError(f"f() must return a 1x1 tensor, got {loss.shape}")
    tape.backward(loss)
    analytic = {
        name: (list(t.grad) if t.grad is not None else [0.0] * len(t.data))
        for name, t in items
    }

    worst = 0.0
    worst_name, worst_index = "", -1
    per_tensor: dict[str, float] = {}
    for name, t in items:
        t_worst = 0.0
        for i in range(len(t.data)):
            orig = t.data[i]
            t.data[i] = orig + eps
            fp = f().item()
            t.data[i] = orig - eps
            fm = f().item()
            t.data[i] = orig
            if not (math.isfinite(fp) and math.isfinite(fm)):
                raise ValueError(
                    f"non-finite loss probing {name}[{i}]: f+={fp}, f-={fm}")
            numeric = (fp - fm) / (2.0 * eps)
            ana = analytic[name][i]
            rel = abs(ana - numeric) / max(abs(ana), abs(numeric), 1e-8)
            if rel > t_worst:
                t_worst = rel
            if rel > worst:
                worst, worst_name, worst_index = rel, name, i
        per_tensor[name] = t_worst
    return FiniteDiffReport(worst, worst_name, worst_index, per_tensor)
