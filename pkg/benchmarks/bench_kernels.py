"""Benchmark the compiled kernels against the pure-Python fallback.

Times the individual hot kernels at training-like shapes plus one full
forward+backward pass of the model (the latter in subprocesses so each run
selects its backend via MHLAT_BACKEND), and prints the speedup. Run:

    python benchmarks/bench_kernels.py [--repeats 5]
"""

from __future__ import annotations

import argparse
import os
import random
import subprocess
import sys
import time
from array import array


def _rand_buf(rng: random.Random, n: int) -> array:
    return array("d", (rng.uniform(-1.0, 1.0) for _ in range(n)))


def _time_one(fn) -> float:
    t0 = time.perf_counter()
    fn()
    return time.perf_counter() - t0


def bench_kernel_suite(kernels, rng: random.Random, repeats: int) -> dict[str, float]:
    """Best-of-`repeats` wall time per kernel, in seconds."""
    r, k, c = 128, 64, 64
    a = _rand_buf(rng, r * k)
    b = _rand_buf(rng, k * c)
    bt = _rand_buf(rng, c * k)
    out = array("d", bytes(8 * r * c))
    w = _rand_buf(rng, c * k)
    bias = _rand_buf(rng, c)
    mask = array("d", [1.0] * c)
    gain = _rand_buf(rng, c)
    xhat = array("d", bytes(8 * r * c))
    inv_std = array("d", bytes(8 * r))
    x = a[:r * c]

    cases = {
        f"matmul {r}x{k} @ {k}x{c}": lambda: kernels.matmul(a, b, out, r, k, c),
        f"matmul_nt {r}x{k} @ ({c}x{k})^T": lambda: kernels.matmul_nt(a, bt, out, r, k, c),
        f"affine {r}x{k} -> {r}x{c}": lambda: kernels.affine(a, w, bias, out, r, k, c),
        f"row_softmax {r}x{c}": lambda: kernels.row_softmax(x, out, r, c),
        f"row_softmax_masked {r}x{c}": lambda: kernels.row_softmax_masked(x, mask, out, r, c),
        f"layer_norm {r}x{c}": lambda: kernels.layer_norm(
            x, gain, bias, out, xhat, inv_std, r, c, 1e-5),
        f"relu {r * c} elems": lambda: kernels.relu(x, out, r * c),
    }
    return {name: min(_time_one(fn) for _ in range(repeats))
            for name, fn in cases.items()}


def model_pass_seconds(repeats: int) -> float:
    """Forward+backward time for one document under the ambient backend."""
    import random as _random

    from mhlat.model import Model, ModelConfig
    from mhlat.tensor import Tape

    cfg = ModelConfig(L=64, d_m=32, B=1, C=20, N=2, seed=3)
    model = Model(cfg, vocab_size=200)
    rng = _random.Random(5)
    ids = [rng.randrange(2, 200) for _ in range(160)]
    y = [1 if i < 3 else 0 for i in range(20)]
    doc = model.chunk_tokens(ids)

    def step():
        with Tape() as tape:
            loss = model.loss(doc, y)
        tape.backward(loss)
        model.store.zero_grads()

    step()  # warm up
    return min(_time_one(step) for _ in range(repeats))


def _model_pass_subprocess(backend: str, repeats: int) -> float | None:
    env = dict(os.environ, MHLAT_BACKEND=backend)
    proc = subprocess.run(
        [sys.executable, os.path.abspath(__file__), "--worker", "--repeats",
         str(repeats)],
        env=env, capture_output=True, text=True)
    if proc.returncode != 0:
        return None
    return float(proc.stdout.strip())


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = parser.parse_args()

    if args.worker:
        print(repr(model_pass_seconds(args.repeats)))
        return 0

    try:
        from mhlat import _kernels as compiled
    except ImportError:
        compiled = None
    from mhlat import _kernels_py as pure

    print(f"{'kernel':<34} {'python':>12} {'compiled':>12} {'speedup':>9}")
    py_times = bench_kernel_suite(pure, random.Random(11), args.repeats)
    c_times = (bench_kernel_suite(compiled, random.Random(11), args.repeats)
               if compiled else {})
    for name, pt in py_times.items():
        if name in c_times:
            ct = c_times[name]
            print(f"{name:<34} {pt * 1e6:>10.1f}us {ct * 1e6:>10.1f}us {pt / ct:>8.1f}x")
        else:
            print(f"{name:<34} {pt * 1e6:>10.1f}us {'n/a':>12}")

    py_pass = _model_pass_subprocess("py", args.repeats)
    c_pass = _model_pass_subprocess("c", args.repeats) if compiled else None
    line = f"{'full forward+backward (1 doc)':<34}"
    if py_pass is not None:
        line += f" {py_pass * 1e3:>10.2f}ms"
    if c_pass is not None:
        line += f" {c_pass * 1e3:>10.2f}ms"
    if py_pass is not None and c_pass is not None:
        line += f" {py_pass / c_pass:>8.1f}x"
    print("\n" + line)
    if compiled is None:
        print("\ncompiled extension not built; showing pure-Python numbers only")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
