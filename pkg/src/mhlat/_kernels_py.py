"""Pure-Python kernels over flat row-major float64 buffers.

Fallback twin of the compiled extension `mhlat._kernels`. Every function here
mirrors the compiled one operation-for-operation: same loop bounds, same
per-cell accumulation order, no reassociation. With both compiled at
-ffp-contract=off, the two backends produce bit-identical IEEE-754 results,
which tests/test_backends.py asserts.

Buffers are `array('d')` (and `array('q')` for row indices). Kernels named
`*_acc` add into their destination; plain kernels expect a zero-initialized
(or don't-care) destination.
"""

import math


# ---------------------------------------------------------------------------
# matrix products

def matmul(a, b, out, r, k, c):
    """out[r x c] += a[r x k] @ b[k x c] (out normally starts at zero)."""
    for i in range(r):
        ib = i * k
        ob = i * c
        for kk in range(k):
            av = a[ib + kk]
            bb = kk * c
            for j in range(c):
                out[ob + j] += av * b[bb + j]


matmul_acc = matmul


def matmul_nt(a, b, out, r, k, c):
    """out[r x c] += a[r x k] @ b[c x k]^T."""
    for i in range(r):
        ib = i * k
        ob = i * c
        for j in range(c):
            jb = j * k
            s = 0.0
            for kk in range(k):
                s += a[ib + kk] * b[jb + kk]
            out[ob + j] += s


matmul_nt_acc = matmul_nt


def matmul_tn_acc(a, b, out, r, k, c):
    """out[r x c] += a[k x r]^T @ b[k x c]."""
    for kk in range(k):
        ab = kk * r
        bb = kk * c
        for i in range(r):
            av = a[ab + i]
            ob = i * c
            for j in range(c):
                out[ob + j] += av * b[bb + j]


def affine(x, w, bvec, out, r, p, q):
    """out[r x q] = x[r x p] @ w[q x p]^T + bvec[q] broadcast over rows."""
    for i in range(r):
        ib = i * p
        ob = i * q
        for j in range(q):
            jb = j * p
            s = bvec[j]
            for kk in range(p):
                s += x[ib + kk] * w[jb + kk]
            out[ob + j] = s


def col_sum_acc(g, out, r, c):
    """out[c] += column sums of g[r x c]."""
    for i in range(r):
        gb = i * c
        for j in range(c):
            out[j] += g[gb + j]


# ---------------------------------------------------------------------------
# elementwise

def relu(x, out, n):
    for i in range(n):
        v = x[i]
        out[i] = v if v > 0.0 else 0.0


def relu_bwd_acc(x, g, dx, n):
    # subgradient 0 at exactly 0
    for i in range(n):
        if x[i] > 0.0:
            dx[i] += g[i]


def add(a, b, out, n):
    for i in range(n):
        out[i] = a[i] + b[i]


def acc_range(dst, doff, src, soff, n):
    """dst[doff : doff+n] += src[soff : soff+n]."""
    for i in range(n):
        dst[doff + i] += src[soff + i]


def mul(a, b, out, n):
    for i in range(n):
        out[i] = a[i] * b[i]


def mul_acc(a, b, out, n):
    for i in range(n):
        out[i] += a[i] * b[i]


def scale(a, s, out, n):
    for i in range(n):
        out[i] = a[i] * s


def scale_acc(a, s, out, n):
    for i in range(n):
        out[i] += a[i] * s


def scalar_acc(dst, s, n):
    for i in range(n):
        dst[i] += s


def sigmoid(z, out, n):
    for i in range(n):
        v = z[i]
        if v >= 0.0:
            out[i] = 1.0 / (1.0 + math.exp(-v))
        else:
            e = math.exp(v)
            out[i] = e / (1.0 + e)


# ---------------------------------------------------------------------------
# reductions / layout

def sum_all(a, n):
    s = 0.0
    for i in range(n):
        s += a[i]
    return s


def row_sum(a, out, r, c):
    for i in range(r):
        ab = i * c
        s = 0.0
        for j in range(c):
            s += a[ab + j]
        out[i] = s


def row_sum_bwd_acc(g, dx, r, c):
    for i in range(r):
        gv = g[i]
        xb = i * c
        for j in range(c):
            dx[xb + j] += gv


def transpose(a, out, r, c):
    for i in range(r):
        ab = i * c
        for j in range(c):
            out[j * r + i] = a[ab + j]


def transpose_acc(a, out, r, c):
    """out[c x r] += a[r x c]^T."""
    for i in range(r):
        ab = i * c
        for j in range(c):
            out[j * r + i] += a[ab + j]


def gather_rows(table, ids, out, n, d):
    for i in range(n):
        tb = ids[i] * d
        ob = i * d
        for j in range(d):
            out[ob + j] = table[tb + j]


def scatter_rows_acc(g, ids, dtable, n, d):
    for i in range(n):
        tb = ids[i] * d
        gb = i * d
        for j in range(d):
            dtable[tb + j] += g[gb + j]


def concat_cols(a, b, out, r, p, q):
    w = p + q
    for i in range(r):
        ab = i * p
        bb = i * q
        ob = i * w
        for j in range(p):
            out[ob + j] = a[ab + j]
        for j in range(q):
            out[ob + p + j] = b[bb + j]


def split_cols_left_acc(g, da, r, p, q):
    w = p + q
    for i in range(r):
        gb = i * w
        ab = i * p
        for j in range(p):
            da[ab + j] += g[gb + j]


def split_cols_right_acc(g, db, r, p, q):
    w = p + q
    for i in range(r):
        gb = i * w + p
        bb = i * q
        for j in range(q):
            db[bb + j] += g[gb + j]


# ---------------------------------------------------------------------------
# softmax

def row_softmax(x, out, r, c):
    for i in range(r):
        base = i * c
        m = x[base]
        for j in range(1, c):
            v = x[base + j]
            if v > m:
                m = v
        s = 0.0
        for j in range(c):
            e = math.exp(x[base + j] - m)
            out[base + j] = e
            s += e
        for j in range(c):
            out[base + j] = out[base + j] / s


def row_softmax_masked(x, mask, out, r, c):
    """mask[c] holds 0.0/1.0 column flags; masked columns get exactly 0."""
    for i in range(r):
        base = i * c
        m = -math.inf
        for j in range(c):
            if mask[j] != 0.0:
                v = x[base + j]
                if v > m:
                    m = v
        s = 0.0
        for j in range(c):
            if mask[j] != 0.0:
                e = math.exp(x[base + j] - m)
                out[base + j] = e
                s += e
            else:
                out[base + j] = 0.0
        for j in range(c):
            if mask[j] != 0.0:
                out[base + j] = out[base + j] / s


def row_softmax_bwd_acc(y, g, dx, r, c):
    # dx_j += y_j * (g_j - sum_k g_k y_k); masked columns have y == 0
    for i in range(r):
        base = i * c
        dot = 0.0
        for j in range(c):
            dot += g[base + j] * y[base + j]
        for j in range(c):
            dx[base + j] += y[base + j] * (g[base + j] - dot)


# ---------------------------------------------------------------------------
# layer normalization (row-wise)

def layer_norm(x, gain, bias, out, xhat, inv_std, r, c, eps):
    for i in range(r):
        base = i * c
        mu = 0.0
        for j in range(c):
            mu += x[base + j]
        mu = mu / c
        var = 0.0
        for j in range(c):
            d = x[base + j] - mu
            var += d * d
        var = var / c
        inv = 1.0 / math.sqrt(var + eps)
        inv_std[i] = inv
        for j in range(c):
            h = (x[base + j] - mu) * inv
            xhat[base + j] = h
            out[base + j] = h * gain[j] + bias[j]


def layer_norm_bwd_acc(g, gain, xhat, inv_std, dx, dgain, dbias, r, c):
    for i in range(r):
        base = i * c
        s1 = 0.0
        s2 = 0.0
        for j in range(c):
            dh = g[base + j] * gain[j]
            s1 += dh
            s2 += dh * xhat[base + j]
        s1 = s1 / c
        s2 = s2 / c
        inv = inv_std[i]
        for j in range(c):
            dh = g[base + j] * gain[j]
            dx[base + j] += inv * (dh - s1 - xhat[base + j] * s2)
            dgain[j] += g[base + j] * xhat[base + j]
            dbias[j] += g[base + j]


# ---------------------------------------------------------------------------
# losses / optimizer

def bce_logits_sum(z, y, n):
    """Sum of per-element binary cross-entropy in stable logit form."""
    s = 0.0
    for i in range(n):
        zv = z[i]
        yv = y[i]
        if zv >= 0.0:
            t = zv - zv * yv
        else:
            t = -(zv * yv)
        s += t + math.log1p(math.exp(-abs(zv)))
    return s


def bce_logits_bwd_acc(z, y, coef, dz, n):
    """dz_i += coef * (sigmoid(z_i) - y_i)."""
    for i in range(n):
        v = z[i]
        if v >= 0.0:
            p = 1.0 / (1.0 + math.exp(-v))
        else:
            e = math.exp(v)
            p = e / (1.0 + e)
        dz[i] += coef * (p - y[i])


def adam_step(p, g, m, v, lr, b1, b2, eps, c1, c2, n):
    """One Adam update; c1 = 1 - b1^t, c2 = 1 - b2^t precomputed by caller."""
    om1 = 1.0 - b1
    om2 = 1.0 - b2
    for i in range(n):
        gi = g[i]
        mi = b1 * m[i] + om1 * gi
        vi = b2 * v[i] + om2 * gi * gi
        m[i] = mi
        v[i] = vi
        p[i] -= lr * (mi / c1) / (math.sqrt(vi / c2) + eps)
