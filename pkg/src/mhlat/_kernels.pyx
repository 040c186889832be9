# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels over flat row-major float64 buffers.

Hot twin of `mhlat._kernels_py`. Loop nesting and per-cell accumulation order
match the pure-Python module exactly (and the build disables FP contraction),
so both backends produce bit-identical results.
"""

from libc.math cimport exp, fabs, log1p, sqrt

cdef double NEG_INF = -float("inf")


# ---------------------------------------------------------------------------
# matrix products

def matmul(double[::1] a, double[::1] b, double[::1] out,
           Py_ssize_t r, Py_ssize_t k, Py_ssize_t c):
    cdef Py_ssize_t i, kk, j, ib, ob, bb
    cdef double av
    for i in range(r):
        ib = i * k
        ob = i * c
        for kk in range(k):
            av = a[ib + kk]
            bb = kk * c
            for j in range(c):
                out[ob + j] += av * b[bb + j]


matmul_acc = matmul


def matmul_nt(double[::1] a, double[::1] b, double[::1] out,
              Py_ssize_t r, Py_ssize_t k, Py_ssize_t c):
    cdef Py_ssize_t i, kk, j, ib, ob, jb
    cdef double s
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


def matmul_tn_acc(double[::1] a, double[::1] b, double[::1] out,
                  Py_ssize_t r, Py_ssize_t k, Py_ssize_t c):
    cdef Py_ssize_t kk, i, j, ab, bb, ob
    cdef double av
    for kk in range(k):
        ab = kk * r
        bb = kk * c
        for i in range(r):
            av = a[ab + i]
            ob = i * c
            for j in range(c):
                out[ob + j] += av * b[bb + j]


def affine(double[::1] x, double[::1] w, double[::1] bvec, double[::1] out,
           Py_ssize_t r, Py_ssize_t p, Py_ssize_t q):
    cdef Py_ssize_t i, j, kk, ib, ob, jb
    cdef double s
    for i in range(r):
        ib = i * p
        ob = i * q
        for j in range(q):
            jb = j * p
            s = bvec[j]
            for kk in range(p):
                s += x[ib + kk] * w[jb + kk]
            out[ob + j] = s


def col_sum_acc(double[::1] g, double[::1] out, Py_ssize_t r, Py_ssize_t c):
    cdef Py_ssize_t i, j, gb
    for i in range(r):
        gb = i * c
        for j in range(c):
            out[j] += g[gb + j]


# ---------------------------------------------------------------------------
# elementwise

def relu(double[::1] x, double[::1] out, Py_ssize_t n):
    cdef Py_ssize_t i
    cdef double v
    for i in range(n):
        v = x[i]
        out[i] = v if v > 0.0 else 0.0


def relu_bwd_acc(double[::1] x, double[::1] g, double[::1] dx, Py_ssize_t n):
    cdef Py_ssize_t i
    for i in range(n):
        if x[i] > 0.0:
            dx[i] += g[i]


def add(double[::1] a, double[::1] b, double[::1] out, Py_ssize_t n):
    cdef Py_ssize_t i
    for i in range(n):
        out[i] = a[i] + b[i]


def acc_range(double[::1] dst, Py_ssize_t doff, double[::1] src,
              Py_ssize_t soff, Py_ssize_t n):
    cdef Py_ssize_t i
    for i in range(n):
        dst[doff + i] += src[soff + i]


def mul(double[::1] a, double[::1] b, double[::1] out, Py_ssize_t n):
    cdef Py_ssize_t i
    for i in range(n):
        out[i] = a[i] * b[i]


def mul_acc(double[::1] a, double[::1] b, double[::1] out, Py_ssize_t n):
    cdef Py_ssize_t i
    for i in range(n):
        out[i] += a[i] * b[i]


def scale(double[::1] a, double s, double[::1] out, Py_ssize_t n):
    cdef Py_ssize_t i
    for i in range(n):
        out[i] = a[i] * s


def scale_acc(double[::1] a, double s, double[::1] out, Py_ssize_t n):
    cdef Py_ssize_t i
    for i in range(n):
        out[i] += a[i] * s


def scalar_acc(double[::1] dst, double s, Py_ssize_t n):
    cdef Py_ssize_t i
    for i in range(n):
        dst[i] += s


def sigmoid(double[::1] z, double[::1] out, Py_ssize_t n):
    cdef Py_ssize_t i
    cdef double v, e
    for i in range(n):
        v = z[i]
        if v >= 0.0:
            out[i] = 1.0 / (1.0 + exp(-v))
        else:
            e = exp(v)
            out[i] = e / (1.0 + e)


# ---------------------------------------------------------------------------
# reductions / layout

def sum_all(double[::1] a, Py_ssize_t n):
    cdef Py_ssize_t i
    cdef double s = 0.0
    for i in range(n):
        s += a[i]
    return s


def row_sum(double[::1] a, double[::1] out, Py_ssize_t r, Py_ssize_t c):
    cdef Py_ssize_t i, j, ab
    cdef double s
    for i in range(r):
        ab = i * c
        s = 0.0
        for j in range(c):
            s += a[ab + j]
        out[i] = s


def row_sum_bwd_acc(double[::1] g, double[::1] dx, Py_ssize_t r, Py_ssize_t c):
    cdef Py_ssize_t i, j, xb
    cdef double gv
    for i in range(r):
        gv = g[i]
        xb = i * c
        for j in range(c):
            dx[xb + j] += gv


def transpose(double[::1] a, double[::1] out, Py_ssize_t r, Py_ssize_t c):
    cdef Py_ssize_t i, j, ab
    for i in range(r):
        ab = i * c
        for j in range(c):
            out[j * r + i] = a[ab + j]


def transpose_acc(double[::1] a, double[::1] out, Py_ssize_t r, Py_ssize_t c):
    cdef Py_ssize_t i, j, ab
    for i in range(r):
        ab = i * c
        for j in range(c):
            out[j * r + i] += a[ab + j]


def gather_rows(double[::1] table, long long[::1] ids, double[::1] out,
                Py_ssize_t n, Py_ssize_t d):
    cdef Py_ssize_t i, j, tb, ob
    for i in range(n):
        tb = ids[i] * d
        ob = i * d
        for j in range(d):
            out[ob + j] = table[tb + j]


def scatter_rows_acc(double[::1] g, long long[::1] ids, double[::1] dtable,
                     Py_ssize_t n, Py_ssize_t d):
    cdef Py_ssize_t i, j, tb, gb
    for i in range(n):
        tb = ids[i] * d
        gb = i * d
        for j in range(d):
            dtable[tb + j] += g[gb + j]


def concat_cols(double[::1] a, double[::1] b, double[::1] out,
                Py_ssize_t r, Py_ssize_t p, Py_ssize_t q):
    cdef Py_ssize_t i, j, ab, bb, ob, w
    w = p + q
    for i in range(r):
        ab = i * p
        bb = i * q
        ob = i * w
        for j in range(p):
            out[ob + j] = a[ab + j]
        for j in range(q):
            out[ob + p + j] = b[bb + j]


def split_cols_left_acc(double[::1] g, double[::1] da,
                        Py_ssize_t r, Py_ssize_t p, Py_ssize_t q):
    cdef Py_ssize_t i, j, gb, ab, w
    w = p + q
    for i in range(r):
        gb = i * w
        ab = i * p
        for j in range(p):
            da[ab + j] += g[gb + j]


def split_cols_right_acc(double[::1] g, double[::1] db,
                         Py_ssize_t r, Py_ssize_t p, Py_ssize_t q):
    cdef Py_ssize_t i, j, gb, bb, w
    w = p + q
    for i in range(r):
        gb = i * w + p
        bb = i * q
        for j in range(q):
            db[bb + j] += g[gb + j]


# ---------------------------------------------------------------------------
# softmax

def row_softmax(double[::1] x, double[::1] out, Py_ssize_t r, Py_ssize_t c):
    cdef Py_ssize_t i, j, base
    cdef double m, s, e, v
    for i in range(r):
        base = i * c
        m = x[base]
        for j in range(1, c):
            v = x[base + j]
            if v > m:
                m = v
        s = 0.0
        for j in range(c):
            e = exp(x[base + j] - m)
            out[base + j] = e
            s += e
        for j in range(c):
            out[base + j] = out[base + j] / s


def row_softmax_masked(double[::1] x, double[::1] mask, double[::1] out,
                       Py_ssize_t r, Py_ssize_t c):
    cdef Py_ssize_t i, j, base
    cdef double m, s, e, v
    for i in range(r):
        base = i * c
        m = NEG_INF
        for j in range(c):
            if mask[j] != 0.0:
                v = x[base + j]
                if v > m:
                    m = v
        s = 0.0
        for j in range(c):
            if mask[j] != 0.0:
                e = exp(x[base + j] - m)
                out[base + j] = e
                s += e
            else:
                out[base + j] = 0.0
        for j in range(c):
            if mask[j] != 0.0:
                out[base + j] = out[base + j] / s


def row_softmax_bwd_acc(double[::1] y, double[::1] g, double[::1] dx,
                        Py_ssize_t r, Py_ssize_t c):
    cdef Py_ssize_t i, j, base
    cdef double dot
    for i in range(r):
        base = i * c
        dot = 0.0
        for j in range(c):
            dot += g[base + j] * y[base + j]
        for j in range(c):
            dx[base + j] += y[base + j] * (g[base + j] - dot)


# ---------------------------------------------------------------------------
# layer normalization (row-wise)

def layer_norm(double[::1] x, double[::1] gain, double[::1] bias,
               double[::1] out, double[::1] xhat, double[::1] inv_std,
               Py_ssize_t r, Py_ssize_t c, double eps):
    cdef Py_ssize_t i, j, base
    cdef double mu, var, d, inv, h
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
        inv = 1.0 / sqrt(var + eps)
        inv_std[i] = inv
        for j in range(c):
            h = (x[base + j] - mu) * inv
            xhat[base + j] = h
            out[base + j] = h * gain[j] + bias[j]


def layer_norm_bwd_acc(double[::1] g, double[::1] gain, double[::1] xhat,
                       double[::1] inv_std, double[::1] dx, double[::1] dgain,
                       double[::1] dbias, Py_ssize_t r, Py_ssize_t c):
    cdef Py_ssize_t i, j, base
    cdef double s1, s2, dh, inv
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

def bce_logits_sum(double[::1] z, double[::1] y, Py_ssize_t n):
    cdef Py_ssize_t i
    cdef double s = 0.0
    cdef double zv, yv, t
    for i in range(n):
        zv = z[i]
        yv = y[i]
        if zv >= 0.0:
            t = zv - zv * yv
        else:
            t = -(zv * yv)
        s += t + log1p(exp(-fabs(zv)))
    return s


def bce_logits_bwd_acc(double[::1] z, double[::1] y, double coef,
                       double[::1] dz, Py_ssize_t n):
    cdef Py_ssize_t i
    cdef double v, e, p
    for i in range(n):
        v = z[i]
        if v >= 0.0:
            p = 1.0 / (1.0 + exp(-v))
        else:
            e = exp(v)
            p = e / (1.0 + e)
        dz[i] += coef * (p - y[i])


def adam_step(double[::1] p, double[::1] g, double[::1] m, double[::1] v,
              double lr, double b1, double b2, double eps,
              double c1, double c2, Py_ssize_t n):
    cdef Py_ssize_t i
    cdef double gi, mi, vi
    cdef double om1 = 1.0 - b1
    cdef double om2 = 1.0 - b2
    for i in range(n):
        gi = g[i]
        mi = b1 * m[i] + om1 * gi
        vi = b2 * v[i] + om2 * gi * gi
        m[i] = mi
        v[i] = vi
        p[i] -= lr * (mi / c1) / (sqrt(vi / c2) + eps)
