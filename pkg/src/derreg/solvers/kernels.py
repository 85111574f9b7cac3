"""
Inner iteration loops of the three distributed solvers.

Two implementations of each kernel:

* ``loop_*`` walk every node's closed neighbourhood in ascending order,
  exactly the arithmetic a node would do on its received messages. These
  are compiled with numba unless ``DERREG_DISABLE_JIT`` is set.
* ``numpy_*`` use dense matrix products. They are the fallback when JIT is
  disabled and agree with the loop kernels to rounding error.

Sparse graph arguments are the CSR triples produced by
:class:`derreg.graph.CommGraph` (closed neighbourhoods, self included).
All state arrays are updated in place and also returned.
"""

import numpy as np

from derreg._jit import JIT_ENABLED, njit


@njit(cache=True)
def _spmv(indptr, indices, vals, x, out):
    n = indptr.shape[0] - 1
    for i in range(n):
        acc = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            acc += vals[k] * x[indices[k]]
        out[i] = acc
    return out


@njit(cache=True)
def loop_rc(y, z, lower, span, p_ref, indptr, indices, w, rounds, resid):
    n = y.shape[0]
    ny = np.empty(n)
    nz = np.empty(n)
    for r in range(rounds):
        _spmv(indptr, indices, w, y, ny)
        _spmv(indptr, indices, w, z, nz)
        total = 0.0
        for i in range(n):
            y[i] = ny[i]
            z[i] = nz[i]
            if z[i] > 0.0:
                total += lower[i] + y[i] / z[i] * span[i]
            else:
                total += lower[i]
        resid[r] = abs(total - p_ref)
    return y, z


@njit(cache=True)
def loop_pd(p, y, lam, a2, b, lower, upper, c, h, indptr, indices, lv, rounds, resid):
    n = p.shape[0]
    ly = np.empty(n)
    lq = np.empty(n)
    l2y = np.empty(n)
    q = np.empty(n)
    for r in range(rounds):
        # sub-round 1: neighbours exchange y and lam + p - c
        for i in range(n):
            q[i] = lam[i] + p[i] - c
        _spmv(indptr, indices, lv, y, ly)
        _spmv(indptr, indices, lv, q, lq)
        # sub-round 2: neighbours exchange L y
        _spmv(indptr, indices, lv, ly, l2y)
        total = 0.0
        for i in range(n):
            res = p[i] + ly[i] - c
            pi = p[i] - h * (a2[i] * p[i] + b[i] + lam[i] + res)
            if pi < lower[i]:
                pi = lower[i]
            elif pi > upper[i]:
                pi = upper[i]
            y[i] = y[i] - h * (lq[i] + l2y[i])
            lam[i] = lam[i] + h * res
            p[i] = pi
            total += pi
        resid[r] = abs(total - c * n)
    return p, y, lam


@njit(cache=True)
def loop_dana(p, z, p0, mlo, mhi, a2, b, lower, upper, dtil, h, depth, indptr, indices, lv, rounds, resid):
    n = p.shape[0]
    g = np.empty(n)
    u = np.empty(n)
    v = np.empty(n)
    w = np.empty(n)
    t = np.empty(n)
    lz = np.empty(n)
    for r in range(rounds):
        for i in range(n):
            g[i] = a2[i] * p[i] + b[i] - mlo[i] + mhi[i]
        _spmv(indptr, indices, lv, g, u)
        for i in range(n):
            v[i] = u[i] / dtil[i]
        # truncated Neumann series for the inverse reduced Hessian
        for _ in range(depth):
            _spmv(indptr, indices, lv, v, w)
            for i in range(n):
                w[i] = a2[i] * w[i]
            _spmv(indptr, indices, lv, w, t)
            for i in range(n):
                v[i] = (u[i] + dtil[i] * v[i] - t[i]) / dtil[i]
        for i in range(n):
            z[i] = z[i] - h * v[i]
        _spmv(indptr, indices, lv, z, lz)
        worst = 0.0
        for i in range(n):
            p[i] = p0[i] + lz[i]
            m = mlo[i] + h * a2[i] * (lower[i] - p[i])
            mlo[i] = m if m > 0.0 else 0.0
            m = mhi[i] + h * a2[i] * (p[i] - upper[i])
            mhi[i] = m if m > 0.0 else 0.0
            viol = lower[i] - p[i]
            if p[i] - upper[i] > viol:
                viol = p[i] - upper[i]
            if viol > worst:
                worst = viol
        resid[r] = worst
    return p, z, mlo, mhi


def _dense(indptr, indices, vals):
    n = indptr.shape[0] - 1
    M = np.zeros((n, n))
    rows = np.repeat(np.arange(n), np.diff(indptr))
    M[rows, indices] = vals
    return M


def numpy_rc(y, z, lower, span, p_ref, indptr, indices, w, rounds, resid):
    W = _dense(indptr, indices, w)
    for r in range(rounds):
        y[:] = W @ y
        z[:] = W @ z
        ratio = np.divide(y, z, out=np.zeros_like(y), where=z > 0)
        resid[r] = abs(np.sum(lower + ratio * span) - p_ref)
    return y, z


def numpy_pd(p, y, lam, a2, b, lower, upper, c, h, indptr, indices, lv, rounds, resid):
    L = _dense(indptr, indices, lv)
    n = p.shape[0]
    for r in range(rounds):
        ly = L @ y
        res = p + ly - c
        dy = L @ (lam + p - c) + L @ ly
        p[:] = np.clip(p - h * (a2 * p + b + lam + res), lower, upper)
        y -= h * dy
        lam += h * res
        resid[r] = abs(np.sum(p) - c * n)
    return p, y, lam


def numpy_dana(p, z, p0, mlo, mhi, a2, b, lower, upper, dtil, h, depth, indptr, indices, lv, rounds, resid):
    L = _dense(indptr, indices, lv)
    for r in range(rounds):
        u = L @ (a2 * p + b - mlo + mhi)
        v = u / dtil
        for _ in range(depth):
            v = (u + dtil * v - L @ (a2 * (L @ v))) / dtil
        z -= h * v
        p[:] = p0 + L @ z
        np.maximum(mlo + h * a2 * (lower - p), 0.0, out=mlo)
        np.maximum(mhi + h * a2 * (p - upper), 0.0, out=mhi)
        resid[r] = max(0.0, float(np.max(np.maximum(lower - p, p - upper))))
    return p, z, mlo, mhi


if JIT_ENABLED:
    rc_rounds, pd_rounds, dana_rounds = loop_rc, loop_pd, loop_dana
else:
    rc_rounds, pd_rounds, dana_rounds = numpy_rc, numpy_pd, numpy_dana
