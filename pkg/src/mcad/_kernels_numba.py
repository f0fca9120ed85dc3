"""Numba-compiled twins of the hot per-step kernels.

Same signatures as `_kernels_numpy`; selected via the MCAD_BACKEND
environment flag (see `mcad.backend`). Compiled artifacts are cached on
disk, so the JIT cost is paid once per build.
"""

import numpy as np
from numba import njit

BACKEND_NAME = "numba"

_JIT = dict(cache=True, nogil=True)


@njit(**_JIT)
def leaky_forward(z, slope):
    zf = z.ravel()
    out = np.empty(zf.size)
    for i in range(zf.size):
        v = zf[i]
        out[i] = v if v > 0.0 else slope * v
    return out.reshape(z.shape)


@njit(**_JIT)
def leaky_backward(z, da, slope):
    zf = z.ravel()
    df = da.ravel()
    out = np.empty(zf.size)
    for i in range(zf.size):
        out[i] = df[i] if zf[i] > 0.0 else slope * df[i]
    return out.reshape(z.shape)


@njit(**_JIT)
def sqdist_rows(z, c):
    n, d = z.shape
    out = np.empty(n)
    for i in range(n):
        s = 0.0
        for j in range(d):
            diff = z[i, j] - c[j]
            s += diff * diff
        out[i] = s
    return out


@njit(**_JIT)
def center_grad(z, c, coef):
    n, d = z.shape
    out = np.empty((n, d))
    scale = 2.0 * coef
    for i in range(n):
        for j in range(d):
            out[i, j] = scale * (z[i, j] - c[j])
    return out


@njit(**_JIT)
def hinge_penalties(z, c, delta):
    d2 = sqdist_rows(z, c)
    n = d2.size
    dist = np.empty(n)
    pen = np.empty(n)
    for i in range(n):
        dist[i] = np.sqrt(d2[i])
        gap = delta - dist[i]
        pen[i] = gap * gap if gap > 0.0 else 0.0
    return dist, pen


@njit(**_JIT)
def hinge_grad(z, c, delta, coef):
    n, d = z.shape
    out = np.zeros((n, d))
    for i in range(n):
        s = 0.0
        for j in range(d):
            diff = z[i, j] - c[j]
            s += diff * diff
        dist = np.sqrt(s)
        if 0.0 < dist < delta:
            factor = -2.0 * coef * (delta - dist) / dist
            for j in range(d):
                out[i, j] = factor * (z[i, j] - c[j])
    return out


@njit(**_JIT)
def frob_sq(w):
    wf = w.ravel()
    s = 0.0
    for i in range(wf.size):
        s += wf[i] * wf[i]
    return s


@njit(**_JIT)
def adam_update(p, g, m, v, t, lr, beta1, beta2, eps):
    pf = p.ravel()
    gf = g.ravel()
    mf = m.ravel()
    vf = v.ravel()
    n = pf.size
    p2 = np.empty(n)
    m2 = np.empty(n)
    v2 = np.empty(n)
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for i in range(n):
        mi = beta1 * mf[i] + (1.0 - beta1) * gf[i]
        vi = beta2 * vf[i] + (1.0 - beta2) * gf[i] * gf[i]
        m2[i] = mi
        v2[i] = vi
        p2[i] = pf[i] - lr * (mi / bc1) / (np.sqrt(vi / bc2) + eps)
    return p2.reshape(p.shape), m2.reshape(p.shape), v2.reshape(p.shape)


@njit(**_JIT)
def logistic(x):
    xf = x.ravel()
    out = np.empty(xf.size)
    for i in range(xf.size):
        v = xf[i]
        if v >= 0.0:
            out[i] = 1.0 / (1.0 + np.exp(-v))
        else:
            ev = np.exp(v)
            out[i] = ev / (1.0 + ev)
    return out.reshape(x.shape)
