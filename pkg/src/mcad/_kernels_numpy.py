"""Pure-numpy implementations of the hot per-step kernels.

Signature-compatible with `_kernels_numba`; selected via the MCAD_BACKEND
environment flag (see `mcad.backend`).
"""

import numpy as np

BACKEND_NAME = "numpy"


def leaky_forward(z, slope):
    return np.where(z > 0.0, z, slope * z)


def leaky_backward(z, da, slope):
    return np.where(z > 0.0, da, slope * da)


def sqdist_rows(z, c):
    diff = z - c
    return np.einsum("ij,ij->i", diff, diff)


def center_grad(z, c, coef):
    # d/dz of coef * sum_i ||z_i - c||^2
    return (2.0 * coef) * (z - c)


def hinge_penalties(z, c, delta):
    # per-row squared hinge max(0, delta - ||z - c||)^2
    d = np.sqrt(sqdist_rows(z, c))
    gap = delta - d
    gap[gap < 0.0] = 0.0
    return d, gap * gap


def hinge_grad(z, c, delta, coef):
    # d/dz of coef * sum_i max(0, delta - ||z_i - c||)^2; zero rows at the
    # kink d == delta and at the removable singularity d == 0
    d, _ = hinge_penalties(z, c, delta)
    factor = np.zeros_like(d)
    active = (d > 0.0) & (d < delta)
    factor[active] = -2.0 * coef * (delta - d[active]) / d[active]
    return factor[:, None] * (z - c)


def frob_sq(w):
    return float(np.einsum("ij,ij->", w, w))


def adam_update(p, g, m, v, t, lr, beta1, beta2, eps):
    # standard bias-corrected Adam; t is the already-incremented step count
    m2 = beta1 * m + (1.0 - beta1) * g
    v2 = beta2 * v + (1.0 - beta2) * g * g
    m_hat = m2 / (1.0 - beta1**t)
    v_hat = v2 / (1.0 - beta2**t)
    p2 = p - lr * m_hat / (np.sqrt(v_hat) + eps)
    return p2, m2, v2


def logistic(x):
    out = np.empty_like(x)
    pos = x >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out
