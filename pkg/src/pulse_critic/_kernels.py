"""Fused numba kernels for the solver hot loop.

They reproduce ``state.laplacian`` / ``state.d1`` (same stencils, same ghost rules); the
numpy versions remain the reference in the tests.  Work is restricted to the active
prefix of the grid: beyond the last node where ``|phi|`` or ``|phit|`` exceeds
``TINY`` the fields are flushed to exact zeros, which they are up to round-off since
nothing propagates past the light cone.
"""

import numba
import numpy as np

TINY = 1e-250


@numba.njit(cache=True)
def _ipow(x, p):
    y = 1.0
    for _ in range(p):
        y *= x
    return y


@numba.njit(cache=True)
def _padded(f, g, order, m, n):
    """First ``m + g`` entries of a grid function of length ``n`` (``f`` may be a shorter
    prefix whose missing tail is zero) with ``g`` parity ghosts in front; when the window
    reaches the end of the grid the outer ghosts are polynomial extrapolations."""
    top = min(n, m + g)
    out = np.empty(top + 2 * g)
    for j in range(top):
        out[g + j] = f[j] if j < f.shape[0] else 0.0
    for k in range(g):
        out[k] = f[g - k]
    for k in range(g):
        j = g + top + k
        if top < n:
            out[j] = f[top + k] if top + k < min(n, f.shape[0]) else 0.0
        elif order == 2:
            out[j] = 3.0 * out[j - 1] - 3.0 * out[j - 2] + out[j - 3]
        else:
            out[j] = 5.0 * out[j - 1] - 10.0 * out[j - 2] + 10.0 * out[j - 3] - 5.0 * out[j - 4] + out[j - 5]
    return out


@numba.njit(cache=True)
def active_extent(phi, phit, tiny):
    """Index one past the last node where either field exceeds ``tiny``."""
    for j in range(phi.shape[0] - 1, -1, -1):
        if abs(phi[j]) > tiny or abs(phit[j]) > tiny or phi[j] != phi[j] or phit[j] != phit[j]:
            return j + 1
    return 0


@numba.njit(cache=True)
def _accel(phi, phit, p, h, order, floor, m, n, out):
    """``out[:m] = c^2 Laplacian(phi)`` on a grid of ``n`` nodes; returns the first index
    violating the hyperbolicity floor, or -1."""
    for j in range(m):
        a = 1.0 + _ipow(phit[j], p)
        if not (a >= floor):
            return j
    g = order // 2
    fp = _padded(phi, g, order, m, n)
    ih = 1.0 / h
    ih2 = ih * ih
    for j in range(m):
        k = j + g
        if order == 4:
            dd = (-fp[k + 2] + 16.0 * fp[k + 1] - 30.0 * fp[k] + 16.0 * fp[k - 1] - fp[k - 2]) * (ih2 / 12.0)
            d = (-fp[k + 2] + 8.0 * fp[k + 1] - 8.0 * fp[k - 1] + fp[k - 2]) * (ih / 12.0)
        else:
            dd = (fp[k + 1] - 2.0 * fp[k] + fp[k - 1]) * ih2
            d = (fp[k + 1] - fp[k - 1]) * (0.5 * ih)
        if j == 0:
            lap = 3.0 * dd
        else:
            lap = dd + 2.0 * d / (j * h)
        out[j] = lap / (1.0 + _ipow(phit[j], p))
    return -1


@numba.njit(cache=True)
def wave_rhs(phi, phit, p, h, order, floor, out):
    """Full-grid ``c^2 Laplacian(phi)`` into ``out``; returns the first index where
    ``1 + phit^p < floor`` (or -1)."""
    return _accel(phi, phit, p, h, order, floor, phi.shape[0], phi.shape[0], out)


@numba.njit(cache=True)
def _failure(phit, j):
    """Status for a floor violation at ``j``: non-finite values are a breakdown."""
    if abs(phit[j]) < np.inf:
        return 1, j
    return 2, j


@numba.njit(cache=True)
def rk4_step(phi, phit, p, h, order, floor, dt, new_phi, new_phit):
    """Classical RK4 step of ``(phi, phit)`` on the active prefix.

    ``new_phi`` / ``new_phit`` must be zero-filled.  Returns ``(status, index)`` with
    status 0 (ok), 1 (hyperbolicity floor violated at ``index``) or 2 (non-finite values).
    """
    n = phi.shape[0]
    g = order // 2
    m = min(n, active_extent(phi, phit, TINY) + 4 * g + 4)
    if m == 0:
        return 0, -1
    # Work arrays cover the active prefix plus one stencil half-width of zeros.
    mm = min(n, m + g)
    k1 = np.zeros(mm)
    k2 = np.zeros(mm)
    k3 = np.zeros(mm)
    k4 = np.zeros(mm)
    a = np.zeros(mm)
    s2 = np.zeros(mm)
    s3 = np.zeros(mm)
    s4 = np.zeros(mm)
    bad = _accel(phi, phit, p, h, order, floor, m, n, k1)
    if bad >= 0:
        return _failure(phit, bad)
    hd = 0.5 * dt
    for j in range(m):
        a[j] = phi[j] + hd * phit[j]
        s2[j] = phit[j] + hd * k1[j]
    bad = _accel(a, s2, p, h, order, floor, m, n, k2)
    if bad >= 0:
        return _failure(s2, bad)
    for j in range(m):
        a[j] = phi[j] + hd * s2[j]
        s3[j] = phit[j] + hd * k2[j]
    bad = _accel(a, s3, p, h, order, floor, m, n, k3)
    if bad >= 0:
        return _failure(s3, bad)
    for j in range(m):
        a[j] = phi[j] + dt * s3[j]
        s4[j] = phit[j] + dt * k3[j]
    bad = _accel(a, s4, p, h, order, floor, m, n, k4)
    if bad >= 0:
        return _failure(s4, bad)
    w = dt / 6.0
    ok = True
    for j in range(m):
        x = phi[j] + w * (phit[j] + 2.0 * s2[j] + 2.0 * s3[j] + s4[j])
        y = phit[j] + w * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
        new_phi[j] = x
        new_phit[j] = y
        if not (abs(x) < np.inf and abs(y) < np.inf):
            ok = False
    if not ok:
        return 2, -1
    return 0, -1


@numba.njit(cache=True)
def grad_max(f, h, order):
    """``max |d_r f|`` and its index."""
    n = f.shape[0]
    g = order // 2
    m = 0
    for j in range(n - 1, -1, -1):
        if f[j] != 0.0:
            m = j + 1
            break
    m = min(n, m + g + 1)
    fp = _padded(f, g, order, m, n)
    best = -1.0
    jbest = 0
    for j in range(m):
        k = j + g
        if order == 4:
            d = (-fp[k + 2] + 8.0 * fp[k + 1] - 8.0 * fp[k - 1] + fp[k - 2]) / (12.0 * h)
        else:
            d = (fp[k + 1] - fp[k - 1]) / (2.0 * h)
        d = abs(d)
        if not (d <= best):
            if d != d:
                return d, j
            best = d
            jbest = j
    if best < 0.0:
        best = 0.0
    return best, jbest


@numba.njit(cache=True)
def max_speed(phit, p):
    """``max (1 + phit^p)^(-1/2)``; NaN if ``1 + phit^p <= 0`` anywhere."""
    lo = np.inf
    for j in range(phit.shape[0]):
        a = 1.0 + _ipow(phit[j], p)
        if not (a > 0.0):
            return np.nan
        if a < lo:
            lo = a
    return 1.0 / np.sqrt(lo)


@numba.njit(cache=True)
def lagrange4(values, i0, h, r, f, df):
    """Cubic Lagrange value and derivative at ``r``; returns False if any ``r`` lacks
    two samples on each side."""
    m = values.shape[0]
    for k in range(r.shape[0]):
        x = r[k] / h - i0
        j = int(np.floor(x))
        if j < 1 or j > m - 3:
            return False
        th = x - j
        a, b, c, d = values[j - 1], values[j], values[j + 1], values[j + 2]
        f[k] = (-a * th * (th - 1.0) * (th - 2.0) / 6.0 + b * (th + 1.0) * (th - 1.0) * (th - 2.0) / 2.0
                - c * (th + 1.0) * th * (th - 2.0) / 2.0 + d * (th + 1.0) * th * (th - 1.0) / 6.0)
        t2 = th * th
        df[k] = (-a * (3.0 * t2 - 6.0 * th + 2.0) / 6.0 + b * (3.0 * t2 - 4.0 * th - 1.0) / 2.0
                 - c * (3.0 * t2 - 2.0 * th - 2.0) / 2.0 + d * (3.0 * t2 - 1.0) / 6.0) / h
    return True
