"""Numba kernels for the sequential inner loops.

Everything here is a plain function of arrays so the compiled code stays
cache-friendly and reusable across processes (``cache=True``).
"""

import numba
import numpy as np


@numba.njit(cache=True, nogil=True)
def leaky_tanh_chain(indptr, indices, data, leak, s, drive, out):
    """Advance the leaky-tanh latent state over a block of time steps.

    ``indptr/indices/data`` hold the recurrent matrix in CSR form.  ``drive``
    is the precomputed input contribution per step, shape (block, n_latent).
    ``s`` is updated in place so consecutive blocks chain; each row of ``out``
    receives the post-update state.
    """
    b, n = drive.shape
    for t in range(b):
        for p in range(n):
            acc = drive[t, p]
            for k in range(indptr[p], indptr[p + 1]):
                acc += data[k] * s[indices[k]]
            out[t, p] = acc  # pre-activation, overwritten below
        for p in range(n):
            val = leak * s[p] + (1.0 - leak) * np.tanh(out[t, p])
            s[p] = val
            out[t, p] = val


@numba.njit(cache=True)
def mackey_glass_path(n_steps, h, delay_offset, g1, g2, g3, hist, y, f):
    """Fixed-step RK4 for the delay equation on the inner grid.

    ``delay_offset`` is the delay expressed in inner steps (may be fractional).
    ``y`` and ``f`` (length n_steps+1) receive values and slopes on the grid;
    the slopes feed the cubic Hermite evaluation of the delayed term.
    History is constant ``hist`` for t <= 0.  Returns 0 on success or the
    first step index at which the solution left [-1e6, 1e6] or went
    non-finite.
    """
    y[0] = hist
    for i in range(n_steps):
        yd = _delayed(y, f, i - delay_offset, hist, h)
        k1 = g1 * yd / (1.0 + yd ** g2) - g3 * y[i]
        f[i] = k1
        ydm = _delayed(y, f, i + 0.5 - delay_offset, hist, h)
        k2 = g1 * ydm / (1.0 + ydm ** g2) - g3 * (y[i] + 0.5 * h * k1)
        k3 = g1 * ydm / (1.0 + ydm ** g2) - g3 * (y[i] + 0.5 * h * k2)
        yd4 = _delayed(y, f, i + 1.0 - delay_offset, hist, h)
        k4 = g1 * yd4 / (1.0 + yd4 ** g2) - g3 * (y[i] + h * k3)
        y[i + 1] = y[i] + h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
        if not np.isfinite(y[i + 1]) or abs(y[i + 1]) > 1.0e6:
            return i + 1
    return 0


@numba.njit(cache=True, inline="always")
def _delayed(y, f, x, hist, h):
    # Cubic Hermite on the inner grid; constant history left of t = 0.
    if x <= 0.0:
        return hist
    k = int(np.floor(x))
    th = x - k
    if th == 0.0:
        return y[k]
    h00 = (1.0 + 2.0 * th) * (1.0 - th) ** 2
    h10 = th * (1.0 - th) ** 2
    h01 = th * th * (3.0 - 2.0 * th)
    h11 = th * th * (th - 1.0)
    return h00 * y[k] + h10 * h * f[k] + h01 * y[k + 1] + h11 * h * f[k + 1]


@numba.njit(cache=True)
def lorenz63_path(x0, y0, z0, sigma, rho, beta, h, n_steps, sample_every, skip, out):
    """RK4 integration, writing every ``sample_every``-th state after ``skip``."""
    x, y, z = x0, y0, z0
    j = 0
    for i in range(n_steps + 1):
        if i >= skip and (i - skip) % sample_every == 0:
            out[j, 0] = x
            out[j, 1] = y
            out[j, 2] = z
            j += 1
            if j == out.shape[0]:
                return 0
        k1x = sigma * (y - x)
        k1y = x * (rho - z) - y
        k1z = x * y - beta * z
        x2 = x + 0.5 * h * k1x
        y2 = y + 0.5 * h * k1y
        z2 = z + 0.5 * h * k1z
        k2x = sigma * (y2 - x2)
        k2y = x2 * (rho - z2) - y2
        k2z = x2 * y2 - beta * z2
        x3 = x + 0.5 * h * k2x
        y3 = y + 0.5 * h * k2y
        z3 = z + 0.5 * h * k2z
        k3x = sigma * (y3 - x3)
        k3y = x3 * (rho - z3) - y3
        k3z = x3 * y3 - beta * z3
        x4 = x + h * k3x
        y4 = y + h * k3y
        z4 = z + h * k3z
        k4x = sigma * (y4 - x4)
        k4y = x4 * (rho - z4) - y4
        k4z = x4 * y4 - beta * z4
        x += h * (k1x + 2.0 * (k2x + k3x) + k4x) / 6.0
        y += h * (k1y + 2.0 * (k2y + k3y) + k4y) / 6.0
        z += h * (k1z + 2.0 * (k2z + k3z) + k4z) / 6.0
        if not (np.isfinite(x) and np.isfinite(y) and np.isfinite(z)):
            return i + 1
    return 0


@numba.njit(cache=True)
def _lorenz96_rhs(y, forcing, d):
    n = y.shape[0]
    for i in range(n):
        d[i] = (-y[(i - 2) % n] * y[(i - 1) % n]
                + y[(i - 1) % n] * y[(i + 1) % n]
                - y[i] + forcing)


@numba.njit(cache=True)
def lorenz96_path(y0, forcing, h, n_steps, sample_every, skip, out):
    n = y0.shape[0]
    y = y0.copy()
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    tmp = np.empty(n)
    j = 0
    for i in range(n_steps + 1):
        if i >= skip and (i - skip) % sample_every == 0:
            out[j, :] = y
            j += 1
            if j == out.shape[0]:
                return 0
        _lorenz96_rhs(y, forcing, k1)
        for p in range(n):
            tmp[p] = y[p] + 0.5 * h * k1[p]
        _lorenz96_rhs(tmp, forcing, k2)
        for p in range(n):
            tmp[p] = y[p] + 0.5 * h * k2[p]
        _lorenz96_rhs(tmp, forcing, k3)
        for p in range(n):
            tmp[p] = y[p] + h * k3[p]
        _lorenz96_rhs(tmp, forcing, k4)
        ok = True
        for p in range(n):
            y[p] += h * (k1[p] + 2.0 * (k2[p] + k3[p]) + k4[p]) / 6.0
            ok = ok and np.isfinite(y[p])
        if not ok:
            return i + 1
    return 0


@numba.njit(cache=True)
def vdp_path(y1_0, y2_0, mu, h, substeps, n_intervals, sample_every, u_grid, out):
    """Forced van der Pol oscillator with forcing held constant per interval.

    ``u_grid`` holds the forcing value for each of ``n_intervals`` intervals;
    each interval is integrated with ``substeps`` RK4 steps of size ``h``.
    ``out`` receives (y1, y2) every ``sample_every`` intervals.
    """
    y1, y2 = y1_0, y2_0
    j = 0
    for i in range(n_intervals + 1):
        if i % sample_every == 0:
            out[j, 0] = y1
            out[j, 1] = y2
            j += 1
            if j == out.shape[0]:
                return 0
        u = u_grid[i]
        for _ in range(substeps):
            k11 = y2
            k12 = mu * (1.0 - y1 * y1) * y2 - y1 + u
            a1 = y1 + 0.5 * h * k11
            a2 = y2 + 0.5 * h * k12
            k21 = a2
            k22 = mu * (1.0 - a1 * a1) * a2 - a1 + u
            b1 = y1 + 0.5 * h * k21
            b2 = y2 + 0.5 * h * k22
            k31 = b2
            k32 = mu * (1.0 - b1 * b1) * b2 - b1 + u
            c1 = y1 + h * k31
            c2 = y2 + h * k32
            k41 = c2
            k42 = mu * (1.0 - c1 * c1) * c2 - c1 + u
            y1 += h * (k11 + 2.0 * (k21 + k31) + k41) / 6.0
            y2 += h * (k12 + 2.0 * (k22 + k32) + k42) / 6.0
        if not (np.isfinite(y1) and np.isfinite(y2)):
            return i + 1
    return 0
