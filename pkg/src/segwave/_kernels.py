"""Compiled inner loops.

Everything here takes and returns plain arrays/scalars so the Python layer
owns validation and randomness. Kernels are ``nogil`` so worker threads can
run them side by side.
"""

import math

import numpy as np
from numba import njit

HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@njit(cache=True, nogil=True)
def cumsum_squares(y):
    """Neumaier-compensated running sum of ``y**2``, with a leading zero."""
    n = y.shape[0]
    out = np.empty(n + 1)
    out[0] = 0.0
    s = 0.0
    c = 0.0
    for i in range(n):
        x = y[i] * y[i]
        t = s + x
        if abs(s) >= abs(x):
            c += (s - t) + x
        else:
            c += (x - t) + s
        s = t
        out[i + 1] = s + c
    return out


@njit(cache=True, nogil=True)
def fbst_logpdf(lam, delta, p):
    """Log posterior density over (log sigma0, log sigma1/sigma0).

    ``p = [t, n, s1, s2, laplace_flag, beta]``. Jeffreys priors are flat in
    these coordinates; the Laplace variant adds a double-exponential on delta.
    """
    t = p[0]
    n = p[1]
    ld = lam + delta
    v = (-n * HALF_LOG_2PI - t * lam - 0.5 * p[2] * math.exp(-2.0 * lam)
         - (n - t) * ld - 0.5 * p[3] * math.exp(-2.0 * ld))
    if p[4] != 0.0:
        v -= abs(delta) / p[5] + math.log(2.0 * p[5])
    return v


def am_loop(logpdf, params, x0, noise, logu, init_sd, ref_var, adapt_start,
            eps, sd_factor, out_x, out_lp):
    """Adaptive Metropolis (Haario et al.) in two dimensions.

    Proposal before ``adapt_start`` is diagonal with ``init_sd``; afterwards it
    is ``sd_factor * (Cov(history) + eps * diag(ref_var))``. Returns the number
    of accepted moves, or ``-(i + 1)`` if the target was NaN at iteration i.
    """
    n = noise.shape[0]
    c0 = x0[0]
    c1 = x0[1]
    clp = logpdf(c0, c1, params)
    # Welford accumulators over the history X_0..X_{i}
    k = 0
    m0 = 0.0
    m1 = 0.0
    q00 = 0.0
    q01 = 0.0
    q11 = 0.0
    accepted = 0
    for i in range(n):
        k += 1
        d0 = c0 - m0
        d1 = c1 - m1
        m0 += d0 / k
        m1 += d1 / k
        q00 += d0 * (c0 - m0)
        q01 += d0 * (c1 - m1)
        q11 += d1 * (c1 - m1)
        if i >= adapt_start and k >= 2:
            a00 = sd_factor * (q00 / (k - 1) + eps * ref_var[0])
            a01 = sd_factor * (q01 / (k - 1))
            a11 = sd_factor * (q11 / (k - 1) + eps * ref_var[1])
            l00 = math.sqrt(a00)
            l10 = a01 / l00
            r = a11 - l10 * l10
            l11 = math.sqrt(r) if r > 0.0 else math.sqrt(sd_factor * eps * ref_var[1])
        else:
            l00 = init_sd[0]
            l10 = 0.0
            l11 = init_sd[1]
        p0 = c0 + l00 * noise[i, 0]
        p1 = c1 + l10 * noise[i, 0] + l11 * noise[i, 1]
        plp = logpdf(p0, p1, params)
        if plp != plp:
            return -(i + 1)
        if logu[i] < plp - clp:
            c0 = p0
            c1 = p1
            clp = plp
            accepted += 1
        out_x[i, 0] = c0
        out_x[i, 1] = c1
        out_lp[i] = clp
    return accepted


am_loop_jit = njit(nogil=True)(am_loop)


@njit(cache=True, nogil=True)
def _length_table(n, length_term):
    # everything in the cost that depends on the segment length only
    tab = np.empty(n + 1)
    tab[0] = 0.0
    for L in range(1, n + 1):
        tab[L] = -math.lgamma(0.5 * L)
        if length_term:
            tab[L] += 0.5 * math.log(L / n)
    return tab


@njit(cache=True, nogil=True)
def pelt_kernel(cum, pen, min_len, length_term, k_bound):
    """PELT over the variance cost; returns the last-changepoint table."""
    n = cum.shape[0] - 1
    tab = _length_table(n, length_term)
    f = np.full(n + 1, np.inf)
    f[0] = -pen
    last = np.full(n + 1, -1, dtype=np.int64)
    cands = np.empty(n + 1, dtype=np.int64)
    marks = np.empty(n + 1, dtype=np.int64)
    vals = np.empty(n + 1)
    cands[0] = 0
    marks[0] = -1
    nc = 1
    for s in range(min_len, n + 1):
        new = s - min_len
        if new >= min_len:
            cands[nc] = new
            marks[nc] = -1
            nc += 1
        best = np.inf
        bt = -1
        for j in range(nc):
            c = cands[j]
            e = cum[s] - cum[c]
            if e > 0.0:
                v = f[c] + 0.5 * (s - c) * math.log(e) + tab[s - c] + pen
            else:
                v = np.inf
            vals[j] = v
            if v < best:
                best = v
                bt = c
        f[s] = best
        last[s] = bt
        # a candidate beaten at s cannot be optimal for any s' >= s + min_len;
        # it stays live until then
        w = 0
        for j in range(nc):
            c = cands[j]
            if f[c] == np.inf:
                continue
            mk = marks[j]
            if mk < 0 and vals[j] < np.inf and vals[j] - pen - k_bound > best:
                mk = s
            if mk >= 0 and mk + min_len <= s + 1:
                continue
            cands[w] = c
            marks[w] = mk
            w += 1
        nc = w
    return last, f


@njit(cache=True, nogil=True)
def optimal_partition_kernel(cum, pen, min_len, length_term):
    """Unpruned O(N^2) optimal partitioning, same recursion as pelt_kernel."""
    n = cum.shape[0] - 1
    tab = _length_table(n, length_term)
    f = np.full(n + 1, np.inf)
    f[0] = -pen
    last = np.full(n + 1, -1, dtype=np.int64)
    for s in range(min_len, n + 1):
        best = np.inf
        bt = -1
        for c in range(0, s - min_len + 1):
            if c != 0 and c < min_len:
                continue
            e = cum[s] - cum[c]
            if e <= 0.0:
                continue
            v = f[c] + 0.5 * (s - c) * math.log(e) + tab[s - c] + pen
            if v < best:
                best = v
                bt = c
        f[s] = best
        last[s] = bt
    return last, f
