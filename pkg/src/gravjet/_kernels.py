"""Compiled per-node update loops.

Node classes: 0 interior (updated), 1 dirichlet, 2 exterior.  ``pen`` holds
the penalty weight (2 lam - 2 g y_c) * dx * dy of each cell, zero outside
the penalised strip.  Gradient weights: wx = dy/dx, wy = dx/dy.
"""
import numba
import numpy as np


@numba.njit(cache=True)
def _order(k, n, rev):
    return n - 1 - k if rev else k


@numba.njit(cache=True)
def sweep_exact(psi, cls, pen, wx, wy, Q, rev):
    """One Gauss-Seidel pass of exact per-node minimisation.

    Returns (energy decrease, max |update|, near-tie count).
    """
    nx, ny = psi.shape
    s = 2.0 * wx + 2.0 * wy
    dE = 0.0
    maxd = 0.0
    nties = 0
    for jj in range(1, ny - 1):
        j = _order(jj, ny, rev)
        for kk in range(1, nx - 1):
            i = _order(kk, nx, rev)
            if cls[i, j] != 0:
                continue
            mu = (wx * (psi[i - 1, j] + psi[i + 1, j]) + wy * (psi[i, j - 1] + psi[i, j + 1])) / s
            m = min(max(mu, 0.0), Q)
            p_in = 0.0
            p_out = 0.0
            for ci in range(i - 1, i + 1):
                for cj in range(j - 1, j + 1):
                    pc = pen[ci, cj]
                    if pc == 0.0:
                        continue
                    p_in += pc
                    other = False
                    for di in range(2):
                        for dj in range(2):
                            i2 = ci + di
                            j2 = cj + dj
                            if i2 == i and j2 == j:
                                continue
                            v = psi[i2, j2]
                            if v > 0.0 and v < Q:
                                other = True
                    if other:
                        p_out += pc
            old = psi[i, j]
            if p_out == p_in:
                best = m
                eb = s * (m - mu) ** 2
            else:
                e_m = s * (m - mu) ** 2 + (p_in if (m > 0.0 and m < Q) else p_out)
                e_0 = s * mu * mu + p_out
                e_q = s * (Q - mu) ** 2 + p_out
                best = m
                eb = e_m
                if e_0 < eb:
                    best = 0.0
                    eb = e_0
                if e_q < eb:
                    best = Q
                    eb = e_q
                # runner-up among candidates distinct from the winner
                e_alt = 1e300
                if m != best:
                    e_alt = min(e_alt, e_m)
                if best != 0.0 and m != 0.0:
                    e_alt = min(e_alt, e_0)
                if best != Q and m != Q:
                    e_alt = min(e_alt, e_q)
                if e_alt - eb <= 1e-12 * (abs(eb) + p_in):
                    nties += 1
            p_old = p_in if (old > 0.0 and old < Q) else p_out
            e_old = s * (old - mu) ** 2 + p_old
            if e_old <= eb:
                continue
            dE += e_old - eb
            d = abs(best - old)
            if d > maxd:
                maxd = d
            psi[i, j] = best
    return dE, maxd, nties


@numba.njit(cache=True)
def _ramp(v, e1, Q):
    if v <= 0.0 or v >= Q:
        return 0.0
    a = min(v, Q - v) / e1
    return a if a < 1.0 else 1.0


@numba.njit(cache=True)
def _local_smooth(v, mu, s, oc, pc, nc, e1, Q):
    f = _ramp(v, e1, Q)
    e = s * (v - mu) ** 2
    for c in range(nc):
        e += pc[c] * (oc[c] if oc[c] > f else f)
    return e


@numba.njit(cache=True)
def _best_on_ramp(mu, s, oc, pc, nc, e1, t):
    """Minimise s (w - mu)^2 + sum pc max(oc, w/e1) over w in [0, e1]."""
    t[0] = 0.0
    n = 1
    for c in range(nc):
        tc = oc[c] * e1
        if tc > 0.0 and tc < e1:
            t[n] = tc
            n += 1
    t[n] = e1
    n += 1
    # insertion sort of the short breakpoint list
    for a in range(1, n):
        key = t[a]
        b = a - 1
        while b >= 0 and t[b] > key:
            t[b + 1] = t[b]
            b -= 1
        t[b + 1] = key
    best_w = 0.0
    best_e = 1e300
    for k in range(n - 1):
        lo = t[k]
        hi = t[k + 1]
        if hi < lo:
            continue
        mid = 0.5 * (lo + hi)
        slope = 0.0
        for c in range(nc):
            if oc[c] * e1 < mid:
                slope += pc[c] / e1
        w = mu - slope / (2.0 * s)
        if w < lo:
            w = lo
        if w > hi:
            w = hi
        e = s * (w - mu) ** 2
        for c in range(nc):
            f = w / e1
            e += pc[c] * (oc[c] if oc[c] > f else f)
        if e < best_e:
            best_e = e
            best_w = w
    return best_w


@numba.njit(cache=True)
def sweep_smooth(psi, cls, pen, wx, wy, Q, rev, eps):
    """Exact per-node minimisation of the ramp-smoothed functional.

    The wet indicator of a cell is replaced by the max over its corners of
    the ramp min(psi, Q - psi, e1)/e1 (clipped at 0), e1 = min(eps, Q/2).
    Returns (smoothed-energy decrease, max |update|).
    """
    nx, ny = psi.shape
    s = 2.0 * wx + 2.0 * wy
    e1 = min(eps, 0.5 * Q)
    dE = 0.0
    maxd = 0.0
    oc = np.empty(4)
    pc = np.empty(4)
    t = np.empty(6)
    for jj in range(1, ny - 1):
        j = _order(jj, ny, rev)
        for kk in range(1, nx - 1):
            i = _order(kk, nx, rev)
            if cls[i, j] != 0:
                continue
            mu = (wx * (psi[i - 1, j] + psi[i + 1, j]) + wy * (psi[i, j - 1] + psi[i, j + 1])) / s
            nc = 0
            saturated = True
            for ci in range(i - 1, i + 1):
                for cj in range(j - 1, j + 1):
                    p_ = pen[ci, cj]
                    if p_ == 0.0:
                        continue
                    o = 0.0
                    for di in range(2):
                        for dj in range(2):
                            i2 = ci + di
                            j2 = cj + dj
                            if i2 == i and j2 == j:
                                continue
                            f = _ramp(psi[i2, j2], e1, Q)
                            if f > o:
                                o = f
                    oc[nc] = o
                    pc[nc] = p_
                    nc += 1
                    if o < 1.0:
                        saturated = False
            old = psi[i, j]
            if saturated:
                best = min(max(mu, 0.0), Q)
            else:
                # three pieces: lower ramp, plateau, upper ramp (mirrored)
                best = _best_on_ramp(mu, s, oc, pc, nc, e1, t)
                eb = _local_smooth(best, mu, s, oc, pc, nc, e1, Q)
                v = min(max(mu, e1), Q - e1)
                ev = _local_smooth(v, mu, s, oc, pc, nc, e1, Q)
                if ev < eb:
                    best = v
                    eb = ev
                v = Q - _best_on_ramp(Q - mu, s, oc, pc, nc, e1, t)
                ev = _local_smooth(v, mu, s, oc, pc, nc, e1, Q)
                if ev < eb:
                    best = v
                    eb = ev
            e_old = _local_smooth(old, mu, s, oc, pc, nc, e1, Q)
            e_new = _local_smooth(best, mu, s, oc, pc, nc, e1, Q)
            if e_new >= e_old:
                continue
            dE += e_old - e_new
            d = abs(best - old)
            if d > maxd:
                maxd = d
            psi[i, j] = best
    return dE, maxd
