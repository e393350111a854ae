"""Collective front moves for the exact functional.

Per-node descent cannot shift a grid-aligned stretch of front: drying one
node of a terrace leaves its cells wet through the neighbours, so the node
pays gradient cost without saving penalty.  A terrace move dries (or wets)
a whole contiguous run of front nodes at once, relaxes psi harmonically in
a window around the run, and is kept only if the exact energy drops.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .geometry import INTERIOR

DIRECTIONS = ((0, 1), (0, -1), (1, 0), (-1, 0))


def harmonic_fill_array(psi, free, wx, wy):
    """5-point Laplace solve on ``free`` (never on the array border)."""
    fi, fj = np.nonzero(free)
    n = len(fi)
    out = psi.copy()
    if n == 0:
        return out
    idx = -np.ones(psi.shape, dtype=np.int64)
    idx[fi, fj] = np.arange(n)
    rows, cols, vals = [np.arange(n)], [np.arange(n)], [np.full(n, 2 * wx + 2 * wy)]
    rhs = np.zeros(n)
    for di, dj, w in ((-1, 0, wx), (1, 0, wx), (0, -1, wy), (0, 1, wy)):
        ni, nj = fi + di, fj + dj
        k = idx[ni, nj]
        inner = k >= 0
        rows.append(np.nonzero(inner)[0])
        cols.append(k[inner])
        vals.append(np.full(int(inner.sum()), -w))
        rhs[~inner] += w * psi[ni[~inner], nj[~inner]]
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    out[fi, fj] = spsolve(A, rhs)
    return out


def window_energy(sub, ok, pen, wx, wy, Q):
    a, b, c, d = sub[:-1, :-1], sub[1:, :-1], sub[:-1, 1:], sub[1:, 1:]
    e = 0.5 * wx * ((b - a) ** 2 + (d - c) ** 2) + 0.5 * wy * ((c - a) ** 2 + (d - b) ** 2)
    avg = 0.25 * (a + b + c + d)
    anyin = ((a > 0) & (a < Q)) | ((b > 0) & (b < Q)) | ((c > 0) & (c < Q)) | ((d > 0) & (d < Q))
    wet = (avg > 0) & (avg < Q) & anyin
    return float(np.where(ok, e, 0.0).sum() + (pen * wet).sum())


def _runs(flags):
    """(start, stop) of maximal True runs in a 1-D boolean array."""
    f = np.concatenate([[False], flags, [False]]).astype(np.int8)
    d = np.diff(f)
    return list(zip(np.nonzero(d == 1)[0], np.nonzero(d == -1)[0]))


class _Mover:
    def __init__(self, f, margin, seen=None, deep=None):
        self.f = f
        # (run, window wet pattern) pairs already rejected; a rejected move
        # is retried only once the front near it has changed
        self.seen = set() if seen is None else seen
        g = f.grid
        self.Q = f.jet.Q
        self.wx, self.wy = g.dy / g.dx, g.dx / g.dy
        self.inter = g.cls == INTERIOR
        self.ok = g.cell_ok
        self.margin = margin
        # normal reach of the relaxation window: a sheet whose thickness
        # changes by a row must re-spread its gradient over the whole sheet
        self.deep = max(margin, g.j_H if deep is None else deep)
        self.tried = 0
        self.accepted = 0
        self.gain = 0.0

    def attempt(self, nodes, values):
        """Set ``nodes`` to ``values`` (nan: free), relax, keep if J drops."""
        psi = self.f.psi
        nx, ny = psi.shape
        ii, jj = nodes
        mi = mj = self.margin
        if len(ii) > 1 and jj.min() == jj.max():
            mj = self.deep
        elif len(ii) > 1 and ii.min() == ii.max():
            mi = self.deep
        i0, i1 = max(ii.min() - mi, 0), min(ii.max() + mi + 1, nx)
        j0, j1 = max(jj.min() - mj, 0), min(jj.max() + mj + 1, ny)
        old = psi[i0:i1, j0:j1]
        state = np.where(old <= 0, 0, np.where(old >= self.Q, 2, 1)).astype(np.int8)
        key = (ii.tobytes(), jj.tobytes(), values.tobytes(), hash(state.tobytes()))
        if key in self.seen:
            return False
        sub = old.copy()
        li, lj = ii - i0, jj - j0
        fixed_vals = np.where(np.isnan(values), 0.5 * self.Q, values)
        sub[li, lj] = fixed_vals
        inter = self.inter[i0:i1, j0:j1]
        free = inter & (sub > 0) & (sub < self.Q)
        # window border stays fixed unless it is the grid border (never interior there)
        free[0, :] = free[-1, :] = False
        free[:, 0] = free[:, -1] = False
        keep = ~np.isnan(values)
        free[li[keep], lj[keep]] = False
        sub = np.clip(harmonic_fill_array(sub, free, self.wx, self.wy), 0.0, self.Q)
        ok = self.ok[i0:i1 - 1, j0:j1 - 1]
        pen = self.f.pen[i0:i1 - 1, j0:j1 - 1]
        e_old = window_energy(old, ok, pen, self.wx, self.wy, self.Q)
        e_new = window_energy(sub, ok, pen, self.wx, self.wy, self.Q)
        self.tried += 1
        if e_new < e_old - 1e-13 * max(abs(e_old), 1.0):
            psi[i0:i1, j0:j1] = sub
            self.accepted += 1
            self.gain += e_old - e_new
            return True
        self.seen.add(key)
        return False

    def attempt_trimmed(self, nodes, values, min_len):
        """Shorten a rejected run from one end by 1, 2, 4, ... nodes.

        A run that ends where the front turns pays for a step at that end;
        the same run stopped short of the turn may still pay off.
        """
        n = len(nodes[0])
        k = 1
        while n - k >= max(min_len, n // 2):
            for sl in (slice(0, n - k), slice(k, n)):
                if self.attempt((nodes[0][sl], nodes[1][sl]), values[sl]):
                    return True
            k *= 2
        return False

    def attempt_split(self, nodes, values, depth, min_len, trim=16):
        if self.attempt(nodes, values):
            return True
        n = len(nodes[0])
        if trim and n >= trim and self.attempt_trimmed(nodes, values, min_len):
            return True
        if depth == 0 or n < 2 * min_len:
            return False
        h = n // 2
        a = self.attempt_split((nodes[0][:h], nodes[1][:h]), values[:h], depth - 1, min_len, trim)
        b = self.attempt_split((nodes[0][h:], nodes[1][h:]), values[h:], depth - 1, min_len, trim)
        return a or b


def _candidate_runs(f, d, kind):
    """Runs of nodes for one direction and move kind.

    erode: wet interior nodes whose neighbour in direction d is a dry
    interior node; they take the neighbour's value.
    dilate: dry interior nodes whose neighbour opposite to d is wet; they
    are released into the harmonic relaxation.
    """
    psi = f.psi
    Q = f.jet.Q
    inter = f.grid.cls == INTERIOR
    wet = inter & (psi > 0) & (psi < Q)
    dry0 = inter & (psi <= 0)
    dryQ = inter & (psi >= Q)
    di, dj = d
    nx, ny = psi.shape

    def shift(a, si, sj):
        # out[i, j] = a[i + si, j + sj], False off-grid
        out = np.zeros_like(a)
        xs = slice(max(-si, 0), nx - max(si, 0))
        ys = slice(max(-sj, 0), ny - max(sj, 0))
        xt = slice(max(si, 0), nx - max(-si, 0))
        yt = slice(max(sj, 0), ny - max(-sj, 0))
        out[xs, ys] = a[xt, yt]
        return out

    out = []
    for dry, val in ((dry0, 0.0), (dryQ, Q)):
        if kind == "erode":
            mask = wet & shift(dry, di, dj)
        else:
            mask = dry & shift(wet, -di, -dj)
        along_i = dj != 0
        lines = range(ny) if along_i else range(nx)
        for L in lines:
            flags = mask[:, L] if along_i else mask[L, :]
            for s, e in _runs(flags):
                idx = np.arange(s, e)
                nodes = (idx, np.full(len(idx), L)) if along_i else (np.full(len(idx), L), idx)
                vals = np.full(len(idx), val if kind == "erode" else np.nan)
                out.append((nodes, vals))
    return out


def front_moves(f, margin=6, min_len=2, depth=4, rounds=1, seen=None, deep=None, trim=16):
    """One or more passes of terrace moves over all fronts.

    The relaxation window spans ``margin`` cells along a run and ``deep``
    cells (default: the rows up to y = H) across it.  ``seen`` carries
    rejected moves between calls on the same field.  Rejected runs of at
    least ``trim`` nodes are retried shortened (0 disables).
    Returns (accepted, tried, energy gain).
    """
    mv = _Mover(f, margin, seen, deep)
    for _ in range(rounds):
        before = mv.accepted
        for d in DIRECTIONS:
            for kind in ("erode", "dilate"):
                for nodes, vals in _candidate_runs(f, d, kind):
                    if len(nodes[0]) < min_len:
                        continue
                    mv.attempt_split(nodes, vals, depth, min_len, trim)
        if mv.accepted == before:
            break
    return mv.accepted, mv.tried, mv.gain
