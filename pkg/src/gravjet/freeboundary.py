"""Free streamlines {psi = 0+} and {psi = Q-}: extraction and checks."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import EmptyBoundary, NonGraph
from .flux_algebra import DownstreamState
from .geometry import EXTERIOR, INTERIOR
from .minimizer import StreamField


def eps_h(grid, lam):
    """Barrier slack 2 (dx + dy) sqrt(2 lam)."""
    return 2 * (grid.dx + grid.dy) * math.sqrt(2 * lam)


@dataclass
class FreeBoundarySet:
    k1: np.ndarray            # (n, 2) rows of (y, x)
    k2: np.ndarray
    detach1: float
    detach2: float
    asymptote1: float
    asymptote2: float
    samples: np.ndarray       # (m, 4): x, y, which (1|2), family (0 row, 1 column)
    level_eps: float
    flags: list = field(default_factory=list)

    def polyline_rows(self):
        out = [(y, x, 1) for y, x in self.k1] + [(y, x, 2) for y, x in self.k2]
        return np.array(out, dtype=float).reshape(-1, 3)


def _row_crossings(row, lev, rising):
    """Indices k such that the level is crossed between k and k+1."""
    above = row > lev if rising else row < lev
    return np.nonzero(above[1:] != above[:-1])[0]


def extract_boundaries(f: StreamField, level_eps=None, allow_empty=False) -> FreeBoundarySet:
    """Per-row graphs x = k_i(y) for 0 < y < H plus column crossings.

    k1: where psi first rises above level_eps scanning rightward.
    k2: where psi last falls below Q - level_eps.
    Rows whose crossing would lie on a truncation line are left out.
    With ``allow_empty`` a missing boundary is flagged (detachment +-inf)
    instead of raising EmptyBoundary.
    """
    g = f.grid
    Q = f.jet.Q
    lev = 1e-6 * Q if level_eps is None else level_eps
    psi = f.psi
    jH = g.j_H
    x, y = g.x, g.y
    k1, k2, bad = [], [], []
    samples = []
    # the truncation nodes x = -mu, mu are left out of the scan: a crossing
    # next to them lies on the truncation line, not on a free boundary
    x = x[1:-1]
    for j in range(1, jH):
        row = psi[1:-1, j]
        c1 = _row_crossings(row, lev, True)
        c2 = _row_crossings(row, Q - lev, False)
        if len(c1) > 1 or len(c2) > 1:
            bad.append(j)
            continue
        if len(c1) == 1 and row[0] <= lev:
            i = c1[0]
            xc = x[i] + (lev - row[i]) / (row[i + 1] - row[i]) * g.dx
            k1.append((y[j], xc))
            samples.append((xc, y[j], 1, 0))
        if len(c2) == 1 and row[-1] >= Q - lev:
            i = c2[0]
            xc = x[i] + (row[i] - (Q - lev)) / (row[i] - row[i + 1]) * g.dx
            k2.append((y[j], xc))
            samples.append((xc, y[j], 2, 0))
    if bad:
        raise NonGraph(f"multiple crossings in rows {bad[:10]}", rows=bad)
    col = _column_crossings(f, lev)
    samples.extend(col)
    k1 = np.array(k1, dtype=float).reshape(-1, 2)
    k2 = np.array(k2, dtype=float).reshape(-1, 2)
    flags = []
    for which, kk, name in ((1, k1, "{psi > 0}"), (2, k2, "{psi < Q}")):
        if len(kk) == 0 and not any(s[2] == which for s in col):
            msg = f"no boundary {name} found below y = H"
            if not allow_empty:
                raise EmptyBoundary(msg, which=which)
            flags.append(msg)
    d1 = _detach(k1, g, -np.inf, flags, "detach1")
    d2 = _detach(k2, g, np.inf, flags, "detach2")
    a1 = _asymptote(col, 1, g)
    a2 = _asymptote(col, 2, g)
    return FreeBoundarySet(k1, k2, d1, d2, a1, a2,
                           np.array(samples, dtype=float).reshape(-1, 4), lev, flags)


def _column_crossings(f, lev):
    """Vertical crossings below y = H, one per column and level when they exist."""
    g = f.grid
    Q = f.jet.Q
    jH = g.j_H
    out = []
    sub = f.psi[:, : jH + 1]
    cls = g.cls[:, : jH + 1]
    for i in range(1, g.shape[0] - 1):
        colv = sub[i]
        if np.any(cls[i] == EXTERIOR):
            continue
        for which, level in ((1, lev), (2, Q - lev)):
            # left sheet: psi falls below lev going up; right sheet: psi rises above Q - lev
            above = colv > level if which == 1 else colv < level
            ch = np.nonzero(above[1:] != above[:-1])[0]
            for k in ch:
                a, b = colv[k], colv[k + 1]
                if a == b:
                    continue
                yc = g.y[k] + (level - a) / (b - a) * g.dy
                if 0 < yc < g.dom.H:
                    out.append((g.x[i], yc, which, 1))
    return out


def _detach(k, g, inf, flags, name):
    ok = k[k[:, 0] <= g.dom.H - g.dy + 1e-12] if len(k) else k
    if len(ok) < 2 or ok[-1, 0] < g.dom.H - 1.5 * g.dy:
        flags.append(f"{name} not attained inside the truncation")
        return inf
    (y0, x0), (y1, x1) = ok[-2], ok[-1]
    return float(x1 + (x1 - x0) / (y1 - y0) * (g.dom.H - y1))


def _asymptote(col, which, g):
    """Mean height of near-horizontal boundary points in the outer third."""
    mu = g.dom.mu
    pts = np.array([(c[0], c[1]) for c in col if c[2] == which], dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        return float("nan")
    outer = pts[:, 0] <= -mu / 3 if which == 1 else pts[:, 0] >= mu / 3
    pts = pts[outer]
    if len(pts) < 2:
        return float("nan")
    pts = pts[np.argsort(pts[:, 0])]
    slope = np.abs(np.gradient(pts[:, 1], pts[:, 0]))
    flat = slope < 0.1
    if not flat.any():
        return float("nan")
    return float(pts[flat, 1].mean())


@dataclass
class ResidualStats:
    r: np.ndarray                 # per-sample ratio, away from detachment
    r_near: np.ndarray            # samples within the detachment neighbourhoods
    points: np.ndarray            # (n, 3): x, y, which
    median: float
    p05: float
    p95: float
    median_abs_dev: float

    def as_dict(self):
        return {"median": self.median, "p05": self.p05, "p95": self.p95,
                "median_abs_dev": self.median_abs_dev, "n": int(len(self.r)),
                "n_near_detachment": int(len(self.r_near))}


def gradient_residual(f: StreamField, fb: FreeBoundarySet, depth=3.0, exclude_cells=5.0,
                      families=None) -> ResidualStats:
    """Ratio r = |grad psi|^2 / (2 lam - 2 g y) at boundary samples.

    By default each boundary is sampled along its row crossings (the k_i
    polylines); column crossings are used only for a boundary with no rows.
    Column samples on a flat sheet sit at a row-locked height, so they carry
    a fixed bias of order dy / h_i.

    |grad psi| is taken by central differences of the bilinear interpolant at
    a point ``depth`` cells inward along the local normal, so that every
    stencil value lies on the wet side clear of the cell-scale staircase of
    the discrete front.
    """
    g = f.grid
    lam, gg = f.state.lam, f.jet.g
    h = min(g.dx, g.dy)
    interp = RegularGridInterpolator((g.x, g.y), f.psi)
    gx_all = np.gradient(f.psi, g.dx, axis=0)
    gy_all = np.gradient(f.psi, g.dy, axis=1)
    wet = f.wet
    A = np.array([[-1.0, g.dom.H], [1.0, g.dom.H]])
    rad = exclude_cells * max(g.dx, g.dy)
    r_far, r_near, pts = [], [], []
    nx, ny = g.shape
    if families is None:
        fams = {w: ((0,) if np.any((fb.samples[:, 2] == w) & (fb.samples[:, 3] == 0)) else (1,))
                for w in (1, 2)}
    else:
        fams = {1: tuple(families), 2: tuple(families)}
    for xs, ys, which, fam in fb.samples:
        if fam not in fams[int(which)]:
            continue
        i = int(round((xs - g.x[0]) / g.dx))
        j = int(round(ys / g.dy))
        I = slice(max(i - 2, 0), min(i + 3, nx))
        J = slice(max(j - 2, 0), min(j + 3, ny))
        w = wet[I, J]
        if not w.any():
            continue
        n = np.array([gx_all[I, J][w].mean(), gy_all[I, J][w].mean()])
        if which == 2:
            n = -n
        nn = np.hypot(*n)
        if nn == 0:
            continue
        n /= nn
        q = np.array([xs, ys]) + depth * h * n
        st = np.array([q + [g.dx, 0], q - [g.dx, 0], q + [0, g.dy], q - [0, g.dy]])
        if (st[:, 0].min() < g.x[0] or st[:, 0].max() > g.x[-1]
                or st[:, 1].min() < g.y[0] or st[:, 1].max() > g.y[-1]):
            continue
        ci = np.floor((st[:, 0] - g.x[0]) / g.dx).astype(int)
        cj = np.floor(st[:, 1] / g.dy).astype(int)
        ci = np.clip(ci, 0, nx - 2)
        cj = np.clip(cj, 0, ny - 2)
        corners = np.concatenate([g.cls[ci, cj], g.cls[ci + 1, cj], g.cls[ci, cj + 1], g.cls[ci + 1, cj + 1]])
        if np.any(corners == EXTERIOR):
            continue
        v = interp(st)
        grad2 = ((v[0] - v[1]) / (2 * g.dx)) ** 2 + ((v[2] - v[3]) / (2 * g.dy)) ** 2
        denom = 2 * lam - 2 * gg * ys
        if denom <= 0:
            continue
        r = grad2 / denom
        near = np.min(np.hypot(A[:, 0] - xs, A[:, 1] - ys)) <= rad
        (r_near if near else r_far).append(r)
        if not near:
            pts.append((xs, ys, which))
    r_far = np.asarray(r_far)
    if len(r_far):
        med, p05, p95 = np.median(r_far), np.percentile(r_far, 5), np.percentile(r_far, 95)
        mad = np.median(np.abs(r_far - 1))
    else:
        med = p05 = p95 = mad = float("nan")
    return ResidualStats(r_far, np.asarray(r_near), np.array(pts).reshape(-1, 3),
                         float(med), float(p05), float(p95), float(mad))


@dataclass
class CheckResult:
    passed: bool
    worst: float
    where: tuple = ()
    detail: dict = field(default_factory=dict)


def barrier_check(f: StreamField, s: DownstreamState = None) -> CheckResult:
    """Lower/upper barrier containment below y = H, in units of eps_h."""
    s = f.state if s is None else s
    g = f.grid
    a1 = math.sqrt(max(2 * s.lam - 2 * f.jet.g * s.h1, 0.0))
    a2 = math.sqrt(max(2 * s.lam - 2 * f.jet.g * s.h2, 0.0))
    y = g.y
    lo = np.maximum(-a1 * y + s.Q1, 0.0)
    up = np.minimum(a2 * y + s.Q1, f.jet.Q)
    eh = eps_h(g, s.lam)
    mask = (g.cls != EXTERIOR) & (y[None, :] <= g.dom.H + 1e-12)
    low_v = np.where(mask, lo[None, :] - f.psi, -np.inf) / eh
    up_v = np.where(mask, f.psi - up[None, :], -np.inf) / eh
    lw, uw = float(low_v.max()), float(up_v.max())
    worst = max(lw, uw)
    arr = low_v if lw >= uw else up_v
    where = tuple(int(t) for t in np.unravel_index(np.argmax(arr), arr.shape))
    return CheckResult(worst <= 1.0, worst, where, {"lower": lw, "upper": uw, "eps_h": eh})


def monotonicity_check(f: StreamField, slack=None) -> CheckResult:
    """psi non-decreasing in x along rows, for horizontally adjacent interior pairs."""
    slack = 1e-9 * f.jet.Q if slack is None else slack
    inn = f.grid.cls == INTERIOR
    pair = inn[:-1] & inn[1:]
    drop = np.where(pair, f.psi[:-1] - f.psi[1:], -np.inf)
    k = np.unravel_index(np.argmax(drop), drop.shape)
    worst = float(drop[k])
    bad = int(np.sum(drop > slack))
    return CheckResult(worst <= slack, worst, (int(k[0]), int(k[1])), {"violations": bad})
