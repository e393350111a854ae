"""Nozzle walls, the truncated domain and its node-classified grid.

Coordinates: ground at y = 0, orifice from A1 = (-1, H) to A2 = (1, H).
Wall i is a graph x = g_i(y) on [H, H_i) that runs off to x = -inf as
y -> H_i.  The truncated domain is cut by the vertical lines x = -mu
(upstream and left sheet) and x = +mu (right sheet).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.ndimage import binary_dilation
from scipy.optimize import brentq
from scipy.spatial import cKDTree

from .errors import (
    CrossingWalls,
    DomainError,
    NormalizationError,
    ResolutionTooCoarse,
    TruncationTooSmall,
)
from .flux_algebra import DownstreamState, JetParameters

INTERIOR, DIRICHLET, EXTERIOR = 0, 1, 2

# Segment ids.  Lower number wins at corners (N > L > sigma).
SEG_NONE = -1
SEG_GROUND, SEG_N1, SEG_N2, SEG_L1, SEG_L2, SEG_SIGMA1, SEG_SIGMA2, SEG_SIGMA = range(8)
SEGMENT_NAMES = ("N_mu", "N1_mu", "N2_mu", "L1_mu", "L2_mu", "sigma1_mu", "sigma2_mu", "sigma_mu")


def canonical_wall(i, H, Hi):
    """Test wall g_i(y) = (-1)^i - (y - H)^2 / (H_i - y)."""
    sign = -1.0 if i == 1 else 1.0

    def g(y):
        y = np.asarray(y, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = sign - (y - H) ** 2 / (Hi - y)
        return np.where(y < Hi, out, -np.inf)

    return g


@dataclass(frozen=True)
class NozzleGeometry:
    g1: Callable
    g2: Callable
    H: float
    H1: float
    H2: float
    kind: str = "canonical"
    samples: Optional[tuple] = None

    @property
    def A1(self):
        return (-1.0, self.H)

    @property
    def A2(self):
        return (1.0, self.H)


def _wall_from_samples(y, x, Hi):
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    if y.ndim != 1 or y.shape != x.shape or len(y) < 2:
        raise DomainError("wall samples need matching 1-D y and x arrays")
    if np.any(np.diff(y) <= 0):
        raise DomainError("wall samples must be strictly increasing in y")
    interp = PchipInterpolator(y, x, extrapolate=False)
    ytop = y[-1]

    def g(yy):
        yy = np.asarray(yy, dtype=float)
        out = interp(np.clip(yy, y[0], ytop))
        # above the last sample the wall is taken as already beyond any cut
        return np.where((yy > ytop) | (yy >= Hi), -np.inf, out)

    return g


def build_nozzle(H=1.0, H1=2.0, H2=3.0, walls=None, check_points=400) -> NozzleGeometry:
    """Canonical analytic nozzle, or walls from samples ``walls=((y1,x1),(y2,x2))``."""
    if not (0 < H < H1 < H2):
        raise DomainError(f"need 0 < H < H1 < H2, got {H}, {H1}, {H2}")
    if walls is None:
        g1, g2 = canonical_wall(1, H, H1), canonical_wall(2, H, H2)
        kind, samples = "canonical", None
    else:
        (y1, x1), (y2, x2) = walls
        g1 = _wall_from_samples(y1, x1, H1)
        g2 = _wall_from_samples(y2, x2, H2)
        kind = "samples"
        samples = tuple(tuple(map(float, a)) for a in (y1, x1, y2, x2))
        if abs(y1[0] - H) > 1e-12 or abs(y2[0] - H) > 1e-12:
            raise NormalizationError("wall samples must start at y = H")
    for i, g in ((1, g1), (2, g2)):
        if abs(float(g(H)) - (-1.0) ** i) > 1e-12:
            raise NormalizationError(f"g{i}(H) = {float(g(H))}, expected {(-1) ** i}")
    ys = np.linspace(H, H1, check_points, endpoint=False)
    a, b = g1(ys), g2(ys)
    fin = np.isfinite(a) & np.isfinite(b)
    if np.any(a[fin] >= b[fin]):
        raise CrossingWalls("wall 1 meets or crosses wall 2")
    return NozzleGeometry(g1, g2, float(H), float(H1), float(H2), kind, samples)


@dataclass(frozen=True)
class TruncatedDomain:
    mu: float
    H: float
    H1mu: float
    H2mu: float
    geom: Optional[NozzleGeometry]
    segments: dict = field(default_factory=dict)

    @classmethod
    def rectangle(cls, mu, H):
        """Closed box [-mu, mu] x [0, H] without a nozzle (testing only)."""
        segs = {
            "N_mu": np.array([[-mu, 0.0], [mu, 0.0]]),
            "sigma1_mu": np.array([[-mu, 0.0], [-mu, H]]),
            "sigma2_mu": np.array([[mu, 0.0], [mu, H]]),
            "L1_mu": np.array([[-mu, H], [0.0, H]]),
            "L2_mu": np.array([[0.0, H], [mu, H]]),
        }
        return cls(float(mu), float(H), float("nan"), float("nan"), None, segs)


def _cut_height(g, lo, hi, mu, which):
    """Heights y in (lo, hi) where g(y) = -mu; 'max' or 'min' of them."""
    ys = np.linspace(lo, hi, 4001)[1:-1]
    f = g(ys) + mu
    f = np.where(np.isfinite(f), f, -1.0)
    idx = np.nonzero(np.sign(f[:-1]) != np.sign(f[1:]))[0]
    roots = [brentq(lambda t: float(g(t)) + mu, ys[k], ys[k + 1], xtol=1e-15, rtol=1e-15)
             for k in idx]
    if not roots:
        return None
    return max(roots) if which == "max" else min(roots)


def truncate(geom: NozzleGeometry, mu) -> TruncatedDomain:
    if not mu > 1:
        raise TruncationTooSmall(f"need mu > 1, got {mu}")
    H1mu = _cut_height(geom.g1, geom.H, geom.H1, mu, "max")
    if H1mu is None:
        raise TruncationTooSmall(f"x = -{mu} does not meet wall 1")
    H2mu = _cut_height(geom.g2, H1mu, geom.H2, mu, "min")
    if H2mu is None:
        raise TruncationTooSmall(f"x = -{mu} does not meet wall 2 above H1mu")
    H = geom.H
    y1 = np.linspace(H, H1mu, 200)
    y2 = np.linspace(H, H2mu, 200)
    segs = {
        "N_mu": np.array([[-mu, 0.0], [mu, 0.0]]),
        "sigma1_mu": np.array([[-mu, 0.0], [-mu, H]]),
        "sigma2_mu": np.array([[mu, 0.0], [mu, H]]),
        "L1_mu": np.array([[-mu, H], [-1.0, H]]),
        "L2_mu": np.array([[1.0, H], [mu, H]]),
        "N1_mu": np.column_stack([geom.g1(y1), y1]),
        "N2_mu": np.column_stack([geom.g2(y2), y2]),
        "sigma_mu": np.array([[-mu, H1mu], [-mu, H2mu]]),
    }
    segs["N1_mu"][-1, 0] = -mu
    segs["N2_mu"][-1, 0] = -mu
    return TruncatedDomain(float(mu), H, float(H1mu), float(H2mu), geom, segs)


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Grid:
    dom: TruncatedDomain
    dx: float
    dy: float
    x: np.ndarray
    y: np.ndarray
    cls: np.ndarray
    seg: np.ndarray

    @property
    def shape(self):
        return self.cls.shape

    @property
    def X(self):
        return np.broadcast_to(self.x[:, None], self.shape)

    @property
    def Y(self):
        return np.broadcast_to(self.y[None, :], self.shape)

    @property
    def interior(self):
        return self.cls == INTERIOR

    @property
    def cell_ok(self):
        """Cells whose four corners are all non-exterior."""
        c = self.cls < EXTERIOR
        return c[:-1, :-1] & c[1:, :-1] & c[:-1, 1:] & c[1:, 1:]

    @property
    def j_H(self):
        return int(round(self.dom.H / self.dy))

    def check_connectivity(self):
        """True iff no interior node has an exterior 4-neighbour."""
        c = self.cls
        inner = c[1:-1, 1:-1] == INTERIOR
        bad = inner & ((c[:-2, 1:-1] == EXTERIOR) | (c[2:, 1:-1] == EXTERIOR)
                       | (c[1:-1, :-2] == EXTERIOR) | (c[1:-1, 2:] == EXTERIOR))
        edge = np.concatenate([c[0], c[-1], c[:, 0], c[:, -1]])
        return not bad.any() and not np.any(edge == INTERIOR)


def build_grid(dom: TruncatedDomain, dx, dy=None) -> Grid:
    """Cartesian grid over [-mu, mu] x [0, top] with node classes.

    Spacings are adjusted so that x = +-mu and y = H fall on grid lines.
    Dirichlet nodes are the non-interior nodes within one cell (8-neighbour)
    of an interior node.
    """
    dy = dx if dy is None else dy
    if not (dx > 0 and dy > 0):
        raise DomainError("dx and dy must be positive")
    if 2.0 / dx < 8 - 1e-9:
        raise ResolutionTooCoarse(f"orifice spans {2.0 / dx:g} < 8 cells")
    mu, H = dom.mu, dom.H
    nxc = int(round(2 * mu / dx))
    dx = 2 * mu / nxc
    jH = int(round(H / dy))
    dy = H / jH
    top = H if dom.geom is None else dom.H2mu
    ny = int(math.ceil(top / dy - 1e-9)) + 2 if dom.geom is not None else jH + 1
    x = -mu + dx * np.arange(nxc + 1)
    x[-1] = mu
    y = dy * np.arange(ny)
    X, Y = np.meshgrid(x, y, indexing="ij")
    tiny = 1e-9 * min(dx, dy)

    inside = (Y > tiny) & (Y < H - tiny) & (X > -mu + tiny) & (X < mu - tiny)
    if dom.geom is not None:
        G1, G2 = _walls_on(dom.geom, y)
        orifice = (np.abs(Y - H) <= tiny) & (np.abs(X) < 1 - tiny)
        nozzle = (Y > H + tiny) & (X > -mu + tiny) & (X > G1[None, :] + tiny) & (X < G2[None, :] - tiny)
        # nodes within half a cell of a wall carry the wall value (nearest-node snap)
        snap = np.full(X.shape, SEG_NONE, dtype=np.int8)
        cand = nozzle | orifice
        d1, d2 = _wall_distances(dom, X[cand], Y[cand], reach=0.5 * min(dx, dy))
        near = np.minimum(d1, d2) < 0.5 * min(dx, dy)
        sid = np.where(d1 <= d2, SEG_N1, SEG_N2).astype(np.int8)
        sub = snap[cand]
        sub[near] = sid[near]
        snap[cand] = sub
        nozzle &= snap == SEG_NONE
        orifice &= snap == SEG_NONE
        inside |= orifice | nozzle
    cls = np.full(X.shape, EXTERIOR, dtype=np.int8)
    cls[inside] = INTERIOR
    ring = binary_dilation(inside, structure=np.ones((3, 3), bool)) & ~inside
    cls[ring] = DIRICHLET
    seg = np.full(X.shape, SEG_NONE, dtype=np.int8)
    seg[ring] = _segment_of(X[ring], Y[ring], dom, tiny)
    if dom.geom is not None:
        m = ring & (snap != SEG_NONE)
        seg[m] = snap[m]
    return Grid(dom, float(dx), float(dy), _frozen(x), _frozen(y), _frozen(cls), _frozen(seg))


def _wall_distances(dom, X, Y, n=20001, reach=np.inf):
    """Euclidean distance from points to the truncated walls N1_mu and N2_mu (inf beyond ``reach``)."""
    geom = dom.geom
    out = []
    for g, top in ((geom.g1, dom.H1mu), (geom.g2, dom.H2mu)):
        ys = np.linspace(geom.H, top, n)
        xs = g(ys)
        xs[-1] = -dom.mu
        pts = np.column_stack([xs, ys])
        dist, _ = cKDTree(pts).query(np.column_stack([X, Y]), distance_upper_bound=reach)
        out.append(dist)
    return out


def _walls_on(geom, y):
    with np.errstate(all="ignore"):
        G1 = np.where(y < geom.H1, geom.g1(np.minimum(y, geom.H1)), -np.inf)
        G2 = np.where(y < geom.H2, geom.g2(np.minimum(y, geom.H2)), -np.inf)
    G1 = np.where(y >= geom.H, G1, np.nan)
    G2 = np.where(y >= geom.H, G2, np.nan)
    return G1, G2


def _segment_of(X, Y, dom, tiny):
    """Segment id for boundary-ring nodes (nearest segment, N > L > sigma)."""
    mu, H = dom.mu, dom.H
    out = np.full(X.shape, SEG_NONE, dtype=np.int8)
    low = Y <= H + tiny
    out[Y <= tiny] = SEG_GROUND
    rest = (out == SEG_NONE) & low
    atH = rest & (np.abs(Y - H) <= tiny)
    if dom.geom is None:
        out[atH & (X < 0)] = SEG_L1
        out[atH & (X >= 0)] = SEG_L2
    else:
        out[atH & (X <= -1 + tiny)] = SEG_L1
        out[atH & (X >= 1 - tiny)] = SEG_L2
    rest = (out == SEG_NONE) & low
    out[rest & (X <= -mu + tiny)] = SEG_SIGMA1
    out[rest & (X >= mu - tiny)] = SEG_SIGMA2
    if dom.geom is None:
        return out
    up = (out == SEG_NONE)
    G1, G2 = _walls_on(dom.geom, Y[up])
    xu = X[up]
    s = np.full(xu.shape, SEG_NONE, dtype=np.int8)
    s[xu <= G1 + tiny] = SEG_N1
    s[(s == SEG_NONE) & (xu >= G2 - tiny)] = SEG_N2
    s[(s == SEG_NONE) & (xu <= -mu + tiny)] = SEG_SIGMA
    out[up] = s
    return out


def boundary_data(grid: Grid, s: DownstreamState, jet: JetParameters) -> np.ndarray:
    """Node values of the truncated-problem boundary data on all nodes.

    Dirichlet nodes get their segment's value.  Exterior nodes get the value
    of the wall region they lie behind (irrelevant to the solve).
    """
    Q, g = jet.Q, jet.g
    X, Y = grid.X, grid.Y
    dom = grid.dom
    a1 = math.sqrt(max(2 * s.lam - 2 * g * s.h1, 0.0))
    a2 = math.sqrt(max(2 * s.lam - 2 * g * s.h2, 0.0))
    seg = grid.seg
    val = np.where(X < 0, 0.0, Q).astype(float)
    if dom.geom is not None:
        G1, _ = _walls_on(dom.geom, grid.y)
        above = Y > dom.H
        val = np.where(above & (X <= G1[None, :]), 0.0, np.where(above, Q, val))
    val[seg == SEG_GROUND] = s.Q1
    val[(seg == SEG_N1) | (seg == SEG_L1)] = 0.0
    val[(seg == SEG_N2) | (seg == SEG_L2)] = Q
    m = seg == SEG_SIGMA1
    val[m] = np.maximum(-a1 * Y[m] + s.Q1, 0.0)
    m = seg == SEG_SIGMA2
    val[m] = np.minimum(a2 * Y[m] + s.Q1, Q)
    m = seg == SEG_SIGMA
    if m.any():
        lo, hi = sigma_span(grid)
        val[m] = np.clip((Y[m] - lo) * Q / (hi - lo), 0.0, Q)
    return val


def sigma_span(grid: Grid):
    """End heights of the upstream cut as seen by the grid.

    The walls are snapped to the nearest node, so the linear profile on the
    cut runs between the nearest grid rows to H1mu and H2mu; this keeps the
    data continuous with the snapped wall values at both junctions.
    """
    dom = grid.dom
    return (round(dom.H1mu / grid.dy) * grid.dy, round(dom.H2mu / grid.dy) * grid.dy)


def barriers(grid: Grid, s: DownstreamState, jet: JetParameters):
    """Lower and upper barrier profiles (functions of y only) below y = H."""
    a1 = math.sqrt(max(2 * s.lam - 2 * jet.g * s.h1, 0.0))
    a2 = math.sqrt(max(2 * s.lam - 2 * jet.g * s.h2, 0.0))
    y = grid.y
    return np.maximum(-a1 * y + s.Q1, 0.0), np.minimum(a2 * y + s.Q1, jet.Q)
