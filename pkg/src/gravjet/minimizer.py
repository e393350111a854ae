"""Discrete minimisation of the truncated free-boundary functional.

    J(psi) = sum_cells |grad psi|^2 dA + sum_{cells in D} (2 lam - 2 g y_c) [cell wet] dA

Gradient energy of a cell is the trapezoidal (edge-averaged) integral of the
bilinear interpolant, the quadrature under which a per-node update reduces
to the 5-point neighbour average.  A cell is wet when its corner average is
strictly inside (0, Q) and at least one corner is strictly inside (0, Q).
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import RegularGridInterpolator
from scipy.sparse.linalg import spsolve

from . import _kernels
from .fronts import front_moves
from .flux_algebra import DownstreamState, JetParameters
from .geometry import INTERIOR, Grid, barriers, boundary_data


def penalty_weights(grid: Grid, lam, jet: JetParameters) -> np.ndarray:
    """Per-cell weight (2 lam - 2 g y_c) dx dy on cells of the strip 0 < y < H."""
    yc = 0.5 * (grid.y[:-1] + grid.y[1:])
    w = (2 * lam - 2 * jet.g * yc) * grid.dx * grid.dy
    inD = yc < grid.dom.H
    pen = np.where(inD[None, :] & grid.cell_ok, w[None, :], 0.0)
    return np.ascontiguousarray(pen)


@dataclass
class StreamField:
    grid: Grid
    psi: np.ndarray
    jet: JetParameters
    state: DownstreamState
    pen: np.ndarray = field(repr=False, default=None)
    n_sweeps: int = 0

    def __post_init__(self):
        if self.pen is None:
            self.pen = penalty_weights(self.grid, self.state.lam, self.jet)

    @property
    def params(self):
        return (self.state.lam, self.state.Q1, self.jet.Q, self.jet.g, self.grid.dom.H)

    @property
    def wet(self):
        return (self.psi > 0) & (self.psi < self.jet.Q) & (self.grid.cls == INTERIOR)

    @property
    def energy(self):
        return energy(self)

    def copy(self):
        return StreamField(self.grid, self.psi.copy(), self.jet, self.state, self.pen, self.n_sweeps)


def init_field(grid: Grid, state: DownstreamState, jet: JetParameters, values=None) -> StreamField:
    """Barrier-midpoint start below y = H, clamped linear profile above."""
    bd = boundary_data(grid, state, jet) if values is None else values
    lo, up = barriers(grid, state, jet)
    dom = grid.dom
    Y = grid.Y
    if np.isfinite(dom.H1mu):
        lin = np.clip((grid.y - dom.H1mu) * jet.Q / (dom.H2mu - dom.H1mu), 0.0, jet.Q)
    else:
        lin = np.full(grid.y.shape, 0.5 * jet.Q)
    prof = np.where(grid.y <= dom.H, 0.5 * (lo + up), lin)
    psi = np.broadcast_to(prof[None, :], grid.shape).copy()
    fixed = grid.cls != INTERIOR
    psi[fixed] = bd[fixed]
    del Y
    return StreamField(grid, psi, jet, state)


def _cell_views(psi):
    return psi[:-1, :-1], psi[1:, :-1], psi[:-1, 1:], psi[1:, 1:]


def gradient_energy_cells(psi, grid: Grid):
    a, b, c, d = _cell_views(psi)  # a=(i,j) b=(i+1,j) c=(i,j+1) d=(i+1,j+1)
    wx, wy = grid.dy / grid.dx, grid.dx / grid.dy
    e = 0.5 * wx * ((b - a) ** 2 + (d - c) ** 2) + 0.5 * wy * ((c - a) ** 2 + (d - b) ** 2)
    return np.where(grid.cell_ok, e, 0.0)


def wet_cells(psi, Q):
    a, b, c, d = _cell_views(psi)
    avg = 0.25 * (a + b + c + d)
    anyin = ((a > 0) & (a < Q)) | ((b > 0) & (b < Q)) | ((c > 0) & (c < Q)) | ((d > 0) & (d < Q))
    return (avg > 0) & (avg < Q) & anyin


def energy_of(psi, grid: Grid, pen, Q):
    return float(gradient_energy_cells(psi, grid).sum() + (pen * wet_cells(psi, Q)).sum())


def energy(f: StreamField) -> float:
    return energy_of(f.psi, f.grid, f.pen, f.jet.Q)


def _ramp(psi, e1, Q):
    return np.clip(np.minimum(psi, Q - psi) / e1, 0.0, 1.0)


def smoothed_energy(f: StreamField, eps) -> float:
    """Energy with the wet indicator replaced by the corner-max ramp."""
    Q = f.jet.Q
    e1 = min(eps, 0.5 * Q)
    r = _ramp(f.psi, e1, Q)
    a, b, c, d = _cell_views(r)
    m = np.maximum(np.maximum(a, b), np.maximum(c, d))
    return float(gradient_energy_cells(f.psi, f.grid).sum() + (f.pen * m).sum())


def _weights(grid):
    return grid.dy / grid.dx, grid.dx / grid.dy


def sweep(f: StreamField):
    """One exact coordinate-descent pass; returns (field, energy decrease, max update, ties)."""
    wx, wy = _weights(f.grid)
    dE, maxd, nties = _kernels.sweep_exact(f.psi, f.grid.cls, f.pen, wx, wy, f.jet.Q, f.n_sweeps % 2)
    f.n_sweeps += 1
    return f, dE, maxd, nties


def sweep_smoothed(f: StreamField, eps):
    wx, wy = _weights(f.grid)
    dE, maxd = _kernels.sweep_smooth(f.psi, f.grid.cls, f.pen, wx, wy, f.jet.Q, f.n_sweeps % 2, eps)
    f.n_sweeps += 1
    return f, dE, maxd


def harmonic_fill(psi, grid: Grid, free):
    """Solve the 5-point Laplace equation on ``free`` nodes, others held fixed."""
    idx = -np.ones(grid.shape, dtype=np.int64)
    fi, fj = np.nonzero(free)
    n = len(fi)
    if n == 0:
        return psi.copy()
    idx[fi, fj] = np.arange(n)
    wx, wy = _weights(grid)
    rows, cols, vals = [np.arange(n)], [np.arange(n)], [np.full(n, 2 * wx + 2 * wy)]
    rhs = np.zeros(n)
    for di, dj, w in ((-1, 0, wx), (1, 0, wx), (0, -1, wy), (0, 1, wy)):
        ni, nj = fi + di, fj + dj
        k = idx[ni, nj]
        inner = k >= 0
        rows.append(np.nonzero(inner)[0])
        cols.append(k[inner])
        vals.append(np.full(inner.sum(), -w))
        rhs[~inner] += w * psi[ni[~inner], nj[~inner]]
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    sol = spsolve(A, rhs)
    out = psi.copy()
    out[fi, fj] = np.clip(sol, 0.0, None)
    return out


def harmonic_projection(f: StreamField, eps=None):
    """Replace psi on its strictly wet (or ramp-saturated) interior nodes by the
    discrete harmonic fill; accepted only if the active energy does not rise.

    Returns the energy decrease (0 when rejected).
    """
    Q = f.jet.Q
    interior = f.grid.cls == INTERIOR
    if eps is None:
        free = interior & (f.psi > 0) & (f.psi < Q)
        e0 = energy(f)
    else:
        e1 = min(eps, 0.5 * Q)
        free = interior & (f.psi >= e1) & (f.psi <= Q - e1)
        e0 = smoothed_energy(f, eps)
    new = np.minimum(harmonic_fill(f.psi, f.grid, free), Q)
    old = f.psi
    f.psi = new
    e1_ = energy(f) if eps is None else smoothed_energy(f, eps)
    if e1_ > e0 * (1 - 1e-15) + 0.0:
        f.psi = old
        return 0.0
    return e0 - e1_


@dataclass(frozen=True)
class SolveConfig:
    tol: float = 1e-10
    max_sweeps: Optional[int] = None
    # ramp widths of the smoothed pre-pass, in units of sqrt(2 lam) * dx
    smooth_widths: tuple = (2.0, 1.0)
    smooth_tol: float = 1e-8
    smooth_max_sweeps: int = 4000
    project_every: int = 40
    smooth_project: bool = True
    exact_project: bool = True
    front_moves: bool = True
    move_rounds: int = 200
    # rejected terrace runs at least this long are retried shortened; 0 disables.
    # Off by default: it can lower J by thinning a flat sheet one row below its
    # algebraic height, at several times the solve cost.
    move_trim: int = 0


@dataclass
class SolveDiagnostics:
    sweeps: int = 0
    energy: float = float("nan")
    max_update: float = float("nan")
    converged: bool = False
    near_ties: int = 0
    exact_trace: list = field(default_factory=list)
    smooth_trace: list = field(default_factory=list)
    projections: int = 0
    moves_accepted: int = 0
    moves_tried: int = 0
    seconds: float = 0.0

    @property
    def monotone(self):
        e = np.asarray([t[1] for t in self.exact_trace])
        if len(e) < 2:
            return True
        return bool(np.all(e[1:] <= e[:-1] + 1e-12 * np.abs(e[:-1])))


def default_max_sweeps(grid: Grid):
    return int(50 * math.sqrt(grid.shape[0] * grid.shape[1]))


def solve(f: StreamField, tol=None, max_sweeps=None, config: SolveConfig = SolveConfig()):
    """Minimise J from the current field.

    A smoothed pre-pass (ramp penalty of shrinking width, each sweep exact
    and energy-decreasing for its own smoothed functional) lets fronts move
    across cells, which the exact indicator blocks.  The exact stage then
    sweeps until the per-sweep relative decrease of J is below ``tol``.
    Harmonic projections on the current wet set are interleaved in both
    stages and accepted only when they lower the active energy.
    """
    t0 = time.perf_counter()
    tol = config.tol if tol is None else tol
    budget = config.max_sweeps if max_sweeps is None else max_sweeps
    budget = default_max_sweeps(f.grid) if budget is None else budget
    d = SolveDiagnostics()
    slope = math.sqrt(2 * f.state.lam) * min(f.grid.dx, f.grid.dy)
    used = 0
    for width in config.smooth_widths:
        eps = width * slope
        e_prev = smoothed_energy(f, eps)
        for k in range(min(config.smooth_max_sweeps, budget - used)):
            _, _, maxd = sweep_smoothed(f, eps)
            used += 1
            e = smoothed_energy(f, eps)
            d.smooth_trace.append((eps, e))
            if config.smooth_project and config.project_every and (k + 1) % config.project_every == 0:
                if harmonic_projection(f, eps) > 0:
                    d.projections += 1
                e = smoothed_energy(f, eps)
            if e_prev - e <= config.smooth_tol * abs(e_prev):
                break
            e_prev = e
    e_prev = energy(f)
    d.exact_trace.append(("start", e_prev))
    k = 0
    rounds = 0
    seen = set()
    while used < budget:
        _, dE, maxd, nties = sweep(f)
        used += 1
        k += 1
        e = energy(f)
        d.exact_trace.append(("sweep", e))
        d.max_update, d.near_ties = maxd, nties
        if e_prev - e <= tol * abs(e_prev):
            if not config.front_moves or rounds >= config.move_rounds:
                d.converged = True
                break
            rounds += 1
            acc, tried, _ = front_moves(f, seen=seen, trim=config.move_trim)
            d.moves_accepted += acc
            d.moves_tried += tried
            if acc == 0:
                d.converged = True
                break
            if harmonic_projection(f) > 0:
                d.projections += 1
            e = energy(f)
            d.exact_trace.append(("moves", e))
        e_prev = e
        if config.exact_project and config.project_every and k % config.project_every == 0:
            if harmonic_projection(f) > 0:
                d.projections += 1
                e_prev = energy(f)
                d.exact_trace.append(("projection", e_prev))
    d.sweeps = used
    d.energy = energy(f)
    d.seconds = time.perf_counter() - t0
    return f, d


def reseed(src: StreamField, grid: Grid, state: DownstreamState, jet: JetParameters) -> StreamField:
    """Start field on ``grid`` for ``state`` from a converged field (any grid).

    Interior values are interpolated bilinearly, clipped to [0, Q];
    boundary nodes take the new boundary data.
    """
    bd = boundary_data(grid, state, jet)
    if src.grid is grid or (src.grid.shape == grid.shape and np.array_equal(src.grid.cls, grid.cls)
                            and src.grid.dx == grid.dx and src.grid.dy == grid.dy):
        psi = src.psi.copy()
    else:
        it = RegularGridInterpolator((src.grid.x, src.grid.y), src.psi, bounds_error=False, fill_value=None)
        X, Y = np.meshgrid(grid.x, grid.y, indexing="ij")
        psi = it(np.column_stack([X.ravel(), Y.ravel()])).reshape(grid.shape)
    psi = np.clip(psi, 0.0, jet.Q)
    fixed = grid.cls != INTERIOR
    psi[fixed] = bd[fixed]
    return StreamField(grid, psi, jet, state)


@dataclass(frozen=True)
class CascadeConfig:
    """Coarse-to-fine solve: each level starts from the previous one.

    Levels run at dx * 2^k for every k with dx * 2^k <= coarsest.  The
    coarsest level uses a wide smoothed pre-pass, middle levels a narrow
    one, the target level exact sweeps only (so its energy never rises).
    """
    coarsest: float = 1 / 16
    coarse_widths: tuple = (8.0, 4.0, 2.0, 1.0)
    mid_widths: tuple = (2.0, 1.0)
    fine_widths: tuple = ()
    base: SolveConfig = SolveConfig()


class Cascade:
    """Grid ladder for one truncated domain, reused across parameter points."""

    def __init__(self, dom, jet: JetParameters, dx, dy=None, config: CascadeConfig = CascadeConfig()):
        from .geometry import build_grid
        dy = dx if dy is None else dy
        self.dom, self.jet, self.config = dom, jet, config
        n = 0
        while max(dx, dy) * 2 ** (n + 1) <= config.coarsest * (1 + 1e-9):
            n += 1
        self.grids = [build_grid(dom, dx * 2 ** k, dy * 2 ** k) for k in range(n, -1, -1)]

    @property
    def fine(self) -> Grid:
        return self.grids[-1]

    def _widths(self, level):
        c = self.config
        if level == len(self.grids) - 1:
            return c.fine_widths
        return c.coarse_widths if level == 0 else c.mid_widths

    def solve(self, state: DownstreamState, start: Optional[StreamField] = None):
        """Solve at ``state`` on every level; returns (fine field, per-level diagnostics)."""
        diags = []
        f = start
        for level, g in enumerate(self.grids):
            f = init_field(g, state, self.jet) if f is None else reseed(f, g, state, self.jet)
            cfg = replace(self.config.base, smooth_widths=self._widths(level))
            f, d = solve(f, config=cfg)
            diags.append(d)
        return f, diags


def discrete_laplacian(f: StreamField):
    """5-point Laplacian at nodes whose 3x3 neighbourhood is interior and wet."""
    p, g = f.psi, f.grid
    lap = np.full(g.shape, np.nan)
    lap[1:-1, 1:-1] = ((p[:-2, 1:-1] - 2 * p[1:-1, 1:-1] + p[2:, 1:-1]) / g.dx**2
                       + (p[1:-1, :-2] - 2 * p[1:-1, 1:-1] + p[1:-1, 2:]) / g.dy**2)
    ok = f.wet
    from scipy.ndimage import binary_erosion
    ok = binary_erosion(ok, structure=np.ones((3, 3), bool))
    return np.where(ok, lap, np.nan)
