"""Velocity, pressure, the interface {psi = Q1} and checks of the solution structure."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.ndimage import distance_transform_edt

from .errors import NonGraph, WindowEmpty
from .flux_algebra import AsymptoticState, asymptotic_states
from .freeboundary import (FreeBoundarySet, barrier_check, extract_boundaries, gradient_residual,
                           monotonicity_check)
from .geometry import DIRICHLET, EXTERIOR, INTERIOR
from .minimizer import StreamField

NOVALUE = np.nan


@dataclass
class FlowFields:
    u: np.ndarray
    v: np.ndarray
    p: Optional[np.ndarray]
    wet: np.ndarray
    grid: object = field(repr=False, default=None)

    @property
    def speed2(self):
        return self.u ** 2 + self.v ** 2


def _derivative(psi, ok, h, axis):
    """d psi / d axis: central where both neighbours exist, else one-sided 2nd order.

    Falls back to first order with a single neighbour; NaN where ``ok`` is
    false or no neighbour is available.
    """
    p = np.moveaxis(psi, axis, 0)
    m = np.moveaxis(ok, axis, 0)
    n = p.shape[0]
    out = np.full(p.shape, np.nan)

    def sh(a, k, fill):
        # sh(a, k)[i] = a[i + k]
        r = np.full_like(a, fill)
        if k > 0:
            r[:n - k] = a[k:]
        else:
            r[-k:] = a[:n + k]
        return r

    pp1, pm1, pp2, pm2 = sh(p, 1, 0.0), sh(p, -1, 0.0), sh(p, 2, 0.0), sh(p, -2, 0.0)
    mp1, mm1, mp2, mm2 = sh(m, 1, False), sh(m, -1, False), sh(m, 2, False), sh(m, -2, False)
    central = m & mp1 & mm1
    fwd2 = m & ~central & mp1 & mp2
    bwd2 = m & ~central & ~fwd2 & mm1 & mm2
    fwd1 = m & ~central & ~fwd2 & ~bwd2 & mp1
    bwd1 = m & ~central & ~fwd2 & ~bwd2 & ~fwd1 & mm1
    out[central] = ((pp1 - pm1) / (2 * h))[central]
    out[fwd2] = ((-3 * p + 4 * pp1 - pp2) / (2 * h))[fwd2]
    out[bwd2] = ((3 * p - 4 * pm1 + pm2) / (2 * h))[bwd2]
    out[fwd1] = ((pp1 - p) / h)[fwd1]
    out[bwd1] = ((p - pm1) / h)[bwd1]
    return np.moveaxis(out, 0, axis)


def velocity(f: StreamField) -> FlowFields:
    """u = d psi/dy, v = -d psi/dx on non-exterior nodes; NaN on exterior nodes."""
    g = f.grid
    ok = g.cls != EXTERIOR
    u = _derivative(f.psi, ok, g.dy, 1)
    v = -_derivative(f.psi, ok, g.dx, 0)
    return FlowFields(u, v, None, f.wet, g)


def pressure(ff: FlowFields, f: StreamField, p_atm=None) -> FlowFields:
    """Bernoulli pressure p_atm + lam - |grad psi|^2 / 2 - g y at wet nodes (NaN elsewhere)."""
    p_atm = f.jet.p_atm if p_atm is None else p_atm
    Y = f.grid.Y
    p = p_atm + f.state.lam - 0.5 * ff.speed2 - f.jet.g * Y
    ff.p = np.where(ff.wet, p, NOVALUE)
    return ff


def flow_fields(f: StreamField, p_atm=None) -> FlowFields:
    return pressure(velocity(f), f, p_atm)


# -- interface -----------------------------------------------------------------

@dataclass
class Interface:
    k: np.ndarray          # (n, 2) rows of (y, x)
    S: tuple
    slope0: float
    H3: float
    window: int = 5


def h3_formula(Q1, Q, H1, H2):
    return Q1 * (H2 - H1) / Q + H1


def interface(f: StreamField, Q1=None, window=5) -> Interface:
    """Level set psi = Q1 as a graph x = k(y), one crossing per row.

    Rows are scanned over their non-exterior nodes above the ground; S is
    k extrapolated to the ground by the least-squares line through the
    lowest ``window`` rows, whose slope dk/dy is slope0.
    """
    g = f.grid
    Q1 = f.state.Q1 if Q1 is None else Q1
    ok = g.cls != EXTERIOR
    pts, bad = [], []
    for j in range(1, g.shape[1]):
        idx = np.nonzero(ok[:, j])[0]
        if len(idx) < 2:
            continue
        row = f.psi[idx, j]
        above = row >= Q1
        ch = np.nonzero(above[1:] != above[:-1])[0]
        # a crossing must lie between adjacent grid nodes of the row
        ch = ch[idx[ch + 1] - idx[ch] == 1]
        if len(ch) > 1:
            bad.append(j)
            continue
        if len(ch) == 1:
            k = ch[0]
            a, b = row[k], row[k + 1]
            x = g.x[idx[k]] + (Q1 - a) / (b - a) * g.dx
            pts.append((g.y[j], x))
    if bad:
        raise NonGraph(f"interface crosses rows {bad[:10]} more than once", rows=bad)
    k = np.array(pts, dtype=float).reshape(-1, 2)
    jet = f.jet
    H3 = h3_formula(Q1, jet.Q, jet.H1, jet.H2)
    if len(k) >= 2:
        low = k[:window]
        A = np.column_stack([low[:, 0], np.ones(len(low))])
        (slope, x0), *_ = np.linalg.lstsq(A, low[:, 1], rcond=None)
    else:
        slope, x0 = float("nan"), float("nan")
    return Interface(k, (float(x0), 0.0), float(slope), float(H3), window)


def stagnation_check(f: StreamField, ff: FlowFields, itf: Interface, tie=1e-6):
    """Ground-adjacent wet row: is the node nearest S the minimiser of |u| + |v|?"""
    g = f.grid
    j = 1
    m = ff.wet[:, j]
    s = np.abs(ff.u[:, j]) + np.abs(ff.v[:, j])
    s = np.where(m, s, np.inf)
    order = np.argsort(s)
    i_min = int(order[0])
    i_S = int(np.argmin(np.where(m, np.abs(g.x - itf.S[0]), np.inf)))
    ties = [int(i) for i in order[1:] if np.isfinite(s[i]) and s[i] - s[i_min] <= tie]
    return {"i_min": i_min, "i_nearest_S": i_S, "x_min": float(g.x[i_min]),
            "passed": abs(i_min - i_S) <= 1, "near_ties": ties}


# -- asymptotics ---------------------------------------------------------------

@dataclass
class WindowReport:
    region: str
    u_inf: float
    n: int
    du: float
    dv: float
    dp: float
    grad_uv: float
    grad_p: float

    def as_dict(self):
        return dict(self.__dict__)


def _window_mask(f: StreamField, st: AsymptoticState, window, band):
    g = f.grid
    mu = g.dom.mu
    lo, hi = st.band
    pad = 0.5 * (1 - band) * (hi - lo)
    yin = (g.y >= lo + pad) & (g.y <= hi - pad)
    span = window * 2 * mu
    if st.region == "right_downstream":
        xin = g.x >= mu - span
    else:
        xin = g.x <= -mu + span
    return xin[:, None] & yin[None, :] & f.wet


def asymptotic_check(ff: FlowFields, f: StreamField, states=None, window=0.2, band=0.6):
    """Sup deviations of (u, v, p) from the uniform far-field states.

    Each window is the outer ``window`` fraction of [-mu, mu] on the state's
    side, restricted to the middle ``band`` fraction of its vertical band and
    to wet nodes.  Raises WindowEmpty when a window holds no node.
    """
    if states is None:
        states = asymptotic_states(f.state, f.jet)
    g = f.grid
    gx_u, gy_u = np.gradient(ff.u, g.dx, g.dy)
    gx_v, gy_v = np.gradient(ff.v, g.dx, g.dy)
    p = ff.p
    gx_p, gy_p = np.gradient(p, g.dx, g.dy)
    out = {}
    for st in states:
        m = _window_mask(f, st, window, band)
        if not m.any():
            raise WindowEmpty(f"no wet node in the {st.region} window")
        Y = g.Y[m]
        du = np.nanmax(np.abs(ff.u[m] - st.u_inf))
        dv = np.nanmax(np.abs(ff.v[m]))
        dp = np.nanmax(np.abs(p[m] - st.pressure(Y)))
        guv = np.nanmax(np.sqrt(gx_u[m] ** 2 + gy_u[m] ** 2 + gx_v[m] ** 2 + gy_v[m] ** 2))
        gp = np.nanmax(np.hypot(gx_p[m], gy_p[m] + f.jet.g))
        out[st.region] = WindowReport(st.region, st.u_inf, int(m.sum()), float(du), float(dv),
                                      float(dp), float(guv), float(gp))
    return out


# -- aggregate report ------------------------------------------------------------

@dataclass
class CheckItem:
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: dict = field(default_factory=dict)
    # informational items are reported but do not decide the overall verdict
    informational: bool = False

    def as_dict(self):
        return {"name": self.name, "passed": bool(self.passed), "value": self.value,
                "tolerance": self.tolerance, "informational": self.informational,
                "detail": self.detail}


@dataclass
class VerificationReport:
    items: list

    @property
    def passed(self):
        return all(i.passed for i in self.items if not i.informational)

    @property
    def failed(self):
        return [i.name for i in self.items if not i.passed and not i.informational]

    @property
    def failed_informational(self):
        return [i.name for i in self.items if not i.passed and i.informational]

    def __getitem__(self, name):
        for i in self.items:
            if i.name == name:
                return i
        raise KeyError(name)

    def as_dict(self):
        return {"passed": self.passed, "failed": self.failed, "items": [i.as_dict() for i in self.items]}


@dataclass(frozen=True)
class VerifyConfig:
    tau: Optional[float] = None          # continuous-fit tolerance, default 2 max(dx, dy)
    residual_band: tuple = (0.85, 1.15)
    slope0_max: float = 0.15
    asym_u_rel: float = 0.05
    asym_p_gH: float = 0.05
    asym_height_dy: float = 3.0
    far_cells: float = 3.0
    bernoulli_rel: float = 0.10
    window: float = 0.2
    band: float = 0.6
    slope_window: int = 5


def _to_builtin(x):
    if isinstance(x, (np.floating, np.integer)):
        x = x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def verify_all(f: StreamField, config: VerifyConfig = VerifyConfig(), fb: FreeBoundarySet = None):
    """Run every check on a converged field; each item carries pass/fail."""
    g = f.grid
    jet, s = f.jet, f.state
    Q = jet.Q
    h = max(g.dx, g.dy)
    tau = 2 * h if config.tau is None else config.tau
    items = []

    def add(name, passed, value, tol, info=False, **detail):
        items.append(CheckItem(name, bool(passed), float(value), float(tol),
                               {k: _to_builtin(v) for k, v in detail.items()}, info))

    try:
        fb = extract_boundaries(f, allow_empty=True) if fb is None else fb
    except NonGraph as e:
        fb = None
        add("free_boundary_graph", False, len(e.rows), 0, rows=list(e.rows[:20]))
    if fb is not None:
        add("free_boundary_graph", True, 0, 0)
        F1, F2 = fb.detach1 + 1, fb.detach2 - 1
        add("continuous_fit", abs(F1) <= tau and abs(F2) <= tau, max(abs(F1), abs(F2)), tau,
            k1H=fb.detach1, k2H=fb.detach2, F1=F1, F2=F2)
    ff = flow_fields(f)

    # v < 0 away from S and from every boundary node
    itf = None
    try:
        itf = interface(f, window=config.slope_window)
    except NonGraph as e:
        add("interface_graph", False, len(e.rows), 0, rows=list(e.rows[:20]))
    if itf is not None:
        add("interface_graph", True, 0, 0, rows=len(itf.k))
        add("interface_H3", abs(itf.H3 - h3_formula(s.Q1, Q, jet.H1, jet.H2)) <= 1e-12, itf.H3, 1e-12)
        add("interface_slope0", abs(itf.slope0) <= config.slope0_max, abs(itf.slope0), config.slope0_max,
            S_x=itf.S[0])
        st = stagnation_check(f, ff, itf)
        add("stagnation_point", st["passed"], st["x_min"], g.dx, info=True, i_min=st["i_min"],
            i_nearest_S=st["i_nearest_S"], near_ties=st["near_ties"])
    wall = g.cls != INTERIOR
    dist = distance_transform_edt(~wall, sampling=(g.dx, g.dy))
    far = ff.wet & (dist > config.far_cells * h)
    if itf is not None and math.isfinite(itf.S[0]):
        far &= np.hypot(g.X - itf.S[0], g.Y) > config.far_cells * h
    vmax = float(np.nanmax(np.where(far, ff.v, -np.inf))) if far.any() else float("nan")
    n_bad = int(np.sum(far & ~(ff.v < 0)))
    add("v_negative", far.any() and n_bad == 0, vmax, 0.0, violations=n_bad, checked=int(far.sum()))

    bc = barrier_check(f)
    add("barrier", bc.passed, bc.worst, 1.0, **bc.detail)
    mc = monotonicity_check(f)
    add("monotonicity", mc.passed, mc.worst, 1e-9 * Q, where=list(mc.where), **mc.detail)

    if fb is not None:
        rs = gradient_residual(f, fb)
        lo, hi = config.residual_band
        add("gradient_residual", lo <= rs.median <= hi, rs.median, hi - 1, **rs.as_dict())
        # p - p_atm = (lam - g y)(1 - r) on the boundary samples
        ys = rs.points[:, 1] if len(rs.points) else np.zeros(0)
        dp = (s.lam - jet.g * ys) * (1 - rs.r) if len(rs.r) else np.zeros(0)
        med = float(np.median(np.abs(dp))) if len(dp) else float("nan")
        med_r = rs.median
        add("boundary_pressure", lo <= med_r <= hi, med, (hi - 1) * s.lam, median_r=med_r)
        bern = 0.5 * rs.r * (2 * s.lam - 2 * jet.g * ys) + jet.g * ys if len(ys) else np.zeros(0)
        worst = 0.0
        for which in (1, 2):
            b = bern[rs.points[:, 2] == which] if len(ys) else bern
            if len(b):
                worst = max(worst, float(np.percentile(b, 95) - np.percentile(b, 5)) / s.lam)
        add("bernoulli_constancy", len(ys) > 0 and worst <= config.bernoulli_rel, worst,
            config.bernoulli_rel, info=True)
        q_floor = 2 * s.lam - 2 * jet.g * jet.H
        g2 = rs.r * (2 * s.lam - 2 * jet.g * ys) if len(ys) else np.zeros(0)
        gmin = float(g2.min()) if len(g2) else float("nan")
        # |grad psi|^2 >= (2 lam - 2 g H) less the residual-band slack
        floor = lo * q_floor
        add("no_boundary_stagnation", len(g2) > 0 and gmin >= floor > 0, gmin, floor, info=True)

    # asymptotics
    try:
        rep = asymptotic_check(ff, f, window=config.window, band=config.band)
    except WindowEmpty as e:
        rep = None
        add("asymptotics", False, float("nan"), 0, error=str(e))
    if rep is not None:
        for name, w in rep.items():
            tol = config.asym_u_rel * abs(w.u_inf)
            add(f"asymptotic_u_{name}", w.du <= tol, w.du, tol, **w.as_dict())
            tol_p = config.asym_p_gH * jet.g * jet.H
            add(f"asymptotic_p_{name}", w.dp <= tol_p, w.dp, tol_p)
    if fb is not None:
        for which, a, hh in ((1, fb.asymptote1, s.h1), (2, fb.asymptote2, s.h2)):
            tol = config.asym_height_dy * g.dy
            d = abs(a - hh) if math.isfinite(a) else float("inf")
            add(f"asymptote_height_{which}", d <= tol, d, tol, measured=a, algebraic=hh)

    # flux bookkeeping
    lo_, hi_ = float(f.psi[g.cls != EXTERIOR].min()), float(f.psi[g.cls != EXTERIOR].max())
    ground = f.psi[(g.cls == DIRICHLET) & (g.Y == 0)]
    gdev = float(np.max(np.abs(ground - s.Q1))) if len(ground) else float("nan")
    fl = flux_consistency(f, ff)
    add("flux_bookkeeping", lo_ >= 0 and hi_ <= Q and gdev <= 1e-12 * Q and fl["worst"] <= fl["tol"],
        max(gdev, fl["worst"]), fl["tol"], psi_min=lo_, psi_max=hi_, Q1=s.Q1, Q2=Q - s.Q1,
        ground_dev=gdev, quadrature_dev=fl["worst"], quadrature_tol=fl["tol"])
    return VerificationReport(items)


def flux_consistency(f: StreamField, ff: FlowFields, every=8):
    """Trapezoid integral of u along vertical runs of wet nodes versus the psi difference.

    Tolerance: second-order quadrature error dy^2 (max|u_y| + L max|u_yy| / 12)
    with the derivatives of u taken from the run itself (the first term
    covers the end corrections of differenced u).
    """
    g = f.grid
    worst, tol = 0.0, 0.0
    for i in range(1, g.shape[0] - 1, every):
        w = ff.wet[i] & np.isfinite(ff.u[i])
        for s_, e_ in _runs(w):
            if e_ - s_ < 5:
                continue
            u = ff.u[i, s_:e_]
            integral = g.dy * (u.sum() - 0.5 * (u[0] + u[-1]))
            dpsi = f.psi[i, e_ - 1] - f.psi[i, s_]
            worst = max(worst, abs(integral - dpsi))
            d1 = np.abs(np.diff(u)).max() / g.dy
            d2 = np.abs(np.diff(u, 2)).max() / g.dy**2
            L = (e_ - s_ - 1) * g.dy
            tol = max(tol, g.dy**2 * (d1 + L * d2 / 12) + 1e-12 * f.jet.Q)
    return {"worst": worst, "tol": tol if tol > 0 else 1e-12 * f.jet.Q}


def _runs(flags):
    d = np.diff(np.concatenate([[0], flags.astype(np.int8), [0]]))
    return list(zip(np.nonzero(d == 1)[0], np.nonzero(d == -1)[0]))
