"""Search for (lambda, Q1) giving continuous fit k1(H) = -1, k2(H) = +1.

Width W = k2(H) - k1(H) shrinks as lambda grows; centre C = (k1(H) + k2(H))/2
moves left as Q1 grows.  The fit bisects lambda on W - 2 (outer loop) and,
for each lambda probe, Q1 on C (inner loop).  Both monotonicities are
checked on every probe; a violation switches to a grid search over the
current bracket rectangle followed by a fresh local bisection.
"""
from __future__ import annotations

import csv
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import BudgetExhausted, GravjetError, NoBracket, NotConverged, ParamError
from .flux_algebra import DownstreamState, JetParameters, lambda_min, validate_params
from .freeboundary import extract_boundaries
from .geometry import NozzleGeometry, build_nozzle, truncate
from .minimizer import Cascade, CascadeConfig, StreamField

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FitProblem:
    jet: JetParameters
    geometry: Optional[NozzleGeometry] = None
    mu: float = 6.0
    dx: float = 1 / 64
    dy: Optional[float] = None
    tau: Optional[float] = None
    lam_lo: Optional[float] = None
    lam_hi: Optional[float] = None
    q_lo: Optional[float] = None
    q_hi: Optional[float] = None
    budget: int = 60
    cascade: CascadeConfig = CascadeConfig()

    @property
    def spacing(self):
        return self.dx, (self.dx if self.dy is None else self.dy)

    @property
    def tolerance(self):
        return 2 * max(self.spacing) if self.tau is None else self.tau

    def brackets(self):
        """(lam_lo, lam_hi, q_lo, q_hi) with defaults filled in."""
        j = self.jet
        lo = lambda_min(j.Q / 2, j.Q, j.H, j.g) * (1 + 1e-6) if self.lam_lo is None else self.lam_lo
        hi = 20 * lo if self.lam_hi is None else self.lam_hi
        qlo = 0.02 * j.Q if self.q_lo is None else self.q_lo
        qhi = 0.98 * j.Q if self.q_hi is None else self.q_hi
        return float(lo), float(hi), float(qlo), float(qhi)

    def validate(self):
        validate_params(self.jet)
        if self.tolerance < 2 * max(self.spacing) * (1 - 1e-12):
            raise ParamError(f"tau={self.tolerance} is tighter than 2*max(dx, dy)")
        lo, hi, qlo, qhi = self.brackets()
        if not (lo < hi and 0 < qlo < qhi < self.jet.Q):
            raise ParamError(f"bad brackets lambda [{lo}, {hi}], Q1 [{qlo}, {qhi}]")
        if self.budget < 3:
            raise ParamError("budget must allow at least 3 solves")
        return self


@dataclass
class Probe:
    lam: float
    q1: float
    k1: float
    k2: float
    energy: float
    sweeps: int
    seconds: float
    flags: tuple = ()
    levels: tuple = field(default=(), repr=False)   # SolveDiagnostics per cascade level

    @property
    def F1(self):
        return self.k1 + 1.0

    @property
    def F2(self):
        return self.k2 - 1.0

    @property
    def width(self):
        return self.k2 - self.k1

    @property
    def centre(self):
        return 0.5 * (self.k1 + self.k2)

    @property
    def misfit(self):
        return max(abs(self.F1), abs(self.F2))


@dataclass
class FitResult:
    lambda_star: float
    q1_star: float
    k1: float
    k2: float
    F1: float
    F2: float
    solves: int
    converged: bool
    final_field: Optional[StreamField] = None
    trace: list = field(default_factory=list)
    fallback_used: bool = False
    warnings: list = field(default_factory=list)
    seconds: float = 0.0

    def as_dict(self):
        return {"lambda_star": self.lambda_star, "q1_star": self.q1_star,
                "k1H": self.k1, "k2H": self.k2, "F1": self.F1, "F2": self.F2,
                "solves": self.solves, "converged": self.converged,
                "fallback_used": self.fallback_used, "warnings": list(self.warnings),
                "seconds": self.seconds}


class Detacher:
    """Detachment abscissas (k1(H), k2(H)) at parameter points, with warm starts.

    Converged fields are kept per (lambda, Q1); each new solve starts from the
    nearest cached one.  A boundary that never reaches y = H inside the
    truncation is reported at the truncation side it exits through (+-mu).
    """

    def __init__(self, problem: FitProblem, keep=8):
        self.problem = problem
        geom = problem.geometry or build_nozzle(problem.jet.H, problem.jet.H1, problem.jet.H2)
        self.dom = truncate(geom, problem.mu)
        dx, dy = problem.spacing
        self.cascade = Cascade(self.dom, problem.jet, dx, dy, problem.cascade)
        self.fields = {}
        self.keep = keep
        self.solves = 0
        self.probes = []

    def _nearest(self, lam, q1):
        if not self.fields:
            return None
        Q = self.problem.jet.Q
        key = min(self.fields, key=lambda k: ((k[0] - lam) / lam) ** 2 + ((k[1] - q1) / Q) ** 2)
        return self.fields[key]

    def field_at(self, lam, q1):
        """Converged field at (lambda, Q1), solving if not cached."""
        key = (float(lam), float(q1))
        if key not in self.fields:
            self.evaluate(lam, q1)
        return self.fields[key]

    def evaluate(self, lam, q1, strict=False) -> Probe:
        """Run one full (multilevel) solve; ``strict`` propagates extraction errors."""
        jet = self.problem.jet
        state = DownstreamState.from_params(lam, q1, jet)
        t0 = time.perf_counter()
        f, diags = self.cascade.solve(state, start=self._nearest(lam, q1))
        self.solves += 1
        d = diags[-1]
        if not d.converged:
            raise NotConverged(f"solve at lambda={lam}, Q1={q1} hit its sweep budget", d)
        fb = extract_boundaries(f, allow_empty=not strict)
        mu = self.dom.mu
        k1 = max(fb.detach1, -mu)
        k2 = min(fb.detach2, mu)
        key = (float(lam), float(q1))
        self.fields[key] = f
        if len(self.fields) > self.keep:
            self.fields.pop(next(iter(self.fields)))
        p = Probe(float(lam), float(q1), float(k1), float(k2), d.energy,
                  sum(x.sweeps for x in diags), time.perf_counter() - t0, tuple(fb.flags),
                  tuple(diags))
        self.probes.append(p)
        log.info("probe lambda=%.10g Q1=%.10g -> k1H=%.6f k2H=%.6f (%.1fs)", lam, q1, k1, k2, p.seconds)
        return p


def detachment(lam, q1, problem: FitProblem, detacher: Optional[Detacher] = None):
    """(k1(H), k2(H)) of the truncated solution at (lambda, Q1)."""
    det = detacher or Detacher(problem)
    p = det.evaluate(lam, q1, strict=True)
    return p.k1, p.k2


def feasible_q1(lam, jet: JetParameters, q_lo, q_hi):
    """Q1 interval on which lambda >= lambda_min(Q1)."""
    r = jet.H * math.sqrt(max(2 * (lam - jet.g * jet.H), 0.0))
    return max(q_lo, jet.Q - r), min(q_hi, r)


class _Budget(Exception):
    pass


class _Monotonicity(Exception):
    pass


class _Fitter:
    def __init__(self, problem: FitProblem, det: Detacher):
        self.pb = problem
        self.det = det
        self.tau = problem.tolerance
        self.slack = 2 * max(problem.spacing)
        self.best: Optional[Probe] = None
        self.check_monotone = True

    def probe(self, lam, q1):
        if self.det.solves >= self.pb.budget:
            raise _Budget()
        p = self.det.evaluate(lam, q1)
        if self.best is None or p.misfit < self.best.misfit:
            self.best = p
        return p

    def done(self, p):
        return p.misfit <= self.tau

    def _assert_between(self, lo, hi, mid, attr):
        # value at mid must lie between the bracket values (nonincreasing function)
        if not self.check_monotone:
            return
        a, b, m = getattr(lo, attr), getattr(hi, attr), getattr(mid, attr)
        if m > a + self.slack or m < b - self.slack:
            raise _Monotonicity(f"{attr} not monotone: {a:.6f}, {m:.6f}, {b:.6f}")

    def inner(self, lam, q_lo, q_hi, q_start=None):
        """Bisect Q1 on the centre at fixed lambda; returns the probe with smallest |C|."""
        lo_q, hi_q = feasible_q1(lam, self.pb.jet, q_lo, q_hi)
        if lo_q >= hi_q:
            return self.probe(lam, 0.5 * self.pb.jet.Q)
        q = 0.5 * (lo_q + hi_q) if q_start is None else min(max(q_start, lo_q), hi_q)
        p = self.probe(lam, q)
        best = p
        lo = hi = None  # probes with C > 0 (Q1 too small) and C < 0
        step = 0.1 * (hi_q - lo_q)
        while True:
            # far from W = 2 the outer loop only needs the sign of W - 2
            if self.done(p) or abs(p.centre) <= max(0.5 * self.tau, 0.25 * abs(p.width - 2)):
                return p
            if p.centre > 0:
                lo = p
            else:
                hi = p
            if lo is not None and hi is not None and lo.q1 > hi.q1 and self.check_monotone:
                raise _Monotonicity(f"centre not monotone in Q1: C({lo.q1:.6g}) = {lo.centre:.6f}, "
                                    f"C({hi.q1:.6g}) = {hi.centre:.6f}")
            if lo is not None and hi is not None:
                if hi.q1 - lo.q1 <= 1e-6 * self.pb.jet.Q:
                    return best
                q = 0.5 * (lo.q1 + hi.q1)
            elif lo is None:
                # centre too far left: decrease Q1
                if p.q1 <= lo_q:
                    return best
                q = max(p.q1 - step, lo_q)
                step *= 2
            else:
                if p.q1 >= hi_q:
                    return best
                q = min(p.q1 + step, hi_q)
                step *= 2
            p = self.probe(lam, q)
            if lo is not None and hi is not None:
                self._assert_between(lo, hi, p, "centre")
            if abs(p.centre) < abs(best.centre):
                best = p

    def outer(self, lam_lo, lam_hi, q_lo, q_hi, plo=None, phi=None):
        """Bisect lambda on W - 2 with the inner Q1 solve at each probe."""
        q_mid = None if phi is None else phi.q1
        while True:
            lam = 0.5 * (lam_lo + lam_hi)
            p = self.inner(lam, q_lo, q_hi, q_mid)
            if self.done(p):
                return p
            if plo is not None and phi is not None:
                self._assert_between(plo, phi, p, "width")
            if p.width > 2:
                lam_lo, plo = lam, p
            else:
                lam_hi, phi = lam, p
            q_mid = p.q1
            if lam_hi - lam_lo <= 1e-9 * lam_hi:
                return self.best

    def grid_search(self, lam_lo, lam_hi, q_lo, q_hi, n=3):
        """Coarse n x n scan of the bracket rectangle; returns refined brackets."""
        lams = np.linspace(lam_lo, lam_hi, n + 2)[1:-1]
        best = None
        for lam in lams:
            a, b = feasible_q1(lam, self.pb.jet, q_lo, q_hi)
            if a >= b:
                continue
            for q in np.linspace(a, b, n + 2)[1:-1]:
                p = self.probe(float(lam), float(q))
                if self.done(p):
                    return p, None
                if best is None or p.misfit < best.misfit:
                    best = p
        dl = (lam_hi - lam_lo) / (n + 1)
        dq = (q_hi - q_lo) / (n + 1)
        return best, (max(best.lam - dl, lam_lo), min(best.lam + dl, lam_hi),
                      max(best.q1 - dq, q_lo), min(best.q1 + dq, q_hi))


def fit(problem: FitProblem, detacher: Optional[Detacher] = None, trace_path=None) -> FitResult:
    """Continuous-fit search.  Raises NoBracket or BudgetExhausted."""
    problem.validate()
    t0 = time.perf_counter()
    det = detacher or Detacher(problem)
    fr = _Fitter(problem, det)
    lam_lo, lam_hi, q_lo, q_hi = problem.brackets()
    qh = 0.5 * problem.jet.Q
    warnings = []
    fallback = False
    result = None
    try:
        plo = fr.probe(lam_lo, qh)
        if not plo.width > 2:
            raise NoBracket(f"W - 2 = {plo.width - 2:.4g} at lambda_lo={lam_lo:.6g} is not positive; lower lambda_lo")
        phi = fr.probe(lam_hi, qh)
        if not phi.width < 2:
            raise NoBracket(f"W - 2 = {phi.width - 2:.4g} at lambda_hi={lam_hi:.6g} is not negative; raise lambda_hi")
        try:
            result = fr.outer(lam_lo, lam_hi, q_lo, q_hi, plo, phi)
        except _Monotonicity as e:
            log.warning("%s; falling back to grid search", e)
            warnings.append(str(e))
            fallback = True
            fr.check_monotone = False
            lo, hi = lam_lo, lam_hi
            done = [p for p in det.probes if fr.done(p)]
            if done:
                result = done[-1]
            else:
                # shrink the lambda bracket to the tightest known sign change first
                for p in det.probes:
                    if p.width > 2 and p.lam > lo:
                        lo = p.lam
                    elif p.width <= 2 and p.lam < hi:
                        hi = p.lam
                if lo >= hi:
                    lo, hi = lam_lo, lam_hi
                best, box = fr.grid_search(lo, hi, q_lo, q_hi)
                result = best if box is None else fr.outer(box[0], box[1], box[2], box[3])
    except _Budget:
        res = _result(fr.best, det, False, fallback, warnings, t0)
        _write_trace(det, trace_path)
        raise BudgetExhausted(f"budget of {problem.budget} solves used; best misfit "
                              f"{fr.best.misfit:.4g}", best=res)
    ok = result is not None and fr.done(result)
    if not ok:
        res = _result(fr.best, det, False, fallback, warnings, t0)
        _write_trace(det, trace_path)
        raise BudgetExhausted(f"bisection collapsed without reaching tau; best misfit {fr.best.misfit:.4g}", best=res)
    jet = problem.jet
    margin = problem.tolerance * math.sqrt(2 * result.lam)
    if result.q1 < margin or result.q1 > jet.Q - margin:
        warnings.append(f"q1_star={result.q1:.6g} within tau*sqrt(2 lambda) of the end of (0, Q)")
    if not result.lam > lambda_min(result.q1, jet.Q, jet.H, jet.g):
        warnings.append("lambda_star is not strictly above lambda_min(q1_star)")
    for w in warnings:
        log.warning(w)
    _write_trace(det, trace_path)
    return _result(result, det, True, fallback, warnings, t0)


def _result(p: Probe, det: Detacher, ok, fallback, warnings, t0):
    f = det.fields.get((p.lam, p.q1))
    return FitResult(p.lam, p.q1, p.k1, p.k2, p.F1, p.F2, det.solves, ok, f,
                     list(det.probes), fallback, list(warnings), time.perf_counter() - t0)


TRACE_FIELDS = ("iteration", "lambda", "Q1", "k1H", "k2H", "energy", "sweeps")


def trace_rows(probes):
    return [(i, p.lam, p.q1, p.k1, p.k2, p.energy, p.sweeps) for i, p in enumerate(probes)]


def _write_trace(det, path):
    if path is None:
        return
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_FIELDS)
        for row in trace_rows(det.probes):
            w.writerow([row[0]] + [f"{v:.17g}" for v in row[1:-1]] + [row[-1]])


# -- parameter lattice -------------------------------------------------------

@dataclass
class MapCell:
    lam: float
    q1: float
    k1: float = float("nan")
    k2: float = float("nan")
    error: str = ""


def _map_cell(args):
    problem, lam, q1 = args
    det = Detacher(problem)
    try:
        k1, k2 = detachment(lam, q1, problem, det)
        return MapCell(lam, q1, k1, k2)
    except (GravjetError, ValueError) as e:
        return MapCell(lam, q1, error=f"{type(e).__name__}: {e}")


def sweep_map(lams, q1s, problem: FitProblem, workers=None):
    """Detachments over a (lambda x Q1) lattice.  Failed cells carry an error string.

    Each cell is an independent solve; ``workers`` > 1 runs them in separate
    processes (default: GRAVJET_THREADS or 1).
    """
    workers = int(os.environ.get("GRAVJET_THREADS", "1")) if workers is None else workers
    jobs = [(problem, float(l), float(q)) for l in lams for q in q1s]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            cells = list(ex.map(_map_cell, jobs))
    else:
        cells = []
        det = Detacher(problem)
        for _, l, q in jobs:
            try:
                k1, k2 = detachment(l, q, problem, det)
                cells.append(MapCell(l, q, k1, k2))
            except (GravjetError, ValueError) as e:
                cells.append(MapCell(l, q, error=f"{type(e).__name__}: {e}"))
    return cells


def sign_pattern(cell: MapCell, tau):
    """(s1, s2) in {-1, 0, 1}^2 for F1 = k1+1 and F2 = k2-1; 0 within tau."""
    if cell.error:
        return None
    f = (cell.k1 + 1.0, cell.k2 - 1.0)
    return tuple(0 if abs(v) <= tau else (1 if v > 0 else -1) for v in f)


def sign_change_loci(cells, lams, q1s, tau):
    """Lattice squares over which both F1 and F2 change sign (or vanish).

    Returns the (lambda, Q1) centres sorted by lambda, smallest first.
    """
    grid = {(c.lam, c.q1): sign_pattern(c, tau) for c in cells}
    out = []
    for a in range(len(lams) - 1):
        for b in range(len(q1s) - 1):
            corners = [grid.get((float(lams[a + i]), float(q1s[b + j]))) for i in (0, 1) for j in (0, 1)]
            if any(c is None for c in corners):
                continue
            ch = [min(c[k] for c in corners) <= 0 <= max(c[k] for c in corners) for k in (0, 1)]
            if all(ch):
                out.append((0.5 * (lams[a] + lams[a + 1]), 0.5 * (q1s[b] + q1s[b + 1])))
    return sorted(out)


MAP_FIELDS = ("lambda", "Q1", "k1H", "k2H", "F1", "F2", "s1", "s2", "error")


def write_map(cells, path, tau):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MAP_FIELDS)
        for c in cells:
            s = sign_pattern(c, tau)
            if s is None:
                w.writerow([f"{c.lam:.17g}", f"{c.q1:.17g}", "", "", "", "", "", "", c.error])
            else:
                w.writerow([f"{c.lam:.17g}", f"{c.q1:.17g}", f"{c.k1:.17g}", f"{c.k2:.17g}",
                            f"{c.k1 + 1:.17g}", f"{c.k2 - 1:.17g}", s[0], s[1], ""])
