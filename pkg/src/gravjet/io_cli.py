"""Run configuration, exports and the ``gravjet`` command line.

Configuration is an INI file::

    [physical]
    Q = 3
    g = 1
    H = 1
    H1 = 2
    H2 = 3

    [geometry]
    kind = canonical            ; or: samples, with wall1 / wall2 CSV paths (y, x)

    [numerics]
    mu = 6
    dx = 0.015625

    [fit]
    budget = 60

Exit codes: 0 success, 1 configuration, 2 solver, 3 fit, 4 verification.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import math
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import (ConfigError, ExtractionError, FitError, ParamError, ParseError,
                     ResolutionTooCoarse, SolverError, TruncationTooSmall, ValidationError,
                     BudgetExhausted)
from .flux_algebra import (DownstreamState, JetParameters, asymptotic_states, lambda_min,
                           validate_params)
from .geometry import build_grid, build_nozzle, truncate

log = logging.getLogger("gravjet")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_FIT, EXIT_VERIFY = 0, 1, 2, 3, 4


# -- configuration -------------------------------------------------------------

@dataclass(frozen=True)
class Physical:
    Q: float
    g: float
    H: float
    H1: float
    H2: float
    p_atm: float = 0.0


@dataclass(frozen=True)
class Geometry:
    kind: str = "canonical"
    wall1: Optional[str] = None
    wall2: Optional[str] = None


@dataclass(frozen=True)
class Numerics:
    mu: float = 6.0
    dx: float = 1 / 64
    dy: Optional[float] = None
    tol: float = 1e-10
    max_sweeps: Optional[int] = None


@dataclass(frozen=True)
class FitSection:
    lam_lo: Optional[float] = None
    lam_hi: Optional[float] = None
    q_lo: Optional[float] = None
    q_hi: Optional[float] = None
    tau: Optional[float] = None
    budget: int = 60


@dataclass(frozen=True)
class State:
    lam: Optional[float] = None
    Q1: Optional[float] = None
    h1: Optional[float] = None
    h2: Optional[float] = None


@dataclass(frozen=True)
class Output:
    dir: str = "gravjet_run"
    csv: bool = True
    vtk: bool = True
    json: bool = True


@dataclass(frozen=True)
class RunConfig:
    physical: Physical
    geometry: Geometry = Geometry()
    numerics: Numerics = Numerics()
    fit: FitSection = FitSection()
    state: State = State()
    output: Output = Output()
    source: Optional[str] = None

    @property
    def jet(self) -> JetParameters:
        p = self.physical
        return JetParameters(p.Q, p.g, p.H, p.H1, p.H2, p.p_atm)

    @property
    def spacing(self):
        n = self.numerics
        return n.dx, (n.dx if n.dy is None else n.dy)

    @property
    def tau(self):
        return 2 * max(self.spacing) if self.fit.tau is None else self.fit.tau

    def nozzle(self):
        p = self.physical
        if self.geometry.kind == "canonical":
            return build_nozzle(p.H, p.H1, p.H2)
        walls = tuple(read_wall(Path(w)) for w in (self.geometry.wall1, self.geometry.wall2))
        return build_nozzle(p.H, p.H1, p.H2, walls=walls)

    def fit_problem(self):
        from .fitter import FitProblem
        from .minimizer import CascadeConfig, SolveConfig
        f = self.fit
        dx, dy = self.spacing
        base = SolveConfig(tol=self.numerics.tol, max_sweeps=self.numerics.max_sweeps)
        return FitProblem(self.jet, self.nozzle(), self.numerics.mu, dx, dy, self.tau,
                          f.lam_lo, f.lam_hi, f.q_lo, f.q_hi, f.budget, CascadeConfig(base=base))


SECTIONS = {"physical": Physical, "geometry": Geometry, "numerics": Numerics, "fit": FitSection,
            "state": State, "output": Output}


def _convert(section, name, raw, typ):
    key = f"{section}.{name}"
    s = raw.strip()
    base = typ.replace("Optional[", "").rstrip("]")
    if s.lower() in ("", "none") and typ.startswith("Optional"):
        return None
    try:
        if base == "float":
            return _number(s)
        if base == "int":
            return int(s)
        if base == "bool":
            if s.lower() in ("1", "true", "yes", "on"):
                return True
            if s.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(s)
        return s
    except (ValueError, ZeroDivisionError):
        raise ValidationError(key, f"cannot read {raw!r} as {base}") from None


def _number(s):
    # accept plain numbers and simple fractions such as 1/64
    if "/" in s:
        a, b = s.split("/", 1)
        return float(a) / float(b)
    return float(s)


def _parse_text(text, source):
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as e:
        raise ParseError(f"{source}: key outside any section: {e.line.strip()!r}", line=e.lineno, pos=1) from None
    except configparser.DuplicateSectionError as e:
        raise ParseError(f"{source}: duplicate section [{e.section}]", line=e.lineno) from None
    except configparser.DuplicateOptionError as e:
        raise ParseError(f"{source}: duplicate key {e.option!r} in [{e.section}]", line=e.lineno) from None
    except configparser.ParsingError as e:
        lineno = e.errors[0][0]
        line = text.splitlines()[lineno - 1] if 0 < lineno <= len(text.splitlines()) else ""
        raise ParseError(f"{source}: expected 'key = value', got {line.strip()!r}", line=lineno, pos=1) from None
    return cp


def parse_config(path, overrides=None) -> RunConfig:
    """Read, default and validate a run configuration.

    ``overrides`` maps "section.key" to values that replace the file's.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ValidationError("config", f"cannot read {path}: {e.strerror}") from None
    return config_from_text(text, str(path), overrides, base=path.parent)


def config_from_text(text, source="<string>", overrides=None, base=None) -> RunConfig:
    cp = _parse_text(text, source)
    values = {}
    for sec in cp.sections():
        if sec not in SECTIONS:
            raise ValidationError(sec, f"unknown section [{sec}]")
        types = {f.name: f.type for f in fields(SECTIONS[sec])}
        out = {}
        for name, raw in cp.items(sec):
            if name not in types:
                raise ValidationError(f"{sec}.{name}", "unknown key")
            out[name] = _convert(sec, name, raw, types[name])
        values[sec] = out
    for key, v in (overrides or {}).items():
        sec, name = key.split(".", 1)
        if v is not None:
            values.setdefault(sec, {})[name] = v
    if "physical" not in values:
        raise ValidationError("physical", "section [physical] is required")
    for name in ("Q", "g", "H", "H1", "H2"):
        if name not in values["physical"]:
            raise ValidationError(f"physical.{name}", "missing")
    secs = {name: cls(**values.get(name, {})) for name, cls in SECTIONS.items() if name != "physical"}
    geo = secs["geometry"]
    if geo.kind not in ("canonical", "samples"):
        raise ValidationError("geometry.kind", f"expected canonical or samples, got {geo.kind!r}")
    if geo.kind == "samples":
        resolved = {}
        for w in ("wall1", "wall2"):
            p = getattr(geo, w)
            if p is None:
                raise ValidationError(f"geometry.{w}", "wall sample file required for kind = samples")
            pp = Path(p)
            if base is not None and not pp.is_absolute():
                pp = Path(base) / pp
            if not pp.is_file():
                raise ValidationError(f"geometry.{w}", f"file not found: {pp}")
            resolved[w] = str(pp)
        secs["geometry"] = replace(geo, **resolved)
    cfg = RunConfig(Physical(**values["physical"]), source=source, **secs)
    validate_config(cfg)
    return cfg


def validate_config(cfg: RunConfig):
    try:
        validate_params(cfg.jet)
    except ParamError as e:
        name = {"FluxTooSmall": "physical.Q", "NonPositive": "physical.Q" if cfg.physical.Q <= 0 else "physical.g",
                "GeometryOrderViolation": "physical.H"}.get(type(e).__name__, "physical")
        raise ValidationError(name, f"{type(e).__name__}: {e}") from e
    n = cfg.numerics
    if not n.mu > 1:
        raise ValidationError("numerics.mu", f"must exceed 1, got {n.mu}")
    for name in ("dx", "dy"):
        v = getattr(n, name)
        if v is not None and not v > 0:
            raise ValidationError(f"numerics.{name}", f"must be positive, got {v}")
    try:
        dom = truncate(cfg.nozzle(), n.mu)
    except ParamError as e:
        where = "numerics.mu" if isinstance(e, TruncationTooSmall) else "geometry"
        raise ValidationError(where, f"{type(e).__name__}: {e}") from e
    except ValueError as e:
        raise ValidationError("geometry", f"{type(e).__name__}: {e}") from e
    for name, v in zip(("dx", "dy"), cfg.spacing):
        try:
            build_grid(dom, v, v)
        except ResolutionTooCoarse as e:
            raise ValidationError(f"numerics.{name}", f"ResolutionTooCoarse: {e}") from e
    if not n.tol > 0:
        raise ValidationError("numerics.tol", "must be positive")
    if n.max_sweeps is not None and n.max_sweeps < 1:
        raise ValidationError("numerics.max_sweeps", "must be at least 1")
    f = cfg.fit
    if cfg.tau < 2 * max(cfg.spacing) * (1 - 1e-12):
        raise ValidationError("fit.tau", f"{cfg.tau} is tighter than 2*max(dx, dy)")
    if f.budget < 3:
        raise ValidationError("fit.budget", "must allow at least 3 solves")
    Q = cfg.physical.Q
    for name in ("q_lo", "q_hi"):
        v = getattr(f, name)
        if v is not None and not 0 < v < Q:
            raise ValidationError(f"fit.{name}", f"must lie in (0, Q), got {v}")
    if f.lam_lo is not None and f.lam_hi is not None and not f.lam_lo < f.lam_hi:
        raise ValidationError("fit.lam_hi", "must exceed fit.lam_lo")
    return cfg


def read_wall(path: Path):
    """Wall samples CSV with columns y, x (a header line is allowed)."""
    rows = []
    try:
        with open(path, newline="") as fh:
            for k, rec in enumerate(csv.reader(fh), start=1):
                if not rec or rec[0].strip().startswith("#"):
                    continue
                try:
                    rows.append((float(rec[0]), float(rec[1])))
                except (ValueError, IndexError):
                    if rows or k > 1:
                        raise ValidationError("geometry", f"{path}: line {k} is not 'y, x'") from None
    except OSError as e:
        raise ValidationError("geometry", f"cannot read {path}: {e.strerror}") from None
    a = np.array(rows, dtype=float)
    return a[:, 0], a[:, 1]


def effective_config_text(cfg: RunConfig):
    """INI text of every field (defaults included) that reproduces the run."""
    out = []
    for name in ("physical", "geometry", "numerics", "fit", "state", "output"):
        sec = getattr(cfg, name)
        out.append(f"[{name}]")
        for f in fields(sec):
            v = getattr(sec, f.name)
            out.append(f"{f.name} = {_fmt_value(v)}")
        out.append("")
    return "\n".join(out)


def _fmt_value(v):
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


# -- serialisation ---------------------------------------------------------------

def fmt(x):
    return f"{x + 0.0:.17g}"  # + 0.0 folds -0 into 0


def dumps(obj, indent=2, _level=0):
    """JSON with every float at 17 significant digits; non-finite floats become null."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [f"{pad}{dumps(v, indent, _level + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return fmt(x) if math.isfinite(x) else "null"
    if obj is None:
        return "null"
    return json.dumps(str(obj))


def write_json(path, obj):
    Path(path).write_text(dumps(obj) + "\n")


FIELD_COLUMNS = ("x", "y", "psi", "u", "v", "p", "wet")


def write_fields_csv(path, f, ff):
    """Every node in (i, j) order, i slowest; NaN values written as 'nan'."""
    g = f.grid
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FIELD_COLUMNS)
        nx, ny = g.shape
        for i in range(nx):
            for j in range(ny):
                w.writerow([fmt(g.x[i]), fmt(g.y[j]), fmt(f.psi[i, j]), fmt(ff.u[i, j]), fmt(ff.v[i, j]),
                            fmt(ff.p[i, j]), int(ff.wet[i, j])])


def read_fields_csv(path, grid):
    """psi array from a fields CSV written for ``grid`` (coordinates are checked)."""
    data = []
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        head = next(r)
        if tuple(head[:3]) != FIELD_COLUMNS[:3]:
            raise ValidationError(str(path), f"unexpected header {head}")
        for rec in r:
            data.append((float(rec[0]), float(rec[1]), float(rec[2])))
    a = np.array(data)
    n = grid.shape[0] * grid.shape[1]
    if len(a) != n:
        raise ValidationError(str(path), f"{len(a)} rows, grid has {n} nodes")
    X = np.repeat(grid.x, grid.shape[1])
    Y = np.tile(grid.y, grid.shape[0])
    if np.max(np.abs(a[:, 0] - X)) > 1e-9 or np.max(np.abs(a[:, 1] - Y)) > 1e-9:
        raise ValidationError(str(path), "node coordinates do not match the configured grid")
    return a[:, 2].reshape(grid.shape)


def write_vtk(path, f, ff):
    """Legacy ASCII VTK structured points (x varies fastest)."""
    g = f.grid
    nx, ny = g.shape
    lines = ["# vtk DataFile Version 3.0", "gravjet fields", "ASCII", "DATASET STRUCTURED_POINTS",
             f"DIMENSIONS {nx} {ny} 1", f"ORIGIN {fmt(g.x[0])} {fmt(g.y[0])} 0",
             f"SPACING {fmt(g.dx)} {fmt(g.dy)} 1", f"POINT_DATA {nx * ny}"]
    arrays = (("psi", f.psi), ("u", ff.u), ("v", ff.v), ("p", ff.p), ("wet", ff.wet.astype(float)))
    for name, arr in arrays:
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [fmt(v) for v in arr.T.ravel()]
    Path(path).write_text("\n".join(lines) + "\n")


def write_boundaries_csv(path, fb):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("y", "x", "which"))
        for y, x, which in fb.polyline_rows():
            w.writerow((fmt(y), fmt(x), int(which)))


def write_interface_csv(path, itf):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("y", "x"))
        for y, x in itf.k:
            w.writerow((fmt(y), fmt(x)))


def state_dict(s: DownstreamState, jet: JetParameters):
    left, right, up = asymptotic_states(s, jet)
    return {"lambda": s.lam, "Q1": s.Q1, "Q2": jet.Q - s.Q1, "h1": s.h1, "h2": s.h2,
            "lambda_min": lambda_min(s.Q1, jet.Q, jet.H, jet.g),
            "asymptotic_states": [{"region": a.region, "u_inf": a.u_inf, "band": list(a.band),
                                   "p_intercept": a.intercept, "p_slope": a.slope} for a in (left, right, up)]}


# -- run directories ---------------------------------------------------------------

def prepare_out(cfg: RunConfig, out=None):
    d = Path(out or cfg.output.dir)
    d.mkdir(parents=True, exist_ok=True)
    (d / "effective_config.ini").write_text(effective_config_text(replace(cfg, output=replace(cfg.output, dir=str(d)))))
    return d


def export_run(d: Path, cfg: RunConfig, f, formats=None):
    """Fields, boundaries and interface of ``f`` into ``d``; returns written names."""
    from .fields import flow_fields, interface
    from .freeboundary import extract_boundaries
    formats = formats or {k for k in ("csv", "vtk", "json") if getattr(cfg.output, k)}
    ff = flow_fields(f)
    written = []
    if "csv" in formats:
        write_fields_csv(d / "fields.csv", f, ff)
        written.append("fields.csv")
        try:
            fb = extract_boundaries(f, allow_empty=True)
            write_boundaries_csv(d / "boundaries.csv", fb)
            written.append("boundaries.csv")
        except ExtractionError as e:
            log.warning("boundaries not exported: %s", e)
        try:
            write_interface_csv(d / "interface.csv", interface(f))
            written.append("interface.csv")
        except ExtractionError as e:
            log.warning("interface not exported: %s", e)
    if "vtk" in formats:
        write_vtk(d / "fields.vtk", f, ff)
        written.append("fields.vtk")
    return written


def load_run(d: Path, cfg_override=None):
    """(config, StreamField) of a stored run directory."""
    from .minimizer import StreamField
    d = Path(d)
    cfg = cfg_override or parse_config(d / "effective_config.ini")
    summ = json.loads((d / "summary.json").read_text())
    jet = cfg.jet
    s = DownstreamState.from_params(summ["state"]["lambda"], summ["state"]["Q1"], jet)
    dom = truncate(cfg.nozzle(), cfg.numerics.mu)
    dx, dy = cfg.spacing
    grid = build_grid(dom, dx, dy)
    psi = read_fields_csv(d / "fields.csv", grid)
    return cfg, StreamField(grid, psi, jet, s)


def _state_from(cfg: RunConfig, args):
    st = cfg.state
    lam = args.lam if getattr(args, "lam", None) is not None else st.lam
    q1 = args.q1 if getattr(args, "q1", None) is not None else st.Q1
    h1 = args.h1 if getattr(args, "h1", None) is not None else st.h1
    h2 = args.h2 if getattr(args, "h2", None) is not None else st.h2
    jet = cfg.jet
    try:
        if lam is not None and q1 is not None:
            return DownstreamState.from_params(lam, q1, jet)
        if h1 is not None and h2 is not None:
            return DownstreamState.from_heights(h1, h2, jet)
    except ParamError as e:
        raise ValidationError("state", f"{type(e).__name__}: {e}") from e
    raise ValidationError("state", "give lambda and Q1, or h1 and h2 ([state] section or flags)")


def _detachment_dict(f):
    from .freeboundary import extract_boundaries
    try:
        fb = extract_boundaries(f, allow_empty=True)
    except ExtractionError as e:
        return {"error": f"{type(e).__name__}: {e}"}
    return {"k1H": fb.detach1, "k2H": fb.detach2, "asymptote1": fb.asymptote1,
            "asymptote2": fb.asymptote2, "flags": list(fb.flags)}


def _solve_summary(f, diags, grids):
    d = diags[-1]
    levels = [{"dx": g.dx, "sweeps": x.sweeps, "energy": x.energy, "converged": x.converged,
               "monotone": x.monotone, "moves_accepted": x.moves_accepted, "projections": x.projections,
               "near_ties": x.near_ties} for x, g in zip(diags, grids)]
    return {"state": state_dict(f.state, f.jet),
            "solve": {"levels": levels, "energy": d.energy, "converged": d.converged},
            "detachment": _detachment_dict(f)}


# -- subcommands ---------------------------------------------------------------------

def cmd_params(cfg, args):
    s = _state_from(cfg, args)
    out = state_dict(s, cfg.jet)
    text = dumps(out)
    print(text)
    if args.out:
        d = prepare_out(cfg, args.out)
        (d / "params.json").write_text(text + "\n")
    return EXIT_OK


def _cascade(cfg):
    from .minimizer import Cascade, CascadeConfig, SolveConfig
    dom = truncate(cfg.nozzle(), cfg.numerics.mu)
    dx, dy = cfg.spacing
    base = SolveConfig(tol=cfg.numerics.tol, max_sweeps=cfg.numerics.max_sweeps)
    return Cascade(dom, cfg.jet, dx, dy, CascadeConfig(base=base))


def cmd_solve(cfg, args):
    s = _state_from(cfg, args)
    d = prepare_out(cfg, args.out)
    cas = _cascade(cfg)
    f, diags = cas.solve(s)
    summ = _solve_summary(f, diags, cas.grids)
    write_json(d / "summary.json", summ)
    export_run(d, cfg, f)
    log.info("solve written to %s", d)
    if not diags[-1].converged:
        log.error("solve hit its sweep budget before converging")
        return EXIT_SOLVER
    return EXIT_OK


def cmd_fit(cfg, args):
    from .fitter import fit
    from .fields import verify_all, VerifyConfig
    d = prepare_out(cfg, args.out)
    pb = cfg.fit_problem()
    try:
        res = fit(pb, trace_path=d / "trace.csv")
    except BudgetExhausted as e:
        best = e.best
        write_json(d / "summary.json", {"fit": _fit_dict(best), "error": str(e)})
        if best is not None and best.final_field is not None:
            export_run(d, cfg, best.final_field)
        log.error("%s", e)
        return EXIT_FIT
    f = res.final_field
    summ = {"state": state_dict(f.state, f.jet), "detachment": _detachment_dict(f), "fit": _fit_dict(res)}
    rep = verify_all(f, VerifyConfig(tau=cfg.tau))
    summ["verification"] = rep.as_dict()
    write_json(d / "summary.json", summ)
    write_json(d / "verification.json", rep.as_dict())
    export_run(d, cfg, f)
    log.info("fit: lambda*=%.10g Q1*=%.10g in %d solves", res.lambda_star, res.q1_star, res.solves)
    return EXIT_OK


def _fit_dict(res):
    if res is None:
        return None
    out = res.as_dict()
    out.pop("seconds", None)  # wall-clock time would break byte-identical summaries
    return out


def parse_lattice(spec, name):
    try:
        if ":" in spec:
            a, b, n = spec.split(":")
            if int(n) < 1:
                raise ValueError(n)
            return np.linspace(_number(a), _number(b), int(n))
        return np.array([_number(x) for x in spec.split(",")])
    except (ValueError, ZeroDivisionError):
        raise ValidationError(name, f"expected 'start:stop:n' or a comma list, got {spec!r}") from None


def cmd_sweep(cfg, args):
    from .fitter import sign_change_loci, sweep_map, write_map
    if not args.lams or not args.q1s:
        raise ValidationError("sweep", "--lams and --q1s are required")
    lams = parse_lattice(args.lams, "--lams")
    q1s = parse_lattice(args.q1s, "--q1s")
    d = prepare_out(cfg, args.out)
    cells = sweep_map(lams, q1s, cfg.fit_problem(), workers=args.workers)
    write_map(cells, d / "map.csv", cfg.tau)
    loci = sign_change_loci(cells, lams, q1s, cfg.tau)
    write_json(d / "summary.json", {"cells": len(cells), "failed": sum(1 for c in cells if c.error),
                                    "sign_change_loci": [list(x) for x in loci],
                                    "smallest_lambda_locus": list(loci[0]) if loci else None})
    return EXIT_OK


def cmd_verify(cfg, args):
    from .fields import VerifyConfig, verify_all
    run = Path(args.run or args.out or cfg.output.dir)
    cfg2, f = load_run(run)
    rep = verify_all(f, VerifyConfig(tau=cfg2.tau))
    write_json(run / "verification.json", rep.as_dict())
    for it in rep.items:
        tag = "pass" if it.passed else ("note" if it.informational else "FAIL")
        print(f"{tag:4s} {it.name}: {it.value:.6g} (tolerance {it.tolerance:.6g})")
    if not rep.passed:
        print("failing checks: " + ", ".join(rep.failed))
        return EXIT_VERIFY
    return EXIT_OK


def cmd_export(cfg, args):
    run = Path(args.run or cfg.output.dir)
    cfg2, f = load_run(run)
    d = Path(args.out) if args.out else run
    d.mkdir(parents=True, exist_ok=True)
    formats = set(args.formats.split(",")) if args.formats else None
    if formats and not formats <= {"csv", "vtk", "json"}:
        raise ValidationError("--formats", f"unknown format in {args.formats!r}")
    written = export_run(d, cfg2, f, formats)
    if formats is None or "json" in formats:
        summ = {"state": state_dict(f.state, f.jet), "detachment": _detachment_dict(f)}
        write_json(d / "export.json", summ)
        written.append("export.json")
    print("\n".join(written))
    return EXIT_OK


COMMANDS = {"params": cmd_params, "solve": cmd_solve, "fit": cmd_fit, "sweep": cmd_sweep,
            "verify": cmd_verify, "export": cmd_export}


HELP = {
    "params": "downstream heights and speeds from (lam, Q1) or (h1, h2)",
    "solve": "minimize at fixed (lam, Q1) and export the field",
    "fit": "search (lam, Q1) for continuous fit at both lips",
    "sweep": "detachment map over a (lam, Q1) lattice",
    "verify": "rerun every check on a stored run directory",
    "export": "rewrite a stored run in other formats",
}


def _arg_number(s):
    try:
        return _number(s)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number: {s!r}") from None


def build_parser():
    ap = argparse.ArgumentParser(prog="gravjet", description="Steady impinging jets under gravity by free-boundary minimization.")
    ap.add_argument("-v", "--verbose", action="count", default=0, help="-v info, -vv debug logging")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=HELP[name], description=HELP[name])
        p.add_argument("--config", required=True, help="INI run configuration")
        p.add_argument("--out", help="output directory (default: output.dir)")
        p.add_argument("--mu", type=_arg_number, help="override numerics.mu")
        p.add_argument("--dx", type=_arg_number, help="override numerics.dx, e.g. 1/32")
        p.add_argument("--tau", type=_arg_number, help="override fit.tau")
        if name in ("params", "solve"):
            p.add_argument("--lam", type=_arg_number, help="Bernoulli constant (default: state.lam)")
            p.add_argument("--q1", type=_arg_number, help="left flux (default: state.Q1)")
        if name == "params":
            p.add_argument("--h1", type=_arg_number, help="left sheet height, with --h2")
            p.add_argument("--h2", type=_arg_number, help="right sheet height, with --h1")
        if name == "sweep":
            p.add_argument("--lams", help="start:stop:n or comma list")
            p.add_argument("--q1s", help="start:stop:n or comma list")
            p.add_argument("--workers", type=int, help="worker processes")
        if name in ("verify", "export"):
            p.add_argument("--run", help="stored run directory (default: --out or output.dir)")
        if name == "export":
            p.add_argument("--formats", help="comma list of csv, vtk, json")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        over = {"numerics.mu": args.mu, "numerics.dx": args.dx, "fit.tau": args.tau}
        cfg = parse_config(args.config, over)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](cfg, args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except FitError as e:
        print(f"fit error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_FIT
    except (SolverError, ExtractionError) as e:
        print(f"solver error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_SOLVER
    except ParamError as e:
        print(f"config error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
