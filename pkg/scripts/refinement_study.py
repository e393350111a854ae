"""Residual, interface slope and asymptote errors at the fitted point under grid refinement.

    python3 scripts/refinement_study.py --lam 4.6484421484375 --q1 1.068 --dx 1/32 1/64 1/128
"""
import argparse
import csv
import sys
import time
from dataclasses import replace

import numpy as np

from gravjet.fields import interface, verify_all
from gravjet.flux_algebra import DownstreamState, JetParameters
from gravjet.freeboundary import extract_boundaries, gradient_residual
from gravjet.geometry import build_nozzle, truncate
from gravjet.minimizer import Cascade, CascadeConfig, SolveConfig


def frac(s):
    a, _, b = s.partition("/")
    return float(a) / float(b) if b else float(a)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--lam", type=float, default=4.6484421484375)
    ap.add_argument("--q1", type=float, default=1.068)
    ap.add_argument("--dx", type=frac, nargs="+", default=[1 / 32, 1 / 64, 1 / 128])
    ap.add_argument("--trim", type=int, default=0, help="move_trim for the solver (0: off)")
    ap.add_argument("--out", default="refinement.csv")
    args = ap.parse_args(argv)

    jet = JetParameters(3, 1, 1, 2, 3)
    dom = truncate(build_nozzle(), 6.0)
    s = DownstreamState.from_params(args.lam, args.q1, jet)
    cfg = CascadeConfig(base=replace(SolveConfig(), move_trim=args.trim))
    rows = []
    for dx in args.dx:
        t0 = time.perf_counter()
        f, diags = Cascade(dom, jet, dx, config=cfg).solve(s)
        dt = time.perf_counter() - t0
        fb = extract_boundaries(f)
        r = gradient_residual(f, fb)
        rep = verify_all(f)
        row = {"dx": dx, "seconds": dt, "energy": diags[-1].energy, "detach1": fb.detach1,
               "detach2": fb.detach2, "median_r": r.median,
               "median_abs_r_minus_1": float(np.median(np.abs(r.r - 1))),
               "slope0": interface(f).slope0, "failed": " ".join(rep.failed)}
        for name in ("asymptotic_u_left_downstream", "asymptotic_p_left_downstream",
                     "asymptotic_p_right_downstream", "monotonicity"):
            row[name] = rep[name].value
        rows.append(row)
        print(", ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in row.items()))
        sys.stdout.flush()
    with open(args.out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)


if __name__ == "__main__":
    main()
