"""Detachment map over a (lambda x Q1) lattice, written as CSV with sign patterns.

    GRAVJET_THREADS=4 python3 scripts/lattice_map.py --lams 3.5:9:6 --q1s 0.7:1.5:5 --dx 1/32
"""
import argparse

from gravjet.fitter import FitProblem, sign_change_loci, sweep_map, write_map
from gravjet.flux_algebra import JetParameters
from gravjet.io_cli import parse_lattice


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--lams", default="3.5:9:6")
    ap.add_argument("--q1s", default="0.7:1.5:5")
    ap.add_argument("--dx", default="1/32")
    ap.add_argument("--workers", type=int)
    ap.add_argument("--out", default="map.csv")
    args = ap.parse_args(argv)
    a, _, b = args.dx.partition("/")
    dx = float(a) / float(b) if b else float(a)
    pb = FitProblem(JetParameters(3, 1, 1, 2, 3), dx=dx)
    lams, q1s = parse_lattice(args.lams, "--lams"), parse_lattice(args.q1s, "--q1s")
    cells = sweep_map(lams, q1s, pb, workers=args.workers)
    write_map(cells, args.out, pb.tolerance)
    for c in sign_change_loci(cells, lams, q1s, pb.tolerance):
        print("sign change near lambda=%.6g Q1=%.6g" % c)


if __name__ == "__main__":
    main()
