"""Scan rho0 for the winding boundary: sup-distance to H[rho0/2] and its decay per halving.

    python scripts/containment_scan.py --h 0.04 --k-max 4 --out scan_004.csv
"""
import argparse
import csv
import math
import time

import numpy as np

from wpharmonic import analysis as A
from wpharmonic.domain import build_disk_mesh
from wpharmonic.solver import Schedule
from wpharmonic.verify import winding_boundary


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--h", type=float, default=0.04)
    ap.add_argument("--k-max", type=int, default=3)
    ap.add_argument("--rho0", type=float, nargs=3, default=[0.5, 8.0, 17], metavar=("LO", "HI", "N"))
    ap.add_argument("--out", default="containment_scan.csv")
    args = ap.parse_args()

    mesh = build_disk_mesh(args.h)
    sched = Schedule(mode="colored", omega=2 / (1 + math.sin(1.1 * math.pi * args.h)))
    t = time.time()
    solves = A.solve_blowups(winding_boundary(mesh), sched, k_max=args.k_max)
    print(f"{args.k_max + 1} solves in {time.time() - t:.0f} s, lambda = {np.round(solves.lams, 4)}")

    lo, hi, n = args.rho0
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rho0", "k", "lambda", "sup_distance", "decay", "outside_measure", "center_distance"])
        for rho0 in np.geomspace(lo, hi, int(n)):
            rep = A.containment_experiment(solves, float(rho0), h=args.h, k_max=args.k_max)
            dec = np.append(rep.decay, np.nan)
            for k in range(args.k_max + 1):
                w.writerow([f"{rho0:.4g}", k, rep.lams[k], rep.sup_distance[k], dec[k],
                            rep.outside_measure[k], rep.center_distance[k]])
            print(f"rho0 {rho0:6.3f}  decay {np.round(rep.decay, 3)}  ok {rep.decay_ok()}")


if __name__ == "__main__":
    main()
