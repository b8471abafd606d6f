"""gamma_gap(rho0, r) with an independent check on the minimizing pair.

The closest pair is located on a grid over the two curves, joined with the
shooting BVP, and the length of the integrated path is recomputed as a
polyline.  A length below r shows the gap can sit below r.
"""
import argparse

import numpy as np

from wpharmonic.model_space import ModelPoint, distances, gamma_gap, geodesic_bvp, profile_phi


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--r", type=float, default=1.0)
    ap.add_argument("--rho0", type=float, nargs="+", default=[0.2, 0.1, 0.05, 0.025])
    ap.add_argument("--grid", type=int, default=600)
    args = ap.parse_args()
    r = args.r
    print("rho0      gap       grid_min  bvp_len   polyline  min_rho/rho0")
    for rho0 in args.rho0:
        r1 = np.geomspace(rho0, 20 * r, args.grid)
        r2 = np.geomspace(r, 20 * r, args.grid)
        f1, f2 = profile_phi(rho0, r1), profile_phi(rho0 / 2, r2)
        D = distances(r1[:, None], f1[:, None], r2[None, :], f2[None, :])
        i, j = np.unravel_index(np.argmin(D), D.shape)
        b = geodesic_bvp(ModelPoint(r1[i], f1[i]), ModelPoint(r2[j], f2[j]), step=1e-4)
        p = b.path
        mid = 0.5 * (p.rho[1:] + p.rho[:-1])
        poly = float(np.sum(np.hypot(np.diff(p.rho), mid ** 3 * np.diff(p.phi))))
        print(f"{rho0:<9g} {gamma_gap(rho0, r):.6f}  {D[i, j]:.6f}  {b.length:.6f}  {poly:.6f}  "
              f"{p.rho.min() / rho0:.3f}")


if __name__ == "__main__":
    main()
