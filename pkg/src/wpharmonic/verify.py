"""Registered checks for ``wpharmonic verify``.

Each entry fixes its parameters (mesh size included) and tolerances; a run
returns ``(passed, details)``.  Changing either changes the verdict file by
design.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

WINDING_RHO = "0.6 - 0.4*cos(theta)"
WINDING_PHI = "10*sin(theta)"


@dataclass(frozen=True)
class Check:
    run: Callable
    params: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)

    def execute(self, cfg, **params):
        return self.run(cfg, **{**self.params, **params}, **self.tolerances)


def _gamma_trend(cfg, r, rho0s, slope):
    """The gap tends to r: |gap - r| shrinks along the sequence and ends within slope * rho0."""
    from .model_space import gamma_gap
    gaps = np.array([gamma_gap(p, r) for p in rho0s])
    err = np.abs(gaps - r)
    shrinking = bool(np.all(np.diff(err) < 0))
    ok = shrinking and err[-1] <= slope * rho0s[-1]
    return ok, {"rho0": rho0s, "gap": gaps, "distance_to_r": err, "shrinking": shrinking,
                "side": "below" if np.all(gaps < r) else ("above" if np.all(gaps > r) else "mixed")}


def _complement_bound(cfg, r, rho0s, rel):
    from .model_space import complement_gap, gamma_gap
    rows = []
    for p in rho0s:
        g, c = gamma_gap(p, r), complement_gap(p, r)
        rows.append({"rho0": p, "gamma_gap": g, "complement_gap": c, "holds": bool(c >= g * (1 - rel))})
    return all(x["holds"] for x in rows), {"rows": rows}


def _npc(cfg, n, sheets, tol):
    from .glued_space import distances_A, npc_quadrilateral_check, random_glued
    rng = np.random.default_rng(cfg["run.seed"])
    sh = list(range(sheets))
    z, x, y = (random_glued(rng, n, sh) for _ in range(3))
    lam = rng.random(n)
    rep = npc_quadrilateral_check(z, x, y, lam, tol)
    # across sheets the distance is the sum of the distances to P0
    a, b = random_glued(rng, n, sh, p_base=0.0), random_glued(rng, n, sh, p_base=0.0)
    cross = a[0] != b[0]
    d = distances_A(*a, *b)
    additive = bool(np.all(d[cross] == (a[1] + b[1])[cross]))
    return rep.ok and additive, {"max_violation": rep.max_violation, "cross_pairs": int(cross.sum()),
                                 "cross_additivity_exact": additive}


def _comb(cfg, h, sigmas):
    from . import analysis as A
    from .domain import build_disk_mesh
    fam = A.SingularFamily()
    st = A.tangent_structure(fam.limit(), build_disk_mesh(h))
    rep = A.comb_construction(A.normalize_blowup(fam.sequence(sigmas), st), st)
    dec = rep.decreasing()
    ok = dec["pair_defect"] and dec["L_distance"] and dec["comb_distance"]
    return ok, {"sigmas": sigmas, "pair_defect": rep.pair_defect, "L_distance": rep.L_distance,
                "comb_distance": rep.comb_distance, "rho_sigma": rep.rho_sigma, "decreasing": dec}


def _turning(cfg, h, sigmas, R):
    from . import analysis as A
    res = A.turning_containment(A.SingularFamily(), sigmas, R, h)
    ok = res["sup_decreasing"] and res["outside_decreasing"]
    return ok, res


def winding_boundary(mesh):
    from .cli import parse_expression
    from .solver import boundary_map
    return boundary_map(mesh, parse_expression(WINDING_RHO), parse_expression(WINDING_PHI))


def _containment(cfg, h, rho0, k_max, R, decay, obstruction):
    from . import analysis as A
    from .domain import build_disk_mesh
    mesh = build_disk_mesh(h)
    rep = A.containment_experiment(winding_boundary(mesh), rho0, cfg.schedule(h), h=h, k_max=k_max, R=R)
    syn = A.containment_experiment(A.SingularFamily(), rho0, h=0.01, k_max=k_max, sigma0=0.4, R=R)
    obs = syn.center_obstruction()
    obs_ok = bool(np.all(np.isfinite(obs)) and np.max(obs) <= obstruction)
    decay_ok = rep.decay_ok(*decay)
    details = {"h": h, "rho0": rho0, "converged": rep.converged, "lambda": rep.lams,
               "sup_distance": rep.sup_distance, "decay": rep.decay, "decay_ok": decay_ok,
               "outside_measure": rep.outside_measure, "min_interior_rho": rep.min_rho,
               "gap_bound": rep.gap_bound, "mean_value": rep.mean_value, "c2_probe": rep.c2,
               "obstruction_defect": obs, "obstruction_ok": obs_ok,
               "synthetic_preimage_inclusion": syn.preimage_inclusion}
    return rep.converged and decay_ok and obs_ok, details


def _two_sheet(cfg, h, tol, eigen_tol):
    from . import analysis as A
    from .domain import build_disk_mesh
    src = A.two_sheet_map()
    st = A.tangent_structure(src, build_disk_mesh(h))
    pw = A.piecewise_function_check(src, st, seed=cfg["run.seed"], tol=tol)
    eg = st.eigen_check()
    ok = st.k == 2 and st.A == 2 and pw["ok"] and eg["max_rel_defect"] <= eigen_tol
    return ok, {"k": st.k, "A": st.A, "alpha": st.alpha, "arcs": st.arcs, "piecewise": pw, "eigen": eg}


_RHO0S = [0.2, 0.1, 0.05, 0.025]

REGISTRY: dict[str, Check] = {
    "lemma-2.3": Check(_gamma_trend, {"r": 1.0, "rho0s": _RHO0S}, {"slope": 2.0}),
    "lemma-2.4": Check(_complement_bound, {"r": 1.0, "rho0s": _RHO0S}, {"rel": 1e-6}),
    "npc": Check(_npc, {"n": 1000, "sheets": 3}, {"tol": 1e-6}),
    "lemmas-3.2-3.4": Check(_comb, {"h": 0.04, "sigmas": [0.4, 0.2, 0.1, 0.05, 0.025]}),
    "lemma-3.7": Check(_turning, {"h": 0.01, "sigmas": [0.4, 0.2, 0.1, 0.05, 0.025], "R": 0.9}),
    "thm-3.1": Check(_containment, {"h": 0.04, "rho0": 1.0, "k_max": 3, "R": 0.9},
                     {"decay": [1.6, 2.4], "obstruction": 1e-12}),
    "appendix-i": Check(_two_sheet, {"h": 0.04}, {"tol": 1e-8, "eigen_tol": 1e-3}),
}

