"""Discrete harmonic maps by nonlinear Gauss-Seidel.

The energy is sum_edges w_ij d^2(u_i, u_j) with the mesh stiffness weights.
A vertex update minimizes F(p) = sum_j w_j d^2(p, q_j) over the completed
target: a damped Karcher descent in (rho, phi), retracted coordinatewise, and
the basepoint as a separate competitor since F(P0) = sum_j w_j rho_j^2.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.sparse.linalg import spsolve

from .domain import Mesh
from .glued_space import BASE_SHEET, distances_A
from .model_space import ConvexRegion, pair_geometry

log = logging.getLogger(__name__)


@dataclass
class Schedule:
    tol: float = 1e-8            # max vertex move, relative to the boundary diameter
    max_sweeps: int = 20000
    damping: float = 0.5
    mode: str = "sequential"     # or "colored"
    omega: float = 1.0           # over-relaxation factor, 1 is plain Gauss-Seidel
    inner_iters: int = 1         # descent steps per vertex visit inside a sweep
    energy_rtol: float = 1e-12
    init: str = "harmonic"       # "harmonic", "mean" or "given"
    engine: str = "compiled"     # "compiled" scalar kernels or "vectorized" numpy updates


@dataclass
class DiscreteMap:
    """Vertex values of a map from a mesh into one of the targets.

    target: "model", "region", "glued" or "product".  rho == 0 marks P0.  For
    product targets rho/phi have shape (N, m) and ``regular`` has shape (N, 2j).
    """

    mesh: Mesh
    rho: np.ndarray
    phi: np.ndarray
    target: str = "model"
    sheet: np.ndarray | None = None
    regular: np.ndarray | None = None
    frozen: np.ndarray | None = None
    rho0: float | None = None

    def __post_init__(self):
        self.rho = np.array(self.rho, float)
        self.phi = np.array(self.phi, float)
        if self.frozen is None:
            self.frozen = self.mesh.is_boundary.copy()
        if self.target == "glued" and self.sheet is None:
            self.sheet = np.zeros(self.mesh.nv, np.int64)
        if self.sheet is not None:
            self.sheet = np.array(self.sheet, np.int64)
            self.sheet[self.rho == 0] = BASE_SHEET
        self.phi = np.where(self.rho == 0, 0.0, self.phi)

    def copy(self) -> "DiscreteMap":
        return DiscreteMap(self.mesh, self.rho.copy(), self.phi.copy(), self.target,
                           None if self.sheet is None else self.sheet.copy(),
                           None if self.regular is None else self.regular.copy(),
                           self.frozen.copy(), self.rho0)

    @property
    def sheets(self) -> np.ndarray:
        return self.sheet if self.sheet is not None else np.zeros(self.mesh.nv, np.int64)

    @property
    def j(self) -> int:
        return 0 if self.regular is None else self.regular.shape[1] // 2

    @property
    def m(self) -> int:
        return self.rho.shape[1] if self.rho.ndim == 2 else 1

    def factor(self, eta: int) -> "DiscreteMap":
        return DiscreteMap(self.mesh, self.rho[:, eta], self.phi[:, eta], "model", frozen=self.frozen)

    def dist(self, i, k) -> np.ndarray:
        """d(u_i, u_k) for index arrays (product metric for product targets)."""
        i = np.asarray(i)
        k = np.asarray(k)
        if self.target == "product":
            tot = np.zeros(np.broadcast(i, k).shape)
            if self.regular is not None:
                tot = tot + np.sum((self.regular[i] - self.regular[k]) ** 2, axis=-1)
            for eta in range(self.m):
                tot = tot + distances_A(0, self.rho[i, eta], self.phi[i, eta],
                                        0, self.rho[k, eta], self.phi[k, eta]) ** 2
            return np.sqrt(tot)
        s = self.sheets
        return distances_A(s[i], self.rho[i], self.phi[i], s[k], self.rho[k], self.phi[k])

    def dist_to_value(self, value_index: int) -> np.ndarray:
        return self.dist(np.arange(self.mesh.nv), np.full(self.mesh.nv, value_index))

    # ---- map file
    def write(self, path, header: str | None = None):
        with open(path, "w") as fh:
            if header:
                fh.write(header)
            fh.write(f"{self.target} {self.j} {self.m}\n")
            for i in range(self.mesh.nv):
                fh.write(f"{i} {int(self.frozen[i])} {self._format_value(i)}\n")

    def _format_value(self, i) -> str:
        def mp(r, f):
            return "P0" if r == 0 else f"{r:.17g} {f:.17g}"
        if self.target == "product":
            parts = [" ".join(f"{v:.17g}" for v in self.regular[i])] if self.j else []
            parts += [mp(self.rho[i, e], self.phi[i, e]) for e in range(self.m)]
            return " ".join(parts)
        if self.target == "glued":
            return "-1 P0" if self.rho[i] == 0 else f"{self.sheet[i]} {self.rho[i]:.17g} {self.phi[i]:.17g}"
        return mp(self.rho[i], self.phi[i])

    @staticmethod
    def read(path, mesh: Mesh, rho0: float | None = None) -> "DiscreteMap":
        lines = [l for l in open(path) if not l.startswith("#")]
        tag, j, m = lines[0].split()
        j, m = int(j), int(m)
        n = mesh.nv
        frozen = np.zeros(n, bool)
        rho = np.zeros((n, m)) if tag == "product" else np.zeros(n)
        phi = np.zeros_like(rho)
        sheet = np.zeros(n, np.int64) if tag == "glued" else None
        reg = np.zeros((n, 2 * j)) if tag == "product" and j else None
        for line in lines[1:]:
            tok = line.split()
            i = int(tok[0])
            frozen[i] = bool(int(tok[1]))
            rest = tok[2:]
            if tag == "product":
                if j:
                    reg[i] = [float(v) for v in rest[:2 * j]]
                    rest = rest[2 * j:]
                for e in range(m):
                    if rest[0] == "P0":
                        rest = rest[1:]
                    else:
                        rho[i, e], phi[i, e] = float(rest[0]), float(rest[1])
                        rest = rest[2:]
            elif tag == "glued":
                if rest[-1] != "P0":
                    sheet[i], rho[i], phi[i] = int(rest[0]), float(rest[1]), float(rest[2])
                else:
                    sheet[i] = BASE_SHEET
            else:
                if rest[0] != "P0":
                    rho[i], phi[i] = float(rest[0]), float(rest[1])
        return DiscreteMap(mesh, rho, phi, tag, sheet, reg, frozen, rho0)


@dataclass
class SolveReport:
    iterations: int
    energy: float
    energy_history: list
    max_move: float
    converged: bool
    el_residual: dict = field(default_factory=dict)
    flagged_vertices: int = 0
    monotone: bool = True
    notes: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


# --------------------------------------------------------------------------
# energy

def edge_distances(u: DiscreteMap) -> np.ndarray:
    e = u.mesh.edges
    return u.dist(e[:, 0], e[:, 1])


def discrete_energy(u: DiscreteMap) -> float:
    return float(np.sum(u.mesh.weights * edge_distances(u) ** 2))


def energy_density(u: DiscreteMap) -> np.ndarray:
    """Per-vertex energy density: half the incident edge energy over the lumped area."""
    e = u.mesh.edges
    c = u.mesh.weights * edge_distances(u) ** 2
    dens = np.zeros(u.mesh.nv)
    np.add.at(dens, e[:, 0], 0.5 * c)
    np.add.at(dens, e[:, 1], 0.5 * c)
    return dens / u.mesh.mass


# --------------------------------------------------------------------------
# the local problem

@dataclass
class _Pairs:
    own: np.ndarray       # row of each pair
    nr: np.ndarray        # neighbor rho
    nf: np.ndarray
    ns: np.ndarray        # neighbor sheet
    w: np.ndarray
    extra: np.ndarray | None = None   # coupling coefficient per pair (product targets)
    kappa: float = 1.0


def _omega(rho, kappa):
    return np.minimum(1.0, np.maximum(rho, 0.0) ** kappa)


def _domega(rho, kappa):
    return np.where(rho < 1.0, kappa * np.maximum(rho, 1e-300) ** (kappa - 1.0), 0.0)


def _local_eval(xr, xf, xs, P: _Pairs, nrows, cache=None, need_log=True):
    """F per row and the Karcher direction sum_j w_j log_x(q_j) / sum_j w_j."""
    pr, pf, ps = xr[P.own], xf[P.own], xs[P.own]
    d = pr + P.nr
    lr = -(pr + P.nr)
    lf = np.zeros(pr.size)
    same = (P.ns == ps) & (P.nr > 0) & (pr > 0)
    if np.any(same):
        g = pair_geometry(pr[same], pf[same], P.nr[same], P.nf[same],
                          s0=None if cache is None else cache[same])
        d[same] = g.dist
        lr[same] = g.log_rho
        lf[same] = g.log_phi
        if cache is not None:
            cache[same] = np.where(np.isfinite(g.s), g.s, cache[same])
    wd2 = P.w * d * d
    if P.extra is not None:
        rbar = 0.5 * (pr + P.nr)
        wd2 = wd2 + P.extra * _omega(rbar, P.kappa)
        lr = lr - P.extra * _domega(rbar, P.kappa) / (4.0 * np.maximum(P.w, 1e-300))
    F = np.bincount(P.own, wd2, nrows)
    F = np.where(xr > 0, F, np.inf)
    if not need_log:
        return F, None, None
    W = np.bincount(P.own, P.w, nrows)
    vr = np.bincount(P.own, P.w * lr, nrows) / W
    vf = np.bincount(P.own, P.w * lf, nrows) / W
    return F, vr, vf


def _subset(P: _Pairs, rows: np.ndarray, nrows: int):
    """Pairs belonging to the selected rows, renumbered 0..len(rows)-1."""
    remap = np.full(nrows, -1)
    remap[rows] = np.arange(rows.size)
    pm = remap[P.own] >= 0
    sub = _Pairs(remap[P.own[pm]], P.nr[pm], P.nf[pm], P.ns[pm], P.w[pm],
                 None if P.extra is None else P.extra[pm], P.kappa)
    return sub, pm


def _descend(xr, xf, xs, P: _Pairs, iters, damping, tol=1e-14, cache=None, first_scale=1.0):
    """Damped Karcher descent with backtracking; rows are independent problems.

    The first step length is scaled by ``first_scale`` (over-relaxation);
    backtracking halves it until F does not increase.  Returns the final point,
    its F, the flagged rows and F at the start.
    """
    nrows = xr.size
    xr, xf = xr.copy(), xf.copy()
    F, vr, vf = _local_eval(xr, xf, xs, P, nrows, cache)
    F_start = F.copy()
    vnorm = np.sqrt(vr ** 2 + np.maximum(xr, 0) ** 6 * vf ** 2)
    active = np.isfinite(F) & (vnorm > tol * np.maximum(1.0, xr))
    flagged = np.zeros(nrows, bool)
    for it in range(iters):
        rows = np.nonzero(active)[0]
        if rows.size == 0:
            break
        S, pm = _subset(P, rows, nrows)
        scache = None if cache is None else cache[pm]
        r0, f0, F0 = xr[rows], xf[rows], F[rows]
        a_r, a_f, s_ = vr[rows], vf[rows], xs[rows]
        tau = np.full(rows.size, 2.0 * damping * (first_scale if it == 0 else 1.0))
        accepted = np.zeros(rows.size, bool)
        tr, tf = r0.copy(), f0.copy()
        Fa, ar, af = F0.copy(), a_r.copy(), a_f.copy()
        for _bt in range(40):
            todo = ~accepted
            if not np.any(todo):
                break
            tr[todo] = r0[todo] + tau[todo] * a_r[todo]
            tf[todo] = f0[todo] + tau[todo] * a_f[todo]
            Fn, gr, gf = _local_eval(tr, tf, s_, S, rows.size, scache)
            ok = todo & (Fn <= F0 + 1e-14 * F0)
            Fa[ok], ar[ok], af[ok] = Fn[ok], gr[ok], gf[ok]
            accepted |= ok
            tau[todo & ~ok] *= 0.5
        if cache is not None:
            cache[pm] = scache
        stuck = ~accepted
        Wr = np.bincount(S.own, S.w, rows.size)
        flagged[rows[stuck]] |= (Wr * vnorm[rows] ** 2 > 1e-9 * F0)[stuck]
        good = rows[accepted]
        step = np.sqrt((tr - r0) ** 2 + np.maximum(r0, 0) ** 6 * (tf - f0) ** 2)
        xr[good], xf[good] = tr[accepted], tf[accepted]
        F[good], vr[good], vf[good] = Fa[accepted], ar[accepted], af[accepted]
        vnorm = np.sqrt(vr ** 2 + np.maximum(xr, 0) ** 6 * vf ** 2)
        moved = np.zeros(nrows, bool)
        moved[rows] = accepted & (step > tol * np.maximum(1.0, r0))
        active = moved & np.isfinite(F) & (vnorm > tol * np.maximum(1.0, xr))
    return xr, xf, F, flagged, F_start


def frechet_update(current, neighbors, weights, damping: float = 0.5, iters: int = 200,
                   tol: float = 1e-14):
    """argmin_p sum_j w_j d^2(p, q_j) over the completed model space.

    ``current`` and the entries of ``neighbors`` are (rho, phi) pairs, rho == 0
    meaning P0.  Returns ((rho, phi), F, flagged).
    """
    nb = np.asarray(neighbors, float).reshape(-1, 2)
    w = np.asarray(weights, float)
    if not w.sum() > 0:
        raise ValueError("total weight must be positive")
    P = _Pairs(np.zeros(len(nb), np.int64), nb[:, 0], nb[:, 1], np.zeros(len(nb), np.int64), w)
    x0 = _start_guess(np.array([current[0]]), np.array([current[1]]), P, 1)
    xr, xf, F, flagged, _ = _descend(x0[0], x0[1], np.zeros(1, np.int64), P, iters, damping, tol)
    F0 = float(np.sum(w * nb[:, 0] ** 2))
    if F0 < F[0]:
        return (0.0, 0.0), F0, bool(flagged[0])
    return (float(xr[0]), float(xf[0])), float(F[0]), bool(flagged[0])


def _start_guess(cr, cf, P: _Pairs, nrows, sheet_rows=None):
    """Current value when interior on the row's sheet, else a chart average of suitable neighbors."""
    xr, xf = cr.astype(float).copy(), cf.astype(float).copy()
    need = xr <= 0
    if np.any(need):
        ok = P.nr > 0
        if sheet_rows is not None:
            ok = ok & (P.ns == sheet_rows[P.own])
        W = np.bincount(P.own, P.w * ok, nrows)
        mr = np.bincount(P.own, P.w * ok * P.nr, nrows)
        mf = np.bincount(P.own, P.w * ok * P.nf, nrows)
        has = W > 0
        fill = need & has
        xr[fill] = mr[fill] / W[fill]
        xf[fill] = mf[fill] / W[fill]
        # nothing to average: start from a small radius
        xr[need & ~has] = 1e-3
        xf[need & ~has] = 0.0
    return xr, xf


# --------------------------------------------------------------------------
# sweeps

class _Updater:
    """Updates a batch of vertices simultaneously (an independent set, or one vertex)."""

    def __init__(self, u: DiscreteMap, sched: Schedule, region: ConvexRegion | None,
                 eta: int | None = None, coupling=None):
        self.u = u
        self.sched = sched
        self.region = region
        self.eta = eta
        self.coupling = coupling
        self.cache = {}
        self.struct = {}
        self.flagged = 0

    def _values(self):
        u = self.u
        if self.eta is None:
            return u.rho, u.phi
        return u.rho[:, self.eta], u.phi[:, self.eta]

    def update(self, verts: np.ndarray, key=None) -> np.ndarray:
        u, A = self.u, self.u.mesh.adj
        rho, phi = self._values()
        sheets = u.sheets if self.eta is None else np.zeros(u.mesh.nv, np.int64)
        struct = self.struct.get(key) if key is not None else None
        if struct is None:
            sub = A[verts]
            counts = np.diff(sub.indptr)
            struct = (counts, np.repeat(np.arange(verts.size), counts), sub.indices.copy(), sub.data.copy())
            if key is not None:
                self.struct[key] = struct
        counts, vpair, idx, w = struct
        # candidate rows: one per (vertex, sheet) for glued targets
        if u.target == "glued":
            cand = np.unique(np.stack([vpair, np.where(rho[idx] > 0, sheets[idx], -1)], 1), axis=0)
            cur = np.stack([np.arange(verts.size), sheets[verts]], 1)
            cand = np.unique(np.concatenate([cand, cur]), axis=0)
            cand = cand[cand[:, 1] >= 0]
            row_v, row_s = cand[:, 0], cand[:, 1]
            starts = np.concatenate([[0], np.cumsum(counts)])
            own = np.repeat(np.arange(row_v.size), counts[row_v])
            pidx = _ranges(starts[row_v], counts[row_v])
        else:
            row_v = np.arange(verts.size)
            row_s = np.zeros(verts.size, np.int64)
            own = vpair
            pidx = np.arange(idx.size)
        nrows = row_v.size
        extra = None
        if self.coupling is not None:
            extra = self.coupling(verts[vpair[pidx]], idx[pidx], w[pidx])
        P = _Pairs(own, rho[idx[pidx]], phi[idx[pidx]], sheets[idx[pidx]], w[pidx], extra,
                   1.0 if self.coupling is None else self.coupling.kappa)
        vr = verts[row_v]
        on_sheet = (sheets[vr] == row_s) & (rho[vr] > 0)
        cr = np.where(on_sheet, rho[vr], 0.0)
        cf = np.where(on_sheet, phi[vr], 0.0)
        xr, xf = _start_guess(cr, cf, P, nrows, row_s)
        cache = None
        if key is not None and u.target != "glued":
            cache = self.cache.get(key)
            if cache is None or cache.size != own.size:
                cache = np.full(own.size, np.nan)
                self.cache[key] = cache
        xr, xf, F, flagged, _ = _descend(xr, xf, row_s, P, self.sched.inner_iters, self.sched.damping,
                                         cache=cache, first_scale=self.sched.omega)
        self.flagged += int(flagged.sum())
        # best interior row per vertex, then the basepoint competitor
        order = np.lexsort((row_s, F, row_v))
        first = order[np.r_[True, row_v[order][1:] != row_v[order][:-1]]]
        best = F[first]
        br, bf, bs = xr[first], xf[first], row_s[first].copy()
        F0 = np.bincount(vpair, w * rho[idx] ** 2, verts.size)
        if extra is not None:
            F0 = F0 + np.bincount(vpair[pidx], extra * _omega(0.5 * P.nr, P.kappa), verts.size)
        to_base = F0 < best
        br[to_base], bf[to_base], bs[to_base] = 0.0, 0.0, BASE_SHEET
        best[to_base] = F0[to_base]

        old_r, old_f, old_s = rho[verts].copy(), phi[verts].copy(), sheets[verts].copy()
        if self.region is not None:
            inside = br > 0
            pr, pf = self.region.project_arrays(np.where(inside, br, 0.0), bf)
            br, bf = pr, pf
        if self.eta is None:
            u.rho[verts], u.phi[verts] = br, bf
            if u.sheet is not None:
                u.sheet[verts] = np.where(br > 0, bs, BASE_SHEET)
        else:
            u.rho[verts, self.eta], u.phi[verts, self.eta] = br, bf
        ns = np.where(br > 0, bs, BASE_SHEET)
        return distances_A(np.where(old_r > 0, old_s, BASE_SHEET), old_r, old_f, ns, br, bf)


def _ranges(starts, counts):
    """Concatenation of arange(s, s + c) over the pairs."""
    if counts.size == 0:
        return np.zeros(0, np.int64)
    off = np.repeat(starts - np.concatenate([[0], np.cumsum(counts)[:-1]]), counts)
    return np.arange(counts.sum()) + off


def _harmonic_fill(mesh: Mesh, values: np.ndarray, frozen: np.ndarray) -> np.ndarray:
    """Scalar discrete harmonic extension of the frozen values (columns independent)."""
    L = mesh.laplacian()
    I = np.nonzero(~frozen)[0]
    B = np.nonzero(frozen)[0]
    out = np.array(values, float, copy=True)
    if I.size == 0:
        return out
    LII = L[I][:, I].tocsc()
    LIB = L[I][:, B]
    rhs = -(LIB @ out[B])
    sol = spsolve(LII, rhs)
    out[I] = sol.reshape(out[I].shape)
    return out


def _initialize(u: DiscreteMap, how: str, region: ConvexRegion | None):
    if how == "given":
        return
    fz = u.frozen
    if u.target == "product":
        return
    if how == "harmonic":
        base = u.rho > 0
        phi_b = np.where(base, u.phi, 0.0)
        u.rho[:] = _harmonic_fill(u.mesh, u.rho, fz)
        u.phi[:] = _harmonic_fill(u.mesh, phi_b, fz)
        u.rho[~fz] = np.maximum(u.rho[~fz], 1e-6)
    elif how == "mean":
        bm = u.rho[fz].mean()
        u.rho[~fz] = bm
        u.phi[~fz] = np.mean(u.phi[fz & (u.rho > 0)]) if np.any(fz & (u.rho > 0)) else 0.0
    else:
        raise ValueError(f"unknown init {how!r}")
    if u.target == "glued":
        # interior sheet from the nearest frozen vertex
        from scipy.spatial import cKDTree
        fidx = np.nonzero(fz)[0]
        _, k = cKDTree(u.mesh.vertices[fidx]).query(u.mesh.vertices[~fz])
        u.sheet[~fz] = u.sheet[fidx[k]]
        u.sheet[~fz & (u.sheet < 0)] = 0
    if region is not None:
        r, f = region.project_arrays(u.rho[~fz], u.phi[~fz])
        u.rho[~fz], u.phi[~fz] = r, f


def _diameter(u: DiscreteMap) -> float:
    b = np.nonzero(u.frozen)[0]
    if b.size == 0:
        return 1.0
    d = u.dist(b, np.full(b.size, b[0]))
    return float(max(d.max(), 1e-12))


def _sweeps(u: DiscreteMap, sched: Schedule, region=None, eta=None, coupling=None,
            energy_fn=None) -> SolveReport:
    mesh = u.mesh
    interior = np.nonzero(~u.frozen)[0]
    if sched.mode == "colored":
        colors = mesh.coloring()
        groups = [interior[colors[interior] == c] for c in range(colors.max() + 1)]
        groups = [g for g in groups if g.size]
    elif sched.mode == "sequential":
        groups = None
    else:
        raise ValueError(f"unknown mode {sched.mode!r}")
    compiled = (sched.engine == "compiled" and eta is None and coupling is None
                and u.target in ("model", "region"))
    if sched.engine not in ("compiled", "vectorized"):
        raise ValueError(f"unknown engine {sched.engine!r}")
    if compiled:
        from . import _kernels as K
        A = mesh.adj
        indptr, indices, wts = A.indptr.astype(np.int64), A.indices.astype(np.int64), A.data.astype(float)
        # same-color vertices are never adjacent, so visiting a color class in
        # turn is the concurrent update from a snapshot of the other classes
        order = (interior if groups is None else np.concatenate(groups)).astype(np.int64)
        cache = np.full(indices.size, np.nan)
        r0 = float(region.rho0) if region is not None else 0.0
        e0, e1 = mesh.edges[:, 0].astype(np.int64), mesh.edges[:, 1].astype(np.int64)

        def energy_fn(x):
            return float(K.edge_energy(e0, e1, mesh.weights, x.rho, x.phi, K.CS))

        def one_sweep():
            mv, nf = K.sweep(order, indptr, indices, wts, u.rho, u.phi, cache, sched.damping,
                             sched.omega, sched.inner_iters, r0, K.CS)
            return float(mv), int(nf)
    else:
        upd = _Updater(u, sched, region, eta, coupling)

        def one_sweep():
            before = upd.flagged
            mv = 0.0
            if groups is None:
                for v in interior:
                    mv = max(mv, float(upd.update(np.array([v]), key=("v", v)).max()))
            else:
                for c, g in enumerate(groups):
                    mv = max(mv, float(upd.update(g, key=c).max()))
            return mv, upd.flagged - before

    energy_fn = energy_fn or discrete_energy
    E = energy_fn(u)
    hist = [E]
    tol = sched.tol * _diameter(u)
    converged = interior.size == 0
    move = 0.0
    it = 0
    flagged = 0
    monotone = True
    while not converged and it < sched.max_sweeps:
        it += 1
        move, nf = one_sweep()
        flagged += nf
        En = energy_fn(u)
        if En > E + 1e-12 * max(E, 1.0):
            monotone = False
        rel = (E - En) / max(E, 1e-300)
        hist.append(En)
        E = En
        if move < tol and rel < sched.energy_rtol:
            converged = True
    if not converged:
        log.warning("no convergence after %d sweeps (max move %.3e)", it, move)
    return SolveReport(it, E, hist, move, converged, flagged_vertices=flagged, monotone=monotone)


def constant_boundary(u: DiscreteMap) -> bool:
    b = np.nonzero(u.frozen)[0]
    return bool(np.all(u.dist(b, np.full(b.size, b[0])) == 0))


def solve_dirichlet(mesh: Mesh, boundary: DiscreteMap, schedule: Schedule | None = None,
                    region: ConvexRegion | None = None) -> tuple[DiscreteMap, SolveReport]:
    """Minimize the discrete energy with the frozen vertices of ``boundary`` held fixed."""
    sched = schedule or Schedule()
    u = boundary.copy()
    if u.target == "product":
        return solve_product(mesh, u, schedule=sched)
    if constant_boundary(u):
        b = np.nonzero(u.frozen)[0][0]
        u.rho[:], u.phi[:] = u.rho[b], u.phi[b]
        if u.sheet is not None:
            u.sheet[:] = u.sheet[b]
        return u, SolveReport(0, 0.0, [0.0], 0.0, True)
    _initialize(u, sched.init, region)
    rep = _sweeps(u, sched, region)
    if u.target in ("model", "region"):
        rep.el_residual = el_residual_summary(u)
    return u, rep


def solve_constrained(mesh: Mesh, boundary: DiscreteMap, region: ConvexRegion,
                      schedule: Schedule | None = None) -> tuple[DiscreteMap, SolveReport]:
    """Dirichlet problem into the closed convex region; boundary values are projected first."""
    b = boundary.copy()
    b.target = "region"
    b.rho0 = region.rho0
    fz = b.frozen
    r, f = region.project_arrays(b.rho[fz], b.phi[fz])
    b.rho[fz], b.phi[fz] = r, f
    u, rep = solve_dirichlet(mesh, b, schedule, region=region)
    # projected boundary values sit on the boundary curve up to rounding
    out = float(np.max(region.distance_to(u.rho, u.phi)))
    rep.notes["max_region_distance"] = out
    rep.notes["image_in_region"] = out <= 1e-9 * max(1.0, region.rho0)
    return u, rep


def approximating_harmonic(v: DiscreteMap, radius: float, schedule: Schedule | None = None):
    """Harmonic replacement of v on the submesh B_radius with the same boundary trace.

    Returns (w on the submesh, report, sup_x d(v(x), w(x)), old vertex indices).
    """
    sub, used = v.mesh.submesh(radius)
    vs = DiscreteMap(sub, v.rho[used], v.phi[used], v.target,
                     None if v.sheet is None else v.sheet[used],
                     None if v.regular is None else v.regular[used], None, v.rho0)
    sched = schedule or Schedule()
    sched = Schedule(**{**asdict(sched), "init": "given"})
    if v.target == "product":
        # factors decouple: replace each one separately
        w, rep = solve_product(sub, vs, schedule=sched)
    else:
        w, rep = solve_dirichlet(sub, vs, sched)
    sup = float(np.max(_pointwise(vs, w)))
    return w, rep, sup, used


def _pointwise(a: DiscreteMap, b: DiscreteMap) -> np.ndarray:
    if a.target == "product":
        tot = np.zeros(a.mesh.nv)
        if a.regular is not None:
            tot += np.sum((a.regular - b.regular) ** 2, axis=1)
        for e in range(a.m):
            tot += distances_A(0, a.rho[:, e], a.phi[:, e], 0, b.rho[:, e], b.phi[:, e]) ** 2
        return np.sqrt(tot)
    return distances_A(a.sheets, a.rho, a.phi, b.sheets, b.rho, b.phi)


def pointwise_distance(a: DiscreteMap, b: DiscreteMap) -> np.ndarray:
    return _pointwise(a, b)


class _Coupling:
    """Cross term mu * omega(rho) * |dV|^2 between the regular part and singular factor 0."""

    def __init__(self, u: DiscreteMap, kappa: float, mu: float):
        self.u, self.kappa, self.mu = u, kappa, mu

    def __call__(self, vi, vj, w):
        dv = np.sum((self.u.regular[vi] - self.u.regular[vj]) ** 2, axis=1)
        return self.mu * w * dv


def product_energy(u: DiscreteMap, kappa: float | None = None, mu: float = 1.0) -> float:
    e = u.mesh.edges
    w = u.mesh.weights
    E = 0.0
    dv = np.zeros(len(e))
    if u.regular is not None:
        dv = np.sum((u.regular[e[:, 0]] - u.regular[e[:, 1]]) ** 2, axis=1)
        E += float(np.sum(w * dv))
    for eta in range(u.m):
        d = distances_A(0, u.rho[e[:, 0], eta], u.phi[e[:, 0], eta], 0, u.rho[e[:, 1], eta], u.phi[e[:, 1], eta])
        E += float(np.sum(w * d * d))
    if kappa is not None and u.m and u.regular is not None:
        rbar = 0.5 * (u.rho[e[:, 0], 0] + u.rho[e[:, 1], 0])
        E += float(np.sum(mu * w * dv * _omega(rbar, kappa)))
    return E


def solve_product(mesh: Mesh, boundary: DiscreteMap, j: int | None = None, m: int | None = None,
                  kappa: float | None = None, mu: float = 1.0, schedule: Schedule | None = None,
                  max_outer: int = 200) -> tuple[DiscreteMap, SolveReport]:
    """Maps into R^{2j} x H^m with the product metric, optionally coupled.

    Without ``kappa`` each factor is solved on its own: the regular part by the
    linear harmonic extension, each singular factor by model-space sweeps.
    With ``kappa`` the energy gains mu * omega(rho_1) * |dV|^2 per edge with
    omega(rho) = min(1, rho^kappa), minimized by alternating the two blocks.
    """
    sched = schedule or Schedule()
    u = boundary.copy()
    u.target = "product"
    if u.rho.ndim == 1:
        u.rho, u.phi = u.rho[:, None], u.phi[:, None]
    if j is not None and j != u.j:
        raise ValueError("declared j does not match the data")
    if m is not None and m != u.m:
        raise ValueError("declared m does not match the data")
    fz = u.frozen
    reports = []

    def solve_regular(weights=None):
        if u.regular is None:
            return
        if weights is None:
            u.regular[:] = _harmonic_fill(mesh, u.regular, fz)
        else:
            wmesh = _reweighted(mesh, weights)
            u.regular[:] = _harmonic_fill(wmesh, u.regular, fz)

    def solve_factor(eta, coupling=None, init=None):
        f = u.factor(eta)
        sub = Schedule(**{**asdict(sched), "init": init or sched.init})
        if init is None and constant_boundary(f):
            b = np.nonzero(fz)[0][0]
            u.rho[:, eta], u.phi[:, eta] = f.rho[b], f.phi[b]
            return SolveReport(0, 0.0, [0.0], 0.0, True)
        if sub.init != "given":
            _initialize(f, sub.init, None)
            u.rho[:, eta], u.phi[:, eta] = f.rho, f.phi
        return _sweeps(u, sub, eta=eta, coupling=coupling,
                       energy_fn=lambda x: product_energy(x, kappa, mu))

    solve_regular()
    for eta in range(u.m):
        reports.append(solve_factor(eta))
    hist = [product_energy(u, kappa, mu)]
    converged = all(r.converged for r in reports)
    it = sum(r.iterations for r in reports)
    if kappa is not None and u.regular is not None and u.m:
        coupling = _Coupling(u, kappa, mu)
        converged = False
        for outer in range(max_outer):
            e = mesh.edges
            rbar = 0.5 * (u.rho[e[:, 0], 0] + u.rho[e[:, 1], 0])
            solve_regular(mesh.weights * (1.0 + mu * _omega(rbar, kappa)))
            r = solve_factor(0, coupling, init="given")
            it += r.iterations
            hist.append(product_energy(u, kappa, mu))
            if abs(hist[-2] - hist[-1]) <= sched.energy_rtol * max(hist[-1], 1e-300) * 10 and r.iterations <= 1:
                converged = True
                break
    mono = all(b <= a + 1e-12 * max(a, 1.0) for a, b in zip(hist, hist[1:]))
    rep = SolveReport(it, hist[-1], hist, max([r.max_move for r in reports] + [0.0]), converged, monotone=mono)
    return u, rep


def _reweighted(mesh: Mesh, weights: np.ndarray) -> Mesh:
    m = Mesh.__new__(Mesh)
    m.__dict__.update(mesh.__dict__)
    m.weights = weights
    m._adjacency()
    return m


# --------------------------------------------------------------------------
# Euler-Lagrange residual

def el_residual(u: DiscreteMap) -> np.ndarray:
    """rho * Lap(rho) - 3 rho^6 |grad phi|^2 per vertex (nan on frozen vertices and at P0)."""
    mesh = u.mesh
    e, w = mesh.edges, mesh.weights
    r, f = u.rho, u.phi
    lap = np.zeros(mesh.nv)
    np.add.at(lap, e[:, 0], w * (r[e[:, 1]] - r[e[:, 0]]))
    np.add.at(lap, e[:, 1], w * (r[e[:, 0]] - r[e[:, 1]]))
    g2 = np.zeros(mesh.nv)
    c = w * (f[e[:, 1]] - f[e[:, 0]]) ** 2
    np.add.at(g2, e[:, 0], 0.5 * c)
    np.add.at(g2, e[:, 1], 0.5 * c)
    res = r * lap / mesh.mass - 3.0 * r ** 6 * g2 / mesh.mass
    res[u.frozen | (r == 0)] = np.nan
    return res


def el_residual_summary(u: DiscreteMap, radius: float = 0.5, rho_min: float = 0.05) -> dict:
    """RMS and max of the residual over interior vertices with |x| <= radius and rho >= rho_min."""
    res = el_residual(u)
    x = np.linalg.norm(u.mesh.vertices, axis=1)
    sel = (x <= radius) & np.isfinite(res) & (u.rho >= rho_min)
    if not np.any(sel):
        return {"rms": float("nan"), "max": float("nan"), "count": 0}
    v = res[sel]
    return {"rms": float(np.sqrt(np.mean(v * v))), "max": float(np.max(np.abs(v))), "count": int(sel.sum())}


def boundary_map(mesh: Mesh, rho_fn, phi_fn, target: str = "model", sheet_fn=None) -> DiscreteMap:
    """Map with boundary values from functions of the angle; interior left at P0."""
    th = np.arctan2(mesh.vertices[:, 1], mesh.vertices[:, 0])
    rho = np.zeros(mesh.nv)
    phi = np.zeros(mesh.nv)
    b = mesh.boundary
    rho[b] = rho_fn(th[b])
    phi[b] = phi_fn(th[b])
    sheet = None
    if target == "glued":
        sheet = np.zeros(mesh.nv, np.int64)
        if sheet_fn is not None:
            sheet[b] = sheet_fn(th[b])
    return DiscreteMap(mesh, rho, phi, target, sheet)
