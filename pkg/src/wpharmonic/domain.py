"""Triangulated unit balls, P1 stiffness weights, and circle traces."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import sparse
from scipy.spatial import Delaunay, cKDTree

log = logging.getLogger(__name__)


@dataclass
class ConformalMetric:
    """Domain metric e^{2 psi} |dx|^2; ``c`` bounds the C^2 norm of psi."""

    psi: Callable[[np.ndarray], np.ndarray]
    c: float

    @staticmethod
    def euclidean() -> "ConformalMetric":
        return ConformalMetric(lambda x: np.zeros(len(x)), 0.0)

    @staticmethod
    def radial_bump(eps: float) -> "ConformalMetric":
        # psi = eps |x|^2 ; |psi|_{C^2} <= 4 eps on the unit ball
        return ConformalMetric(lambda x: eps * np.sum(np.asarray(x) ** 2, axis=1), 4.0 * abs(eps))


@dataclass
class Mesh:
    vertices: np.ndarray
    simplices: np.ndarray
    boundary: np.ndarray
    h: float
    metric: ConformalMetric = field(default_factory=ConformalMetric.euclidean)
    edges: np.ndarray = None
    weights: np.ndarray = None
    clamped: int = 0

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, float)
        self.simplices = np.ascontiguousarray(self.simplices, np.int64)
        self.boundary = np.unique(np.asarray(self.boundary, np.int64))
        if self.edges is None:
            self._assemble()
        self.psi = np.asarray(self.metric.psi(self.vertices), float)
        self.is_boundary = np.zeros(self.nv, bool)
        self.is_boundary[self.boundary] = True
        self._adjacency()

    # ---- basic sizes
    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def nv(self) -> int:
        return self.vertices.shape[0]

    @property
    def interior(self) -> np.ndarray:
        return np.nonzero(~self.is_boundary)[0]

    # ---- assembly
    def _assemble(self):
        """P1 stiffness; in 2-D the off-diagonal entries are minus the cotangent weights."""
        X = self.vertices
        S = self.simplices
        n = self.dim
        P = X[S]                                    # (T, n+1, n)
        E = P[:, 1:, :] - P[:, :1, :]               # (T, n, n)
        det = np.linalg.det(E)
        vol = np.abs(det) / math.factorial(n)
        Einv = np.linalg.inv(E).transpose(0, 2, 1)  # rows: gradients of bary coords 1..n
        grads = np.concatenate([-Einv.sum(axis=1, keepdims=True), Einv], axis=1)
        # conformal factor: energy density scales by e^{(n-2) psi}
        psi_c = self.metric.psi(P.mean(axis=1)) if n != 2 else np.zeros(len(S))
        factor = vol * np.exp((n - 2) * psi_c)
        K = np.einsum("tik,tjk->tij", grads, grads) * factor[:, None, None]
        self.tri_vol = vol
        rows, cols, vals = [], [], []
        for i in range(n + 1):
            for j in range(i + 1, n + 1):
                rows.append(S[:, i])
                cols.append(S[:, j])
                vals.append(-K[:, i, j])
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        vals = np.concatenate(vals)
        lo = np.minimum(rows, cols)
        hi = np.maximum(rows, cols)
        # per-simplex edge weights are kept for clipped energies
        self.simplex_edge_weight = np.stack(np.split(vals, n * (n + 1) // 2), axis=1)
        W = sparse.coo_matrix((vals, (lo, hi)), shape=(self.nv, self.nv)).tocsr()
        W.sum_duplicates()
        W = W.tocoo()
        w = W.data
        neg = w < 0
        self.clamped = int(neg.sum())
        if self.clamped:
            log.warning("clamped %d negative edge weights to zero", self.clamped)
        self.edges = np.stack([W.row, W.col], axis=1).astype(np.int64)
        self.weights = np.where(neg, 0.0, w)
        order = np.lexsort((self.edges[:, 1], self.edges[:, 0]))
        self.edges = self.edges[order]
        self.weights = self.weights[order]

    def _adjacency(self):
        i, j = self.edges[:, 0], self.edges[:, 1]
        A = sparse.coo_matrix((np.concatenate([self.weights, self.weights]),
                               (np.concatenate([i, j]), np.concatenate([j, i]))),
                              shape=(self.nv, self.nv)).tocsr()
        A.sort_indices()
        self.adj = A
        mass = np.zeros(self.nv)
        np.add.at(mass, self.simplices.ravel(), np.repeat(self.tri_vol / (self.dim + 1), self.dim + 1))
        self.mass = mass

    def neighbors(self, v: int):
        a, b = self.adj.indptr[v], self.adj.indptr[v + 1]
        return self.adj.indices[a:b], self.adj.data[a:b]

    def laplacian(self) -> sparse.csr_matrix:
        """Weighted graph Laplacian L = D - W (positive semidefinite)."""
        d = np.asarray(self.adj.sum(axis=1)).ravel()
        return (sparse.diags(d) - self.adj).tocsr()

    def coloring(self) -> np.ndarray:
        """Greedy vertex coloring in index order, deterministic."""
        colors = np.full(self.nv, -1, np.int64)
        indptr, ind = self.adj.indptr, self.adj.indices
        for v in range(self.nv):
            used = set(colors[ind[indptr[v]:indptr[v + 1]]].tolist())
            c = 0
            while c in used:
                c += 1
            colors[v] = c
        return colors

    def vertex_at_origin(self) -> int:
        return int(np.argmin(np.sum(self.vertices ** 2, axis=1)))

    def total_incident_weight(self) -> np.ndarray:
        return np.asarray(self.adj.sum(axis=1)).ravel()

    def submesh(self, radius: float) -> tuple["Mesh", np.ndarray]:
        """Vertices with |x| <= radius and the simplices among them; returns (mesh, old indices)."""
        keep = np.sum(self.vertices ** 2, axis=1) <= radius ** 2 * (1 + 1e-12)
        tri_keep = keep[self.simplices].all(axis=1)
        S = self.simplices[tri_keep]
        used = np.unique(S)
        new = -np.ones(self.nv, np.int64)
        new[used] = np.arange(used.size)
        # boundary: vertices of the kept region touching a removed simplex or the old boundary
        touched = np.zeros(self.nv, bool)
        touched[self.simplices[~tri_keep].ravel()] = True
        bnd = used[touched[used] | self.is_boundary[used]]
        sub = Mesh(self.vertices[used], new[S], new[bnd], self.h, self.metric)
        return sub, used

    # ---- io
    def write(self, path, header: str | None = None):
        with open(path, "w") as fh:
            if header:
                fh.write(header)
            fh.write(f"{self.dim} {self.nv} {len(self.simplices)} {self.h:.17g}\n")
            for x in self.vertices:
                fh.write(" ".join(f"{c:.17g}" for c in x) + "\n")
            for s in self.simplices:
                fh.write(" ".join(str(int(k)) for k in s) + "\n")
            fh.write(" ".join(str(int(b)) for b in self.boundary) + "\n")

    @staticmethod
    def read(path, metric: ConformalMetric | None = None) -> "Mesh":
        with open(path) as fh:
            lines = (l for l in fh if not l.startswith("#"))
            n, nv, nt, h = next(lines).split()
            n, nv, nt, h = int(n), int(nv), int(nt), float(h)
            V = np.array([[float(c) for c in next(lines).split()] for _ in range(nv)])
            T = np.array([[int(c) for c in next(lines).split()] for _ in range(nt)])
            B = np.array([int(c) for c in next(lines).split()], np.int64)
        return Mesh(V, T, B, h, metric or ConformalMetric.euclidean())


def build_disk_mesh(h: float, metric: ConformalMetric | None = None, dim: int = 2) -> Mesh:
    """Quasi-uniform triangulation of the unit ball.

    Interior vertices sit on an equilateral lattice through the origin, the
    boundary is a uniform ring on the unit circle, and the connectivity is the
    Delaunay triangulation of the union.  Deterministic in h.
    """
    if not 0 < h < 1:
        raise ValueError("need 0 < h < 1")
    if dim != 2:
        return _build_ball_mesh(h, metric, dim)
    if h < 0.004:
        raise MemoryError("h below the supported memory budget")
    nb = int(math.ceil(2 * math.pi / h))
    th = 2 * math.pi * np.arange(nb) / nb
    ring = np.stack([np.cos(th), np.sin(th)], axis=1)
    dy = h * math.sqrt(3) / 2
    m = int(math.ceil(1 / dy)) + 1
    J = np.arange(-m, m + 1)
    pts = []
    for j in J:
        off = 0.5 * h * (j % 2)
        k = int(math.ceil(1 / h)) + 1
        x = off + h * np.arange(-k, k + 1)
        pts.append(np.stack([x, np.full(x.size, j * dy)], axis=1))
    lat = np.concatenate(pts)
    lat = lat[np.linalg.norm(lat, axis=1) < 1 - 0.6 * h]
    V = np.concatenate([lat, ring])
    tri = Delaunay(V)
    S = tri.simplices
    # drop degenerate slivers Delaunay may produce on the ring
    P = V[S]
    area = 0.5 * np.abs((P[:, 1, 0] - P[:, 0, 0]) * (P[:, 2, 1] - P[:, 0, 1])
                        - (P[:, 2, 0] - P[:, 0, 0]) * (P[:, 1, 1] - P[:, 0, 1]))
    S = S[area > 1e-12 * h * h]
    S = np.sort(S, axis=1)
    S = S[np.lexsort(S.T[::-1])]
    B = np.arange(len(lat), len(V))
    return Mesh(V, S, B, h, metric or ConformalMetric.euclidean())


def _build_ball_mesh(h, metric, dim):
    # experimental: cubic lattice plus a Fibonacci-like sphere shell (dim=3)
    if dim != 3:
        raise NotImplementedError("only n = 2 and an experimental n = 3 are provided")
    k = int(math.ceil(1 / h))
    g = h * np.arange(-k, k + 1)
    X, Y, Z = np.meshgrid(g, g, g, indexing="ij")
    lat = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
    lat = lat[np.linalg.norm(lat, axis=1) < 1 - 0.6 * h]
    ns = int(math.ceil(4 * math.pi / h ** 2))
    i = np.arange(ns) + 0.5
    phi = np.arccos(1 - 2 * i / ns)
    th = math.pi * (1 + 5 ** 0.5) * i
    sph = np.stack([np.cos(th) * np.sin(phi), np.sin(th) * np.sin(phi), np.cos(phi)], axis=1)
    V = np.concatenate([lat, sph])
    S = Delaunay(V).simplices
    return Mesh(V, np.sort(S, axis=1), np.arange(len(lat), len(V)), h, metric or ConformalMetric.euclidean())


# --------------------------------------------------------------------------
# traces

@dataclass
class CircleTrace:
    center: np.ndarray
    radius: float
    theta: np.ndarray
    points: np.ndarray
    stencil: np.ndarray       # (samples, 3) vertex indices
    weights: np.ndarray       # (samples, 3) barycentric weights
    jacobian: np.ndarray      # e^{psi} at the samples (line element factor)

    def interpolate(self, values: np.ndarray) -> np.ndarray:
        return np.einsum("sk,sk->s", np.asarray(values)[self.stencil], self.weights)

    def write_csv(self, path, values=None, header: str | None = None):
        import csv
        with open(path, "w", newline="") as fh:
            if header:
                fh.write(header)
            w = csv.writer(fh)
            w.writerow(["theta", "x", "y"] + (["value"] if values is not None else []))
            for k, (t, p) in enumerate(zip(self.theta, self.points)):
                row = [f"{t:.15g}", f"{p[0]:.15g}", f"{p[1]:.15g}"]
                if values is not None:
                    row.append(f"{values[k]:.15g}")
                w.writerow(row)


class _Locator:
    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        P = mesh.vertices[mesh.simplices]
        self.P = P
        self.tree = cKDTree(P.mean(axis=1))
        T = P[:, 1:, :] - P[:, :1, :]
        self.Tinv = np.linalg.inv(T.transpose(0, 2, 1))

    def locate(self, pts: np.ndarray, k: int = 16):
        _, cand = self.tree.query(pts, k=k)
        best_idx = np.full(len(pts), -1)
        best_w = np.zeros((len(pts), 3))
        best_score = np.full(len(pts), -np.inf)
        for c in range(k):
            t = cand[:, c]
            lam = np.einsum("pij,pj->pi", self.Tinv[t], pts - self.P[t, 0])
            w = np.concatenate([1 - lam.sum(axis=1, keepdims=True), lam], axis=1)
            score = w.min(axis=1)
            better = score > best_score
            best_score[better] = score[better]
            best_idx[better] = t[better]
            best_w[better] = w[better]
        if np.any(best_score < -1e-9):
            raise ValueError("sample point outside the mesh")
        return best_idx, best_w


def circle_trace(mesh: Mesh, r: float, samples: int, center=(0.0, 0.0)) -> CircleTrace:
    if mesh.dim != 2:
        raise NotImplementedError("circle traces are two dimensional")
    c = np.asarray(center, float)
    rad = np.linalg.norm(mesh.vertices[mesh.boundary] - 0, axis=1).min()
    if not (0 < r and np.linalg.norm(c) + r < rad - 0.5 * mesh.h + 1e-12):
        raise ValueError("circle leaves the admissible part of the mesh")
    th = 2 * math.pi * np.arange(samples) / samples
    pts = c + r * np.stack([np.cos(th), np.sin(th)], axis=1)
    loc = getattr(mesh, "_locator", None)
    if loc is None:
        loc = _Locator(mesh)
        mesh._locator = loc
    tri, w = loc.locate(pts)
    st = mesh.simplices[tri]
    jac = np.exp(mesh.metric.psi(pts))
    return CircleTrace(c, r, th, pts, st, w, jac)


def integrate_circle(trace: CircleTrace, values: np.ndarray) -> float:
    """Periodic trapezoid rule for the line integral of the sampled values."""
    v = np.asarray(values, float) * trace.jacobian
    return float(2 * math.pi * trace.radius * v.mean())


def edge_fraction_inside(mesh: Mesh, r: float, center=(0.0, 0.0)) -> np.ndarray:
    """Length fraction of every edge inside the closed ball of radius r."""
    c = np.asarray(center, float)
    A = mesh.vertices[mesh.edges[:, 0]] - c
    B = mesh.vertices[mesh.edges[:, 1]] - c
    d = B - A
    aa = np.sum(d * d, axis=1)
    bb = 2 * np.sum(A * d, axis=1)
    cc = np.sum(A * A, axis=1) - r * r
    disc = bb * bb - 4 * aa * cc
    frac = np.zeros(len(A))
    ok = disc > 0
    sq = np.sqrt(np.where(ok, disc, 0.0))
    t0 = np.clip((-bb - sq) / (2 * aa), 0, 1)
    t1 = np.clip((-bb + sq) / (2 * aa), 0, 1)
    frac[ok] = (t1 - t0)[ok]
    return frac


def _sector_or_triangle(P, Q, r, inside):
    cross = P[..., 0] * Q[..., 1] - P[..., 1] * Q[..., 0]
    dot = np.sum(P * Q, axis=-1)
    return np.where(inside, 0.5 * cross, 0.5 * r * r * np.arctan2(cross, dot))


def simplex_fraction_inside(mesh: Mesh, r: float, center=(0.0, 0.0)) -> np.ndarray:
    """Area fraction of every triangle inside the closed disk of radius r (exact, 2-D)."""
    if mesh.dim != 2:
        raise NotImplementedError("disk clipping is two dimensional")
    c = np.asarray(center, float)
    P = mesh.vertices[mesh.simplices] - c                   # (T, 3, 2)
    A = P
    B = np.roll(P, -1, axis=1)
    d = B - A
    aa = np.sum(d * d, axis=-1)
    bb = 2 * np.sum(A * d, axis=-1)
    cc = np.sum(A * A, axis=-1) - r * r
    disc = bb * bb - 4 * aa * cc
    sq = np.sqrt(np.maximum(disc, 0.0))
    hit = disc > 0
    t0 = np.where(hit, np.clip((-bb - sq) / (2 * aa), 0, 1), 0.0)
    t1 = np.where(hit, np.clip((-bb + sq) / (2 * aa), 0, 1), 0.0)
    X0 = A + t0[..., None] * d
    X1 = A + t1[..., None] * d
    # pieces [A, X0] and [X1, B] lie outside, [X0, X1] inside (empty when there is no hit)
    area = (_sector_or_triangle(A, X0, r, False) + _sector_or_triangle(X0, X1, r, hit)
            + _sector_or_triangle(X1, B, r, False))
    total = np.abs(area.sum(axis=1))
    return np.clip(total / mesh.tri_vol, 0.0, 1.0)
