"""Energy profiles, blow-ups, tangent-map structure and the comb comparison.

Everything here reads maps through a small sampler interface: ``evaluate(pts)``
returns target values at arbitrary domain points.  Discrete maps are sampled by
barycentric interpolation in the chart, synthetic maps are closed-form, and a
blow-up is a sampler wrapping another one.  Distances between samples always
go through the target metric, never through chart coordinates.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import optimize
from scipy.sparse import csgraph

from .domain import ConformalMetric, Mesh, _Locator, edge_fraction_inside, simplex_fraction_inside
from .glued_space import BASE_SHEET, distances_A, interpolate_A
from .model_space import (ConvexRegion, c_star, distances, gamma_gap, profile_phi,
                          scale_arrays)
from .solver import DiscreteMap, Schedule, SolveReport, discrete_energy, solve_dirichlet

log = logging.getLogger(__name__)


class ResolutionWarning(UserWarning):
    pass


class DataQualityError(ValueError):
    pass


class DegenerateCenterError(ValueError):
    pass


class UnstablePartitionError(ValueError):
    def __init__(self, msg, candidates):
        super().__init__(msg)
        self.candidates = candidates


# --------------------------------------------------------------------------
# sampled values

@dataclass
class Values:
    """Target values at a set of points.

    sheet/rho/phi have shape (N,) for one singular factor or (N, m) for m of
    them; ``regular`` holds Euclidean coordinates of a product target.
    """

    sheet: np.ndarray
    rho: np.ndarray
    phi: np.ndarray
    regular: np.ndarray | None = None

    def __len__(self):
        return self.rho.shape[0]

    def take(self, idx) -> "Values":
        return Values(self.sheet[idx], self.rho[idx], self.phi[idx],
                      None if self.regular is None else self.regular[idx])

    def scaled(self, lam: float) -> "Values":
        r, f = scale_arrays(lam, self.rho, self.phi)
        reg = None if self.regular is None else lam * self.regular
        return Values(self.sheet, r, np.where(self.rho == 0, 0.0, f), reg)

    def shifted(self, c) -> "Values":
        """T_c: phi -> phi - c away from P0 (an isometry)."""
        return Values(self.sheet, self.rho, np.where(self.rho == 0, 0.0, self.phi - c), self.regular)


def value_distance(a: Values, b: Values) -> np.ndarray:
    """Pointwise target distance between two broadcastable value sets."""
    if a.rho.ndim <= 1 and b.rho.ndim <= 1 and a.regular is None:
        return distances_A(a.sheet, a.rho, a.phi, b.sheet, b.rho, b.phi)
    tot = 0.0
    if a.regular is not None:
        tot = np.sum((a.regular - b.regular) ** 2, axis=-1)
    for e in range(a.rho.shape[-1]):
        d = distances_A(a.sheet[..., e], a.rho[..., e], a.phi[..., e],
                        b.sheet[..., e], b.rho[..., e], b.phi[..., e])
        tot = tot + d * d
    return np.sqrt(tot)


def pairwise_distance(v: Values) -> np.ndarray:
    n = len(v)
    I, J = np.triu_indices(n, 1)
    D = np.zeros((n, n))
    if I.size:
        d = value_distance(v.take(I), v.take(J))
        D[I, J] = d
        D[J, I] = d
    return D


class Sampler:
    """Anything with ``evaluate(points) -> Values`` on a domain of dimension ``dim``."""

    dim: int = 2
    metric: ConformalMetric = None

    def evaluate(self, pts: np.ndarray) -> Values:
        raise NotImplementedError

    def at(self, x) -> Values:
        return self.evaluate(np.asarray(x, float)[None, :])


class DiscreteSampler(Sampler):
    """P1 interpolation of a discrete map in the chart.

    Within a triangle rho is interpolated linearly; phi is averaged over the
    vertices that are not P0 and, for glued targets, lie on the dominant
    sheet.  Vertices on other sheets enter rho with a negative sign, the
    coordinate along the broken geodesic through P0.  ``part="singular"``
    drops the regular factor of a product map.
    """

    def __init__(self, u: DiscreteMap, part: str = "all"):
        if part not in ("all", "singular"):
            raise ValueError(part)
        self.u = u
        self.part = part
        self.dim = u.mesh.dim
        self.metric = u.mesh.metric
        self._loc = getattr(u.mesh, "_locator", None)

    def vertex_values(self) -> Values:
        u = self.u
        reg = u.regular if (u.target == "product" and self.part == "all") else None
        if u.target == "product":
            sh = np.where(u.rho == 0, BASE_SHEET, 0)
            return Values(sh, u.rho, u.phi, reg)
        return Values(u.sheets.copy(), u.rho, u.phi)

    def evaluate(self, pts) -> Values:
        pts = np.atleast_2d(np.asarray(pts, float))
        if self._loc is None:
            self._loc = _Locator(self.u.mesh)
            self.u.mesh._locator = self._loc
        tri, w = self._loc.locate(pts)
        st = self.u.mesh.simplices[tri]
        vv = self.vertex_values()
        if vv.rho.ndim == 1:
            s, r, f = _interp_factor(vv.sheet[st], vv.rho[st], vv.phi[st], w)
        else:
            cols = [_interp_factor(vv.sheet[st, e], vv.rho[st, e], vv.phi[st, e], w)
                    for e in range(vv.rho.shape[1])]
            s, r, f = (np.stack([c[k] for c in cols], axis=1) for k in range(3))
        reg = None if vv.regular is None else np.einsum("pk,pkd->pd", w, vv.regular[st])
        return Values(s, r, f, reg)


def _interp_factor(S, R, F, w):
    n = R.shape[0]
    live = R > 0
    # dominant sheet: the live vertex of largest weight
    score = np.where(live, w, -np.inf)
    k = np.argmax(score, axis=1)
    sheet = S[np.arange(n), k]
    none = ~live.any(axis=1)
    same = live & (S == sheet[:, None])
    rho = np.sum(w * np.where(same, R, -R), axis=1)
    wf = np.where(same, w, 0.0)
    tot = wf.sum(axis=1)
    phi = np.sum(wf * F, axis=1) / np.where(tot > 0, tot, 1.0)
    base = none | (rho <= 0)
    rho = np.where(base, 0.0, rho)
    phi = np.where(base, 0.0, phi)
    sheet = np.where(base, BASE_SHEET, sheet)
    return sheet, rho, phi


class AnalyticMap(Sampler):
    """Closed-form map; ``fn(pts) -> (sheet, rho, phi)`` arrays."""

    def __init__(self, fn: Callable, name: str = "analytic", metric: ConformalMetric | None = None):
        self.fn = fn
        self.name = name
        self.metric = metric or ConformalMetric.euclidean()

    def evaluate(self, pts) -> Values:
        pts = np.atleast_2d(np.asarray(pts, float))
        s, r, f = self.fn(pts)
        r = np.asarray(r, float)
        s = np.where(r == 0, BASE_SHEET, np.asarray(s, np.int64))
        return Values(s, r, np.where(r == 0, 0.0, np.asarray(f, float)))


class RescaledSampler(Sampler):
    """x -> T_shift(lam * base(x0 + sigma x))."""

    def __init__(self, base: Sampler, x0, sigma: float, lam: float, shift: float = 0.0):
        self.base, self.x0, self.sigma, self.lam, self.shift = base, np.asarray(x0, float), sigma, lam, shift
        self.dim = base.dim
        m = base.metric
        # pulled-back line element; its C^2 bound scales with sigma^2
        self.metric = None if m is None else ConformalMetric(lambda p: m.psi(self.x0 + sigma * p),
                                                              m.c * sigma * sigma)

    def evaluate(self, pts) -> Values:
        pts = np.atleast_2d(np.asarray(pts, float))
        v = self.base.evaluate(self.x0 + self.sigma * pts).scaled(self.lam)
        return v.shifted(self.shift) if self.shift else v

    def with_shift(self, c: float) -> "RescaledSampler":
        return RescaledSampler(self.base, self.x0, self.sigma, self.lam, c)


def as_sampler(src, part: str = "all") -> Sampler:
    if isinstance(src, Sampler):
        return src
    if isinstance(src, DiscreteMap):
        return DiscreteSampler(src, part)
    raise TypeError(f"cannot sample {type(src).__name__}")


def circle_points(center, r: float, samples: int) -> np.ndarray:
    th = 2 * math.pi * np.arange(samples) / samples
    return np.asarray(center, float) + r * np.stack([np.cos(th), np.sin(th)], axis=1)


def circle_integral(s: Sampler, center, r: float, samples: int = 512, ref: Values | None = None) -> float:
    """int over the circle of d^2(s(x), ref) with the metric line element (trapezoid rule)."""
    pts = circle_points(center, r, samples)
    ref = ref if ref is not None else s.at(center)
    d = value_distance(s.evaluate(pts), ref)
    metric = s.metric or ConformalMetric.euclidean()
    jac = np.exp(metric.psi(pts))
    return float(2 * math.pi * r * np.mean(d * d * jac))


def disk_samples(radius: float, h: float) -> np.ndarray:
    """Lattice points of spacing h in the closed disk, origin included."""
    k = int(math.floor(radius / h))
    g = np.arange(-k, k + 1) * h
    X, Y = np.meshgrid(g, g)
    P = np.stack([X.ravel(), Y.ravel()], axis=1)
    return P[np.sum(P * P, axis=1) <= radius * radius * (1 + 1e-12)]


# --------------------------------------------------------------------------
# energy profiles and order

@dataclass
class EnergyProfile:
    x0: np.ndarray
    radii: np.ndarray
    E: np.ndarray
    I: np.ndarray
    c: float
    n: int
    h: float
    degenerate: bool = False
    warnings: list = field(default_factory=list)

    @property
    def ratio(self) -> np.ndarray:
        """e^{c r^2} r E / I."""
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.exp(self.c * self.radii ** 2) * self.radii * self.E / self.I

    @property
    def height(self) -> np.ndarray:
        """e^{c r^2} I / r^{n+1}."""
        return np.exp(self.c * self.radii ** 2) * self.I / self.radii ** (self.n + 1)

    def monotone_flags(self, slack: float = 1e-3, reliable_only: bool = True) -> dict:
        sel = self.radii >= 5 * self.h if reliable_only else np.ones(self.radii.size, bool)
        out = {}
        for name, q in (("ratio", self.ratio), ("height", self.height)):
            q = q[sel]
            out[name] = bool(self.degenerate or np.all(q[1:] >= q[:-1] * (1 - slack)))
        return out

    def monotone_defect(self, reliable_only: bool = True) -> float:
        """Largest relative decrease between consecutive radii over both quantities."""
        sel = self.radii >= 5 * self.h if reliable_only else np.ones(self.radii.size, bool)
        worst = 0.0
        for q in (self.ratio[sel], self.height[sel]):
            if q.size > 1:
                worst = max(worst, float(np.max((q[:-1] - q[1:]) / np.abs(q[:-1]))))
        return worst

    def rows(self):
        for k in range(self.radii.size):
            yield dict(r=self.radii[k], E=self.E[k], I=self.I[k], ratio=self.ratio[k], height=self.height[k])


def _edge_values_distance(s: DiscreteSampler) -> np.ndarray:
    e = s.u.mesh.edges
    vv = s.vertex_values()
    return value_distance(vv.take(e[:, 0]), vv.take(e[:, 1]))


def simplex_energies(u: DiscreteMap, part: str = "all") -> np.ndarray:
    """Energy of every triangle: sum over its edges of the local stiffness weight times d^2."""
    mesh = u.mesh
    vv = DiscreteSampler(u, part).vertex_values()
    S = mesh.simplices
    n = mesh.dim
    pairs = [(i, j) for i in range(n + 1) for j in range(i + 1, n + 1)]
    out = np.zeros(len(S))
    for k, (i, j) in enumerate(pairs):
        d = value_distance(vv.take(S[:, i]), vv.take(S[:, j]))
        out += mesh.simplex_edge_weight[:, k] * d * d
    return out


def recovered_gradients(u: DiscreteMap):
    """Area-averaged vertex gradients of rho and phi (model-space chart)."""
    mesh = u.mesh
    S = mesh.simplices
    P = mesh.vertices[S]
    E = P[:, 1:, :] - P[:, :1, :]
    Ginv = np.linalg.inv(E)                       # columns: gradients of bary coords 1..n
    G = np.concatenate([-Ginv.sum(axis=2, keepdims=True), Ginv], axis=2).transpose(0, 2, 1)
    out = []
    for val in (u.rho, u.phi):
        g = np.einsum("tk,tkd->td", val[S], G)
        acc = np.zeros((mesh.nv, mesh.dim))
        wsum = np.zeros(mesh.nv)
        for k in range(mesh.dim + 1):
            np.add.at(acc, S[:, k], g * mesh.tri_vol[:, None])
            np.add.at(wsum, S[:, k], mesh.tri_vol)
        out.append(acc / wsum[:, None])
    return out


def _recovered_energy(u: DiscreteMap, x0, radii, n_radial: int = 48, n_theta: int = 256) -> np.ndarray:
    """E(r) = int_{B_r} |grad rho|^2 + rho^6 |grad phi|^2 with recovered gradients, polar Gauss rule."""
    mesh = u.mesh
    gr, gf = recovered_gradients(u)
    loc = getattr(mesh, "_locator", None) or _Locator(mesh)
    mesh._locator = loc
    xs, ws = np.polynomial.legendre.leggauss(n_radial)
    th = 2 * math.pi * np.arange(n_theta) / n_theta
    ring = np.stack([np.cos(th), np.sin(th)], axis=1)
    out = []
    for r in radii:
        s = 0.5 * r * (xs + 1)
        pts = (np.asarray(x0) + s[:, None, None] * ring[None, :, :]).reshape(-1, 2)
        tri, w = loc.locate(pts)
        st = mesh.simplices[tri]
        rho = np.einsum("pk,pk->p", w, u.rho[st])
        a = np.einsum("pk,pkd->pd", w, gr[st])
        b = np.einsum("pk,pkd->pd", w, gf[st])
        dens = (np.sum(a * a, axis=1) + rho ** 6 * np.sum(b * b, axis=1)).reshape(n_radial, n_theta)
        out.append(float(np.sum(0.5 * r * ws * s * dens.mean(axis=1)) * 2 * math.pi))
    return np.asarray(out)


def energy_profile(u: DiscreteMap, x0=(0.0, 0.0), radii: Sequence[float] = (0.1, 0.2, 0.3, 0.4, 0.5),
                   samples: int = 512, part: str = "all", clip: str = "auto") -> EnergyProfile:
    """E(r) and I(r) = int over the r-circle of d^2(u, u(x0)).

    clip="recovered" integrates the energy density built from recovered vertex
    gradients over B_r in polar coordinates (model-space targets only);
    clip="simplex" weights each triangle's discrete energy by its exact area
    fraction inside B_r; clip="edge" weights each edge's energy by its length
    fraction.  "auto" picks "recovered" when the target allows it.
    """
    s = DiscreteSampler(u, part)
    mesh = u.mesh
    radii = np.asarray(sorted(radii), float)
    x0 = np.asarray(x0, float)
    ed = _edge_values_distance(s)
    if clip == "auto":
        clip = "recovered" if u.target in ("model", "region") else "simplex"
    if clip == "recovered":
        E = _recovered_energy(u, x0, radii)
    elif clip == "simplex":
        te = simplex_energies(u, part)
        E = np.array([float(np.sum(te * simplex_fraction_inside(mesh, r, x0))) for r in radii])
    elif clip == "edge":
        ce = mesh.weights * ed * ed
        E = np.array([float(np.sum(ce * edge_fraction_inside(mesh, r, x0))) for r in radii])
    else:
        raise ValueError("clip is 'auto', 'recovered', 'simplex' or 'edge'")
    ref = s.at(x0)
    I = np.array([circle_integral(s, x0, r, samples, ref) for r in radii])
    warn = [f"radius {r:g} below 3h" for r in radii if r < 3 * mesh.h]
    # constant up to rounding: circle RMS of d at the rounding level of the values
    size = max(1.0, float(np.max(np.abs(u.rho))))
    rms = np.sqrt(I / (2 * math.pi * radii))
    degenerate = bool(np.all(rms <= 1e-12 * size))
    return EnergyProfile(x0, radii, E, I, float(mesh.metric.c), mesh.dim, mesh.h, degenerate, warn)


def _extrapolate(r, q):
    (r1, r2), (q1, q2) = r[:2], q[:2]
    return float(q1 - r1 * (q2 - q1) / (r2 - r1))


def order_at(profile: EnergyProfile, slack: float = 1e-3) -> float:
    """Ord = lim e^{cr^2} r E / I, linear extrapolation from the two smallest radii >= 5h."""
    if profile.degenerate:
        raise DataQualityError("degenerate profile: the map is constant near the center")
    sel = profile.radii >= 5 * profile.h
    if sel.sum() < 2:
        raise DataQualityError("need two radii at least 5h")
    q = profile.ratio[sel]
    if np.any(q[1:] < q[:-1] * (1 - slack)):
        raise DataQualityError("corrected ratio decreases beyond the slack")
    return _extrapolate(profile.radii[sel], q)


@dataclass
class EpsilonEnergy:
    raw: float
    normalized: float
    warning: str | None = None


def _q_n(n: int) -> float:
    # int over S^{n-1} of theta_1^2 = |S^{n-1}| / n
    return 2 * math.pi ** (n / 2) / math.gamma(n / 2) / n


def epsilon_energy(u, x, eps: float, samples: int = 256) -> EpsilonEnergy:
    """(1/eps^{n+1}) int over the eps-circle of d^2(u(x), u(y)); normalized by q_n."""
    s = as_sampler(u)
    x = np.asarray(x, float)
    raw = circle_integral(s, x, eps, samples) / eps ** (s.dim + 1)
    h = getattr(getattr(u, "mesh", None), "h", 0.0)
    warn = "eps below 3h" if eps < 3 * h else None
    return EpsilonEnergy(raw, raw / _q_n(s.dim), warn)


def epsilon_energy_density(u: DiscreteMap, centers: np.ndarray, eps: float, samples: int = 64) -> np.ndarray:
    """Normalized eps-energy at many centers in one interpolation pass."""
    s = DiscreteSampler(u)
    centers = np.atleast_2d(centers)
    ring = circle_points((0.0, 0.0), eps, samples)
    pts = (centers[:, None, :] + ring[None, :, :]).reshape(-1, 2)
    vals = s.evaluate(pts)
    ref = s.evaluate(centers)
    rep = ref.take(np.repeat(np.arange(len(centers)), samples))
    d = value_distance(vals, rep).reshape(len(centers), samples)
    jac = np.exp(u.mesh.metric.psi(pts)).reshape(len(centers), samples)
    raw = 2 * math.pi * eps * np.mean(d * d * jac, axis=1) / eps ** (s.dim + 1)
    return raw / _q_n(s.dim)


def epsilon_energy_crosscheck(u: DiscreteMap, radius: float = 0.5, eps: float = 0.08) -> dict:
    """Normalized eps-energy integrated over B_radius against the clipped discrete energy."""
    mesh = u.mesh
    x = np.linalg.norm(mesh.vertices, axis=1)
    inside = np.nonzero(x <= radius)[0]
    dens = epsilon_energy_density(u, mesh.vertices[inside], eps)
    integral = float(np.sum(dens * mesh.mass[inside]))
    E = float(np.sum(simplex_energies(u) * simplex_fraction_inside(mesh, radius)))
    return {"eps_integral": integral, "discrete": E, "rel_diff": abs(integral - E) / max(E, 1e-300)}


def beta_order(u: DiscreteMap, x0=(0.0, 0.0), radii=(0.1, 0.15, 0.2, 0.3, 0.4),
               C: float | None = None, slack: float = 1e-3) -> dict:
    """beta = lim e^{Cr} r E^v / I^v for the singular part v of a product map.

    Also re-checks that e^{Cr} E / r^{n-2+2beta} and e^{Cr} I / r^{n-1+2beta}
    are non-decreasing with the fitted beta.
    """
    prof = energy_profile(u, x0, radii, part="singular")
    if prof.degenerate:
        raise DataQualityError("singular part is constant near the center")
    C = prof.c if C is None else C
    r = prof.radii
    sel = r >= 5 * prof.h
    if sel.sum() < 2:
        raise DataQualityError("need two radii at least 5h")
    q = np.exp(C * r) * r * prof.E / prof.I
    if np.any(q[sel][1:] < q[sel][:-1] * (1 - slack)):
        raise DataQualityError("corrected ratio decreases beyond the slack")
    beta = _extrapolate(r[sel], q[sel])
    n = prof.n
    qe = np.exp(C * r) * prof.E / r ** (n - 2 + 2 * beta)
    qi = np.exp(C * r) * prof.I / r ** (n - 1 + 2 * beta)
    defect = 0.0
    for arr in (qe[sel], qi[sel]):
        defect = max(defect, float(np.max(np.maximum(arr[:-1] - arr[1:], 0.0) / arr[:-1])))
    return {"beta": beta, "monotone_defect": defect, "monotone": defect <= slack, "profile": prof}


# --------------------------------------------------------------------------
# blow-ups

@dataclass
class BlowupSequence:
    x0: np.ndarray
    sigmas: np.ndarray
    kind: str
    lams: np.ndarray
    maps: list
    shifts: np.ndarray
    unit_I: np.ndarray
    lambda_half: np.ndarray
    recursion_defect: float
    lower_bound: float
    lower_bound_ok: bool
    order: list = field(default_factory=list)

    def values(self, pts) -> list:
        return [m.evaluate(pts) for m in self.maps]


def blowup_sequence(src, x0=(0.0, 0.0), sigmas: Sequence[float] = (0.4, 0.2, 0.1, 0.05),
                    kind: str = "u", samples: int = 512, beta: float | None = None,
                    slack: float = 1e-3) -> BlowupSequence:
    """u_sigma(x) = lambda(sigma) u(x0 + sigma x) with lambda(sigma) = (sigma^{1-n} I(sigma))^{-1/2}.

    kind "u" uses the whole map, kind "v" the singular part of a product map.
    The lower bound checked on lambda^{u_sigma}(1/2) is 1 for kind "u" and
    2^beta for kind "v" (skipped when beta is None), with relative slack.
    """
    if kind not in ("u", "v"):
        raise ValueError("kind is 'u' or 'v'")
    base = as_sampler(src, "singular" if kind == "v" else "all")
    x0 = np.asarray(x0, float)
    sig = np.asarray(sigmas, float)
    n = base.dim
    ref = base.at(x0)
    I = np.array([circle_integral(base, x0, s, samples, ref) for s in sig])
    if np.any(I <= 0):
        raise DegenerateCenterError("I(sigma) = 0: the map is constant near the center")
    lams = (sig ** (1 - n) * I) ** -0.5
    maps = [RescaledSampler(base, x0, s, l) for s, l in zip(sig, lams)]
    # checks use a different sample count than the factor itself
    m2 = 2 * samples + 1
    unit_I = np.array([circle_integral(m, (0.0, 0.0), 1.0, m2) for m in maps])
    half = np.array([(0.5 ** (1 - n) * circle_integral(m, (0.0, 0.0), 0.5, m2)) ** -0.5 for m in maps])
    # lambda_{k-1} from u_{k-1} on the half circle, against lambda(sigma/2) / lambda(sigma)
    rec = 0.0
    for k in range(1, sig.size):
        if abs(sig[k] - sig[k - 1] / 2) <= 1e-12 * sig[k]:
            lam_prev = (2 ** (n - 1) * circle_integral(maps[k - 1], (0.0, 0.0), 0.5, samples)) ** -0.5
            rec = max(rec, abs(lam_prev * lams[k - 1] - lams[k]) / lams[k])
    lb = 1.0 if kind == "u" else (2.0 ** beta if beta is not None else float("nan"))
    ok = bool(np.isnan(lb) or np.all(half >= lb * (1 - slack)))
    return BlowupSequence(x0, sig, kind, lams, maps, np.zeros(sig.size), unit_I, half, rec, lb, ok)


def pullback_matrix(seq: BlowupSequence, points) -> dict:
    """d(u_sigma(x), u_sigma(y)) per sigma and the Cauchy defect between successive sigmas."""
    pts = np.atleast_2d(points)
    mats = [pairwise_distance(v) for v in seq.values(pts)]
    cauchy = [float(np.max(np.abs(a - b))) for a, b in zip(mats, mats[1:])]
    return {"matrices": mats, "cauchy": cauchy}


def pullback_midpoints(seq: BlowupSequence, points, pairs) -> dict:
    """One level of the tower: geodesic midpoints of the given sample pairs.

    Distances from every midpoint to every sample, per sigma, and the Cauchy
    defect between successive sigmas.
    """
    pts = np.atleast_2d(points)
    pairs = np.asarray(pairs, np.int64)
    mats = []
    for v in seq.values(pts):
        if v.rho.ndim != 1:
            raise ValueError("midpoints need a single singular factor")
        a, b = v.take(pairs[:, 0]), v.take(pairs[:, 1])
        ms, mr, mf = interpolate_A(a.sheet, a.rho, a.phi, b.sheet, b.rho, b.phi, 0.5)
        mid = Values(ms, mr, mf)
        P = len(pairs)
        D = value_distance(mid.take(np.repeat(np.arange(P), len(v))), v.take(np.tile(np.arange(len(v)), P)))
        mats.append(D.reshape(P, len(v)))
    cauchy = [float(np.max(np.abs(a - b))) for a, b in zip(mats, mats[1:])]
    return {"matrices": mats, "cauchy": cauchy}


# --------------------------------------------------------------------------
# tangent-map structure

@dataclass
class TangentStructure:
    points: np.ndarray            # sample points (mesh vertices)
    f: np.ndarray                 # d(u_*(x), u_*(0)) at the points
    labels: np.ndarray            # component index per point, -1 on the zero set
    k: int
    representatives: list         # candidate point indices per component, best first
    classes: list                 # partition A as lists of component indices
    margins: np.ndarray           # f(x_s) + f(x_t) - d(u(x_s), u(x_t)) at representatives
    alpha: float
    arcs: np.ndarray              # angular length of each component on the probe circle
    threshold: float
    delta: float
    homogeneity_defect: float = float("nan")

    @property
    def A(self) -> int:
        return len(self.classes)

    def class_of(self, comp: int) -> int:
        for i, c in enumerate(self.classes):
            if comp in c:
                return i
        raise KeyError(comp)

    def eigen_check(self) -> dict:
        """Dirichlet eigenvalue of each arc against alpha (alpha + n - 2), n = 2."""
        lam1 = (math.pi / self.arcs) ** 2
        target = self.alpha * self.alpha
        return {"lambda1": lam1.tolist(), "alpha_relation": target,
                "max_rel_defect": float(np.max(np.abs(lam1 - target)) / target)}


def _edge_minimum(s: Sampler, center: Values, A: np.ndarray, B: np.ndarray, iters: int = 40) -> np.ndarray:
    """min over the segment [A, B] of d(u(x), u(0)) by golden section (the profile is unimodal there)."""
    def fun(t):
        return value_distance(s.evaluate(A + t[:, None] * (B - A)), center)
    lo = np.zeros(len(A))
    hi = np.ones(len(A))
    return _golden(fun, lo, hi, iters)


def _components(s: Sampler, mesh: Mesh, f: np.ndarray, center: Values, thr: float):
    """Connected components of {f > thr}.

    An edge joins its endpoints only if f stays above max(thr, f_min / 4)
    along it, where f_min is the smaller endpoint value; edges that jump
    across the zero set dip to (nearly) zero in between.
    """
    mask = f > thr
    e = mesh.edges
    both = mask[e[:, 0]] & mask[e[:, 1]]
    ee = e[both]
    keep = np.ones(len(ee), bool)
    if len(ee):
        X = mesh.vertices
        fmin = _edge_minimum(s, center, X[ee[:, 0]], X[ee[:, 1]])
        keep = fmin >= np.maximum(thr, 0.25 * np.minimum(f[ee[:, 0]], f[ee[:, 1]]))
    ee = ee[keep]
    from scipy import sparse
    G = sparse.coo_matrix((np.ones(len(ee)), (ee[:, 0], ee[:, 1])), shape=(mesh.nv, mesh.nv)).tocsr()
    idx = np.nonzero(mask)[0]
    k, lab = csgraph.connected_components(G[idx][:, idx], directed=False)
    labels = np.full(mesh.nv, -1)
    # order components by their smallest vertex index for determinism
    first = [int(idx[lab == c].min()) for c in range(k)]
    perm = np.argsort(first)
    inv = np.empty(k, np.int64)
    inv[perm] = np.arange(k)
    labels[idx] = inv[lab]
    return k, labels


def _partition(vals: Values, f, reps, delta, tol):
    k = len(reps)
    parent = list(range(k))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    M = np.zeros((k, k))
    ambiguous = []
    for s in range(k):
        for t in range(s + 1, k):
            a, b = reps[s][0], reps[t][0]
            d = float(value_distance(vals.take([a]), vals.take([b]))[0])
            m = f[a] + f[b] - d
            M[s, t] = M[t, s] = m
            if m > delta:
                parent[find(s)] = find(t)
            elif m > tol:
                ambiguous.append((s, t, m))
    groups = {}
    for c in range(k):
        groups.setdefault(find(c), []).append(c)
    return sorted(groups.values()), M, ambiguous


def _arc_lengths(s, center, X, labels, k, thr, radius, samples):
    """Angular length of each component on a probe circle.

    The circle splits into runs where f > thr; every gap between runs is
    shared equally by its two neighbours and each run goes to the component
    holding most of its nearest labelled vertices.
    """
    from scipy.spatial import cKDTree
    cp = circle_points((0.0, 0.0), radius, samples)
    live = value_distance(s.evaluate(cp), center) > thr
    arcs = np.zeros(k)
    if not live.any():
        return arcs
    tree = cKDTree(X[labels >= 0])
    lab_live = labels[labels >= 0]
    near = lab_live[tree.query(cp)[1]]
    if live.all():
        arcs[int(np.argmax(np.bincount(near, minlength=k)))] = 2 * math.pi
        return arcs
    # roll so the sequence opens with a gap and closes with a run: g r g r ... g r
    start = int(np.nonzero(~live & np.roll(live, 1))[0][0])
    seq = np.roll(live, -start)
    lab = np.roll(near, -start)
    dth = 2 * math.pi / samples
    runs, gaps = [], []
    i = 0
    while i < samples:
        j = i
        while j < samples and seq[j] == seq[i]:
            j += 1
        (runs if seq[i] else gaps).append(j - i if not seq[i] else (i, j))
        i = j
    for n, (a, b) in enumerate(runs):
        g_after = gaps[(n + 1) % len(gaps)]
        comp = int(np.argmax(np.bincount(lab[a:b], minlength=k)))
        arcs[comp] += (b - a + 0.5 * (gaps[n] + g_after)) * dth
    return arcs


def tangent_structure(src, mesh: Mesh, threshold: float | None = None, delta: float = 1e-3,
                      quad_tol: float = 1e-4, arc_radius: float = 0.5, arc_samples: int = 4096,
                      radii=(0.2, 0.3, 0.4, 0.5, 0.6, 0.7)) -> TangentStructure:
    """Components of {d(u_*, u_*(0)) > threshold}, the partition A and the order alpha."""
    s = as_sampler(src)
    thr = 10 * quad_tol if threshold is None else threshold
    X = mesh.vertices
    vals = s.evaluate(X)
    center = s.at(np.zeros(mesh.dim))
    f = value_distance(vals, center)

    k, labels = _components(s, mesh, f, center, thr)
    k2, labels2 = _components(s, mesh, f, center, 2 * thr)
    if k != k2:
        raise UnstablePartitionError(f"component count {k} at threshold {thr:g} but {k2} at {2 * thr:g}",
                                     [labels, labels2])
    reps = []
    for c in range(k):
        members = np.nonzero(labels == c)[0]
        order = members[np.argsort(-f[members], kind="stable")]
        reps.append(order[:16].tolist())
    classes, M, amb = _partition(vals, f, reps, delta, 10 * quad_tol)
    if amb:
        alt, _, _ = _partition(vals, f, reps, min(m for _, _, m in amb) / 2, 10 * quad_tol)
        raise UnstablePartitionError(f"margins {[round(m, 6) for _, _, m in amb]} between tolerance and delta",
                                     [classes, alt])

    # order from I(r) ~ r^{n-1+2 alpha}
    r = np.asarray(radii, float)
    Ir = np.array([circle_integral(s, np.zeros(2), q, 512, center) for q in r])
    slope = np.polyfit(np.log(r), np.log(Ir), 1)[0]
    alpha = (slope - (mesh.dim - 1)) / 2

    arcs = _arc_lengths(s, center, X, labels, k, thr, arc_radius, arc_samples)

    # homogeneity f(t x) = t^alpha f(x) on the sample points, t = 1/2
    inner = np.linalg.norm(X, axis=1) <= 1.0
    ft = value_distance(s.evaluate(0.5 * X[inner]), center)
    hom = float(np.max(np.abs(ft - 0.5 ** alpha * f[inner])))
    return TangentStructure(X, f, labels, k, reps, classes, M, float(alpha), arcs, thr, delta, hom)


def piecewise_function_check(src, structure: TangentStructure, n_pairs: int = 4000, seed: int = 0,
                             tol: float = 1e-8) -> dict:
    """d(u_*(x), u_*(y)) against |f(x) - f(y)| inside components and f(x) + f(y) across classes.

    Collinearity: for triples in one component ordered by f, the middle point
    splits the distance additively (the image lies on one geodesic).
    """
    s = as_sampler(src)
    st = structure
    vals = s.evaluate(st.points)
    f = st.f
    rng = np.random.default_rng(seed)
    live = np.nonzero(st.labels >= 0)[0]
    a = rng.choice(live, n_pairs)
    b = rng.choice(live, n_pairs)
    d = value_distance(vals.take(a), vals.take(b))
    same = st.labels[a] == st.labels[b]
    cls = np.array([st.class_of(c) for c in range(st.k)])
    cross = cls[st.labels[a]] != cls[st.labels[b]]
    within = np.abs(d - np.abs(f[a] - f[b]))[same]
    additive = np.abs(d - (f[a] + f[b]))[cross]
    # triples
    c = rng.choice(live, n_pairs)
    trip = same & (st.labels[c] == st.labels[a])
    A_, B_, C_ = a[trip], b[trip], c[trip]
    T = np.stack([A_, B_, C_], axis=1)
    T = np.take_along_axis(T, np.argsort(f[T], axis=1), axis=1)
    dac = value_distance(vals.take(T[:, 0]), vals.take(T[:, 2]))
    dab = value_distance(vals.take(T[:, 0]), vals.take(T[:, 1]))
    dbc = value_distance(vals.take(T[:, 1]), vals.take(T[:, 2]))
    col = np.abs(dac - dab - dbc)
    worst = np.argsort(-np.where(same, np.abs(d - np.abs(f[a] - f[b])), 0.0))[:10]
    out = {
        "within_defect": float(within.max()) if within.size else 0.0,
        "collinearity_defect": float(col.max()) if col.size else 0.0,
        "cross_additivity_defect": float(additive.max()) if additive.size else 0.0,
        "n_within": int(same.sum()), "n_cross": int(cross.sum()),
        "offending": [(int(a[i]), int(b[i])) for i in worst if same[i] and abs(d[i] - abs(f[a[i]] - f[b[i]])) > tol],
    }
    out["ok"] = out["within_defect"] <= tol and out["collinearity_defect"] <= tol and \
        out["cross_additivity_defect"] <= tol
    return out


# --------------------------------------------------------------------------
# normalization

def _phi_at(m: Sampler, x) -> float | None:
    v = m.at(x)
    if v.rho[0] == 0:
        return None
    return float(v.phi[0])


def normalize_blowup(seq: BlowupSequence, structure: TangentStructure) -> BlowupSequence:
    """Post-compose each u_sigma with T_c, c = (phi(x_k) + phi(x_1)) / 2 over the representatives."""
    maps, shifts, orders = [], [], []
    for m in seq.maps:
        phis, chosen = [], []
        for cands in structure.representatives:
            val = None
            for idx in cands:
                val = _phi_at(m, structure.points[idx])
                if val is not None:
                    chosen.append(idx)
                    break
            if val is None:
                raise DataQualityError("every representative of a component maps to P0")
            phis.append(val)
        phis = np.asarray(phis)
        order = np.argsort(phis, kind="stable")
        c = 0.5 * (phis[order[-1]] + phis[order[0]])
        base_shift = getattr(m, "shift", 0.0)
        maps.append(m.with_shift(base_shift + c) if isinstance(m, RescaledSampler) else _Shifted(m, c))
        shifts.append(base_shift + c)
        orders.append([int(structure.representatives[i][0]) for i in order])
    out = BlowupSequence(seq.x0, seq.sigmas, seq.kind, seq.lams, maps, np.asarray(shifts), seq.unit_I,
                         seq.lambda_half, seq.recursion_defect, seq.lower_bound, seq.lower_bound_ok, orders)
    return out


class _Shifted(Sampler):
    def __init__(self, base: Sampler, c: float):
        self.base, self.shift = base, c
        self.dim, self.metric = base.dim, base.metric

    def evaluate(self, pts):
        return self.base.evaluate(pts).shifted(self.shift)

    def with_shift(self, c):
        return _Shifted(self.base, c)


# --------------------------------------------------------------------------
# comb comparison

def symmetric_turning_radius(half_spread: float, through: float = 1.0) -> float:
    """rho_0 of the symmetric geodesic whose phi at radius ``through`` equals +-half_spread."""
    if half_spread <= 0:
        raise ValueError("need a positive phi spread")
    g = lambda a: float(profile_phi(a, through)) - half_spread
    lo, hi = 1e-8 * through, through * (1 - 1e-15)
    if g(lo) < 0:
        raise ValueError("phi spread too large for the bracket")
    return optimize.brentq(g, lo, hi, xtol=1e-15, rtol=1e-14, maxiter=500)


@dataclass
class CombCurve:
    rho_sigma: float
    spread: float                 # phi(x_k) after normalization
    teeth: list                   # (P_rho, P_phi) per middle component, None if no crossing
    phi_infinity: float

    @property
    def region(self) -> ConvexRegion:
        return ConvexRegion(self.rho_sigma)


def _golden(fun, lo, hi, iters=80):
    g = (math.sqrt(5) - 1) / 2
    c = hi - g * (hi - lo)
    d = lo + g * (hi - lo)
    fc, fd = fun(c), fun(d)
    for _ in range(iters):
        left = fc <= fd
        hi = np.where(left, d, hi)
        lo = np.where(left, lo, c)
        c2 = np.where(left, hi - g * (hi - lo), d)
        d2 = np.where(left, c, lo + g * (hi - lo))
        keep = np.where(left, fc, fd)
        probe = np.where(left, c2, d2)
        fp = fun(probe)
        fc = np.where(left, fp, keep)
        fd = np.where(left, keep, fp)
        c, d = c2, d2
    return np.minimum(fc, fd)


def distance_to_gamma(rho0: float, rho, phi, grid: int = 400, rmax: float = 1e4) -> np.ndarray:
    """d(p, Gamma_rho0) for arrays: dense sweep in the boundary parameter, then golden section."""
    rho = np.atleast_1d(np.asarray(rho, float))
    phi = np.atleast_1d(np.asarray(phi, float))
    reg = ConvexRegion(rho0)
    r = np.geomspace(rho0, rmax * max(rho0, 1.0), grid // 2)
    uu = 1.0 - rho0 / r
    U = np.concatenate([-uu[::-1], uu[1:]])
    br, bf = reg.boundary_point(U)
    D = distances(rho[:, None], phi[:, None], br[None, :], bf[None, :])
    k = np.argmin(D, axis=1)
    lo = U[np.maximum(k - 1, 0)]
    hi = U[np.minimum(k + 1, U.size - 1)]

    def fun(u):
        qr, qf = reg.boundary_point(u)
        return distances(rho, phi, qr, qf)

    return np.minimum(D[np.arange(rho.size), k], _golden(fun, lo, hi))


def distance_to_ray(r0: float, f0: float, rho, phi, rmax: float = 1e4) -> np.ndarray:
    """d(p, {(s, f0): s >= r0}); the ray is a geodesic so the distance along it is convex."""
    rho = np.atleast_1d(np.asarray(rho, float))
    phi = np.atleast_1d(np.asarray(phi, float))
    grid = np.geomspace(max(r0, 1e-12), rmax, 200)
    D = distances(rho[:, None], phi[:, None], grid[None, :], np.full(grid.size, f0)[None, :])
    k = np.argmin(D, axis=1)
    lo = np.log(grid[np.maximum(k - 1, 0)])
    hi = np.log(grid[np.minimum(k + 1, grid.size - 1)])
    fun = lambda t: distances(rho, phi, np.exp(t), np.full(rho.size, f0))
    out = np.minimum(D[np.arange(rho.size), k], _golden(fun, lo, hi))
    return out


def comb_curve(phis_sorted: np.ndarray) -> CombCurve:
    """Gamma through (1, phi_1), (1, phi_k) (already symmetric) with teeth at the middle levels."""
    spread = 0.5 * (phis_sorted[-1] - phis_sorted[0])
    rho_s = symmetric_turning_radius(spread)
    phi_inf = c_star() / rho_s ** 2
    teeth = []
    for pm in phis_sorted[1:-1]:
        if abs(pm) >= phi_inf:
            teeth.append(None)
            continue
        # radius on Gamma where |phi| = |pm|
        if abs(pm) == 0.0:
            teeth.append((rho_s, 0.0))
            continue
        g = lambda r: float(profile_phi(rho_s, r)) - abs(pm)
        hi = rho_s * 2
        while g(hi) < 0:
            hi *= 2
        teeth.append((optimize.brentq(g, rho_s, hi, xtol=1e-15, rtol=1e-14), float(pm)))
    return CombCurve(rho_s, spread, teeth, phi_inf)


def distance_to_comb(curve: CombCurve, rho, phi) -> np.ndarray:
    d = distance_to_gamma(curve.rho_sigma, rho, phi)
    for t in curve.teeth:
        if t is not None:
            d = np.minimum(d, distance_to_ray(t[0], t[1], rho, phi))
    return d


@dataclass
class CombReport:
    sigmas: np.ndarray
    curves: list
    pair_defect: np.ndarray       # sup |d(L,L) - d(u,u)| over sample pairs
    L_distance: np.ndarray        # sup d(u_sigma, L_i)
    comb_distance: np.ndarray     # sup d(u_sigma, Lambda_sigma)

    @property
    def rho_sigma(self) -> np.ndarray:
        return np.array([c.rho_sigma for c in self.curves])

    @property
    def tooth_rho(self) -> np.ndarray:
        return np.array([[t[0] if t is not None else np.nan for t in c.teeth] for c in self.curves])

    def decreasing(self) -> dict:
        out = {}
        for name in ("pair_defect", "L_distance", "comb_distance"):
            q = getattr(self, name)
            out[name] = bool(np.all(np.diff(q) < 0))
        out["rho_sigma"] = bool(np.all(np.diff(self.rho_sigma) < 0))
        return out


def L_map(seq_map: Sampler, structure: TangentStructure, idx: np.ndarray, rep_phi: np.ndarray) -> Values:
    """L_i at structure points idx: (f(x), phi of the component representative), P0 on the zero set."""
    lab = structure.labels[idx]
    f = structure.f[idx]
    zero = lab < 0
    rho = np.where(zero, 0.0, f)
    phi = np.where(zero, 0.0, rep_phi[np.maximum(lab, 0)])
    return Values(np.where(zero, BASE_SHEET, 0), rho, phi)


def comb_construction(seq: BlowupSequence, structure: TangentStructure, radius: float = 0.95,
                      max_points: int = 400, seed: int = 0) -> CombReport:
    """L_i, Lambda_sigma and the three diagnostic suprema per sigma (single model-space target)."""
    st = structure
    if st.k < 2:
        raise DataQualityError("comb undefined: fewer than two components")
    X = st.points
    cand = np.nonzero(np.linalg.norm(X, axis=1) <= radius)[0]
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(cand, min(max_points, cand.size), replace=False))
    curves, pdef, ldist, cdist = [], [], [], []
    for m in seq.maps:
        rep_phi = np.empty(st.k)
        for c, cands in enumerate(st.representatives):
            val = None
            for j in cands:
                val = _phi_at(m, X[j])
                if val is not None:
                    break
            rep_phi[c] = val
        curve = comb_curve(np.sort(rep_phi))
        u = m.evaluate(X[idx])
        if u.rho.ndim != 1 or np.any(u.sheet > 0):
            raise ValueError("comb comparison needs a single model-space target")
        L = L_map(m, st, idx, rep_phi)
        Du = pairwise_distance(Values(np.zeros(len(u), np.int64), u.rho, u.phi))
        DL = pairwise_distance(L)
        pdef.append(float(np.max(np.abs(Du - DL))))
        ldist.append(float(np.max(value_distance(u, L))))
        cdist.append(float(np.max(distance_to_comb(curve, u.rho, u.phi))))
        curves.append(curve)
    return CombReport(seq.sigmas, curves, np.asarray(pdef), np.asarray(ldist), np.asarray(cdist))


# --------------------------------------------------------------------------
# synthetic maps

def line_map(c: float = 2.0, scale: float = 1.0) -> AnalyticMap:
    """x -> (c + scale x_1, 0), a map onto the vertical geodesic phi = 0."""
    return AnalyticMap(lambda p: (np.zeros(len(p), np.int64), c + scale * p[:, 0], np.zeros(len(p))),
                       "line")


def quadratic_map(c: float = 2.0) -> AnalyticMap:
    """x -> (c + x_1^2 - x_2^2, 0), order 2 at the origin."""
    return AnalyticMap(lambda p: (np.zeros(len(p), np.int64), c + p[:, 0] ** 2 - p[:, 1] ** 2,
                                  np.zeros(len(p))), "quadratic")


def two_sheet_map(alpha: float = 1.0, e=(1.0, 0.0), amplitude: float | None = None) -> AnalyticMap:
    """x -> |x.e|^alpha on sheet 0 or 1 by the sign of x.e (glued target), normalized so I(1) = 1."""
    e = np.asarray(e, float) / np.linalg.norm(e)
    if amplitude is None:
        # int_0^{2pi} |cos t|^{2 alpha} dt
        m = 2 * math.sqrt(math.pi) * math.gamma(alpha + 0.5) / math.gamma(alpha + 1)
        amplitude = 1 / math.sqrt(m)

    def fn(p):
        t = p @ e
        return (t < 0).astype(np.int64), amplitude * np.abs(t) ** alpha, np.zeros(len(p))
    return AnalyticMap(fn, "two_sheet")


def folded_map(b: float = 0.25, alpha: float = 1.0) -> AnalyticMap:
    """Both half-disks into one model space: (|x_1|^alpha / sqrt(pi), +-b); bounded phi gap."""
    amp = 1 / math.sqrt(2 * math.sqrt(math.pi) * math.gamma(alpha + 0.5) / math.gamma(alpha + 1))

    def fn(p):
        return np.zeros(len(p), np.int64), amp * np.abs(p[:, 0]) ** alpha, np.where(p[:, 0] >= 0, b, -b)
    return AnalyticMap(fn, "folded")


@dataclass
class SingularFamily:
    """A sigma-indexed family shaped like blow-ups at a singular point.

    u_sigma(x) = (f(x) (1 + sigma q(x)), Phi_m / sigma^2 + sigma p(x)) on the
    m-th sector of f > 0 and P0 on the zero set.  f is homogeneous of order
    alpha with I(1) = 1; the sector levels Phi_m separate as sigma -> 0 while
    the perturbations q, p vanish.  Its limit in the pullback sense is the
    sector map into the glued space with one sheet per sector.
    """

    sectors: int = 2
    levels: tuple = (-1.0, 1.0)
    amp_q: float = 0.3
    amp_p: float = 0.5

    @property
    def alpha(self) -> float:
        return self.sectors / 2

    def f(self, p):
        r = np.linalg.norm(p, axis=1)
        th = np.arctan2(p[:, 1], p[:, 0])
        return np.abs(r ** self.alpha * np.cos(self.alpha * th)) / math.sqrt(math.pi)

    def sector(self, p):
        th = np.arctan2(p[:, 1], p[:, 0])
        # zeros of cos(alpha th) split the circle into `sectors` arcs; shift so arcs start at a zero
        w = np.mod(th + math.pi / (2 * self.alpha), 2 * math.pi)
        return np.minimum((w * self.alpha / math.pi).astype(np.int64), self.sectors - 1)

    def limit(self) -> AnalyticMap:
        return AnalyticMap(lambda p: (self.sector(p), self.f(p), np.zeros(len(p))), "sector_limit")

    def member(self, sigma: float) -> AnalyticMap:
        lv = np.asarray(self.levels, float)

        def fn(p):
            f = self.f(p)
            q = self.amp_q * np.cos(p[:, 0] + 2 * p[:, 1])
            pp = self.amp_p * np.sin(3 * p[:, 0] - p[:, 1])
            rho = f * (1 + sigma * q)
            phi = lv[self.sector(p)] / sigma ** 2 + sigma * pp
            return np.zeros(len(p), np.int64), rho, phi
        return AnalyticMap(fn, f"singular_family[{sigma:g}]")

    def sequence(self, sigmas: Sequence[float]) -> BlowupSequence:
        sig = np.asarray(sigmas, float)
        maps = [self.member(s) for s in sig]
        ones = np.ones(sig.size)
        return BlowupSequence(np.zeros(2), sig, "synthetic", ones, maps, np.zeros(sig.size),
                              np.array([circle_integral(m, (0.0, 0.0), 1.0, 1025) for m in maps]),
                              np.full(sig.size, np.nan), 0.0, 1.0, True)


def three_sector_family(**kw) -> SingularFamily:
    return SingularFamily(sectors=3, levels=(-1.0, 0.0, 1.0), **kw)


# --------------------------------------------------------------------------
# containment of blow-ups in H[rho0/2]

@dataclass
class ContainmentReport:
    """Per-step record of the blow-up containment experiment.

    ``sup_distance[k]`` is sup over B_R of d(u_k, H[rho0/2]); ``decay[k]`` is
    sup_distance[k] / sup_distance[k+1], infinite once u_{k+1} lies inside.
    """

    rho0: float
    R: float
    h: float
    lams: np.ndarray
    sup_distance: np.ndarray
    outside_measure: np.ndarray
    center: list
    center_distance: np.ndarray
    min_rho: np.ndarray
    preimage_inclusion: dict
    gap_bound: dict
    mean_value: dict
    c2: float
    converged: bool
    resolved: np.ndarray
    reports: list = field(default_factory=list)

    @property
    def decay(self) -> np.ndarray:
        D = self.sup_distance
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(D[1:] > 0, D[:-1] / np.where(D[1:] > 0, D[1:], 1.0), np.inf)

    def decay_ok(self, lo: float = 1.6, hi: float = 2.4) -> bool:
        f = self.decay
        return bool(f.size and np.all(np.isfinite(f)) and np.all((f >= lo) & (f <= hi)))

    def center_obstruction(self) -> np.ndarray:
        """|d(u_k(0), H[rho0/2]) - rho0/2| at the steps with u_k(0) = P0, NaN elsewhere."""
        at_p0 = np.array([c[0] == 0.0 for c in self.center])
        return np.where(at_p0, np.abs(self.center_distance - self.rho0 / 2), np.nan)

    def rows(self):
        f = np.append(self.decay, np.nan)
        for k in range(self.sup_distance.size):
            yield (k, float(self.lams[k]), float(self.sup_distance[k]), float(f[k]),
                   float(self.outside_measure[k]), float(self.center_distance[k]),
                   float(self.min_rho[k]), bool(self.resolved[k]))


_P0 = Values(np.array([BASE_SHEET]), np.zeros(1), np.zeros(1))


def _alt_lambda(s: Sampler, samples: int) -> float:
    """lambda from d(., P0) on the half circle: (2^{n-1} int_{dB_1/2} d^2)^{-1/2}."""
    I = circle_integral(s, (0.0, 0.0), 0.5, samples, _P0)
    if I <= 0:
        raise DegenerateCenterError("u = P0 on the half circle")
    return (2 ** (s.dim - 1) * I) ** -0.5


def _containment_step(vals: Values, weight: np.ndarray, inner: np.ndarray, region: ConvexRegion,
                      r: float, f_limit):
    d = region.distance_to(vals.rho, vals.phi)
    out = d > 0
    lem = None
    if f_limit is not None:
        near = inner & (vals.rho < r)
        lem = int(np.count_nonzero(near & (f_limit >= 2 * r)))
    return float(d[inner].max()), float(np.sum(weight[out])), d, lem


def _mean_value_ratio(d: np.ndarray, weight: np.ndarray, rad: np.ndarray, tau: float = 7 / 8) -> float:
    """sup_{B_tau} g / int_{B_1} g for g = d^2, NaN when g vanishes."""
    g = d * d
    tot = float(np.sum(g * weight))
    return float(g[rad <= tau].max() / tot) if tot > 0 else float("nan")


@dataclass
class BlowupSolves:
    """u_k solved from halved, rescaled boundary data, with the lambdas used."""

    maps: list
    lams: np.ndarray
    reports: list

    @property
    def converged(self) -> bool:
        return all(r.converged for r in self.reports)


def solve_blowups(boundary: DiscreteMap, schedule: Schedule | None = None, k_max: int = 3,
                  samples: int = 1024, first: DiscreteMap | None = None) -> BlowupSolves:
    """u_0 solves the Dirichlet problem; u_k has boundary values lambda_{k-1} u_{k-1}(x/2).

    lambda_{k-1} = (2^{n-1} int_{dB_1/2} d^2(u_{k-1}, P0))^{-1/2}, the recursion
    for successive halvings of the blow-up factor.  ``first`` reuses an
    existing solution as u_0.
    """
    mesh = boundary.mesh
    b = np.nonzero(boundary.frozen)[0]
    sched = schedule or Schedule()
    maps, lams, reports = [], [1.0], []
    bd = boundary
    for k in range(k_max + 1):
        if k == 0 and first is not None:
            u, rep = first, SolveReport(0, discrete_energy(first), [], 0.0, True, notes={"reused": True})
        else:
            u, rep = solve_dirichlet(mesh, bd, sched)
        maps.append(u)
        reports.append(rep)
        if k == k_max:
            break
        su = DiscreteSampler(u)
        lam = _alt_lambda(su, samples)
        lams.append(lam)
        nb = su.evaluate(mesh.vertices[b] / 2).scaled(lam)
        bd = u.copy()
        bd.rho[b], bd.phi[b] = nb.rho, nb.phi
        if bd.sheet is not None:
            bd.sheet[b] = np.maximum(nb.sheet, 0)
    return BlowupSolves(maps, np.array(lams), reports)


def containment_experiment(source, rho0: float, schedule: Schedule | None = None, h: float = 0.02,
                           k_max: int = 3, R: float = 0.9, r: float | None = None,
                           sigma0: float = 1.0, samples: int = 1024, f_limit: Callable | None = None,
                           floor: float = 0.0) -> ContainmentReport:
    """Blow up by halving and measure how far the maps sit from H[rho0/2].

    ``source`` is a Dirichlet boundary map (a DiscreteMap with frozen
    boundary), a BlowupSolves already computed from one, or a SingularFamily.
    A family supplies u_k = member(sigma0 / 2^k) directly and is sampled on a
    lattice of spacing h.

    ``f_limit(pts)`` is d(u_*, u_*(0)) for the limit map and enables the
    inclusion check that u_k^{-1}(B_r(P0)) within B_R lies in {f < 2r}.
    Steps whose sup distance is at most ``floor`` are marked unresolved.
    """
    region = ConvexRegion(rho0 / 2)
    r = 2.0 * rho0 if r is None else r
    sups, meas, centers, mins, lem, ratios, halves = [], [], [], [], [], [], []
    family = isinstance(source, SingularFamily)
    if family:
        pts = disk_samples(1.0, h)
        rad = np.linalg.norm(pts, axis=1)
        weight = np.full(len(pts), h * h)
        flim = f_limit(pts) if f_limit is not None else source.f(pts)
        maps = [source.member(sigma0 / 2 ** k) for k in range(k_max + 1)]
        lams = np.ones(k_max + 1)
        reports = []
        vals_k = [m.evaluate(pts) for m in maps]
        keep = rad > 0
    else:
        solves = source if isinstance(source, BlowupSolves) else None
        if solves is None:
            if not isinstance(source, DiscreteMap):
                raise TypeError("source is a boundary DiscreteMap, BlowupSolves or SingularFamily")
            solves = solve_blowups(source, schedule, k_max, samples)
        mesh = solves.maps[0].mesh
        rad = np.linalg.norm(mesh.vertices, axis=1)
        weight = mesh.mass
        flim = f_limit(mesh.vertices) if f_limit is not None else None
        maps = [DiscreteSampler(u) for u in solves.maps[:k_max + 1]]
        lams, reports = solves.lams[:k_max + 1], solves.reports[:k_max + 1]
        vals_k = [m.vertex_values() for m in maps]
        keep = ~solves.maps[0].frozen
    inner = rad <= R
    for m, vals in zip(maps, vals_k):
        s, ms, d, lv = _containment_step(vals, weight, inner, region, r, flim)
        sups.append(s); meas.append(ms); lem.append(lv)
        mins.append(float(vals.rho[keep].min()))
        ratios.append(_mean_value_ratio(d, weight, rad))
        halves.append(_alt_lambda(m, samples))
        c = m.at(np.zeros(2))
        centers.append((float(c.rho[0]), float(c.phi[0])))
    sups = np.array(sups)
    cdist = np.array([float(region.distance_to(c[0], c[1])[0]) for c in centers])
    checked = flim is not None
    lem35 = {"r": r, "violations": lem, "checked": checked,
             "ok": (not checked) or all(v == 0 for v in lem)}
    lem36 = {"r": r}
    if rho0 < r:
        g = gamma_gap(rho0, r)
        lem36.update(gap=g, ok=bool(g > r / 2))
    else:
        lem36.update(gap=float("nan"), ok=False)
    rat = np.array(ratios)
    mv = {"tau": 7 / 8, "ratios": rat, "bound": 64 / math.pi,
          "ok": bool(np.all(np.isnan(rat) | (rat <= 64 / math.pi)))}
    return ContainmentReport(rho0, R, h, np.asarray(lams, float), sups, np.array(meas), centers, cdist,
                             np.array(mins), lem35, lem36, mv, float(np.max(halves)),
                             all(rp.converged for rp in reports), sups > floor, reports)


def epsilon_budget(c1: float, c2: float) -> float:
    """Largest eps with 16/3 c1 eps < 1/(4 c2^2), the smallness used for the induction."""
    return 3.0 / (64.0 * c1 * c2 * c2)


def region_measures(src, rho: float, R: float = 0.9, h: float = 0.01) -> dict:
    """sup over B_R of d(u, H[rho/2]) and the area of {u outside H[rho/2]} in B_1, on a lattice."""
    s = as_sampler(src)
    pts = disk_samples(1.0, h)
    v = s.evaluate(pts)
    d = ConvexRegion(rho / 2).distance_to(v.rho, v.phi)
    inner = np.linalg.norm(pts, axis=1) <= R
    return {"sup": float(d[inner].max()), "outside": float(np.count_nonzero(d > 0) * h * h)}


def turning_containment(family: SingularFamily, sigmas: Sequence[float], R: float = 0.9,
                     h: float = 0.01) -> dict:
    """Containment of u_sigma in H[rho_sigma/2], rho_sigma the turning radius of the comb spine."""
    lv = np.asarray(family.levels, float)
    rows = []
    for s in sigmas:
        half = (lv.max() - lv.min()) / (2 * s * s)
        rs = symmetric_turning_radius(half)
        m = region_measures(family.member(s), rs, R, h)
        rows.append((float(s), rs, m["sup"], m["outside"]))
    sup = np.array([r[2] for r in rows])
    out = np.array([r[3] for r in rows])
    return {"rows": rows, "sup_decreasing": bool(np.all(np.diff(sup) < 0)),
            "outside_decreasing": bool(np.all(np.diff(out) <= 0))}
