"""Geometry of the completed model surface.

H = {(rho, phi) : rho > 0} with metric drho^2 + rho^6 dphi^2, completed by a
single point P0 at rho = 0.  Distances are evaluated from the Clairaut
parameterization of geodesics: along a unit speed geodesic J = rho^6 phi' is
constant, the turning radius is a = |J|^(1/3), and both the phi-offset and the
arclength measured from the turning point reduce to an incomplete beta
integral.  The boundary value problem is then a scalar root-find in J.  The RK4
integrator below solves the same geodesics as an initial value problem and is
kept independent of the closed-form route.
"""
from __future__ import annotations

import csv
import functools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate, optimize, special


class ChartError(ValueError):
    """Raised when a chart is asked to describe P0."""


@dataclass(frozen=True)
class ModelPoint:
    """A point of the completed model space.

    Interior points carry (rho, phi) with rho > 0.  The basepoint P0 is the
    module level constant ``P0``; it has no coordinates.
    """

    rho: float
    phi: float = 0.0

    def __post_init__(self):
        if not self.rho > 0.0 and not _BUILDING_P0[0]:
            raise ValueError("interior points need rho > 0; use P0 for the basepoint")

    @property
    def is_basepoint(self) -> bool:
        return self.rho == 0.0

    def __repr__(self):
        if self.is_basepoint:
            return "P0"
        return f"ModelPoint(rho={self.rho!r}, phi={self.phi!r})"


_BUILDING_P0 = [True]
P0 = ModelPoint(0.0, 0.0)
_BUILDING_P0[0] = False


def point(rho: float, phi: float = 0.0) -> ModelPoint:
    return P0 if rho == 0.0 else ModelPoint(float(rho), float(phi))


@dataclass(frozen=True)
class HomogeneousPoint:
    rho: float
    Phi: float


@dataclass(frozen=True)
class GeoConfig:
    step: float = 1e-3
    tol: float = 1e-10
    rho_floor: float = 1e-6


# --------------------------------------------------------------------------
# charts, metric, scaling

def to_homogeneous(p: ModelPoint) -> HomogeneousPoint:
    if p.is_basepoint:
        raise ChartError("P0 has no homogeneous coordinates")
    return HomogeneousPoint(p.rho, p.rho ** 3 * p.phi)


def from_homogeneous(h: HomogeneousPoint) -> ModelPoint:
    return ModelPoint(h.rho, h.Phi / h.rho ** 3)


def scale(lam: float, p: ModelPoint) -> ModelPoint:
    """(rho, Phi) -> (lam rho, lam Phi); in standard coordinates phi -> phi / lam^2."""
    if not lam > 0:
        raise ValueError("scale factor must be positive")
    if p.is_basepoint:
        return P0
    return ModelPoint(lam * p.rho, p.phi / lam ** 2)


def scale_arrays(lam, rho, phi):
    lam = np.asarray(lam, dtype=float)
    return lam * rho, phi / lam ** 2


def metric_at(p, chart: str = "standard") -> np.ndarray:
    if isinstance(p, HomogeneousPoint):
        rho, Phi = p.rho, p.Phi
        if chart != "homogeneous":
            return metric_at(from_homogeneous(p), chart)
    else:
        if p.is_basepoint:
            raise ChartError("metric undefined at P0")
        rho, Phi = p.rho, p.rho ** 3 * p.phi
    if chart == "standard":
        return np.diag([1.0, rho ** 6])
    if chart == "homogeneous":
        b = -3.0 * Phi / rho
        return np.array([[1.0 + b * b, b], [b, 1.0]])
    raise ValueError(f"unknown chart {chart!r}")


# --------------------------------------------------------------------------
# the universal constant and the profile integrals

@functools.lru_cache(maxsize=None)
def c_star() -> float:
    """int_0^1 u^4 (1-u^6)^(-1/2) du, by adaptive quadrature with the endpoint weight."""
    # 1 - u^6 = (1 - u) (1 + u + ... + u^5); the (1-u)^(-1/2) factor goes to the weight
    val, _ = integrate.quad(lambda u: u ** 4 / math.sqrt(1 + u + u**2 + u**3 + u**4 + u**5),
                            0.0, 1.0, weight="alg", wvar=(0.0, -0.5), epsabs=1e-15, epsrel=1e-14)
    return val


def _one_minus_pow6(w):
    w = np.asarray(w, dtype=float)
    with np.errstate(divide="ignore"):
        return -np.expm1(6.0 * np.log(w))


def _G(om6):
    """G(w) = int_w^1 u^4 (1-u^6)^(-1/2) du written through x = 1 - w^6."""
    return c_star() * special.betainc(0.5, 5.0 / 6.0, np.clip(om6, 0.0, 1.0))


def _G_lower(w6):
    """int_0^w u^4 (1-u^6)^(-1/2) du written through x = w^6."""
    return c_star() * special.betainc(5.0 / 6.0, 0.5, np.clip(w6, 0.0, 1.0))


def profile_phi(rho0, rho):
    """phi-offset accumulated between the turning point rho0 and radius rho >= rho0."""
    w = np.asarray(rho0, float) / np.asarray(rho, float)
    return _G(_one_minus_pow6(w)) / np.asarray(rho0, float) ** 2


def profile_length(rho0, rho):
    """arclength between the turning point rho0 and radius rho >= rho0."""
    rho0 = np.asarray(rho0, float)
    rho = np.asarray(rho, float)
    om = _one_minus_pow6(rho0 / rho)
    return rho * np.sqrt(om) - 2.0 * rho0 * _G(om)


def _tail_series(w):
    # int_0^w u^4 (1-u^6)^(-1/2) du as a power series, for small w
    total, k, c = 0.0, 0, 1.0
    while True:
        term = c * w ** (6 * k + 5) / (6 * k + 5)
        total += term
        if term < 1e-18 * max(total, 1e-300) or k > 200:
            return total
        k += 1
        c *= (2 * k - 1) / (2 * k)


# --------------------------------------------------------------------------
# closed-form boundary value problem

def _q(s2):
    # (1 - (1 - x)^6) / x with x = s^2
    return 6.0 + s2 * (-15.0 + s2 * (20.0 + s2 * (-15.0 + s2 * (6.0 - s2))))


class _Shoot:
    """Vectorized root-find for the Clairaut parameter.

    With lo <= hi the endpoint radii, r = lo/hi, D = |dphi| lo^2 and a = t lo, the
    unknown s in (-1, 1) encodes t = 1 - s^2 and the branch: s < 0 is the
    monotone branch, s > 0 passes a turning point.  The residual
    N(s)/t^2 - D is smooth and increasing through s = 0; Newton runs on its log.
    """

    def __init__(self, lo, hi, D):
        self.lo, self.hi, self.D = lo, hi, D
        self.r = lo / hi
        self.om_r6 = -np.expm1(6.0 * np.log1p((lo - hi) / hi))
        self.r6 = self.r ** 6

    def parts(self, s):
        s2 = s * s
        t = (1.0 - np.abs(s)) * (1.0 + np.abs(s))
        q = _q(s2)
        om_t6 = s2 * q
        om_rt6 = self.om_r6 + self.r6 * om_t6
        # monotone branch: G(rt) - G(t) = int_{rt}^{t}; use the lower integral when t is small
        t6 = t ** 6
        low = (s <= 0) & (t6 < 0.5)
        up = ~low
        g_hi = np.zeros_like(s)
        g_lo = np.zeros_like(s)
        N = np.empty_like(s)
        if np.any(up):
            g_hi[up] = _G(om_rt6[up])
            g_lo[up] = _G(om_t6[up])
            N[up] = np.where(s[up] > 0, g_hi[up] + g_lo[up], g_hi[up] - g_lo[up])
        if np.any(low):
            N[low] = _G_lower(t6[low]) - _G_lower(self.r6[low] * t6[low])
        return t, q, om_t6, om_rt6, g_hi, g_lo, N

    def residual(self, s):
        """log(N / t^2) - log(D) and its s-derivative (log scale keeps Newton tame)."""
        t, q, om_t6, om_rt6, g_hi, g_lo, N = self.parts(s)
        dN = 2.0 * self.r ** 5 * t ** 4 * s / np.sqrt(np.maximum(om_rt6, 1e-300)) + 2.0 * t ** 4 / np.sqrt(q)
        with np.errstate(divide="ignore", invalid="ignore"):
            F = np.where(N > 0, np.log(np.where(N > 0, N, 1.0)) - 2.0 * np.log(t) - np.log(self.D), -np.inf)
            dF = dN / N + 4.0 * s / t
        return F, dF

    def solve(self, s0=None, maxiter=200):
        lo_s = np.full(self.D.shape, -1.0)
        hi_s = np.full(self.D.shape, 1.0)
        Dstar = _G(self.om_r6)
        with np.errstate(all="ignore"):
            t1 = np.cbrt(5.0 * self.D / np.maximum(-np.expm1(5.0 * np.log(self.r)), 1e-300))
            t2 = np.sqrt(2.0 * c_star() / np.maximum(self.D, 1e-300))
        s = np.where(self.D < Dstar,
                     -np.sqrt(1.0 - np.clip(t1, 1e-12, 0.999)),
                     np.sqrt(1.0 - np.clip(t2, 1e-12, 0.999)))
        if s0 is not None:
            warm = np.isfinite(s0) & (np.abs(s0) < 0.999)
            s = np.where(warm, s0, s)
        self.iterations = 0
        active = np.ones(s.shape, bool)
        dx_old = np.full(s.shape, 4.0)
        # nearly vertical or nearly P0-grazing pairs: with t < 1e-3 the leading
        # term of N is exact to rounding, so solve for t directly
        with np.errstate(all="ignore"):
            t_mono = np.cbrt(5.0 * self.D / np.maximum(-np.expm1(5.0 * np.log(self.r)), 1e-300))
            t_turn = np.sqrt(2.0 * c_star() / np.maximum(self.D, 1e-300))
            t_turn = np.sqrt((2.0 * c_star() - t_turn ** 5 * (1.0 + self.r ** 5) / 5.0) / np.maximum(self.D, 1e-300))
        direct_m = (self.D < Dstar) & (t_mono < 1e-3) & (self.r < 1.0 - 1e-6)
        direct_t = (self.D >= Dstar) & (t_turn < 1e-3)
        s = np.where(direct_m, -np.sqrt(1.0 - np.where(direct_m, t_mono, 0.0)), s)
        s = np.where(direct_t, np.sqrt(1.0 - np.where(direct_t, t_turn, 0.0)), s)
        active &= ~(direct_m | direct_t)
        with np.errstate(all="ignore"):
            for _ in range(maxiter):
                idx = np.nonzero(active)[0]
                if idx.size == 0:
                    break
                sub = _Shoot(self.lo[idx], self.hi[idx], self.D[idx])
                si = s[idx]
                F, dF = sub.residual(si)
                lo_i, hi_i = lo_s[idx], hi_s[idx]
                lo_i = np.where(F < 0, si, lo_i)
                hi_i = np.where(F > 0, si, hi_i)
                newton = si - F / dF
                # bisect when Newton leaves the bracket or fails to halve the last step
                ok = (np.isfinite(newton) & (newton > lo_i) & (newton < hi_i) & (dF > 0)
                      & (np.abs(newton - si) < 0.5 * dx_old[idx]))
                snew = np.where(ok, newton, 0.5 * (lo_i + hi_i))
                step = np.abs(snew - si)
                dx_old[idx] = step
                small = np.abs(F) <= 1e-13
                done = small | (step <= 1e-14) | (hi_i - lo_i <= 4e-16)
                lo_s[idx], hi_s[idx] = lo_i, hi_i
                s[idx] = np.where(small, si, snew)
                active[idx[done]] = False
                self.iterations += 1
        self.converged = ~active
        return s


@dataclass
class PairGeometry:
    """Vectorized geodesic data for pairs p -> q."""

    dist: np.ndarray
    log_rho: np.ndarray    # log map at p, standard components
    log_phi: np.ndarray
    a: np.ndarray          # turning radius |J|^(1/3)
    turning: np.ndarray
    J: np.ndarray
    s: np.ndarray          # shooting parameter, nan where no shooting was needed


def pair_geometry(r1, f1, r2, f2, s0=None, backend: str = "compiled") -> PairGeometry:
    """Distance and log map for arrays of pairs.  rho == 0 encodes P0.

    ``s0`` optionally warm-starts the shooting parameter (same layout as the
    returned ``s``).  backend "compiled" runs the scalar kernels, "numpy" the
    vectorized incomplete-beta route; the two are kept independent.
    """
    r1, f1, r2, f2 = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (r1, f1, r2, f2)))
    r1, f1, r2, f2 = (x.ravel().copy() for x in (r1, f1, r2, f2))
    n = r1.size
    if backend == "compiled":
        from . import _kernels
        s_in = np.full(n, np.nan) if s0 is None else np.array(np.broadcast_to(np.asarray(s0, float), (n,)))
        o = _kernels.pair_arrays(r1, f1, r2, f2, s_in, _kernels.CS)
        return PairGeometry(o[0], o[1], o[2], o[3], o[5] > 0, o[4], o[5])
    if backend != "numpy":
        raise ValueError(f"unknown backend {backend!r}")
    dist = np.abs(r2 - r1)
    lr = r2 - r1
    lp = np.zeros(n)
    a = np.zeros(n)
    J = np.zeros(n)
    turning = np.zeros(n, bool)
    s_all = np.full(n, np.nan)

    base1 = r1 == 0.0
    base2 = r2 == 0.0
    dphi = f2 - f1
    gen = ~base1 & ~base2 & (dphi != 0.0)
    # to P0: horizontal segment down; from P0: no tangent space
    dist[base1 | base2] = (r1 + r2)[base1 | base2]
    lr[base2 & ~base1] = -r1[base2 & ~base1]
    lr[base1] = 0.0

    if np.any(gen):
        i = np.nonzero(gen)[0]
        p_lo = r1[i] <= r2[i]
        lo = np.minimum(r1[i], r2[i])
        hi = np.maximum(r1[i], r2[i])
        D = np.abs(dphi[i]) * lo * lo
        sh = _Shoot(lo, hi, D)
        s = sh.solve(None if s0 is None else np.broadcast_to(np.asarray(s0, float), (n,))[i])
        t, q, om_t6, om_rt6, g_hi, g_lo, N = sh.parts(s)
        ai = t * lo
        # sum (turning) or difference (monotone) of the two profile lengths
        di = hi * np.sqrt(om_rt6) + np.sign(s) * lo * np.abs(s) * np.sqrt(q) - 2.0 * ai * N
        drho = np.where(p_lo, -s * np.sqrt(q), -np.sqrt(om_rt6))
        Ji = np.sign(dphi[i]) * ai ** 3
        dphi0 = Ji / r1[i] ** 6
        dist[i] = di
        lr[i] = di * drho
        lp[i] = di * dphi0
        a[i] = ai
        J[i] = Ji
        turning[i] = s > 0
        s_all[i] = s
    return PairGeometry(dist, lr, lp, a, turning, J, s_all)


def distances(r1, f1, r2, f2, backend: str = "compiled") -> np.ndarray:
    shape = np.broadcast_shapes(np.shape(r1), np.shape(f1), np.shape(r2), np.shape(f2))
    return pair_geometry(r1, f1, r2, f2, backend=backend).dist.reshape(shape)


def distance(p: ModelPoint, q: ModelPoint) -> float:
    if p.is_basepoint or q.is_basepoint:
        return p.rho + q.rho
    return float(pair_geometry(p.rho, p.phi, q.rho, q.phi).dist[0])


def log_map(p: ModelPoint, q: ModelPoint) -> tuple[float, float]:
    """Initial velocity (drho, dphi) of the geodesic from p reaching q at time 1."""
    if p.is_basepoint:
        raise ChartError("no tangent space at P0")
    g = pair_geometry(p.rho, p.phi, q.rho, q.phi)
    return float(g.log_rho[0]), float(g.log_phi[0])


# --------------------------------------------------------------------------
# initial value problem

@dataclass
class GeodesicPath:
    s: np.ndarray
    rho: np.ndarray
    phi: np.ndarray
    clairaut_J: float
    step: float
    unit_speed: bool = True
    truncated: bool = False
    normalized: bool = False
    drho: np.ndarray | None = None
    dphi: np.ndarray | None = None
    halving_error: float | None = None

    @property
    def points(self) -> list[ModelPoint]:
        return [ModelPoint(r, f) for r, f in zip(self.rho, self.phi)]

    @property
    def length(self) -> float:
        return float(self.s[-1] - self.s[0])

    def Phi(self):
        return self.rho ** 3 * self.phi

    def speed_defect(self) -> np.ndarray:
        return self.drho ** 2 + self.rho ** 6 * self.dphi ** 2 - 1.0

    def clairaut_values(self) -> np.ndarray:
        return self.rho ** 6 * self.dphi

    def write_csv(self, path, header: str | None = None):
        with open(path, "w", newline="") as fh:
            if header:
                fh.write(header)
            w = csv.writer(fh)
            w.writerow(["s", "rho", "phi", "Phi", "J"])
            for s, r, f in zip(self.s, self.rho, self.phi):
                w.writerow([f"{s:.12g}", f"{r:.15g}", f"{f:.15g}", f"{r**3*f:.15g}", f"{self.clairaut_J:.15g}"])


def _rk4_reduced(rho, p, phi, J, h, nsteps, floor):
    out = [(rho, p, phi)]
    J2 = 3.0 * J * J
    for _ in range(nsteps):
        k1r, k1p, k1f = p, J2 / rho ** 7, J / rho ** 6
        r2 = rho + 0.5 * h * k1r
        k2r, k2p, k2f = p + 0.5 * h * k1p, J2 / r2 ** 7, J / r2 ** 6
        r3 = rho + 0.5 * h * k2r
        k3r, k3p, k3f = p + 0.5 * h * k2p, J2 / r3 ** 7, J / r3 ** 6
        r4 = rho + h * k3r
        k4r, k4p, k4f = p + h * k3p, J2 / r4 ** 7, J / r4 ** 6
        rho += h * (k1r + 2 * k2r + 2 * k3r + k4r) / 6.0
        p += h * (k1p + 2 * k2p + 2 * k3p + k4p) / 6.0
        phi += h * (k1f + 2 * k2f + 2 * k3f + k4f) / 6.0
        out.append((rho, p, phi))
        if rho < floor:
            break
    return out


def _rk4_full(rho, p, phi, q, h, nsteps, floor):
    # rho'' = 3 rho^5 phi'^2, phi'' = -6 rho' phi' / rho
    def f(r, pr, qf):
        return pr, 3.0 * r ** 5 * qf * qf, qf, -6.0 * pr * qf / r
    out = [(rho, p, phi, q)]
    for _ in range(nsteps):
        a = f(rho, p, q)
        b = f(rho + 0.5 * h * a[0], p + 0.5 * h * a[1], q + 0.5 * h * a[3])
        c = f(rho + 0.5 * h * b[0], p + 0.5 * h * b[1], q + 0.5 * h * b[3])
        d = f(rho + h * c[0], p + h * c[1], q + h * c[3])
        rho += h * (a[0] + 2 * b[0] + 2 * c[0] + d[0]) / 6.0
        p += h * (a[1] + 2 * b[1] + 2 * c[1] + d[1]) / 6.0
        phi += h * (a[2] + 2 * b[2] + 2 * c[2] + d[2]) / 6.0
        q += h * (a[3] + 2 * b[3] + 2 * c[3] + d[3]) / 6.0
        out.append((rho, p, phi, q))
        if rho < floor:
            break
    return out


def geodesic_ivp(start: ModelPoint, direction: Sequence[float], length: float,
                 step: float = 1e-3, rho_floor: float = 1e-6, system: str = "reduced",
                 check_halving: bool = False) -> GeodesicPath:
    """Integrate the geodesic leaving ``start`` with velocity ``direction`` = (drho, dphi).

    ``system="reduced"`` integrates rho' = p, p' = 3 J^2 / rho^7, phi' = J / rho^6
    with J fixed by the initial data; ``system="full"`` integrates the second
    order equations for (rho, phi) directly, so J is a measured quantity.
    Negative ``length`` runs the geodesic backwards.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    if start.is_basepoint:
        raise ChartError("cannot integrate from P0")
    dr, df = float(direction[0]), float(direction[1])
    rho0, phi0 = start.rho, start.phi
    norm = math.sqrt(dr * dr + rho0 ** 6 * df * df)
    normalized = False
    if abs(norm - 1.0) > 1e-12:
        if norm == 0:
            raise ValueError("zero direction")
        dr, df = dr / norm, df / norm
        normalized = True
    J = rho0 ** 6 * df
    sign = 1.0 if length >= 0 else -1.0
    L = abs(length)
    nsteps = max(1, int(math.ceil(L / step - 1e-9)))
    h = sign * L / nsteps
    if system == "reduced":
        rows = _rk4_reduced(rho0, dr, phi0, J, h, nsteps, rho_floor)
        arr = np.array(rows)
        rho, drho, phi = arr[:, 0], arr[:, 1], arr[:, 2]
        dphi = J / rho ** 6
    elif system == "full":
        rows = _rk4_full(rho0, dr, phi0, df, h, nsteps, rho_floor)
        arr = np.array(rows)
        rho, drho, phi, dphi = arr.T
    else:
        raise ValueError(system)
    s = h * np.arange(len(rows))
    truncated = len(rows) < nsteps + 1 or rho[-1] < rho_floor
    path = GeodesicPath(s, rho, phi, J, abs(h), unit_speed=True, truncated=truncated,
                        normalized=normalized, drho=drho, dphi=dphi)
    if check_halving and not truncated:
        fine = geodesic_ivp(start, (dr, df), length, step / 2, rho_floor, system)
        path.halving_error = float(math.hypot(fine.rho[-1] - rho[-1], fine.phi[-1] - phi[-1]))
    return path


# --------------------------------------------------------------------------
# boundary value problem

@dataclass
class BVPResult:
    path: GeodesicPath
    length: float
    J: float
    status: str = "ok"
    endpoint_error: float = 0.0


def geodesic_bvp(p: ModelPoint, q: ModelPoint, tol: float = 1e-8, step: float = 1e-3,
                 rho_floor: float = 1e-6) -> BVPResult:
    """Connecting geodesic by shooting on the Clairaut constant.

    J comes from the closed-form endpoint map; the path itself is produced by
    the integrator, and the endpoint mismatch of that path is reported.
    """
    if p.is_basepoint or q.is_basepoint:
        raise ChartError("interior endpoints required; geodesics to P0 are horizontal")
    if p == q:
        raise ValueError("endpoints coincide")
    g = pair_geometry(p.rho, p.phi, q.rho, q.phi)
    L = float(g.dist[0])
    direction = (g.log_rho[0] / L, g.log_phi[0] / L)
    status = "ok"
    if g.a[0] > 0 and g.a[0] < rho_floor:
        status = "near_basepoint"
    h = min(step, L / 16, max(g.a[0], 1e-12) * step if g.turning[0] else step)
    h = max(h, L / 2e6)
    path = geodesic_ivp(p, direction, L, step=h, rho_floor=rho_floor * 1e-3)
    err = float(pair_geometry(path.rho[-1], path.phi[-1], q.rho, q.phi).dist[0]) if not path.truncated else float("inf")
    if not err <= tol and status == "ok":
        status = "integration_mismatch"
    return BVPResult(path, L, float(g.J[0]), status, err)


# --------------------------------------------------------------------------
# symmetric geodesics and the regions they bound

@dataclass
class SymmetricGeodesic:
    rho0: float
    phi_infinity: float
    path: GeodesicPath

    @property
    def J(self) -> float:
        return self.rho0 ** 3


def symmetric_geodesic(rho0: float, span: float | None = None, step: float = 1e-3) -> SymmetricGeodesic:
    """Geodesic through (rho0, 0) with vertical tangent, sampled on [-span, span].

    phi_infinity is read off the integrated branch at s = span, plus the
    remaining tail of the phi integral expanded as a power series.
    """
    if not rho0 > 0:
        raise ValueError("rho0 must be positive")
    span = 40.0 * rho0 if span is None else span
    h = step * min(1.0, rho0)
    J = rho0 ** 3
    d0 = (0.0, 1.0 / rho0 ** 3)
    fwd = geodesic_ivp(ModelPoint(rho0, 0.0), d0, span, step=h, rho_floor=0.0)
    bwd = geodesic_ivp(ModelPoint(rho0, 0.0), d0, -span, step=h, rho_floor=0.0)
    s = np.concatenate([bwd.s[:0:-1], fwd.s])
    rho = np.concatenate([bwd.rho[:0:-1], fwd.rho])
    phi = np.concatenate([bwd.phi[:0:-1], fwd.phi])
    drho = np.concatenate([bwd.drho[:0:-1], fwd.drho])
    dphi = np.concatenate([bwd.dphi[:0:-1], fwd.dphi])
    path = GeodesicPath(s, rho, phi, J, h, drho=drho, dphi=dphi)
    phi_inf = fwd.phi[-1] + _tail_series(rho0 / fwd.rho[-1]) / rho0 ** 2
    return SymmetricGeodesic(rho0, float(phi_inf), path)


@dataclass
class ConvexRegion:
    """Closed side of the symmetric geodesic through (rho0, 0) away from P0.

    The boundary curve is rho >= rho0, |phi| = profile_phi(rho0, rho).
    """

    rho0: float
    border_tol: float = 1e-12

    @property
    def phi_infinity(self) -> float:
        return c_star() / self.rho0 ** 2

    def classify_arrays(self, rho, phi):
        """Membership and borderline flags for arrays; rho == 0 is P0."""
        rho = np.asarray(rho, float)
        phi = np.asarray(phi, float)
        r0 = self.rho0
        inside = np.zeros(np.broadcast(rho, phi).shape, bool)
        border = np.abs(np.abs(phi) * r0 ** 2 - c_star()) <= self.border_tol * c_star()
        ok = rho >= r0 * (1 - 1e-14)
        with np.errstate(divide="ignore", invalid="ignore"):
            bound = profile_phi(r0, np.maximum(rho, r0))
        inside = ok & (np.abs(phi) <= bound * (1 + self.border_tol) + 1e-300) & ~border
        return inside, border

    def contains_arrays(self, rho, phi):
        return self.classify_arrays(rho, phi)[0]

    def contains(self, p: ModelPoint) -> bool:
        if p.is_basepoint:
            return False
        return bool(self.contains_arrays(p.rho, p.phi))

    def boundary_point(self, u):
        """Parameterization of the boundary by u in (-1, 1); u = 0 is (rho0, 0)."""
        u = np.asarray(u, float)
        au = np.abs(u)
        om6 = -np.expm1(6.0 * np.log1p(-au))
        return self.rho0 / (1.0 - au), np.sign(u) * _G(om6) / self.rho0 ** 2

    def project_arrays(self, rho, phi, iters: int = 90):
        """Nearest-point projection by golden-section search along the boundary."""
        rho = np.array(rho, float, ndmin=1)
        phi = np.array(phi, float, ndmin=1)
        out_r, out_f = rho.copy(), phi.copy()
        inside = self.contains_arrays(rho, phi)
        idx = np.nonzero(~inside)[0]
        if idx.size == 0:
            return out_r, out_f
        pr, pf = rho[idx], phi[idx]

        def f(u):
            br, bf = self.boundary_point(u)
            return distances(pr, pf, br, bf)

        lo = np.full(idx.size, -1.0 + 1e-13)
        hi = np.full(idx.size, 1.0 - 1e-13)
        g = (math.sqrt(5) - 1) / 2
        c = hi - g * (hi - lo)
        d = lo + g * (hi - lo)
        fc, fd = f(c), f(d)
        for _ in range(iters):
            left = fc <= fd
            hi = np.where(left, d, hi)
            lo = np.where(left, lo, c)
            c_new = np.where(left, hi - g * (hi - lo), d)
            d_new = np.where(left, c, lo + g * (hi - lo))
            # reuse the surviving evaluation
            f_keep = np.where(left, fc, fd)
            probe = np.where(left, c_new, d_new)
            fp = f(probe)
            fc = np.where(left, fp, f_keep)
            fd = np.where(left, f_keep, fp)
            c, d = c_new, d_new
        u = 0.5 * (lo + hi)
        br, bf = self.boundary_point(u)
        out_r[idx], out_f[idx] = br, bf
        return out_r, out_f

    def project(self, p: ModelPoint) -> ModelPoint:
        if p.is_basepoint:
            return ModelPoint(self.rho0, 0.0)
        r, f = self.project_arrays([p.rho], [p.phi])
        return ModelPoint(float(r[0]), float(f[0]))

    def distance_to(self, rho, phi):
        """d(p, region) for arrays, rho == 0 meaning P0."""
        rho = np.array(rho, float, ndmin=1)
        phi = np.array(phi, float, ndmin=1)
        pr, pf = self.project_arrays(rho, phi)
        return distances(rho, phi, pr, pf)


def region_contains(region: ConvexRegion, p: ModelPoint) -> bool:
    return region.contains(p)


def project_to_region(region: ConvexRegion, p: ModelPoint) -> ModelPoint:
    return region.project(p)


# --------------------------------------------------------------------------
# gaps between symmetric geodesics

def _curve(rho0, rmin, rmax, n, sign):
    rr = np.geomspace(rmin, rmax, n)
    return rr, sign * profile_phi(rho0, rr)


def _min_pair(f, x0, bounds):
    res = optimize.minimize(f, x0, method="Nelder-Mead", bounds=bounds,
                            options=dict(xatol=1e-12, fatol=1e-14, maxiter=4000))
    return min(float(res.fun), float(f(x0)))


def gamma_gap(rho0: float, r: float, samples: int = 300, rmax: float | None = None) -> float:
    """d(Gamma_rho0, Gamma_{rho0/2} minus the open ball B_r(P0)).

    Dense two-curve sampling over log-spaced radii on both branches, followed
    by a local refinement of the best pair.
    """
    if not rho0 < r:
        raise ValueError("need rho0 < r")
    rmax = rmax if rmax is not None else 20.0 * max(r, 1.0)
    half = rho0 / 2
    best = (np.inf, None)
    # Gamma_rho0, both branches
    r1 = np.geomspace(rho0, rmax, samples)
    r2 = np.geomspace(r, rmax, samples)
    f2 = profile_phi(half, r2)
    for s1 in (1.0, -1.0):
        f1 = s1 * profile_phi(rho0, r1)
        R1, R2 = np.meshgrid(r1, r2, indexing="ij")
        F1, F2 = np.meshgrid(f1, f2, indexing="ij")
        D = distances(R1, F1, R2, F2)
        k = np.unravel_index(np.argmin(D), D.shape)
        if D[k] < best[0]:
            best = (D[k], (s1, math.log(r1[k[0]] / rho0), math.log(r2[k[1]] / r)))
    s1, x0, y0 = best[1]

    def f(x):
        ra = rho0 * math.exp(x[0])
        rb = r * math.exp(x[1])
        return float(distances(ra, s1 * profile_phi(rho0, ra), rb, profile_phi(half, rb)))

    bounds = [(0.0, math.log(rmax / rho0)), (0.0, math.log(rmax / r))]
    return min(best[0], _min_pair(f, np.array([x0, y0]), bounds))


def complement_gap(rho0: float, r: float, samples: int = 200, rmax: float | None = None) -> float:
    """d(C, Gamma_rho0) with C the complement of H[rho0/2] union B_r(P0).

    Evaluated by sampling C itself: points with rho >= r outside H[rho0/2],
    plus its boundary curve and arc, each against a dense sample of Gamma_rho0.
    """
    rmax = rmax if rmax is not None else 20.0 * max(r, 1.0)
    half = rho0 / 2
    rr = np.geomspace(r, rmax, samples)
    bound = profile_phi(half, rr)
    # layered points in C: phi from the boundary of H[rho0/2] outward
    frac = np.concatenate([[1.0], 1.0 + np.geomspace(1e-4, 4.0, samples // 4)])
    Rc = np.repeat(rr, frac.size)
    Fc = np.outer(bound, frac).ravel()
    phi_far = np.outer(np.ones(samples // 4), np.geomspace(1e-3, 1e3, samples // 4) / half ** 2).ravel()
    Rc = np.concatenate([Rc, np.full(phi_far.size, r), np.full(samples, r)])
    Fc = np.concatenate([Fc, phi_far, profile_phi(half, r) * np.linspace(1, 50, samples)])
    # points inside B_r are excluded by construction, so is the closed H[rho0/2]
    keep = (Rc >= r) & ~ConvexRegion(half).contains_arrays(Rc, Fc) | (np.isclose(Fc, profile_phi(half, Rc)))
    Rc, Fc = Rc[keep], Fc[keep]
    g1 = np.geomspace(rho0, rmax, samples)
    best = np.inf
    for s1 in (1.0, -1.0):
        f1 = s1 * profile_phi(rho0, g1)
        for chunk in np.array_split(np.arange(Rc.size), max(1, Rc.size // 2000)):
            D = distances(Rc[chunk, None], Fc[chunk, None], g1[None, :], f1[None, :])
            best = min(best, float(D.min()))
    return best


# --------------------------------------------------------------------------
# points along geodesics

def _invert_profile_length(a, target):
    """rho >= a with profile_length(a, rho) = target (vectorized)."""
    lo = a.copy()
    hi = a + target
    rho = np.where(target > 0, np.maximum(a + target - a * 0.5, a), a)
    rho = np.clip(rho, lo, hi)
    with np.errstate(all="ignore"):
        for _ in range(200):
            f = profile_length(a, rho) - target
            lo = np.where(f < 0, rho, lo)
            hi = np.where(f > 0, rho, hi)
            dl = 1.0 / np.sqrt(np.maximum(_one_minus_pow6(a / rho), 1e-300))
            new = rho - f / dl
            bad = ~np.isfinite(new) | (new <= lo) | (new >= hi)
            new = np.where(bad, 0.5 * (lo + hi), new)
            if np.all(np.abs(new - rho) <= 1e-15 * np.maximum(rho, 1e-300)):
                rho = new
                break
            rho = new
    return rho


def interpolate_arrays(r1, f1, r2, f2, lam):
    """Point at fraction lam of the geodesic from (r1, f1) to (r2, f2).

    Endpoints may be P0 (rho == 0).  Returned rho == 0 marks P0.
    """
    r1, f1, r2, f2, lam = (np.array(x, float) for x in np.broadcast_arrays(r1, f1, r2, f2, lam))
    r1, f1, r2, f2, lam = (x.ravel() for x in (r1, f1, r2, f2, lam))
    g = pair_geometry(r1, f1, r2, f2)
    out_r = r1 + lam * (r2 - r1)
    out_f = np.where(r1 == 0.0, f2, f1).copy()
    out_f = np.where(out_r == 0.0, 0.0, out_f)
    gen = g.a > 0
    if np.any(gen):
        i = np.nonzero(gen)[0]
        a = g.a[i]
        sig = np.sign(f2[i] - f1[i])
        s = lam[i] * g.dist[i]
        l1 = profile_length(a, r1[i])
        off1 = profile_phi(a, r1[i])
        p_lo = r1[i] <= r2[i]
        turning = g.turning[i]
        # remaining length to the turning point decides which side we are on
        down = turning & (s <= l1)
        target = np.where(turning, np.where(down, l1 - s, s - l1), np.where(p_lo, l1 + s, l1 - s))
        rho = _invert_profile_length(a, np.maximum(target, 0.0))
        off = profile_phi(a, rho)
        phi = np.where(turning,
                       np.where(down, f1[i] + sig * (off1 - off), f1[i] + sig * (off1 + off)),
                       np.where(p_lo, f1[i] + sig * (off - off1), f1[i] + sig * (off1 - off)))
        out_r[i] = rho
        out_f[i] = phi
    return out_r, out_f


def interpolate(p: ModelPoint, q: ModelPoint, lam: float) -> ModelPoint:
    r, f = interpolate_arrays(p.rho, p.phi, q.rho, q.phi, lam)
    return point(float(r[0]), float(f[0]))
