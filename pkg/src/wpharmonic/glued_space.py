"""Finitely many copies of the completed model space glued at P0.

Points on different sheets are joined only through P0, so their distance is
rho + rho'.  Array encoding used throughout: (sheet, rho, phi) with sheet -1
and rho 0 for the shared basepoint.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .model_space import (P0, GeodesicPath, ModelPoint, geodesic_bvp, distances,
                          interpolate_arrays)

BASE_SHEET = -1


@dataclass(frozen=True)
class GluedPoint:
    sheet: int
    point: ModelPoint

    def __post_init__(self):
        if self.point.is_basepoint and self.sheet != BASE_SHEET:
            object.__setattr__(self, "sheet", BASE_SHEET)
        if not self.point.is_basepoint and self.sheet < 0:
            raise ValueError("interior points need a sheet label >= 0")

    @property
    def is_basepoint(self) -> bool:
        return self.point.is_basepoint

    @property
    def rho(self) -> float:
        return self.point.rho

    @property
    def phi(self) -> float:
        return self.point.phi


BASEPOINT = GluedPoint(BASE_SHEET, P0)


@dataclass(frozen=True)
class SheetRegistry:
    """Declared label set A with an optional partition into classes."""

    labels: tuple[int, ...]
    partition: tuple[tuple[int, ...], ...] = ()

    def __post_init__(self):
        if len(self.labels) < 1:
            raise ValueError("need at least one sheet")
        if any(l < 0 for l in self.labels):
            raise ValueError("sheet labels are nonnegative")
        if self.partition:
            flat = sorted(l for c in self.partition for l in c)
            if flat != sorted(self.labels):
                raise ValueError("partition must cover the labels exactly once")

    def point(self, sheet: int, rho: float, phi: float) -> GluedPoint:
        if rho == 0.0:
            return BASEPOINT
        if sheet not in self.labels:
            raise KeyError(f"undeclared sheet {sheet}")
        return GluedPoint(sheet, ModelPoint(rho, phi))


def distances_A(s1, r1, f1, s2, r2, f2) -> np.ndarray:
    """Vectorized glued distance."""
    s1, r1, f1, s2, r2, f2 = np.broadcast_arrays(*(np.asarray(x) for x in (s1, r1, f1, s2, r2, f2)))
    shape = s1.shape
    s1, s2 = s1.ravel(), s2.ravel()
    r1, f1, r2, f2 = (np.asarray(x, float).ravel() for x in (r1, f1, r2, f2))
    out = r1 + r2
    same = (s1 == s2) & (r1 > 0) & (r2 > 0)
    if np.any(same):
        out[same] = distances(r1[same], f1[same], r2[same], f2[same])
    return out.reshape(shape)


def distance_A(x: GluedPoint, y: GluedPoint) -> float:
    if x.is_basepoint or y.is_basepoint or x.sheet != y.sheet:
        return x.rho + y.rho
    return float(distances(x.rho, x.phi, y.rho, y.phi))


@dataclass
class GluedGeodesic:
    start: GluedPoint
    end: GluedPoint
    length: float
    legs: list = field(default_factory=list)
    crosses_basepoint: bool = False

    def at(self, lam: float) -> GluedPoint:
        s, r, f = interpolate_A(self.start.sheet, self.start.rho, self.start.phi,
                                self.end.sheet, self.end.rho, self.end.phi, lam)
        return GluedPoint(int(s[0]), ModelPoint(float(r[0]), float(f[0])) if r[0] > 0 else P0)


def _horizontal_leg(p: ModelPoint, n: int = 33) -> GeodesicPath:
    s = np.linspace(0.0, p.rho, n)
    rho = p.rho - s
    return GeodesicPath(s, rho, np.full(n, p.phi), 0.0, p.rho / (n - 1),
                        drho=-np.ones(n), dphi=np.zeros(n))


def glued_geodesic(x: GluedPoint, y: GluedPoint) -> GluedGeodesic:
    if x == y:
        raise ValueError("endpoints coincide")
    if x.is_basepoint or y.is_basepoint or x.sheet != y.sheet:
        legs = [_horizontal_leg(p.point) for p in (x, y) if not p.is_basepoint]
        cross = not (x.is_basepoint or y.is_basepoint)
        return GluedGeodesic(x, y, x.rho + y.rho, legs, crosses_basepoint=cross)
    res = geodesic_bvp(x.point, y.point)
    return GluedGeodesic(x, y, res.length, [res.path], crosses_basepoint=False)


def interpolate_A(s1, r1, f1, s2, r2, f2, lam):
    """Point at fraction lam along the glued geodesic (vectorized)."""
    s1, r1, f1, s2, r2, f2, lam = (np.array(x).ravel() for x in
                                   np.broadcast_arrays(s1, r1, f1, s2, r2, f2, lam))
    r1, f1, r2, f2, lam = (x.astype(float) for x in (r1, f1, r2, f2, lam))
    out_s = np.where(s1 >= 0, s1, s2).astype(int)
    out_r = np.zeros(r1.size)
    out_f = np.zeros(r1.size)
    same = (s1 == s2) | (r1 == 0) | (r2 == 0)
    if np.any(same):
        rr, ff = interpolate_arrays(r1[same], f1[same], r2[same], f2[same], lam[same])
        out_r[same], out_f[same] = rr, ff
    cross = ~same
    if np.any(cross):
        L = r1[cross] + r2[cross]
        t = lam[cross] * L
        first = t < r1[cross]
        out_r[cross] = np.where(first, r1[cross] - t, t - r1[cross])
        out_f[cross] = np.where(first, f1[cross], f2[cross])
        out_s[cross] = np.where(first, s1[cross], s2[cross])
    base = out_r <= 0.0
    out_r[base], out_f[base], out_s[base] = 0.0, 0.0, BASE_SHEET
    return out_s, out_r, out_f


@dataclass
class NPCReport:
    n: int
    max_violation: float
    violations: np.ndarray
    tolerance: float

    @property
    def ok(self) -> bool:
        return self.max_violation <= self.tolerance


def npc_quadrilateral_check(z, x, y, lam, tolerance: float = 1e-6) -> NPCReport:
    """Evaluate the NPC comparison inequality on arrays of samples.

    z, x, y are (sheet, rho, phi) triples of arrays; lam is an array in [0, 1].
    Violation = lhs - rhs, positive when the inequality fails.
    """
    lam = np.asarray(lam, float)
    ms, mr, mf = interpolate_A(*x, *y, lam)
    lhs = distances_A(*z, ms, mr, mf) ** 2
    rhs = ((1 - lam) * distances_A(*z, *x) ** 2 + lam * distances_A(*z, *y) ** 2
           - lam * (1 - lam) * distances_A(*x, *y) ** 2)
    viol = lhs - rhs
    # relative to the scale of the quadrilateral
    return NPCReport(int(lam.size), float(np.max(viol)) if viol.size else 0.0, viol, tolerance)


def random_glued(rng: np.random.Generator, n: int, sheets: Sequence[int], rho=(0.05, 3.0),
                 phi=(-4.0, 4.0), p_base: float = 0.02):
    s = rng.choice(np.asarray(sheets), n)
    r = rng.uniform(*rho, n)
    f = rng.uniform(*phi, n)
    base = rng.random(n) < p_base
    s[base], r[base], f[base] = BASE_SHEET, 0.0, 0.0
    return s, r, f


def write_distance_csv(path, points: Sequence[GluedPoint], header: str | None = None):
    import csv
    s = np.array([p.sheet for p in points])
    r = np.array([p.rho for p in points])
    f = np.array([p.phi for p in points])
    n = len(points)
    I, Jx = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    D = distances_A(s[I], r[I], f[I], s[Jx], r[Jx], f[Jx])
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(header)
        w = csv.writer(fh)
        w.writerow(["i", "j", "d"])
        for i in range(n):
            for j in range(n):
                w.writerow([i, j, f"{D[i, j]:.15g}"])
