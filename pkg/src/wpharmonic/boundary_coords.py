"""Coordinates near a boundary stratum.

A plumbing parameter t with |t| < 1 opens a node; its model-space image is
rho = 2 (-log|t|)^{-1/2}, phi = arg(t) / 8, and t = 0 is the node itself, P0.
Near a stratum with j regular and m pinched directions a point is a product
of a vector in R^{2j} and m model points, with the product distance.
"""
from __future__ import annotations

import cmath
import math
import re
import warnings
from dataclasses import dataclass, field

import numpy as np

from .model_space import P0, ModelPoint, distance, distances

PRINCIPAL = math.pi


class MultivaluedWarning(UserWarning):
    """arg t left the declared branch; the message names the lift used."""


@dataclass(frozen=True)
class PlumbingParam:
    """t with 0 <= |t| < 1; ``lift`` counts turns added to the principal argument."""

    t: complex
    lift: int = 0

    def __post_init__(self):
        if not abs(self.t) < 1.0:
            raise ValueError(f"plumbing parameter needs |t| < 1, got |t| = {abs(self.t)!r}")

    @property
    def is_node(self) -> bool:
        return self.t == 0

    @property
    def arg(self) -> float:
        """Argument on the lifted branch: principal value in (-pi, pi] plus 2 pi lift."""
        a = cmath.phase(self.t)
        if a == -math.pi:
            a = math.pi
        return a + 2 * math.pi * self.lift


def plumbing_to_model(t) -> ModelPoint:
    p = t if isinstance(t, PlumbingParam) else PlumbingParam(complex(t))
    if p.is_node:
        return P0
    return ModelPoint(2.0 / math.sqrt(-math.log(abs(p.t))), p.arg / 8.0)


def model_to_plumbing(p: ModelPoint, branch_width: float = PRINCIPAL, lift: int | None = None) -> PlumbingParam:
    """Inverse of plumbing_to_model.

    With ``lift=None`` the lift is the nearest whole number of turns to
    8 phi / (2 pi); a nonzero lift outside ``branch_width`` raises a
    MultivaluedWarning that names it.
    """
    if p.is_basepoint:
        return PlumbingParam(0j)
    a = 8.0 * p.phi
    if lift is None:
        lift = 0 if -math.pi < a <= math.pi else int(math.floor((a + math.pi) / (2 * math.pi)))
        if a == math.pi * (2 * lift - 1):
            lift -= 1
    if abs(a) > branch_width:
        warnings.warn(f"|8 phi| = {abs(a):.6g} exceeds branch width {branch_width:.6g}; "
                      f"using lift {lift}", MultivaluedWarning, stacklevel=2)
    mod = math.exp(-4.0 / (p.rho * p.rho))
    return PlumbingParam(cmath.rect(mod, a - 2 * math.pi * lift), lift)


# --------------------------------------------------------------------------
# product points

@dataclass
class ProductPoint:
    regular: np.ndarray = field(default_factory=lambda: np.zeros(0))
    singular: list = field(default_factory=list)

    def __post_init__(self):
        self.regular = np.asarray(self.regular, float).reshape(-1)
        if self.regular.size % 2:
            raise ValueError("regular part lives in R^{2j}")
        if not all(isinstance(s, ModelPoint) for s in self.singular):
            raise TypeError("singular entries are ModelPoint values")

    @property
    def shape(self) -> tuple[int, int]:
        return self.regular.size // 2, len(self.singular)

    def serialize(self) -> str:
        reg = " ".join(repr(float(v)) for v in self.regular)
        sing = " ".join("(P0)" if s.is_basepoint else f"({float(s.rho)!r} {float(s.phi)!r})" for s in self.singular)
        return f"R: {reg} | S: {sing}".replace("  ", " ")

    @staticmethod
    def parse(text: str, shape: tuple[int, int] | None = None) -> "ProductPoint":
        m = re.fullmatch(r"\s*R:(?P<r>[^|]*)\|\s*S:(?P<s>.*)", text)
        if m is None:
            raise ValueError(f"not a product point: {text!r}")
        reg = [float(v) for v in m["r"].split()]
        sing = []
        for tok in re.findall(r"\(([^)]*)\)", m["s"]):
            parts = tok.split()
            if parts == ["P0"]:
                sing.append(P0)
            elif len(parts) == 2:
                sing.append(ModelPoint(float(parts[0]), float(parts[1])))
            else:
                raise ValueError(f"bad singular component ({tok})")
        if re.sub(r"\([^)]*\)", "", m["s"]).strip():
            raise ValueError(f"stray text in singular part: {m['s']!r}")
        p = ProductPoint(np.array(reg), sing)
        if shape is not None and p.shape != tuple(shape):
            raise ValueError(f"expected (j, m) = {tuple(shape)}, got {p.shape}")
        return p


def product_distance(p: ProductPoint, q: ProductPoint) -> float:
    """sqrt(|regular difference|^2 + sum of squared model distances), flat metric on the regular part."""
    if p.shape != q.shape:
        raise ValueError(f"product shapes differ: {p.shape} vs {q.shape}")
    tot = float(np.sum((p.regular - q.regular) ** 2))
    for a, b in zip(p.singular, q.singular):
        tot += distance(a, b) ** 2
    return math.sqrt(tot)


def product_distance_arrays(reg1, rho1, phi1, reg2, rho2, phi2) -> np.ndarray:
    """Vectorized product distance; regular parts (N, 2j), singular parts (N, m), rho == 0 is P0."""
    reg1, reg2 = np.atleast_2d(reg1), np.atleast_2d(reg2)
    rho1, rho2 = np.atleast_2d(rho1), np.atleast_2d(rho2)
    phi1, phi2 = np.atleast_2d(phi1), np.atleast_2d(phi2)
    if reg1.shape[1] != reg2.shape[1] or rho1.shape[1] != rho2.shape[1]:
        raise ValueError("product shapes differ")
    tot = np.sum((reg1 - reg2) ** 2, axis=1)
    for e in range(rho1.shape[1]):
        tot = tot + distances(rho1[:, e], phi1[:, e], rho2[:, e], phi2[:, e]) ** 2
    return np.sqrt(tot)
