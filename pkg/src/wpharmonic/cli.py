"""Batch entry point: meshes, solves, analyses and registered checks as files on disk.

Configuration is a flat ``key=value`` file with dotted sections, layered under
``--set key=value`` overrides.  Every output file starts with a comment line
carrying a hash of the resolved configuration (JSON files carry it as the
``config_hash`` field), and a snapshot of that configuration is written next
to the outputs.

Exit codes: 0 ok, 2 numerical non-convergence, 3 verification FAIL,
4 IO or configuration error.
"""
from __future__ import annotations

import argparse
import ast
import csv
import hashlib
import io
import json
import logging
import math
import operator
import os
import sys
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

EXIT_OK, EXIT_NONCONVERGED, EXIT_FAIL, EXIT_IO = 0, 2, 3, 4
OUT_ENV = "WPHARMONIC_OUT"

log = logging.getLogger("wpharmonic")


class ConfigError(Exception):
    pass


class NonConvergence(Exception):
    pass


# --------------------------------------------------------------------------
# configuration

# key -> (type, default)
KEYS: dict[str, tuple[type, object]] = {
    "run.seed": (int, 0),
    "run.out": (str, "out"),
    "geo.step": (float, 1e-3),
    "geo.tol": (float, 1e-10),
    "geo.rho_floor": (float, 1e-6),
    "geo.backend": (str, "compiled"),
    "solve.h": (float, 0.04),
    "solve.rho": (str, "2 + cos(theta)"),
    "solve.phi": (str, "0"),
    "solve.target": (str, "model"),
    "solve.rho0": (float, 0.5),
    "solve.metric": (str, "euclidean"),
    "solve.bump_eps": (float, 0.1),
    "solve.tol": (float, 1e-8),
    "solve.max_sweeps": (int, 20000),
    "solve.omega": (float, 0.0),
    "solve.mode": (str, "sequential"),
    "solve.init": (str, "harmonic"),
    "solve.engine": (str, "compiled"),
    "analysis.center": (str, "0,0"),
    "analysis.radii": (str, "0.1,0.15,0.2,0.25,0.3,0.4,0.5"),
    "analysis.samples": (int, 512),
    "analysis.threshold": (float, 0.0),
    "analysis.delta_margin": (float, 1e-3),
    "analysis.sigmas": (str, "0.4,0.2,0.1,0.05"),
    "analysis.rho0": (float, 1.0),
    "analysis.k_max": (int, 3),
    "coords.branch_width": (float, math.pi),
}

CHOICES = {
    "geo.backend": ("compiled", "numpy"),
    "solve.target": ("model", "region"),
    "solve.metric": ("euclidean", "bump"),
    "solve.mode": ("sequential", "colored"),
    "solve.init": ("harmonic", "mean"),
    "solve.engine": ("compiled", "vectorized"),
}


@dataclass
class RunConfig:
    values: dict = field(default_factory=lambda: {k: d for k, (_, d) in KEYS.items()})

    def __getitem__(self, key):
        return self.values[key]

    def set(self, key: str, raw) -> None:
        key = key.strip()
        if key not in KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        typ = KEYS[key][0]
        try:
            val = typ(raw.strip()) if isinstance(raw, str) else typ(raw)
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from None
        if key in CHOICES and val not in CHOICES[key]:
            raise ConfigError(f"{key} must be one of {', '.join(CHOICES[key])}")
        self.values[key] = val

    def load(self, path) -> None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        for n, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{n}: expected key=value")
            k, v = line.split("=", 1)
            self.set(k, v)

    def text(self) -> str:
        return "".join(f"{k}={self.values[k]!r}\n" if isinstance(self.values[k], float)
                       else f"{k}={self.values[k]}\n" for k in sorted(self.values))

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.text().encode()).hexdigest()[:16]

    def floats(self, key) -> list[float]:
        return [float(x) for x in str(self[key]).split(",") if x.strip()]

    def schedule(self, h: float):
        from .solver import Schedule
        om = self["solve.omega"] or 2.0 / (1.0 + math.sin(1.1 * math.pi * h))
        return Schedule(tol=self["solve.tol"], max_sweeps=self["solve.max_sweeps"], mode=self["solve.mode"],
                        omega=om, init=self["solve.init"], engine=self["solve.engine"])

    def metric(self):
        from .domain import ConformalMetric
        if self["solve.metric"] == "bump":
            return ConformalMetric.radial_bump(self["solve.bump_eps"])
        return ConformalMetric.euclidean()


# --------------------------------------------------------------------------
# boundary expressions in theta

_BIN = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
        ast.Div: operator.truediv, ast.Pow: operator.pow}
_UN = {ast.USub: operator.neg, ast.UAdd: operator.pos}
_FUN = {"sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp, "log": np.log,
        "sqrt": np.sqrt, "abs": np.abs, "sinh": np.sinh, "cosh": np.cosh, "tanh": np.tanh}
_CONST = {"pi": math.pi, "e": math.e}


def parse_expression(text: str) -> Callable[[np.ndarray], np.ndarray]:
    """Compile a closed-form expression in theta.

    Numbers, theta (also t or θ), pi, e, + - * / and powers (** or ^),
    and the functions sin cos tan exp log sqrt abs sinh cosh tanh.
    Anything else is a ConfigError.
    """
    src = text.replace("^", "**").replace("θ", "theta")
    try:
        tree = ast.parse(src, mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"bad expression {text!r}: {exc.msg}") from None

    def check(node):
        if isinstance(node, ast.Expression):
            return check(node.body)
        if isinstance(node, ast.BinOp) and type(node.op) in _BIN:
            return check(node.left) and check(node.right)
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UN:
            return check(node.operand)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
                and not isinstance(node.value, bool):
            return True
        if isinstance(node, ast.Name) and node.id in ("theta", "t", *_CONST):
            return True
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUN \
                and len(node.args) == 1 and not node.keywords:
            return check(node.args[0])
        raise ConfigError(f"bad expression {text!r}: {ast.dump(node)[:40]} not allowed")

    check(tree)

    def ev(node, th):
        if isinstance(node, ast.Expression):
            return ev(node.body, th)
        if isinstance(node, ast.BinOp):
            return _BIN[type(node.op)](ev(node.left, th), ev(node.right, th))
        if isinstance(node, ast.UnaryOp):
            return _UN[type(node.op)](ev(node.operand, th))
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            return th if node.id in ("theta", "t") else _CONST[node.id]
        return _FUN[node.func.id](ev(node.args[0], th))

    def fn(theta):
        th = np.asarray(theta, float)
        return np.broadcast_to(np.asarray(ev(tree, th), float), th.shape).copy()
    return fn


# --------------------------------------------------------------------------
# output

class Output:
    """Writes files into one directory, each stamped with the config hash."""

    def __init__(self, cfg: RunConfig, directory: Path):
        self.cfg = cfg
        self.dir = directory
        self.written: list[str] = []
        try:
            self.dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"cannot create output directory {self.dir}: {exc}") from None

    @property
    def header(self) -> str:
        return f"# config-hash: {self.cfg.hash}\n"

    def path(self, name: str) -> Path:
        self.written.append(name)
        return self.dir / name

    def csv(self, name: str, columns, rows) -> Path:
        buf = io.StringIO(newline="")
        buf.write(self.header)
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
        p = self.path(name)
        p.write_text(buf.getvalue(), newline="")
        return p

    def json(self, name: str, payload: dict) -> Path:
        body = {"config_hash": self.cfg.hash, **_jsonable(payload)}
        p = self.path(name)
        p.write_text(json.dumps(body, indent=2, sort_keys=True, allow_nan=True) + "\n")
        return p

    def snapshot(self) -> Path:
        p = self.path("config.resolved.txt")
        p.write_text(self.header + self.cfg.text())
        return p


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return float(x)
    return x


# --------------------------------------------------------------------------
# argument helpers

def _pair(text: str) -> tuple[float, float]:
    try:
        a, b = (float(x) for x in text.split(","))
    except ValueError:
        raise ConfigError(f"expected 'rho,phi', got {text!r}") from None
    return a, b


def _model_point(text: str):
    from .model_space import P0, ModelPoint
    if text.strip().upper() == "P0":
        return P0
    r, f = _pair(text)
    if r == 0:
        return P0
    try:
        return ModelPoint(r, f)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _read_mesh(path, cfg: RunConfig):
    from .domain import Mesh
    try:
        return Mesh.read(path, cfg.metric())
    except (OSError, ValueError, StopIteration) as exc:
        raise ConfigError(f"cannot read mesh {path}: {exc}") from None


def _read_map(path, mesh):
    from .solver import DiscreteMap
    try:
        return DiscreteMap.read(path, mesh)
    except (OSError, ValueError, IndexError) as exc:
        raise ConfigError(f"cannot read map {path}: {exc}") from None


def _source(args, cfg: RunConfig):
    """A sampler or discrete map from --map/--mesh or a named fixture."""
    from . import analysis as A
    if getattr(args, "fixture", None):
        fx = {"linear": A.line_map, "quadratic": A.quadratic_map, "two-sheet": A.two_sheet_map,
              "folded": A.folded_map, "sector-limit": lambda: A.SingularFamily().limit()}
        return fx[args.fixture]()
    if not args.map:
        raise ConfigError("need --map (with --mesh) or --fixture")
    mesh_path = args.mesh or str(Path(args.map).with_name("mesh.txt"))
    return _read_map(args.map, _read_mesh(mesh_path, cfg))


# --------------------------------------------------------------------------
# commands

def cmd_mesh(args, cfg, out: Output) -> int:
    from .domain import build_disk_mesh
    h = args.h if args.h is not None else cfg["solve.h"]
    m = build_disk_mesh(h, cfg.metric())
    m.write(out.path("mesh.txt"), out.header)
    out.json("mesh.json", {"h": h, "vertices": m.nv, "simplices": len(m.simplices),
                           "boundary": len(m.boundary)})
    return EXIT_OK


def cmd_geodesic(args, cfg, out: Output) -> int:
    from .model_space import geodesic_bvp, geodesic_ivp, symmetric_geodesic
    step = cfg["geo.step"]
    summary: dict = {}
    if args.bvp:
        p, q = _model_point(args.bvp[0]), _model_point(args.bvp[1])
        res = geodesic_bvp(p, q, tol=cfg["geo.tol"], step=step, rho_floor=cfg["geo.rho_floor"])
        path = res.path
        summary.update(mode="bvp", length=res.length, J=res.J, status=res.status,
                       endpoint_error=res.endpoint_error)
        if res.status != "ok":
            path.write_csv(out.path("geodesic.csv"), out.header)
            out.json("geodesic.json", summary)
            return EXIT_NONCONVERGED
    elif args.symmetric is not None:
        sg = symmetric_geodesic(args.symmetric, step=step)
        path = sg.path
        summary.update(mode="symmetric", rho0=args.symmetric, J=sg.J, phi_infinity=sg.phi_infinity,
                       length=float(path.s[-1] - path.s[0]))
    elif args.ivp:
        p = _model_point(args.ivp)
        if p.is_basepoint:
            raise ConfigError("the initial point must be interior")
        d = {"rho": (1.0, 0.0), "phi": (0.0, p.rho ** -3)}.get(args.dir)
        if d is None:
            try:
                a = float(args.dir)
            except ValueError:
                raise ConfigError("--dir is rho, phi or an angle in radians") from None
            d = (math.cos(a), math.sin(a) / p.rho ** 3)
        L = args.len
        if args.one_sided:
            path = geodesic_ivp(p, d, L, step=step, rho_floor=cfg["geo.rho_floor"])
        else:
            fwd = geodesic_ivp(p, d, L / 2, step=step, rho_floor=cfg["geo.rho_floor"])
            bwd = geodesic_ivp(p, d, -L / 2, step=step, rho_floor=cfg["geo.rho_floor"])
            path = _join(bwd, fwd)
        summary.update(mode="ivp", length=L, J=path.clairaut_J, truncated=path.truncated,
                       two_sided=not args.one_sided)
    else:
        raise ConfigError("geodesic needs --bvp, --ivp or --symmetric")
    summary["rho_min"] = float(np.min(path.rho))
    path.write_csv(out.path("geodesic.csv"), out.header)
    out.json("geodesic.json", summary)
    return EXIT_OK


def _join(bwd, fwd):
    from .model_space import GeodesicPath
    # bwd runs from s=0 to s=-L/2; flip it so the joined path has increasing s
    s = np.concatenate([bwd.s[::-1][:-1], fwd.s])
    r = np.concatenate([bwd.rho[::-1][:-1], fwd.rho])
    f = np.concatenate([bwd.phi[::-1][:-1], fwd.phi])
    return GeodesicPath(s, r, f, fwd.clairaut_J, fwd.step, truncated=bwd.truncated or fwd.truncated)


def cmd_distance(args, cfg, out: Output) -> int:
    from .boundary_coords import ProductPoint, product_distance
    from .glued_space import GluedPoint, distance_A
    from .model_space import distance
    if args.product:
        try:
            p, q = (ProductPoint.parse(t) for t in args.product)
            d = product_distance(p, q)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        out.json("distance.json", {"kind": "product", "p": p.serialize(), "q": q.serialize(), "distance": d})
        return EXIT_OK
    if not (args.p and args.q):
        raise ConfigError("distance needs --p and --q, or two --product values")
    p, q = _model_point(args.p), _model_point(args.q)
    if args.sheets:
        s1, s2 = (int(x) for x in args.sheets.split(","))
        try:
            d = distance_A(GluedPoint(s1, p), GluedPoint(s2, q))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        out.json("distance.json", {"kind": "glued", "sheets": [s1, s2], "distance": d})
    else:
        d = distance(p, q)
        out.json("distance.json", {"kind": "model", "distance": d})
    return EXIT_OK


def cmd_region(args, cfg, out: Output) -> int:
    from .model_space import ConvexRegion
    reg = ConvexRegion(args.rho0)
    payload = {"rho0": args.rho0, "phi_infinity": reg.phi_infinity}
    if args.point:
        r, f = _pair(args.point)
        pr, pf = reg.project_arrays(np.array([r]), np.array([f]))
        payload.update(point=[r, f], contains=bool(reg.contains_arrays(np.array([r]), np.array([f]))[0]),
                       projection=[float(pr[0]), float(pf[0])],
                       distance=float(reg.distance_to(r, f)[0]))
    if args.curve:
        u = np.linspace(-1, 1, args.curve + 2)[1:-1]
        br, bf = reg.boundary_point(u)
        out.csv("region.csv", ["u", "rho", "phi"], zip(u, br, bf))
    out.json("region.json", payload)
    return EXIT_OK


def cmd_solve(args, cfg, out: Output) -> int:
    from . import solver as S
    from .domain import build_disk_mesh
    from .model_space import ConvexRegion
    rho_fn, phi_fn = parse_expression(cfg["solve.rho"]), parse_expression(cfg["solve.phi"])
    if args.mesh:
        mesh = _read_mesh(args.mesh, cfg)
    else:
        mesh = build_disk_mesh(cfg["solve.h"], cfg.metric())
    mesh.write(out.path("mesh.txt"), out.header)
    b = S.boundary_map(mesh, rho_fn, phi_fn)
    if np.any(b.rho[b.frozen] <= 0):
        raise ConfigError("boundary rho must be positive")
    sched = cfg.schedule(mesh.h)
    t0 = time.perf_counter()
    if cfg["solve.target"] == "region":
        u, rep = S.solve_constrained(mesh, b, ConvexRegion(cfg["solve.rho0"]), sched)
    else:
        u, rep = S.solve_dirichlet(mesh, b, sched)
    log.info("solve: %d sweeps, %.1fs", rep.iterations, time.perf_counter() - t0)
    u.write(out.path("map.txt"), out.header)
    payload = {"report": json.loads(rep.to_json()), "energy": S.discrete_energy(u),
               "h": mesh.h, "vertices": mesh.nv, "min_interior_rho": float(u.rho[~u.frozen].min())
               if np.any(~u.frozen) else None, "el_residual": S.el_residual_summary(u)}
    phib = b.phi[b.frozen]
    if np.ptp(phib) == 0 and cfg["solve.target"] == "model":
        # phi constant on the boundary: rho is the scalar harmonic extension
        ex = harmonic_extension(rho_fn, mesh.vertices)
        payload["oracle_sup_error"] = float(np.max(np.abs(u.rho - ex)))
    out.json("solve.json", payload)
    return EXIT_OK if rep.converged else EXIT_NONCONVERGED


def harmonic_extension(fn, pts: np.ndarray, modes: int = 1024) -> np.ndarray:
    """Poisson extension of boundary data fn(theta) to points of the unit disk, by FFT."""
    th = 2 * math.pi * np.arange(modes) / modes
    c = np.fft.rfft(fn(th)) / modes
    r = np.linalg.norm(pts, axis=1)
    a = np.arctan2(pts[:, 1], pts[:, 0])
    k = np.arange(c.size)
    w = np.where(k == 0, 1.0, 2.0)
    if modes % 2 == 0:
        w[-1] = 1.0
    z = (r[:, None] ** k) * np.exp(1j * np.outer(a, k))
    return np.real(z @ (w * c))


def cmd_analyze(args, cfg, out: Output) -> int:
    from . import analysis as A
    src = _source(args, cfg)
    center = _pair(cfg["analysis.center"])
    radii = cfg.floats("analysis.radii")
    payload: dict = {}
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if isinstance(src, A.Sampler):
            s = src
            I = np.array([A.circle_integral(s, center, r, cfg["analysis.samples"]) for r in radii])
            order = np.polyfit(np.log(radii), np.log(I), 1)[0] / 2 - 0.5 * (s.dim - 1)
            out.csv("profile.csv", ["r", "I"], zip(radii, I))
            payload.update(order=float(order))
        else:
            prof = A.energy_profile(src, center, radii, cfg["analysis.samples"])
            flags = prof.monotone_flags()
            out.csv("profile.csv", ["r", "E", "I", "ratio", "height"],
                    zip(prof.radii, prof.E, prof.I, prof.ratio, prof.height))
            payload.update(monotone=flags, monotone_defect=prof.monotone_defect())
            try:
                payload["order"] = A.order_at(prof)
            except A.DataQualityError as exc:
                payload["order"] = None
                payload["order_error"] = str(exc)
            payload["profile_warnings"] = list(prof.warnings)
    payload["warnings"] = [str(w.message) for w in caught]
    out.json("analyze.json", payload)
    return EXIT_OK


def cmd_blowup(args, cfg, out: Output) -> int:
    from . import analysis as A
    sig = cfg.floats("analysis.sigmas")
    if args.fixture == "singular-family":
        seq = A.SingularFamily().sequence(sig)
    else:
        src = _source(args, cfg)
        try:
            seq = A.blowup_sequence(src, _pair(cfg["analysis.center"]), sig, samples=cfg["analysis.samples"])
        except A.DegenerateCenterError as exc:
            raise NonConvergence(str(exc)) from None
    rng = np.random.default_rng(cfg["run.seed"])
    pts = rng.uniform(-0.7, 0.7, (args.points, 2))
    pm = A.pullback_matrix(seq, pts)
    out.csv("blowup.csv", ["sigma", "lambda", "unit_I", "lambda_half"],
            zip(seq.sigmas, seq.lams, seq.unit_I, seq.lambda_half))
    M = pm["matrices"][-1]
    out.csv("pullback.csv", ["i", "j", "d"],
            ((i, j, M[i, j]) for i in range(len(pts)) for j in range(len(pts))))
    out.json("blowup.json", {"sigmas": seq.sigmas, "cauchy": pm["cauchy"], "recursion_defect": seq.recursion_defect,
                             "lower_bound": seq.lower_bound, "lower_bound_ok": seq.lower_bound_ok,
                             "unit_I": seq.unit_I})
    return EXIT_OK


def cmd_verify(args, cfg, out: Output) -> int:
    from .verify import REGISTRY
    if args.lemma not in REGISTRY:
        raise ConfigError(f"unknown check {args.lemma!r}; known: {', '.join(sorted(REGISTRY))}")
    entry = REGISTRY[args.lemma]
    params = dict(entry.params)
    if args.h is not None:
        if "h" not in params:
            raise ConfigError(f"{args.lemma} has no mesh parameter")
        params["h"] = args.h
    t0 = time.perf_counter()
    ok, details = entry.execute(cfg, **params)
    verdict = "PASS" if ok else "FAIL"
    out.json("verify.json", {"check": args.lemma, "verdict": verdict, "params": params,
                             "tolerances": entry.tolerances, "details": details,
                             "seconds": round(time.perf_counter() - t0, 1) if args.timing else None})
    print(f"{args.lemma}: {verdict}")
    return EXIT_OK if ok else EXIT_FAIL


# --------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="wpharmonic", description=__doc__.split("\n\n")[0])
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="config override")
    p.add_argument("--out", help=f"output directory (else ${OUT_ENV}, else run.out)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("mesh", help="triangulate the unit disk")
    s.add_argument("--h", type=float)

    s = sub.add_parser("geodesic", help="geodesics of the model space")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--bvp", nargs=2, metavar="RHO,PHI")
    g.add_argument("--ivp", metavar="RHO,PHI")
    g.add_argument("--symmetric", type=float, metavar="RHO0")
    s.add_argument("--dir", default="phi", help="rho, phi or an angle (ivp)")
    s.add_argument("--len", type=float, default=1.0, help="path length (ivp)")
    s.add_argument("--one-sided", action="store_true", help="integrate forward only (ivp)")

    s = sub.add_parser("distance", help="distances in the model, glued or product space")
    s.add_argument("--p")
    s.add_argument("--q")
    s.add_argument("--sheets", help="s1,s2 for the glued space")
    s.add_argument("--product", nargs=2, metavar="POINT")

    s = sub.add_parser("region", help="convex regions H[rho0]")
    s.add_argument("--rho0", type=float, required=True)
    s.add_argument("--point")
    s.add_argument("--curve", type=int, default=0, help="boundary samples to write")

    s = sub.add_parser("solve", help="Dirichlet problem on the unit disk")
    s.add_argument("--mesh")
    s.add_argument("--rho", help="boundary rho(theta)")
    s.add_argument("--phi", help="boundary phi(theta)")

    for name, hlp in (("analyze", "energy profile and order"), ("blowup", "blow-up sequence")):
        s = sub.add_parser(name, help=hlp)
        s.add_argument("--map")
        s.add_argument("--mesh")
        s.add_argument("--fixture", choices=["linear", "quadratic", "two-sheet", "folded", "sector-limit"]
                       + (["singular-family"] if name == "blowup" else []))
        if name == "blowup":
            s.add_argument("--points", type=int, default=16)

    s = sub.add_parser("verify", help="registered checks with fixed tolerances")
    s.add_argument("lemma")
    s.add_argument("--h", type=float, help="mesh size override (invalidates the registered verdict)")
    s.add_argument("--timing", action="store_true", help="record wall time (breaks byte-identity)")
    return p


COMMANDS = {"mesh": cmd_mesh, "geodesic": cmd_geodesic, "distance": cmd_distance, "region": cmd_region,
            "solve": cmd_solve, "analyze": cmd_analyze, "blowup": cmd_blowup, "verify": cmd_verify}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = RunConfig()
        if args.config:
            cfg.load(args.config)
        for kv in args.set:
            if "=" not in kv:
                raise ConfigError(f"--set expects KEY=VALUE, got {kv!r}")
            cfg.set(*kv.split("=", 1))
        if args.command == "solve":
            # command-line boundary data is part of the resolved config
            if args.rho:
                cfg.set("solve.rho", args.rho)
            if args.phi:
                cfg.set("solve.phi", args.phi)
        out_dir = args.out or os.environ.get(OUT_ENV) or cfg["run.out"]
        out = Output(cfg, Path(out_dir))
        code = COMMANDS[args.command](args, cfg, out)
        out.snapshot()
        return code
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NonConvergence as exc:
        print(f"not converged: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
