"""Command-line front end: ``eigenlab {mesh,solve,analyze,verify,oracle}``.

Every flag can also come from an ``EIGENLAB_<NAME>`` environment variable
(``EIGENLAB_H``, ``EIGENLAB_POINT`` with points separated by ``;``, ...);
flags win.  Meshes and modes are cached in the output directory under
content hashes, so changing the polygon or any upstream setting produces
new cache files instead of reusing stale ones.
"""

from __future__ import annotations

import argparse
import contextlib
import fcntl
import hashlib
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import binio
from .analysis import AnalysisError, mass_profile, report
from .discretize import MeshError, assemble, domain_digest, load_mesh, save_mesh, triangulate
from .eigensolve import EigenSolveError, load_modes, save_modes, solve_modes
from .geometry import GeometryError, PolygonDomain, l_shape, load_polygon, unit_square
from .verify import SUITES, run_suite

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_GEOMETRY = 2
EXIT_MESH = 3
EXIT_SOLVER = 4
EXIT_ANALYSIS = 5

ENV_PREFIX = "EIGENLAB_"
BUILTIN_POLYGONS = {"square": unit_square, "lshape": l_shape}

DEFAULTS = {
    "h": 0.05,
    "order": 2,
    "num": 20,
    "alphas": "0.25:0.75:0.25",
    "tol": 1e-10,
    "out": "eigenlab-out",
    "suite": "commutator",
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    polygon: str | None = None
    h: float = DEFAULTS["h"]
    order: int = DEFAULTS["order"]
    num: int = DEFAULTS["num"]
    points: list[tuple[float, float]] = field(default_factory=list)
    alphas: list[float] = field(default_factory=list)
    tol: float = DEFAULTS["tol"]
    out: Path = Path(DEFAULTS["out"])
    suite: str = DEFAULTS["suite"]

    def domain(self) -> PolygonDomain:
        if self.polygon is None:
            raise ConfigError("--polygon is required")
        if self.polygon.startswith("builtin:"):
            name = self.polygon.split(":", 1)[1]
            if name not in BUILTIN_POLYGONS:
                raise ConfigError(f"unknown builtin polygon {name!r}")
            return BUILTIN_POLYGONS[name]()
        path = Path(self.polygon)
        if not path.is_file():
            raise ConfigError(f"polygon file {path} not found")
        return load_polygon(path)


def parse_point(text: str) -> tuple[float, float]:
    parts = text.split(",")
    try:
        x, y = (float(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"point must be X,Y, got {text!r}") from exc
    return x, y


def parse_alphas(text: str) -> list[float]:
    """``A:B:STEP`` (inclusive of B up to rounding) or a single value."""
    try:
        parts = [float(p) for p in text.split(":")]
    except ValueError as exc:
        raise ConfigError(f"alpha grid must be A:B:STEP, got {text!r}") from exc
    if len(parts) == 1:
        vals = parts
    elif len(parts) == 3:
        a, b, step = parts
        if step <= 0:
            raise ConfigError("alpha step must be positive")
        n = int(math.floor((b - a) / step + 1e-9)) + 1
        vals = [round(a + i * step, 12) for i in range(max(n, 0))]
    else:
        raise ConfigError(f"alpha grid must be A:B:STEP, got {text!r}")
    if not vals:
        raise ConfigError("empty alpha grid")
    for v in vals:
        if not 0.0 < v < 1.0:
            raise ConfigError(f"alpha {v} outside (0, 1)")
    return vals


def _setting(args, name: str, env: dict):
    val = getattr(args, name, None)
    if val is not None:
        return val
    val = env.get(ENV_PREFIX + name.upper())
    if val is None or val == "":
        return DEFAULTS.get(name)
    return val


def build_config(args: argparse.Namespace, env: dict | None = None) -> RunConfig:
    env = os.environ if env is None else env
    cfg = RunConfig()
    cfg.polygon = _setting(args, "polygon", env)
    try:
        cfg.h = float(_setting(args, "h", env))
        cfg.order = int(_setting(args, "order", env))
        cfg.num = int(_setting(args, "num", env))
        cfg.tol = float(_setting(args, "tol", env))
    except ValueError as exc:
        raise ConfigError(f"bad numeric setting: {exc}") from exc
    cfg.out = Path(_setting(args, "out", env))
    cfg.suite = _setting(args, "suite", env)
    points = getattr(args, "point", None)
    if not points:
        raw = env.get(ENV_PREFIX + "POINT", "")
        points = [p for p in raw.split(";") if p.strip()]
    cfg.points = [parse_point(p) for p in points]
    cfg.alphas = parse_alphas(_setting(args, "alphas", env))
    if cfg.order not in (1, 2):
        raise ConfigError("--order must be 1 or 2")
    if cfg.num < 1:
        raise ConfigError("--num must be at least 1")
    if not cfg.h > 0:
        raise ConfigError("--h must be positive")
    return cfg


# ---------------------------------------------------------------------------
# caches


def _digest(*parts) -> str:
    return hashlib.sha256(json.dumps(parts, sort_keys=True).encode()).hexdigest()[:16]


def mesh_key(domain: PolygonDomain, h: float) -> str:
    return _digest("mesh", domain_digest(domain), repr(float(h)))


def modes_key(mesh_digest: str, order: int, num: int, tol: float) -> str:
    return _digest("modes", mesh_digest, order, num, repr(float(tol)))


@contextlib.contextmanager
def output_lock(out: Path):
    """Exclusive lock on the output directory for the duration of a command."""
    out.mkdir(parents=True, exist_ok=True)
    with open(out / ".lock", "w") as fh:
        try:
            fcntl.flock(fh, fcntl.LOCK_EX | fcntl.LOCK_NB)
        except OSError as exc:
            raise ConfigError(f"{out} is in use by another eigenlab process") from exc
        try:
            yield
        finally:
            fcntl.flock(fh, fcntl.LOCK_UN)


def ensure_mesh(cfg: RunConfig, log=print):
    domain = cfg.domain()
    path = cfg.out / f"mesh-{mesh_key(domain, cfg.h)}.bin"
    if path.exists():
        try:
            return domain, load_mesh(path, domain), path
        except (MeshError, binio.CacheFormatError, KeyError, ValueError):
            log(f"stale mesh cache {path.name}, re-meshing")
    mesh = triangulate(domain, cfg.h)
    save_mesh(mesh, path)
    return domain, mesh, path


def ensure_modes(cfg: RunConfig, log=print):
    domain, mesh, _ = ensure_mesh(cfg, log)
    k, m, space = assemble(mesh, cfg.order)
    path = cfg.out / f"modes-{modes_key(mesh.digest(), cfg.order, cfg.num, cfg.tol)}.bin"
    if path.exists():
        try:
            spec, _ = load_modes(path, space, mesh.digest())
            return domain, spec, path
        except (EigenSolveError, binio.CacheFormatError, KeyError, ValueError):
            log(f"stale mode cache {path.name}, re-solving")
    spec = solve_modes(k, m, space, cfg.num, tol=cfg.tol)
    save_modes(spec, path, mesh.digest(), cfg.order)
    return domain, spec, path


# ---------------------------------------------------------------------------
# commands


def cmd_mesh(cfg: RunConfig) -> int:
    _, mesh, path = ensure_mesh(cfg)
    print(f"mesh: {mesh.n_triangles} triangles, {mesh.n_vertices} vertices, "
          f"min angle {mesh.min_angles().min():.2f} deg -> {path}")
    return EXIT_OK


def cmd_solve(cfg: RunConfig) -> int:
    _, spec, path = ensure_modes(cfg)
    print(f"solve: {len(spec)} modes, lam^2 in [{spec.lam2[0]:.6g}, {spec.lam2[-1]:.6g}], "
          f"max residual {spec.residuals.max():.2e} -> {path}")
    return EXIT_OK


def cmd_analyze(cfg: RunConfig) -> int:
    if not cfg.points:
        raise ConfigError("analyze needs at least one --point")
    domain, spec, _ = ensure_modes(cfg)
    modes = spec.modes()
    profile = None
    for p in cfg.points:
        part = mass_profile(modes, p, cfg.alphas, domain)
        profile = part if profile is None else profile.extend(part)
    paths = report(profile, [], cfg.out / "profile")
    over = profile.exceedances()
    top = profile.top_window(0.5).exceedances()
    print(f"analyze: {len(profile)} rows, {len(over)} above the bound "
          f"({len(top)} in the top half of the spectrum) -> {paths[0]}")
    for r in over:
        print(f"  mode {r.mode_index} lambda={r.lam:.6g} p0=({r.p0x:g},{r.p0y:g}) "
              f"alpha={r.alpha:g} mass={r.disc_mass:.6f} bound={r.bound:.6f}")
    return EXIT_OK


def cmd_verify(cfg: RunConfig) -> int:
    if cfg.suite not in SUITES:
        raise ConfigError(f"unknown suite {cfg.suite!r}; choose from {', '.join(SUITES)}")
    summary = run_suite(cfg.suite)
    text = json.dumps(summary, indent=2, sort_keys=True)
    cfg.out.mkdir(parents=True, exist_ok=True)
    (cfg.out / f"verify-{cfg.suite}.json").write_text(text + "\n")
    print(text)
    return EXIT_OK if summary["passed"] else EXIT_FAIL


def oracle_eigenvalues(domain: PolygonDomain, n: int) -> np.ndarray:
    """Closed-form lam^2 for axis-aligned rectangles and the right isosceles triangle."""
    if len(domain.loops) != 1:
        raise ConfigError("no closed form for domains with holes")
    v = domain.loops[0]
    bcs = set(domain.flat_bc)
    if len(bcs) != 1:
        raise ConfigError("closed forms need one boundary condition on every edge")
    bc = bcs.pop()
    lo, hi = v.min(axis=0), v.max(axis=0)
    lx, ly = hi - lo
    top = int(math.ceil(math.sqrt(n))) + n + 2
    on_box = np.all(np.isclose(v, lo) | np.isclose(v, hi))
    if len(v) == 4 and on_box and np.isclose(domain.area, lx * ly):
        start = 1 if bc == "dirichlet" else 0
        vals = [math.pi**2 * (a * a / lx**2 + b * b / ly**2)
                for a in range(start, top) for b in range(start, top)]
        return np.array(sorted(vals)[:n])
    if len(v) == 3 and bc == "dirichlet" and np.isclose(lx, ly):
        # right isosceles triangle with legs lx: modes m > k >= 1
        vals = [math.pi**2 * (a * a + b * b) / lx**2 for a in range(2, top) for b in range(1, a)]
        area = 0.5 * lx * ly
        if np.isclose(domain.area, area):
            return np.array(sorted(vals)[:n])
    raise ConfigError("oracle knows rectangles and right isosceles triangles only")


def cmd_oracle(cfg: RunConfig) -> int:
    vals = oracle_eigenvalues(cfg.domain(), cfg.num)
    for i, v in enumerate(vals):
        print(f"{i} {float(v)!r}")
    return EXIT_OK


COMMANDS = {
    "mesh": cmd_mesh,
    "solve": cmd_solve,
    "analyze": cmd_analyze,
    "verify": cmd_verify,
    "oracle": cmd_oracle,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eigenlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--polygon", help="polygon JSON file or builtin:square / builtin:lshape")
        p.add_argument("--h", type=float, help="target element size")
        p.add_argument("--order", type=int, choices=(1, 2), help="element order")
        p.add_argument("--num", type=int, help="number of modes")
        p.add_argument("--point", action="append", help="X,Y (repeatable)")
        p.add_argument("--alphas", help="alpha grid A:B:STEP")
        p.add_argument("--tol", type=float, help="eigen-residual tolerance")
        p.add_argument("--out", help="output and cache directory")
        p.add_argument("--suite", help=f"verify suite: {', '.join(SUITES)}")
    return parser


def main(argv=None, env: dict | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = build_config(args, env)
        with output_lock(cfg.out):
            return COMMANDS[args.command](cfg)
    except GeometryError as exc:
        where = "" if exc.edge is None else f" (loop {exc.loop}, edge {exc.edge})"
        print(f"geometry error{where}: {exc}", file=sys.stderr)
        return EXIT_GEOMETRY
    except MeshError as exc:
        print(f"mesh error: {exc}", file=sys.stderr)
        return EXIT_MESH
    except EigenSolveError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except AnalysisError as exc:
        print(f"analysis error: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
