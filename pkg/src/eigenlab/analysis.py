"""Local masses, the non-concentration bound and the commutator bookkeeping.

Every integral here is over Omega intersected with a disc or annulus about a
point p0.  Two back ends share the work:

* closed-form modes use polar quadrature with exact circle/polygon arcs
  (``quadrature.PolarIntegrator``);
* finite-element modes are integrated element by element, subdividing
  elements that straddle the circle (masses) or the steep parts of the
  cutoff profile (pairings).

Throughout, X = (x - p0) . grad is the radial field about p0 and h = 1/lam.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .cutoff import CutoffFunction, make_phi1, make_psi
from .discretize import DiscreteMode, FunctionSpace, shape_functions, element_matrices
from .geometry import (
    CornerFrame, GeometryError, PointKind, PolygonDomain, classify_point, corner_frames,
    corner_motion, nonadjacent_distance,
)
from .oracles.modes import AnalyticMode, SectorHarmonic
from .quadrature import PolarIntegrator, gauss_legendre, radial_breaks, triangle_rule

CSV_COLUMNS = (
    "mode_index", "lambda", "h", "p0x", "p0y", "class", "theta0", "d", "alpha",
    "disc_mass", "bound", "slack",
)
LEDGER_COLUMNS = (
    "mode_index", "lambda", "h", "p0x", "p0y", "alpha", "eps", "d", "lower_chain", "pairing",
    "identity_residual", "radial_energy", "gradient_energy", "mass_outside", "mass_inside",
    "upper_cap", "cap_slack", "sup_phi_prime", "slope_const_tight", "slope_const_loose",
    "chain_bound_tight", "chain_bound_loose", "remainder", "commutator_remainder",
    "energy_const",
)


class AnalysisError(ValueError):
    pass


Mode = AnalyticMode | DiscreteMode


# ---------------------------------------------------------------------------
# helpers shared by both back ends


def _domain_of(mode, domain: PolygonDomain | None) -> PolygonDomain:
    if domain is not None:
        return domain
    dom = mode.domain
    if dom is None and isinstance(mode, SectorHarmonic):
        dom = mode.local_domain()
    if dom is None:
        raise AnalysisError("a domain is required for local modes")
    return dom


def _far_radius(domain: PolygonDomain, p0) -> float:
    """Radius beyond which a disc about p0 covers the whole domain."""
    return float(np.linalg.norm(domain.vertices - np.asarray(p0, float), axis=1).max())


def _tri_point_distance(tri: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Distance from p to each triangle (k, 3, 2); zero if p is inside."""
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]

    def seg(u, v):
        d = v - u
        t = np.clip(((p - u) * d).sum(1) / (d * d).sum(1), 0.0, 1.0)
        return np.linalg.norm(u + t[:, None] * d - p, axis=1)

    dist = np.minimum(np.minimum(seg(a, b), seg(b, c)), seg(c, a))

    def side(u, v):
        return (v[:, 0] - u[:, 0]) * (p[1] - u[:, 1]) - (v[:, 1] - u[:, 1]) * (p[0] - u[:, 0])

    s1, s2, s3 = side(a, b), side(b, c), side(c, a)
    inside = ((s1 >= 0) & (s2 >= 0) & (s3 >= 0)) | ((s1 <= 0) & (s2 <= 0) & (s3 <= 0))
    return np.where(inside, 0.0, dist)


_REF = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def _split4(ref: np.ndarray) -> np.ndarray:
    """Midpoint subdivision of reference sub-triangles (k, 3, 2) -> (4k, 3, 2)."""
    a, b, c = ref[:, 0], ref[:, 1], ref[:, 2]
    ab, bc, ca = 0.5 * (a + b), 0.5 * (b + c), 0.5 * (c + a)
    kids = np.stack([
        np.stack([a, ab, ca], 1), np.stack([ab, b, bc], 1),
        np.stack([ca, bc, c], 1), np.stack([ab, bc, ca], 1),
    ], axis=1)
    return kids.reshape(-1, 3, 2)


class _ElementGeometry:
    def __init__(self, space: FunctionSpace):
        mesh = space.mesh
        c = mesh.corners()
        self.origin = c[:, 0]
        self.jac = np.stack([c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]], axis=2)
        self.det = np.abs(self.jac[:, 0, 0] * self.jac[:, 1, 1] - self.jac[:, 0, 1] * self.jac[:, 1, 0])
        inv = np.linalg.inv(self.jac)
        self.inv_t = inv.transpose(0, 2, 1)

    def to_world(self, cells, ref):
        """Map reference points (k, ..., 2) of the given cells to world coordinates."""
        jac = self.jac[cells]
        return self.origin[cells][:, None, :] + np.einsum("kij,kqj->kqi", jac, ref)


def _sub_rule(sub: np.ndarray, degree: int):
    """Quadrature points (k, q, 2) in parent reference coordinates and weights (k, q)."""
    q_pts, q_w = triangle_rule(degree)
    v0 = sub[:, 0]
    e1, e2 = sub[:, 1] - v0, sub[:, 2] - v0
    pts = v0[:, None, :] + q_pts[None, :, 0:1] * e1[:, None, :] + q_pts[None, :, 1:2] * e2[:, None, :]
    det = np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    return pts, q_w[None, :] * det[:, None]


# ---------------------------------------------------------------------------
# local mass


def disc_local_matrices(space: FunctionSpace, center, radius: float, max_depth: int = 8):
    """Element matrices of the L2 pairing restricted to D(center, radius).

    Returns (cells, mats) with mats (k, n, n).  Elements inside the disc use
    the exact element mass; elements cut by the circle are split into four
    recursively and, at depth ``max_depth``, quadrature points are kept only
    if they lie in the disc.
    """
    center = np.asarray(center, dtype=float)
    geo = _ElementGeometry(space)
    corners = space.mesh.corners()
    far = np.linalg.norm(corners - center, axis=2).max(axis=1)
    near = _tri_point_distance(corners, center)
    inside = far <= radius
    cut = ~inside & (near < radius)
    n_loc = space.cell_dofs.shape[1]
    _, me = element_matrices(space)
    acc = np.zeros((space.mesh.n_triangles, n_loc, n_loc))
    acc[inside] = me[inside]
    degree = 2 * space.order
    cells = np.flatnonzero(cut)
    sub = np.broadcast_to(_REF, (len(cells), 3, 2)).copy()
    for depth in range(max_depth + 1):
        if len(cells) == 0:
            break
        if depth:
            world = geo.to_world(cells, sub)
            far = np.linalg.norm(world - center, axis=2).max(axis=1)
            near = _tri_point_distance(world, center)
            whole = far <= radius
            keep = ~whole & (near < radius)
        else:
            whole = np.zeros(len(cells), dtype=bool)
            keep = np.ones(len(cells), dtype=bool)
        leaf = keep if depth == max_depth else np.zeros(len(cells), dtype=bool)
        use = whole | leaf
        if use.any():
            pts, wts = _sub_rule(sub[use], degree)
            if leaf.any():
                wp = geo.to_world(cells[use], pts)
                wts = wts * np.where(leaf[use][:, None],
                                     np.linalg.norm(wp - center, axis=2) <= radius, 1.0)
            vals, _ = shape_functions(space.order, pts.reshape(-1, 2))
            vals = vals.reshape(pts.shape[0], pts.shape[1], n_loc)
            local = np.einsum("kq,kqa,kqb->kab", wts, vals, vals) * geo.det[cells[use]][:, None, None]
            np.add.at(acc, cells[use], local)
        split = keep & ~leaf
        cells = np.repeat(cells[split], 4)
        sub = _split4(sub[split])
    hit = np.flatnonzero(np.abs(acc).sum(axis=(1, 2)) > 0)
    return hit, acc[hit]


def _fem_masses(space: FunctionSpace, coeffs: np.ndarray, center, radius: float) -> np.ndarray:
    cells, mats = disc_local_matrices(space, center, radius)
    local = coeffs[space.cell_dofs[cells]]  # (k, n, modes)
    if local.ndim == 2:
        local = local[:, :, None]
    return np.einsum("kab,kam,kbm->m", mats, local, local)


def local_mass(mode: Mode, p0, radius: float, domain: PolygonDomain | None = None,
               atol: float = 1e-10, rtol: float = 1e-10) -> float:
    """Integral of |u|^2 over D(p0, radius) intersected with the domain."""
    if not radius > 0:
        raise AnalysisError(f"radius must be positive, got {radius}")
    p0 = np.asarray(p0, dtype=float)
    if isinstance(mode, DiscreteMode):
        return float(_fem_masses(mode.space, mode.coeffs, p0, radius)[0])
    dom = _domain_of(mode, domain)
    r_hi = min(radius, _far_radius(dom, p0))
    integ = PolarIntegrator(dom, p0, bandwidth=2.0 * mode.lam)

    def f(pts, r, theta):
        return mode.value(pts) ** 2

    val = integ.integrate(f, 0.0, r_hi, atol=atol, rtol=rtol)
    return 0.0 if val is None else float(np.atleast_1d(val)[0])


def local_masses(modes: Sequence[Mode], p0, radius: float, domain: PolygonDomain | None = None):
    """``local_mass`` for many modes; FEM modes on one space share the work."""
    out = np.empty(len(modes))
    groups: dict[int, list[int]] = {}
    for i, m in enumerate(modes):
        if isinstance(m, DiscreteMode):
            groups.setdefault(id(m.space), []).append(i)
        else:
            out[i] = local_mass(m, p0, radius, domain)
    for idx in groups.values():
        space = modes[idx[0]].space
        coeffs = np.column_stack([modes[i].coeffs for i in idx])
        out[idx] = _fem_masses(space, coeffs, p0, radius)
    return out


def bound_value(alpha: float) -> float:
    """1 / (2 - alpha), the limiting mass bound on D(p0, alpha d)."""
    if not 0.0 < alpha < 1.0:
        raise AnalysisError(f"alpha must lie in (0, 1), got {alpha}")
    return 1.0 / (2.0 - alpha)


# ---------------------------------------------------------------------------
# mass profiles


@dataclass(frozen=True)
class ProfileRow:
    mode_index: int
    lam: float
    h: float
    p0x: float
    p0y: float
    point_class: str
    theta0: float
    d: float
    alpha: float
    disc_mass: float
    bound: float
    slack: float

    def csv_values(self) -> list:
        return [self.mode_index, self.lam, self.h, self.p0x, self.p0y, self.point_class,
                self.theta0, self.d, self.alpha, self.disc_mass, self.bound, self.slack]


@dataclass
class MassProfile:
    rows: list[ProfileRow] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)

    def extend(self, other: "MassProfile") -> "MassProfile":
        return MassProfile(self.rows + other.rows)

    def select(self, p0=None, alpha=None) -> "MassProfile":
        rows = self.rows
        if p0 is not None:
            rows = [r for r in rows if np.allclose((r.p0x, r.p0y), p0)]
        if alpha is not None:
            rows = [r for r in rows if abs(r.alpha - alpha) < 1e-12]
        return MassProfile(list(rows))

    def top_window(self, fraction: float = 0.5) -> "MassProfile":
        """Rows whose mode lies in the upper ``fraction`` of the computed spectrum."""
        lams = sorted({(r.lam, r.mode_index) for r in self.rows})
        start = int(math.floor(len(lams) * (1.0 - fraction)))
        keep = set(lams[start:])
        return MassProfile([r for r in self.rows if (r.lam, r.mode_index) in keep])

    def exceedances(self) -> list[ProfileRow]:
        return [r for r in self.rows if r.slack < 0]


def _point_info(domain: PolygonDomain, p0):
    pc = classify_point(domain, p0)
    d = nonadjacent_distance(domain, p0)
    return pc.kind.name.lower(), float(pc.theta0), d


def mass_profile(modes: Sequence[Mode], p0, alphas: Sequence[float], domain: PolygonDomain | None = None,
                 indices: Sequence[int] | None = None) -> MassProfile:
    """Disc masses on D(p0, alpha d) for every mode and alpha, with the bound.

    Rows come sorted by lambda, then alpha.
    """
    alphas = [float(a) for a in alphas]
    if not alphas:
        raise AnalysisError("empty alpha list")
    for a in alphas:
        bound_value(a)
    if len(modes) == 0:
        raise AnalysisError("no modes given")
    dom = _domain_of(modes[0], domain)
    p0 = np.asarray(p0, dtype=float)
    try:
        kind, theta0, d = _point_info(dom, p0)
    except GeometryError as exc:
        raise AnalysisError(str(exc)) from exc
    if indices is None:
        indices = [getattr(m, "index", i) for i, m in enumerate(modes)]
    rows = []
    for a in alphas:
        masses = local_masses(modes, p0, a * d, dom)
        b = bound_value(a)
        for idx, m, mass in zip(indices, modes, masses):
            lam = float(m.lam)
            rows.append(ProfileRow(int(idx), lam, 1.0 / lam if lam > 0 else math.inf,
                                   float(p0[0]), float(p0[1]), kind, theta0, d, a,
                                   float(mass), b, b - float(mass)))
    rows.sort(key=lambda r: (r.lam, r.mode_index, r.alpha))
    return MassProfile(rows)


# ---------------------------------------------------------------------------
# integration of radial-field expressions


Integrand = Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray], np.ndarray]


def _integrate_polar(mode: AnalyticMode, p0, domain, integrand: Integrand, r_hi: float,
                     breaks, atol: float, rtol: float):
    integ = PolarIntegrator(domain, p0, bandwidth=2.0 * mode.lam)

    def f(pts, r, theta):
        u, g = mode.evaluate(pts)
        return integrand(pts, r, u, g, pts - p0)

    val = integ.integrate(f, 0.0, r_hi, breaks=breaks, atol=atol, rtol=rtol)
    return val


def _integrate_elements(mode: DiscreteMode, p0, integrand: Integrand, r_hi: float, zones,
                        n_out: int, degree: int = 8, max_depth: int = 12, chunk: int = 64):
    """Element quadrature over the disc of radius r_hi.

    Sub-triangles whose radial range meets a steep zone [a, b] are split
    until their diameter drops below half the zone width.  Parents are
    processed in chunks to bound memory.
    """
    space = mode.space
    geo = _ElementGeometry(space)
    corners = space.mesh.corners()
    near = _tri_point_distance(corners, p0)
    todo = np.flatnonzero(near < r_hi)
    total = np.zeros(n_out)
    zones = [(float(a), float(b)) for a, b in zones]
    for start in range(0, len(todo), chunk):
        cells = todo[start:start + chunk]
        sub = np.broadcast_to(_REF, (len(cells), 3, 2)).copy()
        for depth in range(max_depth + 1):
            if len(cells) == 0:
                break
            world = geo.to_world(cells, sub)
            r_far = np.linalg.norm(world - p0, axis=2).max(axis=1)
            r_near = _tri_point_distance(world, p0)
            diam = np.linalg.norm(np.roll(world, -1, axis=1) - world, axis=2).max(axis=1)
            alive = r_near < r_hi
            split = np.zeros(len(cells), dtype=bool)
            if depth < max_depth:
                for a, b in zones:
                    split |= alive & (r_near < b) & (r_far > a) & (diam > 0.5 * (b - a))
            use = alive & ~split
            if use.any():
                total += _leaf_sum(space, geo, mode.coeffs, cells[use], sub[use], degree, p0, integrand)
            cells = np.repeat(cells[split], 4)
            sub = _split4(sub[split])
    return total


def _leaf_sum(space, geo, coeffs, uc, sub, degree, p0, integrand):
    pts, wts = _sub_rule(sub, degree)
    wp = geo.to_world(uc, pts)
    vals, rgrads = shape_functions(space.order, pts.reshape(-1, 2))
    k, q = pts.shape[:2]
    vals = vals.reshape(k, q, -1)
    rgrads = rgrads.reshape(k, q, -1, 2)
    grads = np.einsum("kij,kqnj->kqni", geo.inv_t[uc], rgrads)
    local = coeffs[space.cell_dofs[uc]]
    u = np.einsum("kqn,kn->kq", vals, local).ravel()
    g = np.einsum("kqni,kn->kqi", grads, local).reshape(-1, 2)
    flat = wp.reshape(-1, 2)
    rel = flat - p0
    r = np.linalg.norm(rel, axis=1)
    w = (wts * geo.det[uc][:, None]).ravel()
    return np.atleast_2d(integrand(flat, r, u, g, rel)) @ w


def _zones(*cutoffs) -> list[tuple[float, float]]:
    """Intervals where the given profiles vary."""
    out = []
    for c in cutoffs:
        b = c.breakpoints()
        out += [(b[0], b[1]), (b[2], b[3])]
    return out


def _radial_integral(mode: Mode, p0, domain, integrand: Integrand, r_hi: float, zones,
                     n_out: int, atol: float = 1e-14, rtol: float = 1e-12,
                     extra_breaks=()) -> np.ndarray:
    if isinstance(mode, DiscreteMode):
        return _integrate_elements(mode, p0, integrand, r_hi, zones, n_out)
    breaks = np.unique(np.concatenate([np.ravel(zones), np.asarray(extra_breaks, float)]))
    val = _integrate_polar(mode, p0, domain, integrand, r_hi, breaks, atol, rtol)
    return np.zeros(n_out) if val is None else np.asarray(val, dtype=float)


# ---------------------------------------------------------------------------
# commutator pairing


@dataclass(frozen=True)
class PairingResult:
    lhs: float
    rhs: float
    residual: float


def _check_support(domain: PolygonDomain, p0, phi: CutoffFunction) -> float:
    d = nonadjacent_distance(domain, p0)
    if phi.scale != 0 and phi.support_end >= d:
        raise AnalysisError(
            f"cutoff support radius {phi.support_end:.6g} reaches a non-adjacent face at distance {d:.6g}"
        )
    return d


def _residual(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-30)


def commutator_pairing(mode: Mode, p0, phi: CutoffFunction, domain: PolygonDomain | None = None,
                       atol: float = 1e-14, rtol: float = 1e-12) -> PairingResult:
    """Both sides of 2 int phi |u|^2 = int (Xu) [-h^2 Laplace, phi] u.

    The commutator is expanded as -h^2 (phi'' + phi'/r) u - 2 h^2 phi' d_r u,
    so only first derivatives of u are needed.
    """
    dom = _domain_of(mode, domain)
    p0 = np.asarray(p0, dtype=float)
    _check_support(dom, p0, phi)
    if phi.scale == 0:
        return PairingResult(0.0, 0.0, 0.0)
    h2 = 1.0 / mode.lam**2

    def integrand(pts, r, u, g, rel):
        rs = np.maximum(r, 1e-300)
        ur = (g * rel).sum(1) / rs
        f0, f1, f2 = phi(r), phi.d1(r), phi.d2(r)
        lhs = 2.0 * f0 * u * u
        rhs = (r * ur) * (-h2 * (f2 + f1 / rs) * u - 2.0 * h2 * f1 * ur)
        return np.vstack([lhs, rhs])

    lhs, rhs = _radial_integral(mode, p0, dom, integrand, phi.support_end, _zones(phi), 2,
                                atol, rtol)
    return PairingResult(float(lhs), float(rhs), _residual(lhs, rhs))


# ---------------------------------------------------------------------------
# boundary terms on corner sides


@dataclass(frozen=True)
class BoundaryTerms:
    i1: float
    i2: float
    scale: float
    side: int
    bc: str


def _mode_side_bc(mode: AnalyticMode, side: int) -> str:
    if isinstance(mode, SectorHarmonic):
        return mode.bc_pair[0 if side == 1 else 1]
    return mode.bc


def _line_panels(a: float, b: float, breaks, width: float):
    edges = np.unique(np.concatenate([[a, b], [x for x in breaks if a < x < b]]))
    out = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        n = max(1, int(math.ceil((hi - lo) / width)))
        out.extend(zip(np.linspace(lo, hi, n + 1)[:-1], np.linspace(lo, hi, n + 1)[1:]))
    return out


def _max_u2(mode: AnalyticMode, p0, domain, r_hi: float) -> float:
    """max |u|^2 over the part of D(p0, r_hi) inside the domain (sampled)."""
    from .quadrature import circle_arcs

    best = 0.0
    n_r = max(64, int(4 * mode.lam * r_hi))
    for r in np.linspace(r_hi / n_r, r_hi, n_r):
        for s, e in circle_arcs(domain, p0, r):
            n = max(16, int(4 * mode.lam * r * (e - s)))
            th = np.linspace(s, e, n)
            pts = p0 + r * np.column_stack([np.cos(th), np.sin(th)])
            best = max(best, float(np.max(mode.value(pts) ** 2)))
    return best


def _side_frames(domain: PolygonDomain, p0):
    """Corner frames at p0; edge points and flat vertices get a = 1, b = 0."""
    pc = classify_point(domain, p0)
    if pc.kind is PointKind.INTERIOR:
        raise AnalysisError("boundary terms need a boundary point")
    if pc.is_corner:
        return corner_frames(domain, pc.vertex)
    if pc.vertex is not None:
        loop, k = pc.vertex
        e_in, e_out = (loop, (k - 1) % len(domain.loops[loop])), (loop, k)
    else:
        e_in = e_out = pc.edge
    upper = CornerFrame(1.0, 0.0, 1, e_in, domain.bc_of(e_in))
    lower = CornerFrame(1.0, 0.0, 2, e_out, domain.bc_of(e_out))
    return upper, lower, corner_motion(domain, p0)


def boundary_terms(mode: AnalyticMode, p0, phi: CutoffFunction, side: int,
                   domain: PolygonDomain | None = None) -> BoundaryTerms:
    """I1 = int_F phi (h d_nu hXu) u dS and I2 = int_F (hXu)(h d_nu phi u) dS.

    ``side`` is 1 (upper side F1, the incoming edge) or 2 (lower side F2).
    The normal derivative of Xu uses d_nu(Xu) = nu . (grad u + Hess u (x - p0)).
    """
    if isinstance(mode, DiscreteMode):
        raise AnalysisError("boundary terms need second derivatives; use a closed-form mode")
    if side not in (1, 2):
        raise AnalysisError("side must be 1 (F1) or 2 (F2)")
    dom = _domain_of(mode, domain)
    p0 = np.asarray(p0, dtype=float)
    upper, lower, motion = _side_frames(dom, p0)
    frame = upper if side == 1 else lower
    if _mode_side_bc(mode, side) != frame.bc:
        raise AnalysisError(
            f"mode carries {_mode_side_bc(mode, side)} on side F{side} but the domain has {frame.bc}"
        )
    rot = motion.rotation
    tangent = rot @ frame.tangent
    normal = rot @ frame.normal
    # the side leaves p0 along +tangent (F1 sits at +theta0/2, F2 at -theta0/2)
    h = 1.0 / mode.lam
    r_hi = phi.support_end
    x, w = gauss_legendre(20)
    width = min(math.pi / mode.lam, r_hi)
    i1 = i2 = 0.0
    for lo, hi in _line_panels(0.0, r_hi, phi.breakpoints(), width):
        s = 0.5 * (lo + hi) + 0.5 * (hi - lo) * x
        ws = 0.5 * (hi - lo) * w
        pts = p0 + s[:, None] * tangent
        u, g = mode.evaluate(pts)
        hess = mode.hessian(pts)
        rel = pts - p0
        xu = (g * rel).sum(1)
        dn_xu = g @ normal + np.einsum("i,kij,kj->k", normal, hess, rel)
        grad_phi = phi.d1(s)[:, None] * rel / s[:, None]
        dn_phi = grad_phi @ normal
        i1 += float(ws @ (phi(s) * (h * h * dn_xu) * u))
        i2 += float(ws @ ((h * xu) * (h * dn_phi * u)))
    scale = _max_u2(mode, p0, dom, r_hi)
    return BoundaryTerms(i1, i2, scale, side, frame.bc)


# ---------------------------------------------------------------------------
# proof ledger


@dataclass(frozen=True)
class Ledger:
    """Quantities of the interior/boundary mass chain for one mode and point.

    ``remainder`` is |int psi |h grad u|^2 - int psi (-h^2 Laplace u) u|, the
    term absorbed as O(h) when the radial energy is traded for the mass;
    ``commutator_remainder`` is the dropped -h^2 (Laplace phi) u part of the
    pairing.  ``slope_const_tight`` and ``slope_const_loose`` are the two
    candidate bounds 1/((1-alpha) d) + eps and 2/((1-alpha) d) + eps on
    |phi'|.
    """

    mode_index: int
    lam: float
    h: float
    p0x: float
    p0y: float
    alpha: float
    eps: float
    d: float
    lower_chain: float
    pairing: float
    identity_residual: float
    radial_energy: float
    gradient_energy: float
    mass_outside: float
    mass_inside: float
    upper_cap: float
    cap_slack: float
    sup_phi_prime: float
    slope_const_tight: float
    slope_const_loose: float
    chain_bound_tight: float
    chain_bound_loose: float
    remainder: float
    commutator_remainder: float
    energy_const: float

    def csv_values(self) -> list:
        return [getattr(self, k) for k in LEDGER_COLUMNS_FIELDS]


LEDGER_COLUMNS_FIELDS = tuple("lam" if c == "lambda" else c for c in LEDGER_COLUMNS)


def default_eps(d: float, alpha: float) -> float:
    return min(d * (1.0 - alpha) / 4.0, 0.5) / 2.0


def proof_ledger(mode: Mode, p0, alpha: float, domain: PolygonDomain | None = None,
                 eps: float | None = None, mode_index: int | None = None) -> Ledger:
    """Evaluate every quantity in the mass chain for one mode.

    phi = phi1 with (delta1, delta2) = (alpha d, d) and psi its companion;
    eps defaults to half the largest admissible value.
    """
    bound_value(alpha)
    dom = _domain_of(mode, domain)
    p0 = np.asarray(p0, dtype=float)
    d = nonadjacent_distance(dom, p0)
    if eps is None:
        eps = default_eps(d, alpha)
    phi = make_phi1(alpha * d, d, eps)
    psi = make_psi(phi)
    lam = float(mode.lam)
    if not lam > 0:
        raise AnalysisError("the ledger needs lam > 0")
    h = 1.0 / lam
    h2 = h * h

    def integrand(pts, r, u, g, rel):
        rs = np.maximum(r, 1e-300)
        ur = (g * rel).sum(1) / rs
        f0, f1, f2 = phi(r), phi.d1(r), phi.d2(r)
        ps = psi(r)
        g2 = (g * g).sum(1)
        return np.vstack([
            2.0 * f0 * u * u,                                    # lower chain
            (r * ur) * (-h2 * (f2 + f1 / rs) * u - 2.0 * h2 * f1 * ur),  # pairing
            (r * ur) * (-h2 * (f2 + f1 / rs) * u),               # Laplace phi part
            ps * h2 * ur * ur,                                   # radial energy
            ps * h2 * g2,                                        # full gradient energy
            ps * u * u,                                          # mass under psi
            np.where(r <= alpha * d, u * u, 0.0),                # disc mass
        ])

    vals = _radial_integral(mode, p0, dom, integrand, d, _zones(phi, psi), 7,
                            extra_breaks=[alpha * d])
    lower, pairing, lap_part, radial, grad_e, outside, inside = (float(v) for v in vals)
    if isinstance(mode, DiscreteMode):
        inside = float(_fem_masses(mode.space, mode.coeffs, p0, alpha * d)[0])
    s = np.linspace(phi.delta1, phi.delta2, 20001)
    sup_fp = float(np.max(np.abs(phi.d1(s))))
    c_tight = 1.0 / ((1.0 - alpha) * d) + eps
    c_loose = 2.0 / ((1.0 - alpha) * d) + eps
    cap = 2.0 / (2.0 - alpha)
    # psi (-h^2 Laplace u) u equals psi |u|^2 through the eigenvalue equation
    remainder = abs(grad_e - outside)
    return Ledger(
        mode_index=int(getattr(mode, "index", 0) if mode_index is None else mode_index),
        lam=lam, h=h, p0x=float(p0[0]), p0y=float(p0[1]), alpha=float(alpha), eps=float(eps),
        d=d, lower_chain=lower, pairing=pairing, identity_residual=_residual(lower, pairing),
        radial_energy=radial, gradient_energy=grad_e, mass_outside=outside, mass_inside=inside,
        upper_cap=cap, cap_slack=cap - pairing, sup_phi_prime=sup_fp,
        slope_const_tight=c_tight, slope_const_loose=c_loose,
        chain_bound_tight=2.0 * c_tight * d * radial, chain_bound_loose=2.0 * c_loose * d * radial,
        remainder=remainder, commutator_remainder=abs(lap_part),
        energy_const=(grad_e - outside) / h,
    )


def fit_loglog_slope(x, y) -> float:
    """Least-squares slope of log y against log x."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    a = np.vstack([lx, np.ones_like(lx)]).T
    slope, _ = np.linalg.lstsq(a, ly, rcond=None)[0]
    return float(slope)


# ---------------------------------------------------------------------------
# report


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def profile_csv(profile: MassProfile) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in profile.rows:
        w.writerow([_fmt(v) for v in row.csv_values()])
    return buf.getvalue()


def ledger_csv(ledgers: Sequence[Ledger]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LEDGER_COLUMNS)
    for led in ledgers:
        w.writerow([_fmt(v) for v in led.csv_values()])
    return buf.getvalue()


def _plot(profile: MassProfile, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "eigenlab"
    points = sorted({(r.p0x, r.p0y, r.point_class) for r in profile.rows})
    alphas = sorted({r.alpha for r in profile.rows})
    fig, axes = plt.subplots(len(points), 1, figsize=(7, 3 * len(points)), squeeze=False)
    for ax, (x, y, kind) in zip(axes[:, 0], points):
        for a in alphas:
            rows = [r for r in profile.rows if (r.p0x, r.p0y) == (x, y) and r.alpha == a]
            lam = [r.lam for r in rows]
            line, = ax.plot(lam, [r.disc_mass for r in rows], ".", ms=3, label=f"alpha={a:g}")
            ax.axhline(bound_value(a), color=line.get_color(), lw=1, ls="--")
        ax.set_title(f"p0=({x:g}, {y:g}) {kind}")
        ax.set_xlabel("lambda")
        ax.set_ylabel("disc mass")
        ax.legend(fontsize=7, loc="upper right")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def report(profile: MassProfile, ledgers: Sequence[Ledger], out_base) -> list[Path]:
    """Write <base>.csv, <base>.svg and, with ledgers, <base>_ledger.csv."""
    if len(profile) == 0:
        raise AnalysisError("empty mass profile")
    base = Path(out_base)
    base.parent.mkdir(parents=True, exist_ok=True)
    paths = [base.with_suffix(".csv"), base.with_suffix(".svg")]
    paths[0].write_text(profile_csv(profile))
    _plot(profile, paths[1])
    if ledgers:
        lp = base.with_name(base.name + "_ledger.csv")
        lp.write_text(ledger_csv(ledgers))
        paths.append(lp)
    return paths
