"""Triangular meshes and P1/P2 Lagrange finite elements.

Meshing is delegated to Shewchuk's Triangle (constrained Delaunay plus
Ruppert refinement with a 20 degree angle floor).  On top of it we run a
size-driven refinement loop: every triangle whose longest edge exceeds the
local target size gets an area constraint and Triangle refines again.  Near
concave corners the target size follows r**(1 - pi/theta0).

Assembly is vectorised over elements.  Dirichlet conditions are imposed by
dropping the constrained rows and columns (the returned matrices act on the
free degrees of freedom only).
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import triangle as tr
from matplotlib.tri import Triangulation

from . import binio
from .geometry import DIRICHLET, PolygonDomain, classify_point, PointKind
from .quadrature import triangle_rule

MIN_ANGLE = 20.0
MESH_FORMAT = "eigenlab-mesh"
MESH_VERSION = 1


class MeshError(RuntimeError):
    pass


class AssemblyError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming triangulation with counterclockwise triangles.

    ``boundary_edges`` rows are (triangle, local edge, domain edge index),
    local edge k joining local vertices k and k+1 (mod 3).  ``grading`` maps
    each graded concave-corner vertex index to its exponent 1 - pi/theta0.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    domain: PolygonDomain = field(repr=False)
    target_h: float = 0.0
    grading: dict = field(default_factory=dict)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def corners(self) -> np.ndarray:
        """(m, 3, 2) vertex coordinates per triangle."""
        return self.vertices[self.triangles]

    def areas(self) -> np.ndarray:
        c = self.corners()
        e1, e2 = c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def edge_lengths(self) -> np.ndarray:
        c = self.corners()
        return np.linalg.norm(np.roll(c, -1, axis=1) - c, axis=2)

    def diameters(self) -> np.ndarray:
        return self.edge_lengths().max(axis=1)

    def min_angles(self) -> np.ndarray:
        """Smallest interior angle of each triangle, in degrees."""
        ln = self.edge_lengths()
        a, b, c = ln[:, 0], ln[:, 1], ln[:, 2]
        # angle opposite each edge by the law of cosines
        ang = []
        for x, y, z in ((a, b, c), (b, c, a), (c, a, b)):
            cosv = np.clip((y * y + z * z - x * x) / (2 * y * z), -1.0, 1.0)
            ang.append(np.degrees(np.arccos(cosv)))
        return np.min(ang, axis=0)

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (self.vertices, self.triangles, self.boundary_edges):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()


def domain_digest(domain: PolygonDomain) -> str:
    return hashlib.sha256(domain.to_text().encode()).hexdigest()


# ---------------------------------------------------------------------------
# meshing


def _hole_point(loop: np.ndarray) -> np.ndarray:
    """A point strictly inside a simple polygon (centroid of an ear)."""
    seg = np.array([[i, (i + 1) % len(loop)] for i in range(len(loop))])
    t = tr.triangulate({"vertices": np.array(loop), "segments": seg}, "p")
    areas = []
    for tri in t["triangles"]:
        c = t["vertices"][tri]
        e1, e2 = c[1] - c[0], c[2] - c[0]
        areas.append(abs(e1[0] * e2[1] - e1[1] * e2[0]))
    best = int(np.argmax(areas))
    return t["vertices"][t["triangles"][best]].mean(axis=0)


def _boundary_input(domain: PolygonDomain, target_h: float):
    """Boundary points and marked segments, edges pre-split to length <= target_h."""
    pts, segs, marks = [], [], []
    for i, (a, b) in enumerate(zip(domain.edge_starts, domain.edge_ends)):
        n = max(1, int(math.ceil(np.linalg.norm(b - a) / target_h - 1e-9)))
        t = np.arange(n)[:, None] / n
        pts.append(a + t * (b - a))
        marks.append(np.full(n, i + 1))
    # consecutive points within one loop are joined; loops close on themselves
    offset = 0
    edge = 0
    for loop in domain.loops:
        m = len(loop)
        count = sum(len(pts[edge + k]) for k in range(m))
        idx = offset + np.arange(count)
        segs.append(np.column_stack([idx, np.roll(idx, -1)]))
        offset += count
        edge += m
    return np.vstack(pts), np.vstack(segs), np.concatenate(marks)


def _size_field(domain: PolygonDomain, target_h: float, grade_concave: bool,
                grade_radius: float):
    """Local target size as a function of points, plus the graded corners."""
    corners = []
    if grade_concave:
        for li, loop in enumerate(domain.loops):
            for k in range(len(loop)):
                theta0 = domain.corner_angle((li, k))
                if theta0 > math.pi + 1e-12:
                    corners.append((loop[k], 1.0 - math.pi / theta0))
    floor = 1e-2 * target_h

    def size(r_min: np.ndarray) -> np.ndarray:
        # longest-edge cap: 1.5 target_h in the bulk, graded near concave corners
        out = np.full(r_min.shape[0], 1.5 * target_h)
        for j, (_, mu) in enumerate(corners):
            s = target_h * (r_min[:, j] / grade_radius) ** mu
            out = np.minimum(out, np.maximum(s, floor))
        return out

    return corners, size


def triangulate(domain: PolygonDomain, target_h: float, grade_concave: bool = True,
                max_rounds: int = 60, grade_radius: float | None = None) -> Mesh:
    """Quality mesh of ``domain`` with longest edges below the target size.

    Parameters
    ----------
    target_h : float
        Target element size; away from graded corners the longest edge is at
        most 1.5 * target_h.  Must not exceed the domain diameter.
    grade_concave : bool
        Refine toward concave corners so element size scales like
        r**(1 - pi/theta0) inside ``grade_radius`` (default diameter / 20),
        bottoming out at target_h / 100.
    """
    diam = domain.diameter
    if not target_h > 0:
        raise MeshError(f"target_h must be positive, got {target_h}")
    if target_h > diam:
        raise MeshError(f"target_h={target_h} exceeds the domain diameter {diam:.6g}")
    if grade_radius is None:
        grade_radius = diam / 20.0
    pts, segs, marks = _boundary_input(domain, target_h)
    data = {"vertices": pts, "segments": segs, "segment_markers": marks[:, None]}
    holes = [_hole_point(loop) for loop in domain.loops[1:]]
    if holes:
        data["holes"] = np.array(holes)
    area = math.sqrt(3) / 4 * target_h**2
    out = tr.triangulate(data, f"pq{MIN_ANGLE:g}a{area:.17g}")
    corners, size = _size_field(domain, target_h, grade_concave, grade_radius)
    cpts = np.array([c for c, _ in corners]).reshape(-1, 2)
    for _ in range(max_rounds):
        verts, tris = out["vertices"], out["triangles"]
        c = verts[tris]
        longest = np.linalg.norm(np.roll(c, -1, axis=1) - c, axis=2).max(axis=1)
        if len(cpts):
            r_min = np.linalg.norm(c[:, :, None, :] - cpts[None, None], axis=3).min(axis=1)
        else:
            r_min = np.zeros((len(tris), 0))
        want = size(r_min)
        bad = longest > want * (1 + 1e-12)
        if not bad.any():
            break
        e1, e2 = c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]
        tri_area = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
        limit = np.full(len(tris), -1.0)
        # shrink at most 4x per round: triangle hands a split element's area
        # limit on to whatever its cavity touches, so big jumps spread far
        limit[bad] = np.clip(0.3 * want[bad] ** 2, 0.25 * tri_area[bad], 0.5 * tri_area[bad])
        refine = {
            "vertices": verts, "triangles": tris, "segments": out["segments"],
            "segment_markers": out["segment_markers"], "triangle_max_area": limit,
        }
        if holes:
            refine["holes"] = np.array(holes)
        out = tr.triangulate(refine, f"rpq{MIN_ANGLE:g}a")
    else:
        raise MeshError(f"size targets not met after {max_rounds} refinement rounds")
    mesh = _finish(domain, out, target_h, {tuple(c): mu for c, mu in corners})
    worst = mesh.min_angles().min()
    if worst < MIN_ANGLE - 1e-6:
        raise MeshError(f"minimum angle {worst:.3f} deg below the {MIN_ANGLE:g} deg floor")
    return mesh


def _finish(domain: PolygonDomain, out: dict, target_h: float, corners: dict) -> Mesh:
    verts = np.asarray(out["vertices"], dtype=float)
    tris = np.asarray(out["triangles"], dtype=np.int64)
    c = verts[tris]
    e1, e2 = c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]
    neg = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0] < 0
    tris[neg] = tris[neg][:, [0, 2, 1]]
    seg_mark = {}
    for (i, j), m in zip(out["segments"], out["segment_markers"].ravel()):
        if m > 0:
            seg_mark[(min(i, j), max(i, j))] = int(m) - 1
    bnd = []
    for t, tri in enumerate(tris):
        for k in range(3):
            i, j = tri[k], tri[(k + 1) % 3]
            m = seg_mark.get((min(i, j), max(i, j)))
            if m is not None:
                bnd.append((t, k, m))
    bnd = np.array(bnd, dtype=np.int64).reshape(-1, 3)
    grading = {}
    for pos, mu in corners.items():
        vid = int(np.argmin(np.linalg.norm(verts - np.array(pos), axis=1)))
        grading[vid] = mu
    return Mesh(verts, tris, bnd, domain, float(target_h), grading)


# ---------------------------------------------------------------------------
# function spaces


@dataclass(frozen=True, eq=False)
class FunctionSpace:
    """Lagrange space of order 1 or 2 on a mesh.

    ``nodes`` are the dof coordinates (vertices first, then edge midpoints
    for order 2); ``cell_dofs`` lists them per triangle in the local order
    v0, v1, v2, m01, m12, m20.  ``free`` indexes the unconstrained dofs.
    """

    mesh: Mesh
    order: int
    nodes: np.ndarray
    cell_dofs: np.ndarray
    free: np.ndarray

    @property
    def n_dofs(self) -> int:
        return len(self.nodes)

    @property
    def n_free(self) -> int:
        return len(self.free)

    def expand(self, reduced: np.ndarray) -> np.ndarray:
        """Full coefficient vectors (Dirichlet entries zero) from free ones."""
        reduced = np.asarray(reduced)
        out = np.zeros((self.n_dofs,) + reduced.shape[1:], dtype=reduced.dtype)
        out[self.free] = reduced
        return out

    def interpolate(self, f) -> np.ndarray:
        """Nodal interpolant of ``f(points) -> values`` (full vector)."""
        return np.asarray(f(self.nodes), dtype=float)


def function_space(mesh: Mesh, order: int) -> FunctionSpace:
    if order not in (1, 2):
        raise AssemblyError(f"unsupported element order {order}")
    tris = mesh.triangles
    nv = mesh.n_vertices
    if order == 1:
        nodes = mesh.vertices
        cell_dofs = tris.copy()
        edge_dofs = None
    else:
        local_edges = np.stack([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]], axis=1)
        key = np.sort(local_edges, axis=2).reshape(-1, 2)
        uniq, inv = np.unique(key, axis=0, return_inverse=True)
        inv = inv.reshape(-1, 3)
        nodes = np.vstack([mesh.vertices, mesh.vertices[uniq].mean(axis=1)])
        cell_dofs = np.hstack([tris, nv + inv])
        edge_dofs = inv
    bc = mesh.domain.flat_bc
    fixed = np.zeros(len(nodes), dtype=bool)
    for t, k, m in mesh.boundary_edges:
        if bc[m] != DIRICHLET:
            continue
        fixed[tris[t, k]] = True
        fixed[tris[t, (k + 1) % 3]] = True
        if edge_dofs is not None:
            fixed[nv + edge_dofs[t, k]] = True
    free = np.flatnonzero(~fixed)
    if free.size == 0:
        raise AssemblyError("no free degrees of freedom")
    return FunctionSpace(mesh, order, nodes, cell_dofs, free)


def shape_functions(order: int, ref: np.ndarray):
    """Basis values (k, n) and reference gradients (k, n, 2) at ``ref`` points."""
    ref = np.atleast_2d(ref)
    x, y = ref[:, 0], ref[:, 1]
    l0, l1, l2 = 1.0 - x - y, x, y
    dl = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    if order == 1:
        vals = np.column_stack([l0, l1, l2])
        grads = np.broadcast_to(dl, (len(x), 3, 2)).copy()
        return vals, grads
    lam = [l0, l1, l2]
    vals = np.column_stack([
        l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
        4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0,
    ])
    grads = np.empty((len(x), 6, 2))
    for i in range(3):
        grads[:, i] = (4 * lam[i] - 1)[:, None] * dl[i]
    for k, (i, j) in enumerate(((0, 1), (1, 2), (2, 0))):
        grads[:, 3 + k] = 4 * (lam[i][:, None] * dl[j] + lam[j][:, None] * dl[i])
    return vals, grads


def _affine(mesh: Mesh):
    """Per-triangle Jacobian J (m, 2, 2), inverse transpose and |det J|."""
    c = mesh.corners()
    jac = np.stack([c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]], axis=2)
    det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    inv_t = np.empty_like(jac)
    inv_t[:, 0, 0] = jac[:, 1, 1] / det
    inv_t[:, 1, 1] = jac[:, 0, 0] / det
    inv_t[:, 0, 1] = -jac[:, 1, 0] / det
    inv_t[:, 1, 0] = -jac[:, 0, 1] / det
    return jac, inv_t, np.abs(det)


def element_matrices(space: FunctionSpace):
    """Element stiffness and mass matrices, each (m, n, n), exactly symmetric."""
    order = space.order
    q_pts, q_w = triangle_rule(2 * order)
    vals, rgrads = shape_functions(order, q_pts)
    _, inv_t, det = _affine(space.mesh)
    # physical gradients (m, q, n, 2)
    grads = np.einsum("mij,qnj->mqni", inv_t, rgrads)
    ke = np.einsum("q,mqai,mqbi->mab", q_w, grads, grads) * det[:, None, None]
    me = np.einsum("q,qa,qb->ab", q_w, vals, vals)[None] * det[:, None, None]
    ke = 0.5 * (ke + ke.transpose(0, 2, 1))
    me = 0.5 * (me + me.transpose(0, 2, 1))
    return ke, me


def _scatter(space: FunctionSpace, local: np.ndarray) -> sp.csr_matrix:
    dofs = space.cell_dofs
    n = dofs.shape[1]
    rows = np.repeat(dofs, n, axis=1).ravel()
    cols = np.tile(dofs, (1, n)).ravel()
    mat = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(space.n_dofs, space.n_dofs))
    return mat.tocsr()


def assemble_full(space: FunctionSpace):
    """Stiffness and mass on all dofs (no boundary conditions applied)."""
    ke, me = element_matrices(space)
    return _scatter(space, ke), _scatter(space, me)


def assemble(mesh: Mesh, order: int = 2):
    """Dirichlet-reduced stiffness K, mass M and the function space.

    K u = lam**2 M u discretises -Laplace u = lam**2 u with the domain's
    boundary conditions (Neumann natural, Dirichlet eliminated).
    """
    space = function_space(mesh, order)
    k_full, m_full = assemble_full(space)
    f = space.free
    k = k_full[f][:, f].tocsc()
    m = m_full[f][:, f].tocsc()
    return k, m, space


# ---------------------------------------------------------------------------
# discrete modes and point evaluation


@dataclass(frozen=True, eq=False)
class DiscreteMode:
    """One FEM eigenfunction.  ``coeffs`` covers every dof of ``space``."""

    coeffs: np.ndarray
    lam: float
    space: FunctionSpace
    index: int = 0

    @property
    def h(self) -> float:
        return 1.0 / self.lam if self.lam > 0 else math.inf

    @property
    def order(self) -> int:
        return self.space.order

    @property
    def mesh(self) -> Mesh:
        return self.space.mesh

    @property
    def domain(self) -> PolygonDomain:
        return self.space.mesh.domain

    def evaluate(self, pts):
        return evaluate_many(self.space, self.coeffs, pts)

    def value(self, pts):
        return self.evaluate(pts)[0]

    def gradient(self, pts):
        return self.evaluate(pts)[1]


class PointLocator:
    """Triangle lookup for arbitrary points, with a tolerance band at the boundary."""

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        self._tri = Triangulation(mesh.vertices[:, 0], mesh.vertices[:, 1], mesh.triangles)
        self._finder = self._tri.get_trifinder()
        jac, inv_t, _ = _affine(mesh)
        self._origin = mesh.vertices[mesh.triangles[:, 0]]
        self._inv = inv_t.transpose(0, 2, 1)

    def reference(self, cells: np.ndarray, pts: np.ndarray) -> np.ndarray:
        return np.einsum("mij,mj->mi", self._inv[cells], pts - self._origin[cells])

    def locate(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        cells = np.asarray(self._finder(pts[:, 0], pts[:, 1]), dtype=np.int64)
        lost = np.flatnonzero(cells < 0)
        tol = self.mesh.domain.tol
        for i in lost:
            # nearest triangle by barycentric slack; accept within tolerance
            ref = np.einsum("mij,mj->mi", self._inv, pts[i] - self._origin)
            bary = np.column_stack([1 - ref.sum(1), ref])
            slack = bary.min(axis=1)
            best = int(np.argmax(slack))
            c = self.mesh.corners()[best]
            clipped = np.clip(bary[best], 0, None)
            proj = (clipped / clipped.sum()) @ c
            if np.linalg.norm(proj - pts[i]) > tol:
                raise MeshError(f"point ({pts[i, 0]:g}, {pts[i, 1]:g}) lies outside the mesh")
            cells[i] = best
        return cells


_LOCATORS: dict[int, PointLocator] = {}


def locator(mesh: Mesh) -> PointLocator:
    key = id(mesh)
    loc = _LOCATORS.get(key)
    if loc is None or loc.mesh is not mesh:
        loc = PointLocator(mesh)
        _LOCATORS.clear()
        _LOCATORS[key] = loc
    return loc


_AFFINE: dict[int, tuple] = {}


def _affine_cached(mesh: Mesh):
    key = id(mesh)
    hit = _AFFINE.get(key)
    if hit is None or hit[0] is not mesh:
        _AFFINE.clear()
        hit = (mesh, _affine(mesh))
        _AFFINE[key] = hit
    return hit[1]


def evaluate_many(space: FunctionSpace, coeffs: np.ndarray, pts):
    """Values and gradients of one (n,) or several (n, k) coefficient vectors.

    Returns arrays of shape (p,) and (p, 2) for a single vector, (p, k) and
    (p, k, 2) for several.  Points on shared element edges take the element
    reported by the point locator, which is deterministic.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    loc = locator(space.mesh)
    cells = loc.locate(pts)
    ref = loc.reference(cells, pts)
    vals, rgrads = shape_functions(space.order, ref)
    _, inv_t, _ = _affine_cached(space.mesh)
    grads = np.einsum("kij,knj->kni", inv_t[cells], rgrads)
    local = coeffs[space.cell_dofs[cells]]  # (p, n) or (p, n, k)
    if local.ndim == 2:
        return (vals * local).sum(1), np.einsum("pn,pni->pi", local, grads)
    return np.einsum("pn,pnk->pk", vals, local), np.einsum("pnk,pni->pki", local, grads)


def evaluate_mode(mode: DiscreteMode, p):
    """Value and gradient of a discrete mode at a single point."""
    v, g = mode.evaluate(np.asarray(p, dtype=float)[None])
    return float(v[0]), g[0]


# ---------------------------------------------------------------------------
# cache


def save_mesh(mesh: Mesh, path) -> str:
    """Write the binary mesh cache; returns the mesh digest."""
    meta = {
        "domain_digest": domain_digest(mesh.domain),
        "domain": mesh.domain.to_dict(),
        "target_h": mesh.target_h,
        "grading": {str(k): v for k, v in sorted(mesh.grading.items())},
        "mesh_digest": mesh.digest(),
    }
    arrays = {
        "vertices": mesh.vertices,
        "triangles": mesh.triangles,
        "boundary_edges": mesh.boundary_edges,
    }
    binio.write(path, MESH_FORMAT, MESH_VERSION, meta, arrays)
    return meta["mesh_digest"]


def load_mesh(path, domain: PolygonDomain | None = None) -> Mesh:
    """Read a mesh cache.  With ``domain`` given, a stale cache raises MeshError."""
    from .geometry import make_domain

    meta, arrays = binio.read(path, MESH_FORMAT, MESH_VERSION)
    if domain is not None and meta["domain_digest"] != domain_digest(domain):
        raise MeshError("mesh cache belongs to a different polygon")
    if domain is None:
        loops = [lp["vertices"] for lp in meta["domain"]["loops"]]
        bcs = [lp["bc"] for lp in meta["domain"]["loops"]]
        domain = make_domain(loops, bcs)
    grading = {int(k): v for k, v in meta["grading"].items()}
    return Mesh(arrays["vertices"], arrays["triangles"], arrays["boundary_edges"],
                domain, meta["target_h"], grading)


def concave_corner_points(domain: PolygonDomain) -> list:
    out = []
    for li, loop in enumerate(domain.loops):
        for k, v in enumerate(loop):
            if classify_point(domain, v).kind is PointKind.CONCAVE_CORNER:
                out.append((li, k))
    return out
