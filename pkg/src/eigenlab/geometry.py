"""Polygonal domains with per-edge Dirichlet/Neumann boundary conditions.

A domain is one counterclockwise outer loop plus any number of clockwise
hole loops.  With that convention the interior of the domain always lies to
the left of every directed edge, which is what the corner-angle and corner
frame computations rely on.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

DIRICHLET = "dirichlet"
NEUMANN = "neumann"
_BC_NAMES = (DIRICHLET, NEUMANN)

# relative to the domain diameter
GEOM_TOL = 1e-9
# reclassify a listed vertex as flat when |theta0 - pi| falls below this
FLAT_ANGLE_TOL = 1e-12


class GeometryError(ValueError):
    """Invalid polygon input or a query point outside the closed domain."""

    def __init__(self, message: str, loop: int | None = None, edge: int | None = None):
        where = []
        if loop is not None:
            where.append(f"loop {loop}")
        if edge is not None:
            where.append(f"edge {edge}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.loop = loop
        self.edge = edge


class PointKind(enum.Enum):
    INTERIOR = "interior"
    EDGE_INTERIOR = "edge"
    CONVEX_CORNER = "convex"
    CONCAVE_CORNER = "concave"


class Membership(enum.Enum):
    INTERIOR = "interior"
    BOUNDARY = "boundary"
    EXTERIOR = "exterior"


@dataclass(frozen=True)
class PointClass:
    kind: PointKind
    theta0: float
    edge: tuple[int, int] | None = None
    vertex: tuple[int, int] | None = None

    @property
    def is_corner(self) -> bool:
        return self.kind in (PointKind.CONVEX_CORNER, PointKind.CONCAVE_CORNER)


@dataclass(frozen=True)
class RigidMotion:
    """world = origin + R(angle) @ local."""

    origin: tuple[float, float]
    angle: float

    @property
    def rotation(self) -> np.ndarray:
        c, s = math.cos(self.angle), math.sin(self.angle)
        return np.array([[c, -s], [s, c]])

    def to_world(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return pts @ self.rotation.T + np.asarray(self.origin)

    def to_local(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return (pts - np.asarray(self.origin)) @ self.rotation


@dataclass(frozen=True)
class CornerFrame:
    """Local frame of one side of a corner after the corner is moved to the
    origin with the interior bisector along +x.

    The side is the ray ``y = a x / b`` (upper, ``side == 1``) or
    ``y = -a x / b`` (lower, ``side == 2``), with ``a > 0`` and ``b < 0`` for
    concave corners.
    """

    a: float
    b: float
    side: int
    edge: tuple[int, int]
    bc: str

    @property
    def c(self) -> float:
        return math.hypot(self.a, self.b)

    @property
    def tangent(self) -> np.ndarray:
        c = self.c
        if self.side == 1:
            return np.array([self.b / c, self.a / c])
        return np.array([self.b / c, -self.a / c])

    @property
    def normal(self) -> np.ndarray:
        c = self.c
        if self.side == 1:
            return np.array([-self.a / c, self.b / c])
        return np.array([-self.a / c, -self.b / c])


@dataclass(frozen=True, eq=False)
class PolygonDomain:
    """Immutable polygonal domain.

    Use :func:`make_domain` or :func:`parse_polygon` to build one; both
    validate and normalise orientation.
    """

    loops: tuple[np.ndarray, ...]
    edge_bc: tuple[tuple[str, ...], ...]
    _starts: np.ndarray = field(repr=False)
    _ends: np.ndarray = field(repr=False)
    _ids: tuple[tuple[int, int], ...] = field(repr=False)

    @property
    def n_edges(self) -> int:
        return len(self._ids)

    @property
    def edge_ids(self) -> tuple[tuple[int, int], ...]:
        return self._ids

    @property
    def edge_starts(self) -> np.ndarray:
        return self._starts

    @property
    def edge_ends(self) -> np.ndarray:
        return self._ends

    def edge_index(self, edge: tuple[int, int]) -> int:
        return self._ids.index(tuple(edge))

    def bc_of(self, edge: tuple[int, int]) -> str:
        loop, k = edge
        return self.edge_bc[loop][k]

    @property
    def flat_bc(self) -> tuple[str, ...]:
        return tuple(self.bc_of(e) for e in self._ids)

    @property
    def vertices(self) -> np.ndarray:
        return np.vstack(self.loops)

    @property
    def diameter(self) -> float:
        v = self.vertices
        diff = v[:, None, :] - v[None, :, :]
        return float(np.sqrt((diff**2).sum(-1)).max())

    @property
    def tol(self) -> float:
        return GEOM_TOL * self.diameter

    @property
    def area(self) -> float:
        return float(sum(_signed_area(loop) for loop in self.loops))

    def to_dict(self) -> dict:
        return {
            "loops": [
                {"vertices": loop.tolist(), "bc": list(bc)}
                for loop, bc in zip(self.loops, self.edge_bc)
            ]
        }

    def to_text(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def vertex(self, vid: tuple[int, int]) -> np.ndarray:
        loop, k = vid
        return self.loops[loop][k % len(self.loops[loop])]

    def corner_angle(self, vid: tuple[int, int]) -> float:
        """Interior angle at a listed vertex, in (0, 2*pi)."""
        return self._corner_directions(vid)[1]

    def _corner_directions(self, vid: tuple[int, int]) -> tuple[float, float]:
        loop, k = vid
        pts = self.loops[loop]
        m = len(pts)
        p = pts[k % m]
        nxt = pts[(k + 1) % m]
        prv = pts[(k - 1) % m]
        a_out = math.atan2(nxt[1] - p[1], nxt[0] - p[0])
        a_back = math.atan2(prv[1] - p[1], prv[0] - p[0])
        theta0 = (a_back - a_out) % (2 * math.pi)
        return a_out, theta0


def _signed_area(loop: np.ndarray) -> float:
    x, y = loop[:, 0], loop[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _orient(p, q, r) -> float:
    return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])


def _segments_intersect(p1, p2, q1, q2, tol: float) -> bool:
    """Closed-segment intersection test with a distance tolerance."""
    d1 = _orient(q1, q2, p1)
    d2 = _orient(q1, q2, p2)
    d3 = _orient(p1, p2, q1)
    d4 = _orient(p1, p2, q2)
    if ((d1 > 0 > d2) or (d1 < 0 < d2)) and ((d3 > 0 > d4) or (d3 < 0 < d4)):
        return True
    for a, s0, s1 in ((p1, q1, q2), (p2, q1, q2), (q1, p1, p2), (q2, p1, p2)):
        if _point_segment_distance(np.asarray(a), np.asarray(s0), np.asarray(s1)) <= tol:
            return True
    return False


def _point_segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    ab = b - a
    t = np.dot(p - a, ab) / np.dot(ab, ab)
    t = min(1.0, max(0.0, t))
    return float(np.linalg.norm(p - (a + t * ab)))


def segment_distances(p, starts: np.ndarray, ends: np.ndarray) -> np.ndarray:
    """Distance from point ``p`` to each segment ``starts[i] -> ends[i]``."""
    p = np.asarray(p, dtype=float)
    ab = ends - starts
    t = np.einsum("ij,ij->i", p - starts, ab) / np.einsum("ij,ij->i", ab, ab)
    t = np.clip(t, 0.0, 1.0)
    foot = starts + t[:, None] * ab
    return np.linalg.norm(p - foot, axis=1)


def _winding_inside(p, loop: np.ndarray) -> bool:
    """Even-odd test for a point that is not on the loop."""
    x, y = p
    inside = False
    m = len(loop)
    for i in range(m):
        x0, y0 = loop[i]
        x1, y1 = loop[(i + 1) % m]
        if (y0 > y) != (y1 > y):
            xc = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
            if xc > x:
                inside = not inside
    return inside


def make_domain(loops: Sequence, bcs: Sequence[Sequence[str]]) -> PolygonDomain:
    """Validate loops/boundary conditions and build a :class:`PolygonDomain`.

    Loops may be given in either orientation; the loop containing all
    others becomes the counterclockwise outer loop and the rest become
    clockwise holes.  Edge ``k`` of a loop joins vertex ``k`` to ``k + 1``;
    reversing a loop remaps edge boundary conditions accordingly.
    """
    if len(loops) == 0:
        raise GeometryError("polygon needs at least one loop")
    if len(bcs) != len(loops):
        raise GeometryError("one bc list per loop is required")
    arrs = []
    norm_bcs = []
    for li, (loop, bc) in enumerate(zip(loops, bcs)):
        arr = np.asarray(loop, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise GeometryError("vertices must be [x, y] pairs", loop=li)
        if len(arr) < 3:
            raise GeometryError("loop needs at least 3 vertices", loop=li)
        if not np.all(np.isfinite(arr)):
            raise GeometryError("non-finite vertex coordinate", loop=li)
        if len(bc) != len(arr):
            raise GeometryError(
                f"bc list has {len(bc)} entries for {len(arr)} edges", loop=li
            )
        tags = []
        for k, tag in enumerate(bc):
            t = str(tag).strip().lower()
            if t not in _BC_NAMES:
                raise GeometryError(f"unknown boundary condition {tag!r}", loop=li, edge=k)
            tags.append(t)
        arrs.append(arr)
        norm_bcs.append(tags)

    allv = np.vstack(arrs)
    diam = float(np.sqrt(((allv[:, None] - allv[None]) ** 2).sum(-1)).max())
    if diam <= 0:
        raise GeometryError("degenerate polygon")
    tol = GEOM_TOL * diam

    for li, arr in enumerate(arrs):
        _check_simple(arr, li, tol)
        if abs(_signed_area(arr)) <= tol * diam:
            raise GeometryError("loop encloses zero area", loop=li)
    for i in range(len(arrs)):
        for j in range(i + 1, len(arrs)):
            _check_disjoint(arrs[i], arrs[j], i, j, tol)

    # exactly one loop contains every other one; holes must not nest
    outer = None
    for i, arr in enumerate(arrs):
        if all(_winding_inside(arrs[j][0], arr) for j in range(len(arrs)) if j != i):
            outer = i
            break
    if outer is None:
        raise GeometryError("disconnected interior: no loop encloses all others")
    for i in range(len(arrs)):
        for j in range(len(arrs)):
            if i != j and outer not in (i, j) and _winding_inside(arrs[j][0], arrs[i]):
                raise GeometryError(
                    f"disconnected interior: loop {j} lies inside hole loop {i}", loop=j
                )

    order = [outer] + [i for i in range(len(arrs)) if i != outer]
    final_loops = []
    final_bcs = []
    for pos, i in enumerate(order):
        arr, bc = arrs[i], norm_bcs[i]
        want_ccw = pos == 0
        if (_signed_area(arr) > 0) != want_ccw:
            m = len(arr)
            arr = arr[[(-k) % m for k in range(m)]]
            bc = [bc[(-k - 1) % m] for k in range(m)]
        arr = arr.copy()
        arr.setflags(write=False)
        final_loops.append(arr)
        final_bcs.append(tuple(bc))

    for li, arr in enumerate(final_loops):
        m = len(arr)
        for k in range(m):
            prv, p, nxt = arr[(k - 1) % m], arr[k], arr[(k + 1) % m]
            a_out = math.atan2(nxt[1] - p[1], nxt[0] - p[0])
            a_back = math.atan2(prv[1] - p[1], prv[0] - p[0])
            theta = (a_back - a_out) % (2 * math.pi)
            if theta < 1e-12 or theta > 2 * math.pi - 1e-12:
                raise GeometryError("zero or full interior angle at vertex", loop=li, edge=k)

    starts, ends, ids = [], [], []
    for li, arr in enumerate(final_loops):
        m = len(arr)
        for k in range(m):
            starts.append(arr[k])
            ends.append(arr[(k + 1) % m])
            ids.append((li, k))
    s = np.array(starts)
    e = np.array(ends)
    s.setflags(write=False)
    e.setflags(write=False)
    return PolygonDomain(tuple(final_loops), tuple(final_bcs), s, e, tuple(ids))


def _check_simple(arr: np.ndarray, li: int, tol: float) -> None:
    m = len(arr)
    for k in range(m):
        if np.linalg.norm(arr[(k + 1) % m] - arr[k]) <= tol:
            raise GeometryError("repeated vertex (zero-length edge)", loop=li, edge=k)
    for i in range(m):
        p1, p2 = arr[i], arr[(i + 1) % m]
        for j in range(i + 1, m):
            if j == i + 1 or (i == 0 and j == m - 1):
                continue
            q1, q2 = arr[j], arr[(j + 1) % m]
            if _segments_intersect(p1, p2, q1, q2, tol):
                raise GeometryError(
                    f"self-intersecting loop: edges {i} and {j} meet", loop=li, edge=i
                )


def _check_disjoint(a: np.ndarray, b: np.ndarray, ia: int, ib: int, tol: float) -> None:
    for i in range(len(a)):
        p1, p2 = a[i], a[(i + 1) % len(a)]
        for j in range(len(b)):
            q1, q2 = b[j], b[(j + 1) % len(b)]
            if _segments_intersect(p1, p2, q1, q2, tol):
                raise GeometryError(
                    f"overlapping loops: loop {ia} edge {i} meets loop {ib} edge {j}",
                    loop=ia,
                    edge=i,
                )


def parse_polygon(text: str) -> PolygonDomain:
    """Parse the JSON polygon format.

    ``{"loops": [{"vertices": [[x, y], ...], "bc": ["dirichlet" | "neumann", ...]}]}``
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GeometryError(f"malformed polygon text: {exc}") from None
    if not isinstance(data, dict) or "loops" not in data:
        raise GeometryError("malformed polygon text: missing 'loops'")
    loops, bcs = [], []
    for li, item in enumerate(data["loops"]):
        if not isinstance(item, dict) or "vertices" not in item or "bc" not in item:
            raise GeometryError("malformed loop: needs 'vertices' and 'bc'", loop=li)
        loops.append(item["vertices"])
        bcs.append(item["bc"])
    return make_domain(loops, bcs)


def load_polygon(path) -> PolygonDomain:
    with open(path, encoding="utf-8") as fh:
        return parse_polygon(fh.read())


def rectangle(lx: float = 1.0, ly: float = 1.0, bc: str | Sequence[str] = DIRICHLET) -> PolygonDomain:
    bcs = [bc] * 4 if isinstance(bc, str) else list(bc)
    return make_domain([[(0, 0), (lx, 0), (lx, ly), (0, ly)]], [bcs])


def unit_square(bc: str | Sequence[str] = DIRICHLET) -> PolygonDomain:
    return rectangle(1.0, 1.0, bc)


def l_shape(bc: str = DIRICHLET) -> PolygonDomain:
    """The 2x2 L-shape with its re-entrant corner at (1, 1)."""
    pts = [(0, 0), (2, 0), (2, 1), (1, 1), (1, 2), (0, 2)]
    return make_domain([pts], [[bc] * 6])


def contains(domain: PolygonDomain, p) -> Membership:
    p = np.asarray(p, dtype=float)
    dist = segment_distances(p, domain.edge_starts, domain.edge_ends)
    if dist.min() <= domain.tol:
        return Membership.BOUNDARY
    outer, *holes = domain.loops
    if not _winding_inside(p, outer):
        return Membership.EXTERIOR
    if any(_winding_inside(p, h) for h in holes):
        return Membership.EXTERIOR
    return Membership.INTERIOR


def contains_many(domain: PolygonDomain, pts: np.ndarray) -> np.ndarray:
    """Vectorised closed-domain membership (boundary counts as inside)."""
    pts = np.asarray(pts, dtype=float)
    x, y = pts[:, :1], pts[:, 1:2]
    x0, y0 = domain.edge_starts[:, 0], domain.edge_starts[:, 1]
    x1, y1 = domain.edge_ends[:, 0], domain.edge_ends[:, 1]
    cross = (y0 > y) != (y1 > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xc = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
    inside = np.logical_xor.reduce(cross & (xc > x), axis=1)
    abx, aby = x1 - x0, y1 - y0
    t = np.clip(((x - x0) * abx + (y - y0) * aby) / (abx * abx + aby * aby), 0.0, 1.0)
    dx = x - (x0 + t * abx)
    dy = y - (y0 + t * aby)
    on_edge = (dx * dx + dy * dy <= domain.tol**2).any(axis=1)
    return inside | on_edge


def classify_point(domain: PolygonDomain, p) -> PointClass:
    p = np.asarray(p, dtype=float)
    tol = domain.tol
    for li, loop in enumerate(domain.loops):
        dv = np.linalg.norm(loop - p, axis=1)
        k = int(np.argmin(dv))
        if dv[k] <= tol:
            _, theta0 = domain._corner_directions((li, k))
            if abs(theta0 - math.pi) < FLAT_ANGLE_TOL:
                return PointClass(PointKind.EDGE_INTERIOR, math.pi, edge=(li, k), vertex=(li, k))
            kind = PointKind.CONVEX_CORNER if theta0 < math.pi else PointKind.CONCAVE_CORNER
            return PointClass(kind, theta0, vertex=(li, k))
    dist = segment_distances(p, domain.edge_starts, domain.edge_ends)
    i = int(np.argmin(dist))
    if dist[i] <= tol:
        return PointClass(PointKind.EDGE_INTERIOR, math.pi, edge=domain.edge_ids[i])
    if contains(domain, p) is Membership.EXTERIOR:
        raise GeometryError(f"point ({p[0]:g}, {p[1]:g}) lies outside the domain")
    return PointClass(PointKind.INTERIOR, 2 * math.pi)


def adjacent_edges(domain: PolygonDomain, p) -> np.ndarray:
    """Boolean mask of edges that contain ``p`` (within tolerance)."""
    dist = segment_distances(np.asarray(p, float), domain.edge_starts, domain.edge_ends)
    return dist <= domain.tol


def nonadjacent_distance(domain: PolygonDomain, p) -> float:
    """Distance from ``p`` to the nearest boundary edge not containing ``p``.

    For an interior point this is the distance to the boundary; at a corner
    the two incident edges are skipped, on an edge that edge is skipped.
    """
    p = np.asarray(p, dtype=float)
    classify_point(domain, p)  # raises for exterior points
    dist = segment_distances(p, domain.edge_starts, domain.edge_ends)
    mask = dist > domain.tol
    if not mask.any():
        raise GeometryError("no non-adjacent boundary face")
    return float(dist[mask].min())


def interior_sector(domain: PolygonDomain, p) -> tuple[float, float]:
    """Start angle and opening of the interior wedge of ``domain`` at ``p``.

    Interior points give ``(0, 2*pi)``.  At a boundary point the wedge starts
    at the outgoing edge direction and opens counterclockwise by theta0.
    """
    pc = classify_point(domain, p)
    if pc.kind is PointKind.INTERIOR:
        return 0.0, 2 * math.pi
    if pc.vertex is not None:
        a_out, theta0 = domain._corner_directions(pc.vertex)
        return a_out, theta0
    i = domain.edge_index(pc.edge)
    d = domain.edge_ends[i] - domain.edge_starts[i]
    return math.atan2(d[1], d[0]), math.pi


def corner_motion(domain: PolygonDomain, p) -> RigidMotion:
    """Rigid motion taking the local corner frame (bisector on +x) to world."""
    start, theta0 = interior_sector(domain, p)
    return RigidMotion((float(p[0]), float(p[1])), start + theta0 / 2)


def corner_frames(domain: PolygonDomain, vertex: tuple[int, int]):
    """Upper/lower side frames at a corner plus the rigid motion used.

    Returns ``(upper, lower, motion)``.  The upper side is the incoming edge
    (it sits at local angle +theta0/2), the lower side the outgoing edge.
    """
    loop, k = vertex
    m = len(domain.loops[loop])
    k %= m
    a_out, theta0 = domain._corner_directions((loop, k))
    if abs(theta0 - math.pi) < FLAT_ANGLE_TOL:
        raise GeometryError("vertex is flat (theta0 = pi), not a corner", loop=loop, edge=k)
    s, c = math.sin(theta0 / 2), math.cos(theta0 / 2)
    scale = max(abs(s), abs(c))
    a, b = s / scale, c / scale
    e_in = (loop, (k - 1) % m)
    e_out = (loop, k)
    upper = CornerFrame(a, b, 1, e_in, domain.bc_of(e_in))
    lower = CornerFrame(a, b, 2, e_out, domain.bc_of(e_out))
    p = domain.loops[loop][k]
    motion = RigidMotion((float(p[0]), float(p[1])), a_out + theta0 / 2)
    return upper, lower, motion


def sector_domain(theta0: float, radius: float = 1.0, bc_upper: str = DIRICHLET,
                  bc_lower: str = DIRICHLET, n_arc: int = 32) -> PolygonDomain:
    """Polygonal sector with its apex at the origin and bisector on +x.

    The straight sides carry the requested conditions; the arc is replaced
    by ``n_arc`` Dirichlet chords whose nearest point is at least
    ``radius * cos(theta0 / (2 n_arc))`` from the apex.
    """
    angles = -theta0 / 2 + theta0 * np.arange(n_arc + 1) / n_arc
    arc = radius * np.column_stack([np.cos(angles), np.sin(angles)])
    verts = [(0.0, 0.0)] + [tuple(q) for q in arc]
    bcs = [bc_lower] + [DIRICHLET] * n_arc + [bc_upper]
    return make_domain([verts], [bcs])
