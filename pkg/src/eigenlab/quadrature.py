"""Polar quadrature over D(center, R) intersected with a polygonal domain.

For each radius the circle is cut into the angular arcs lying inside the
domain (exact circle/segment intersections); Gauss-Legendre runs along each
arc and adaptively over radial panels.  Radii at which the arc structure
changes (vertex distances, perpendicular feet) become panel breakpoints, so
every panel integrand is smooth apart from square-root behaviour at
tangencies, which the bisection handles.
"""

from __future__ import annotations

import functools
import math
from typing import Callable

import numpy as np
import scipy.special

from .geometry import PolygonDomain, contains_many

_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    if n not in _GL_CACHE:
        _GL_CACHE[n] = np.polynomial.legendre.leggauss(n)
    return _GL_CACHE[n]


@functools.lru_cache(maxsize=None)
def triangle_rule(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Collapsed Gauss rule on the reference triangle (0,0), (1,0), (0,1).

    Exact for polynomials of total degree ``degree``.  Returns points (k, 2)
    and weights summing to the reference area 1/2.
    """
    n = max(1, (degree + 2) // 2)
    x, w = gauss_legendre(n)
    # Gauss-Jacobi in the collapsed direction absorbs the (1 - s) Jacobian
    xs, ws = scipy.special.roots_jacobi(n, 1.0, 0.0)
    a = 0.5 * (x + 1.0)
    s = 0.5 * (xs + 1.0)
    pts = np.column_stack([
        np.repeat(s, n),
        (1.0 - np.repeat(s, n)) * np.tile(a, n),
    ])
    wts = np.repeat(ws, n) * np.tile(w, n) / 8.0
    pts.setflags(write=False)
    wts.setflags(write=False)
    return pts, wts


def circle_arcs(domain: PolygonDomain, center, r: float) -> list[tuple[float, float]]:
    """Angular intervals (start, end), end > start, of the circle inside the domain."""
    c = np.asarray(center, dtype=float)
    a = domain.edge_starts - c
    d = domain.edge_ends - domain.edge_starts
    qa = np.einsum("ij,ij->i", d, d)
    qb = 2.0 * np.einsum("ij,ij->i", a, d)
    qc = np.einsum("ij,ij->i", a, a) - r * r
    disc = qb * qb - 4 * qa * qc
    ok = disc >= 0
    angles = []
    if ok.any():
        sq = np.sqrt(disc[ok])
        for sign in (-1.0, 1.0):
            t = (-qb[ok] + sign * sq) / (2 * qa[ok])
            inside = (t >= -1e-12) & (t <= 1 + 1e-12)
            pts = a[ok][inside] + t[inside, None] * d[ok][inside]
            angles.append(np.arctan2(pts[:, 1], pts[:, 0]))
    ang = np.sort(np.concatenate(angles)) if angles else np.array([])
    if ang.size:
        keep = np.concatenate([[True], np.diff(ang) > 1e-13])
        ang = ang[keep]
    if ang.size < 2:
        probe = c + np.array([[r, 0.0]])
        return [(0.0, 2 * math.pi)] if contains_many(domain, probe)[0] else []
    starts = ang
    ends = np.concatenate([ang[1:], [ang[0] + 2 * math.pi]])
    mids = 0.5 * (starts + ends)
    probes = c + r * np.column_stack([np.cos(mids), np.sin(mids)])
    inside = contains_many(domain, probes)
    arcs = []
    for s, e, ins in zip(starts, ends, inside):
        if not ins or e - s < 1e-14:
            continue
        if arcs and abs(arcs[-1][1] - s) < 1e-13:
            arcs[-1] = (arcs[-1][0], e)
        else:
            arcs.append((float(s), float(e)))
    if len(arcs) > 1 and abs(arcs[-1][1] - (arcs[0][0] + 2 * math.pi)) < 1e-13:
        first = arcs.pop(0)
        arcs[-1] = (arcs[-1][0], first[1] + 2 * math.pi)
    return arcs


def radial_breaks(domain: PolygonDomain, center, r_max: float) -> np.ndarray:
    """Radii in (0, r_max) where the circle/domain intersection changes type."""
    c = np.asarray(center, dtype=float)
    out = [np.linalg.norm(domain.vertices - c, axis=1)]
    a = domain.edge_starts - c
    d = domain.edge_ends - domain.edge_starts
    t = -np.einsum("ij,ij->i", a, d) / np.einsum("ij,ij->i", d, d)
    inner = (t > 0) & (t < 1)
    out.append(np.linalg.norm(a[inner] + t[inner, None] * d[inner], axis=1))
    br = np.concatenate(out)
    br = br[(br > 1e-12 * max(r_max, 1.0)) & (br < r_max)]
    return np.unique(np.round(br, 14))


Integrand = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


def _panel_nodes(a: float, b: float, n: int):
    x, w = gauss_legendre(n)
    half = 0.5 * (b - a)
    return 0.5 * (a + b) + half * x, half * w


class PolarIntegrator:
    """Adaptive polar quadrature of integrand(points, r, theta) -> (k, n).

    ``arcs`` maps a radius to its inside arcs; by default the exact circle
    intersection with ``domain`` is used.  The Jacobian r is applied here.
    """

    def __init__(self, domain: PolygonDomain | None, center, arcs=None,
                 bandwidth: float = 0.0, n_r: int = 16, min_theta: int = 24):
        self.domain = domain
        self.center = np.asarray(center, dtype=float)
        self._arcs = arcs
        self.bandwidth = bandwidth
        self.n_r = n_r
        self.min_theta = min_theta

    def arcs(self, r: float):
        if self._arcs is not None:
            return self._arcs(r) if callable(self._arcs) else self._arcs
        return circle_arcs(self.domain, self.center, r)

    def _theta_nodes(self, r: float):
        ts, ws = [], []
        for s, e in self.arcs(r):
            span = e - s
            n = self.min_theta + int(math.ceil(0.75 * self.bandwidth * r * span))
            x, w = gauss_legendre(n)
            ts.append(0.5 * (s + e) + 0.5 * span * x)
            ws.append(0.5 * span * w)
        if not ts:
            return np.array([]), np.array([])
        return np.concatenate(ts), np.concatenate(ws)

    def panel(self, f: Integrand, a: float, b: float):
        """Gauss estimate over one radial panel and the matching integral of |f|."""
        rs, wr = _panel_nodes(a, b, self.n_r)
        pts, rr, tt, ww = [], [], [], []
        for r, w in zip(rs, wr):
            th, wt = self._theta_nodes(r)
            if th.size == 0:
                continue
            pts.append(self.center + r * np.column_stack([np.cos(th), np.sin(th)]))
            rr.append(np.full(th.shape, r))
            tt.append(th)
            ww.append(w * wt * r)
        if not pts:
            return None
        vals = np.atleast_2d(f(np.vstack(pts), np.concatenate(rr), np.concatenate(tt)))
        w = np.concatenate(ww)
        return vals @ w, np.abs(vals) @ w

    def integrate(self, f: Integrand, r_lo: float, r_hi: float, breaks=(),
                  atol: float = 1e-12, rtol: float = 1e-11, max_panels: int = 4000,
                  noise: float = 1e-12):
        """Integral over the annulus r_lo <= r <= r_hi clipped to the domain."""
        edges = [r_lo, r_hi]
        if self.domain is not None:
            edges.extend(radial_breaks(self.domain, self.center, r_hi))
        edges.extend(breaks)
        edges = np.unique([e for e in edges if r_lo <= e <= r_hi])
        # pre-split long panels so oscillatory integrands start resolved
        if self.bandwidth > 0:
            fine = []
            step = max(math.pi / self.bandwidth, 1e-3)
            for a, b in zip(edges[:-1], edges[1:]):
                k = max(1, int(math.ceil((b - a) / (4 * step))))
                fine.extend(np.linspace(a, b, k + 1)[:-1])
            fine.append(edges[-1])
            edges = np.asarray(fine)
        span = r_hi - r_lo
        work = []
        for a, b in zip(edges[:-1], edges[1:]):
            if b - a > 0:
                work.append((a, b, self.panel(f, a, b)))
        scale = sum(np.abs(v[0]) for _, _, v in work if v is not None)
        if isinstance(scale, int):
            return None
        total = np.zeros_like(scale)
        count = len(work)
        self.exhausted = False
        while work:
            a, b, est = work.pop()
            if est is None:
                continue
            m = 0.5 * (a + b)
            left = self.panel(f, a, m)
            right = self.panel(f, m, b)
            parts = [p for p in (left, right) if p is not None]
            refined = sum(p[0] for p in parts) if parts else np.zeros_like(est[0])
            mass = sum(p[1] for p in parts) if parts else np.zeros_like(est[1])
            # integrands built from steep cutoffs carry ~1e-13 relative
            # evaluation noise; differences below that are not resolvable
            tol = np.maximum(np.maximum(atol, rtol * scale) * (b - a) / span, noise * mass)
            count += 2
            if count > max_panels:
                self.exhausted = True
            if np.all(np.abs(refined - est[0]) <= tol) or b - a < 1e-14 * span or self.exhausted:
                total = total + refined
            else:
                work.append((a, m, left))
                work.append((m, b, right))
        return total
