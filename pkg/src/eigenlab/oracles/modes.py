"""Closed-form eigenfunctions with exact values, gradients and Hessians."""

from __future__ import annotations

import math

import numpy as np

from ..geometry import DIRICHLET, NEUMANN, PolygonDomain, RigidMotion, make_domain, rectangle, sector_domain
from .bessel import bessel_j, bessel_j_second

_IDENTITY = RigidMotion((0.0, 0.0), 0.0)


class ModeError(ValueError):
    pass


class AnalyticMode:
    """Base class: subclasses provide value/gradient/hessian on (n, 2) arrays."""

    lam: float
    local: bool = False
    bc: str = ""

    @property
    def h(self) -> float:
        return 1.0 / self.lam

    @property
    def domain(self) -> PolygonDomain | None:
        return None

    def value(self, pts) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, pts) -> np.ndarray:
        raise NotImplementedError

    def hessian(self, pts) -> np.ndarray:
        raise NotImplementedError

    def evaluate(self, pts):
        return self.value(pts), self.gradient(pts)

    def laplacian(self, pts) -> np.ndarray:
        hs = self.hessian(pts)
        return hs[:, 0, 0] + hs[:, 1, 1]


def _pts(pts) -> np.ndarray:
    pts = np.asarray(pts, dtype=float)
    return pts.reshape(-1, 2)


class RectangleMode(AnalyticMode):
    """Separable mode on [0, Lx] x [0, Ly], all-Dirichlet or all-Neumann."""

    def __init__(self, lx: float, ly: float, m: int, n: int, bc: str = DIRICHLET):
        if bc == DIRICHLET and (m < 1 or n < 1):
            raise ModeError("Dirichlet rectangle modes need m, n >= 1")
        if bc == NEUMANN and (m < 0 or n < 0):
            raise ModeError("Neumann rectangle modes need m, n >= 0")
        if bc not in (DIRICHLET, NEUMANN):
            raise ModeError(f"unsupported bc {bc!r}")
        self.lx, self.ly, self.m, self.n, self.bc = float(lx), float(ly), int(m), int(n), bc
        self.kx = m * math.pi / lx
        self.ky = n * math.pi / ly
        self.lam = math.hypot(self.kx, self.ky)
        if bc == DIRICHLET:
            self.amp = 2.0 / math.sqrt(lx * ly)
        else:
            cm = 1.0 if m == 0 else math.sqrt(2.0)
            cn = 1.0 if n == 0 else math.sqrt(2.0)
            self.amp = cm * cn / math.sqrt(lx * ly)

    @property
    def domain(self) -> PolygonDomain:
        return rectangle(self.lx, self.ly, self.bc)

    def _factors(self, pts):
        p = _pts(pts)
        ax, ay = self.kx * p[:, 0], self.ky * p[:, 1]
        if self.bc == DIRICHLET:
            fx, dfx = np.sin(ax), self.kx * np.cos(ax)
            fy, dfy = np.sin(ay), self.ky * np.cos(ay)
        else:
            fx, dfx = np.cos(ax), -self.kx * np.sin(ax)
            fy, dfy = np.cos(ay), -self.ky * np.sin(ay)
        return fx, dfx, fy, dfy

    def value(self, pts):
        fx, _, fy, _ = self._factors(pts)
        return self.amp * fx * fy

    def gradient(self, pts):
        fx, dfx, fy, dfy = self._factors(pts)
        return self.amp * np.column_stack([dfx * fy, fx * dfy])

    def hessian(self, pts):
        fx, dfx, fy, dfy = self._factors(pts)
        out = np.empty((len(fx), 2, 2))
        out[:, 0, 0] = -self.kx**2 * fx * fy
        out[:, 1, 1] = -self.ky**2 * fx * fy
        out[:, 0, 1] = out[:, 1, 0] = dfx * dfy
        return self.amp * out


def rectangle_mode(lx: float, ly: float, m: int, n: int, bc: str = DIRICHLET) -> RectangleMode:
    return RectangleMode(lx, ly, m, n, bc)


class TriangleMode(AnalyticMode):
    """Dirichlet mode of the right isosceles triangle {0 < y < x < 1}:
    2 [sin(m pi x) sin(n pi y) - sin(n pi x) sin(m pi y)]."""

    bc = DIRICHLET

    def __init__(self, m: int, n: int):
        if not m > n >= 1:
            raise ModeError("triangle modes need m > n >= 1")
        self.m, self.n = int(m), int(n)
        self.lam = math.pi * math.hypot(m, n)
        self._a = RectangleMode(1.0, 1.0, m, n)
        # the square modes carry amplitude 2, which is already the triangle norm
        self._b = RectangleMode(1.0, 1.0, n, m)

    @property
    def domain(self) -> PolygonDomain:
        return make_domain([[(0, 0), (1, 0), (1, 1)]], [[DIRICHLET] * 3])

    def value(self, pts):
        return self._a.value(pts) - self._b.value(pts)

    def gradient(self, pts):
        return self._a.gradient(pts) - self._b.gradient(pts)

    def hessian(self, pts):
        return self._a.hessian(pts) - self._b.hessian(pts)


def triangle_mode(m: int, n: int) -> TriangleMode:
    return TriangleMode(m, n)


class SectorHarmonic(AnalyticMode):
    """Local corner solution J_nu(lam r) A(theta + theta0/2).

    Coordinates are those of the corner frame (apex at the origin, interior
    bisector along +x) mapped to the world by ``motion``.  ``bc_pair`` gives
    the conditions on the upper side F1 (local angle +theta0/2) and the
    lower side F2 (local angle -theta0/2).
    """

    local = True

    def __init__(self, theta0: float, k: int, lam: float, bc_pair=(DIRICHLET, DIRICHLET),
                 motion: RigidMotion = _IDENTITY):
        if not 0 < theta0 < 2 * math.pi:
            raise ModeError("corner angle must lie in (0, 2 pi)")
        if not lam > 0:
            raise ModeError("lam must be positive")
        upper, lower = (str(b).lower() for b in bc_pair)
        if upper not in (DIRICHLET, NEUMANN) or lower not in (DIRICHLET, NEUMANN):
            raise ModeError(f"unsupported bc pair {bc_pair!r}")
        if upper == lower == DIRICHLET:
            if k < 1:
                raise ModeError("Dirichlet/Dirichlet harmonics need k >= 1")
            nu, kind = k * math.pi / theta0, "sin"
        elif upper == lower == NEUMANN:
            if k < 0:
                raise ModeError("Neumann/Neumann harmonics need k >= 0")
            nu, kind = k * math.pi / theta0, "cos"
        else:
            if k < 0:
                raise ModeError("mixed harmonics need k >= 0")
            nu = (k + 0.5) * math.pi / theta0
            # Neumann at angle 0 (lower) -> cosine; Dirichlet at 0 -> sine
            kind = "cos" if lower == NEUMANN else "sin"
        self.theta0, self.k, self.lam = float(theta0), int(k), float(lam)
        self.bc_pair = (upper, lower)
        self.bc = f"{upper[0].upper()}{lower[0].upper()}"
        self.nu, self.kind, self.motion = nu, kind, motion

    def local_domain(self, radius: float = 1.0, n_arc: int = 32) -> PolygonDomain:
        """Polygonal sector carrying this harmonic's side conditions."""
        base = sector_domain(self.theta0, radius, self.bc_pair[0], self.bc_pair[1], n_arc)
        if self.motion == _IDENTITY:
            return base
        loops = [self.motion.to_world(loop) for loop in base.loops]
        return make_domain(loops, [list(b) for b in base.edge_bc])

    @property
    def apex(self) -> np.ndarray:
        return np.asarray(self.motion.origin, dtype=float)

    def _angular(self, phi):
        nu = self.nu
        if self.kind == "sin":
            return np.sin(nu * phi), nu * np.cos(nu * phi)
        return np.cos(nu * phi), -nu * np.sin(nu * phi)

    def _polar(self, pts):
        loc = self.motion.to_local(_pts(pts))
        r = np.hypot(loc[:, 0], loc[:, 1])
        theta = np.arctan2(loc[:, 1], loc[:, 0])
        return loc, r, theta

    def value(self, pts):
        _, r, theta = self._polar(pts)
        a, _ = self._angular(theta + self.theta0 / 2)
        return bessel_j(self.nu, self.lam * r) * a

    def gradient(self, pts):
        return self._derivs(pts, second=False)[1]

    def evaluate(self, pts):
        return self._derivs(pts, second=False)

    def hessian(self, pts):
        return self._derivs(pts, second=True)

    def _derivs(self, pts, second: bool):
        _, r, theta = self._polar(pts)
        r = np.maximum(r, 1e-300)
        x = self.lam * r
        j, dj = bessel_j(self.nu, x, derivative=True)
        a, da = self._angular(theta + self.theta0 / 2)
        c, s = np.cos(theta), np.sin(theta)
        u_r = self.lam * dj * a
        u_t = j * da
        rot = self.motion.rotation
        if not second:
            gx = c * u_r - s * u_t / r
            gy = s * u_r + c * u_t / r
            return j * a, np.column_stack([gx, gy]) @ rot.T
        d2j = bessel_j_second(self.nu, x, j, dj)
        u_rr = self.lam**2 * d2j * a
        u_rt = self.lam * dj * da
        u_tt = -self.nu**2 * j * a
        r2 = r * r
        hxx = c * c * u_rr - 2 * s * c / r * u_rt + s * s / r2 * u_tt + s * s / r * u_r + 2 * s * c / r2 * u_t
        hyy = s * s * u_rr + 2 * s * c / r * u_rt + c * c / r2 * u_tt + c * c / r * u_r - 2 * s * c / r2 * u_t
        hxy = (s * c * u_rr + (c * c - s * s) / r * u_rt - s * c / r2 * u_tt
               - s * c / r * u_r - (c * c - s * s) / r2 * u_t)
        loc_h = np.empty((len(r), 2, 2))
        loc_h[:, 0, 0], loc_h[:, 1, 1] = hxx, hyy
        loc_h[:, 0, 1] = loc_h[:, 1, 0] = hxy
        return rot @ loc_h @ rot.T


def sector_harmonic(theta0: float, k: int, lam: float, bc_pair=(DIRICHLET, DIRICHLET),
                    motion: RigidMotion = _IDENTITY) -> SectorHarmonic:
    return SectorHarmonic(theta0, k, lam, bc_pair, motion)
