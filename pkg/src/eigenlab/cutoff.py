"""Smooth radial cutoffs with controlled derivative bounds.

``phi2`` is a monotone C-infinity step from 1 (s <= 0) to 0 (s >= 1) with
slope bounded by 1 + eta.  It is the clamped ramp of slope 1 + eta on
[w, 1 - w] convolved with a unit-mass bump of half-width
w = eta / (2 (1 + eta)).  With the step profile

    P(t) = sigmoid(2 t / (1 - t**2)),   -1 < t < 1,

whose derivative is the bump, the convolution reduces to

    phi2'(s) = -(1 + eta) [P((s - w) / w) - P((s - 1 + w) / w)]
    phi2(s)  = 1 - (1 + eta) w [Q((s - w) / w) - Q((s - 1 + w) / w)]

with Q the running integral of P.  Q is the only non-closed-form piece;
it is tabulated once (Gauss panels + Hermite interpolation) and can also
be evaluated by direct adaptive quadrature.

``phi1`` rescales ``phi2`` onto [delta1 + eps**3, delta2 - eps**3] using
eta = eps**2, and ``psi`` is a product of two short steps equal to one on
that interval and supported in [delta1, delta2].
"""

from __future__ import annotations

import dataclasses
import functools
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

_TABLE_SIZE = 10_000


class CutoffError(ValueError):
    pass


def _step_parts(t, order: int = 2):
    """P, P', P'' of the smooth step on [-1, 1] (0 left of -1, 1 right of 1).

    Derivatives above ``order`` are returned as None.
    """
    t = np.asarray(t, dtype=float)
    p = (t >= 1.0).astype(float)
    dp = np.zeros(t.shape) if order >= 1 else None
    d2p = np.zeros(t.shape) if order >= 2 else None
    inner = np.abs(t) < 1.0
    if inner.any():
        ti = t[inner]
        om = 1.0 - ti * ti
        z = 2.0 * ti / om
        # sigmoid and sigmoid' computed without overflow
        e = np.exp(-np.abs(z))
        sig = np.where(z >= 0, 1.0, e) / (1.0 + e)
        p[inner] = sig
        if order >= 1:
            sp = e / (1.0 + e) ** 2
            z1 = 2.0 * (1.0 + ti * ti) / om**2
            dp[inner] = sp * z1
        if order >= 2:
            z2 = 4.0 * ti * (3.0 + ti * ti) / om**3
            d2p[inner] = sp * (1.0 - 2.0 * sig) * z1 * z1 + sp * z2
    return p, dp, d2p


def _step(t):
    return _step_parts(t, 0)[0]


@functools.lru_cache(maxsize=1)
def _q_table():
    """Q(t) = int_{-1}^t P on a uniform grid, exact to rounding."""
    grid = np.linspace(-1.0, 1.0, _TABLE_SIZE + 1)
    xg, wg = np.polynomial.legendre.leggauss(12)
    a, b = grid[:-1], grid[1:]
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    nodes = mid[:, None] + half[:, None] * xg[None, :]
    panel = half * (_step(nodes) * wg[None, :]).sum(axis=1)
    q = np.concatenate([[0.0], np.cumsum(panel)])
    return grid, q, _step(grid)


def _q_interp(t: np.ndarray) -> np.ndarray:
    """Cubic Hermite interpolation of the Q table at points inside (-1, 1)."""
    grid, q, slope = _q_table()
    dx = grid[1] - grid[0]
    x = (t + 1.0) / dx
    i = np.minimum(x.astype(np.intp), len(grid) - 2)
    u = x - i
    u2, u3 = u * u, u * u * u
    h00 = 2 * u3 - 3 * u2 + 1
    h10 = u3 - 2 * u2 + u
    h01 = -2 * u3 + 3 * u2
    h11 = u3 - u2
    return h00 * q[i] + h01 * q[i + 1] + dx * (h10 * slope[i] + h11 * slope[i + 1])


def _q_exact_scalar(t: float) -> float:
    if t <= -1.0:
        return 0.0
    if t >= 1.0:
        return t
    # P(tau) + P(-tau) = 1 gives Q(t) = Q(-t) + t
    if t > 0.0:
        return _q_exact_scalar(-t) + t
    # the requested accuracy sits at the roundoff floor; quad says so noisily
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, _ = integrate.quad(_step_scalar, -1.0, t, epsabs=1e-16, epsrel=1e-14, limit=200)
    return val


def _step_scalar(t: float) -> float:
    return float(_step(np.array([t]))[0])


def step_integral(t, exact: bool = False):
    """Q(t) = int_{-1}^t P(tau) dtau."""
    t = np.asarray(t, dtype=float)
    if exact:
        flat = np.array([_q_exact_scalar(float(v)) for v in t.ravel()])
        return flat.reshape(t.shape)
    out = np.where(t >= 1.0, t, 0.0)
    inner = np.abs(t) < 1.0
    if np.any(inner):
        out[inner] = _q_interp(t[inner])
    return out


@dataclass(frozen=True)
class CutoffFunction:
    """Radial profile ``s -> phi(s)`` with first and second derivatives.

    ``kind`` is one of ``"phi2"``, ``"phi1"``, ``"psi"``.  ``scale``
    multiplies every output (``scale=0`` gives the zero function).
    """

    kind: str
    eta: float
    delta1: float = 0.0
    delta2: float = 1.0
    eps: float = 0.0
    scale: float = 1.0
    exact: bool = False

    # ---- parameters of the rescaling used by phi1 ----
    @property
    def delta(self) -> float:
        return self.delta2 - self.delta1

    @property
    def w(self) -> float:
        return self.eta / (2.0 * (1.0 + self.eta))

    @property
    def _offset(self) -> float:
        return self.delta1 + self.eps**3 if self.kind == "phi1" else 0.0

    @property
    def _width(self) -> float:
        return self.delta - 2.0 * self.eps**3 if self.kind == "phi1" else 1.0

    @property
    def plateau_end(self) -> float:
        """Largest s where phi1/phi2 are still identically one."""
        return self._offset

    @property
    def support_end(self) -> float:
        """Smallest s beyond which the function vanishes identically."""
        if self.kind == "psi":
            return self.delta2
        return self._offset + self._width

    def breakpoints(self) -> np.ndarray:
        """Points separating regions where the profile changes character."""
        if self.kind == "psi":
            e3 = self.eps**3
            return np.array([self.delta1, self.delta1 + e3, self.delta2 - e3, self.delta2])
        w = self.w
        u = np.array([0.0, 2 * w, 1.0 - 2 * w, 1.0])
        return self._offset + self._width * u

    def with_exact(self, exact: bool = True) -> "CutoffFunction":
        return dataclasses.replace(self, exact=exact)

    def scaled(self, factor: float) -> "CutoffFunction":
        return dataclasses.replace(self, scale=self.scale * factor)

    # ---- evaluation ----
    def _phi2_parts(self, s, order: int):
        # step arguments measured from their centres in s, which avoids
        # cancellation in u - 1 + w near the outer edge
        eta, w = self.eta, self.w
        off, width = self._offset, self._width
        half = w * width
        ta = (s - (off + half)) / half
        tb = (s - (off + width - half)) / half
        if order == 0:
            qa = step_integral(ta, self.exact)
            qb = step_integral(tb, self.exact)
            val = 1.0 - (1.0 + eta) * w * (qa - qb)
            return np.where(s <= off, 1.0, np.where(s >= off + width, 0.0, val))
        if order == 1:
            return -(1.0 + eta) / width * (_step(ta) - _step(tb))
        _, dpa, _ = _step_parts(ta, 1)
        _, dpb, _ = _step_parts(tb, 1)
        return -(1.0 + eta) / (w * width**2) * (dpa - dpb)

    def _psi_parts(self, s, order: int):
        e3 = self.eps**3
        ta = (s - (self.delta1 + 0.5 * e3)) / (0.5 * e3)
        tb = ((self.delta2 - 0.5 * e3) - s) / (0.5 * e3)
        k = 2.0 / e3
        if order == 0:
            return _step(ta) * _step(tb)
        pa, dpa, d2pa = _step_parts(ta, order)
        pb, dpb, d2pb = _step_parts(tb, order)
        if order == 1:
            return k * dpa * pb - k * pa * dpb
        return k * k * (d2pa * pb - 2.0 * dpa * dpb + pa * d2pb)

    def _eval(self, s, order: int):
        s = np.asarray(s, dtype=float)
        flat = np.atleast_1d(s)
        if self.kind == "psi":
            out = self._psi_parts(flat, order)
        else:
            out = self._phi2_parts(flat, order)
        out = self.scale * np.asarray(out).reshape(s.shape)
        return out[()] if out.ndim == 0 else out

    def __call__(self, s):
        return self._eval(s, 0)

    def value(self, s):
        return self._eval(s, 0)

    def d1(self, s):
        return self._eval(s, 1)

    def d2(self, s):
        return self._eval(s, 2)

    def derivative_bound(self) -> float:
        """Upper bound on |phi'| guaranteed by construction."""
        if self.kind == "phi2":
            return self.scale * (1.0 + self.eta)
        if self.kind == "phi1":
            return self.scale * (1.0 / self.delta + self.eps)
        raise CutoffError("no derivative bound is tracked for psi")


def make_phi2(eta: float, exact: bool = False) -> CutoffFunction:
    if not eta > 0 or eta > 1:
        raise CutoffError(f"eta must lie in (0, 1], got {eta}")
    return CutoffFunction("phi2", eta=float(eta), exact=exact)


def max_eps(delta1: float, delta2: float) -> float:
    return min((delta2 - delta1) / 4.0, 0.5)


def make_phi1(delta1: float, delta2: float, eps: float, exact: bool = False) -> CutoffFunction:
    """phi1(s) = phi2((s - (delta1 + eps^3)) / (delta - 2 eps^3)) with eta = eps^2."""
    if not 0 < delta1 < delta2:
        raise CutoffError(f"need 0 < delta1 < delta2, got {delta1}, {delta2}")
    if not 0 < eps <= max_eps(delta1, delta2):
        raise CutoffError(
            f"eps must lie in (0, {max_eps(delta1, delta2):.6g}], got {eps}"
        )
    return CutoffFunction(
        "phi1", eta=float(eps) ** 2, delta1=float(delta1), delta2=float(delta2),
        eps=float(eps), exact=exact,
    )


def make_psi(phi1: CutoffFunction) -> CutoffFunction:
    """Companion cutoff: one on supp phi1', supported in [delta1, delta2]."""
    if phi1.kind != "phi1":
        raise CutoffError(f"make_psi needs a phi1 cutoff, got kind {phi1.kind!r}")
    return dataclasses.replace(phi1, kind="psi", scale=1.0)


def taylor_bound_check(t: float) -> tuple[float, float]:
    """(1/(1-t), 1 + t/(1-t)^2); the second dominates the first on [0, 1/2]."""
    if not 0.0 <= t <= 0.5:
        raise CutoffError(f"t must lie in [0, 1/2], got {t}")
    return 1.0 / (1.0 - t), 1.0 + t / (1.0 - t) ** 2


def slope_chain(delta1: float, delta2: float, eps: float) -> tuple[float, float]:
    """Left and right sides of (1 + eps^2)/(delta - 2 eps^3) <= 1/delta + eps."""
    delta = delta2 - delta1
    return (1.0 + eps**2) / (delta - 2.0 * eps**3), 1.0 / delta + eps
