"""Bessel functions of the first kind for real order 0 <= nu <= 50.

Two evaluation schemes are stitched at ``SERIES_LIMIT``:

* x <= SERIES_LIMIT: the power series, summed in extended precision;
* x >  SERIES_LIMIT: the Bessel ODE x^2 y'' + x y' + (x^2 - nu^2) y = 0
  integrated outward from the series region with an 8th order adaptive
  Runge-Kutta scheme (DOP853).  The dense-output solution is cached per
  order and range bucket.

``bessel_j_recurrence`` is an independent check: Miller's backward
recurrence normalised with the Neumann-type sum
(x/2)^nu = sum_k (nu + 2k) Gamma(nu + k) / k! J_{nu+2k}(x).
"""

from __future__ import annotations

import functools
import math

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

NU_MAX = 50.0
X_MAX = 1000.0
SERIES_LIMIT = 10.0
_SERIES_TERMS = 90
_ODE_RTOL = 1e-13


class BesselError(ValueError):
    pass


def _check(nu: float, x: np.ndarray) -> None:
    if not 0.0 <= nu <= NU_MAX:
        raise BesselError(f"order {nu} outside [0, {NU_MAX}]")
    if x.size and (np.nanmin(x) < 0.0 or np.nanmax(x) > X_MAX):
        raise BesselError(f"argument outside [0, {X_MAX}]")


def bessel_j_series(nu: float, x):
    """Power series for J_nu and J_nu' (extended precision accumulation)."""
    x = np.asarray(x, dtype=float)
    xl = x.astype(np.longdouble)
    half = xl / 2
    hh = half * half
    term = np.full(x.shape, np.exp(np.longdouble(-math.lgamma(nu + 1.0))), dtype=np.longdouble)
    total = term.copy()
    dtotal = term * nu
    biggest = np.max(np.abs(term)) if term.size else 0.0
    nu_l = np.longdouble(nu)
    for k in range(1, _SERIES_TERMS):
        kl = np.longdouble(k)
        # denominators in extended precision too: rounding k + nu in double
        # costs digits once the alternating terms grow large
        term = -term * hh / (kl * (kl + nu_l))
        total += term
        dtotal += term * (2 * kl + nu_l)
        # stop once every remaining term is negligible next to the largest one
        mag = np.max(np.abs(term)) if term.size else 0.0
        biggest = max(biggest, mag)
        if k > 2 and mag * (2 * k + nu) <= 1e-22 * biggest and hh.max() < k * (k + nu):
            break
    with np.errstate(divide="ignore", invalid="ignore"):
        pw = half**nu if nu > 0 else np.ones_like(half)
        val = (total * pw).astype(float)
        # J' = sum (2k + nu)/2 (x/2)^(2k+nu-1) / (k! Gamma(k+nu+1)) = dtotal * pw / x
        der = (dtotal * pw / xl).astype(float)
    zero = x == 0.0
    if np.any(zero):
        val = np.where(zero, 1.0 if nu == 0 else 0.0, val)
        if nu == 0 or nu > 1:
            d0 = 0.0
        elif nu == 1:
            d0 = 0.5
        else:
            d0 = np.inf
        der = np.where(zero, d0, der)
    return val, der


def _rhs(nu2: float):
    def f(x, y):
        return [y[1], -y[1] / x - (1.0 - nu2 / (x * x)) * y[0]]

    return f


@functools.lru_cache(maxsize=256)
def _ode_solution(nu: float, x_end: float):
    v0, d0 = bessel_j_series(nu, np.array([SERIES_LIMIT]))
    sol = solve_ivp(
        _rhs(nu * nu), (SERIES_LIMIT, x_end), [float(v0[0]), float(d0[0])],
        method="DOP853", rtol=_ODE_RTOL, atol=1e-300, dense_output=True,
    )
    if not sol.success:
        raise BesselError(f"ODE integration failed for nu={nu}: {sol.message}")
    return sol.sol


def _bucket(x_max: float) -> float:
    if x_max <= 16.0:
        return 16.0
    return min(X_MAX, 2.0 ** math.ceil(math.log2(x_max)))


def bessel_j(nu: float, x, derivative: bool = False):
    """J_nu(x) (and J_nu'(x) when ``derivative``), vectorised over ``x``."""
    nu = float(nu)
    x = np.asarray(x, dtype=float)
    _check(nu, x)
    val = np.empty(x.shape)
    der = np.empty(x.shape)
    low = x <= SERIES_LIMIT
    if np.any(low):
        v, d = bessel_j_series(nu, x[low])
        val[low], der[low] = v, d
    high = ~low
    if np.any(high):
        sol = _ode_solution(nu, _bucket(float(x[high].max())))
        y = sol(x[high])
        val[high], der[high] = y[0], y[1]
    if derivative:
        return val, der
    return val


def bessel_j_second(nu: float, x, val=None, der=None):
    """J_nu'' from the ODE: -J'/x - (1 - nu^2/x^2) J."""
    x = np.asarray(x, dtype=float)
    if val is None or der is None:
        val, der = bessel_j(nu, x, derivative=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        return -der / x - (1.0 - nu * nu / (x * x)) * val


def bessel_j_recurrence(nu: float, x: float) -> float:
    """J_nu(x) by Miller's backward recurrence (scalar, x > 0)."""
    if x <= 0:
        raise BesselError("recurrence needs x > 0")
    n_int = int(math.floor(nu))
    frac = nu - n_int
    top = int(max(nu, x)) + 60
    top += top % 2
    f_next, f_cur = 0.0, 1e-30
    vals = np.zeros(top + 1)
    vals[top] = f_cur
    for m in range(top, 0, -1):
        order = frac + m
        f_prev = 2.0 * order / x * f_cur - f_next
        f_next, f_cur = f_cur, f_prev
        vals[m - 1] = f_cur
        if abs(f_cur) > 1e250:
            vals[m - 1:] /= 1e250
            f_next /= 1e250
            f_cur /= 1e250
    # normalisation sum over even offsets
    log_half = math.log(x / 2)
    total = math.gamma(frac + 1.0) * vals[0]
    for j in range(1, top // 2 + 1):
        coef = (frac + 2 * j) * math.exp(math.lgamma(frac + j) - math.lgamma(j + 1))
        total += coef * vals[2 * j]
    return float(vals[n_int] * math.exp(frac * log_half) / total)


def bessel_zero(nu: float, m: int) -> float:
    """m-th positive zero of J_nu, bracketed on a grid then polished."""
    if m < 1 or m > 100:
        raise BesselError("zero index must lie in 1..100")
    if not 0 <= nu <= NU_MAX:
        raise BesselError(f"order {nu} outside [0, {NU_MAX}]")
    upper = min(X_MAX, (m + nu / 2 + 2) * math.pi + 10.0)
    grid = np.arange(max(nu, 0.05), upper, 0.1)
    vals = bessel_j(nu, grid)
    sign_change = np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]
    if len(sign_change) < m:
        raise BesselError(f"could not bracket zero {m} of J_{nu}")
    i = sign_change[m - 1]
    f = lambda t: float(bessel_j(nu, np.array([t]))[0])
    root = brentq(f, grid[i], grid[i + 1], xtol=1e-15, rtol=1e-15, maxiter=200)
    v, d = bessel_j(nu, np.array([root]), derivative=True)
    if d[0] != 0:
        root -= v[0] / d[0]
    return float(root)
