"""Self-check suites behind ``eigenlab verify``.

Each suite returns a JSON-ready summary::

    {"suite": name, "passed": bool, "seconds": float,
     "checks": [{"name", "value", "limit", "passed"}, ...]}

A check passes when ``value <= limit``; slacks are negated so that the
same convention holds for lower bounds.
"""

from __future__ import annotations

import math
import time

import numpy as np

from .analysis import boundary_terms, commutator_pairing, fit_loglog_slope, proof_ledger
from .cutoff import make_phi1, max_eps
from .geometry import DIRICHLET, NEUMANN
from .oracles import (
    TriangleMode, bessel_j, bessel_j_recurrence, bessel_zero, poly_commutator_check, rectangle_mode,
    sector_harmonic, triangle_mode,
)

SUITES = ("cutoff", "commutator", "lemma-zero", "ledger", "oracle")

CORNER_ANGLES = (math.pi / 3, math.pi / 2, math.pi, 1.5 * math.pi, 1.75 * math.pi)
BC_PAIRS = {"DD": (DIRICHLET, DIRICHLET), "NN": (NEUMANN, NEUMANN), "DN": (DIRICHLET, NEUMANN)}
LAMBDAS = (10.0, 25.0, 60.0)
PAIRING_TOL = 1e-8
BOUNDARY_TOL = 1e-9


def _check(name: str, value: float, limit: float) -> dict:
    value = float(value)
    return {"name": name, "value": value, "limit": float(limit), "passed": bool(value <= limit)}


def _summary(suite: str, checks: list[dict], t0: float) -> dict:
    return {
        "suite": suite,
        "passed": all(c["passed"] for c in checks),
        "seconds": round(time.perf_counter() - t0, 3),
        "checks": checks,
    }


# ---------------------------------------------------------------------------


def cutoff_conditions(delta1: float, delta2: float, eps: float, s: np.ndarray) -> dict:
    """Worst slack of each phi1 condition on the samples ``s`` (>= 0 means held)."""
    phi = make_phi1(delta1, delta2, eps)
    v, d = phi(s), phi.d1(s)
    e3 = eps**3
    lo, hi = s <= delta1 + e3, s >= delta2 - e3
    return {
        "range": float(min(v.min(), (1.0 - v).min())),
        "monotone": float(-d.max()),
        "plateau": float(-np.abs(v[lo] - 1.0).max()) if lo.any() else 0.0,
        "vanish": float(-np.abs(v[hi]).max()) if hi.any() else 0.0,
        "slope": float(1.0 / (delta2 - delta1) + eps - np.abs(d).max()),
    }


def cutoff_suite(n_triples: int = 1000, n_samples: int = 100_000, seed: int = 0) -> dict:
    """phi1 conditions on random (delta1, delta2, eps) triples."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst: dict[str, float] = {}
    for _ in range(n_triples):
        d1 = rng.uniform(0.01, 1.0)
        d2 = d1 + rng.uniform(0.02, 1.0)
        eps = max_eps(d1, d2) * (1.0 - rng.uniform())
        s = rng.uniform(0.0, d2 + 0.1 * (d2 - d1), n_samples)
        # make sure both plateaus are sampled right up to their ends
        s[:2] = (d1 + eps**3, d2 - eps**3)
        for k, v in cutoff_conditions(d1, d2, eps, s).items():
            worst[k] = min(worst.get(k, math.inf), v)
    checks = [_check(f"{k} violation", -v, 1e-9) for k, v in worst.items()]
    return _summary("cutoff", checks, t0)


def commutator_suite(max_degree: int = 12) -> dict:
    t0 = time.perf_counter()
    return _summary("commutator", [_check("max coefficient", poly_commutator_check(max_degree), 0)], t0)


def lemma_zero_cases():
    """(label, mode, p0, domain, cutoff, boundary?) for the identity matrix."""
    cases = []
    phi_int = make_phi1(0.1, 0.4, 0.05)
    for m, n in ((2, 3), (5, 4), (11, 9)):
        u = rectangle_mode(1.0, 1.0, m, n)
        cases.append((f"interior rect({m},{n})", u, (0.45, 0.55), u.domain, phi_int, False))
    phi = make_phi1(0.4, 0.9, 0.1)
    for th in CORNER_ANGLES:
        for tag, pair in BC_PAIRS.items():
            for lam in LAMBDAS:
                u = sector_harmonic(th, 1, lam, pair)
                cases.append((f"theta0={th:.4f} {tag} lam={lam:g}", u, (0.0, 0.0),
                              u.local_domain(), phi, True))
    return cases


def lemma_zero_suite(boundary: bool = True) -> dict:
    """Pairing identity (and boundary-term vanishing) over the case matrix."""
    t0 = time.perf_counter()
    checks = []
    worst_pair = worst_bdry = 0.0
    for label, u, p0, dom, phi, with_bdry in lemma_zero_cases():
        res = commutator_pairing(u, p0, phi, dom).residual
        worst_pair = max(worst_pair, res)
        checks.append(_check(f"pairing {label}", res, PAIRING_TOL))
        if boundary and with_bdry:
            for side in (1, 2):
                bt = boundary_terms(u, p0, phi, side, dom)
                ratio = max(abs(bt.i1), abs(bt.i2)) / (u.lam * bt.scale)
                worst_bdry = max(worst_bdry, ratio)
                checks.append(_check(f"boundary F{side} {label}", ratio, BOUNDARY_TOL))
    checks.append(_check("worst pairing residual", worst_pair, PAIRING_TOL))
    if boundary:
        checks.append(_check("worst boundary ratio", worst_bdry, BOUNDARY_TOL))
    return _summary("lemma-zero", checks, t0)


def remainder_family(ms=range(5, 41), p0=(0.5, 0.5), alpha: float = 0.5):
    """Ledgers for the (m, m) unit-square modes."""
    return [proof_ledger(rectangle_mode(1.0, 1.0, m, m), p0, alpha, mode_index=m) for m in ms]


def ledger_suite(ms=range(5, 41)) -> dict:
    t0 = time.perf_counter()
    ledgers = remainder_family(ms)
    slope = fit_loglog_slope([l.h for l in ledgers], [l.remainder for l in ledgers])
    checks = [
        _check("identity residual", max(l.identity_residual for l in ledgers), PAIRING_TOL),
        _check("remainder slope deficit", 0.9 - slope, 0.0),
    ]
    return _summary("ledger", checks, t0)


def oracle_suite() -> dict:
    """Bessel cross-checks and closed-form mode residuals."""
    t0 = time.perf_counter()
    checks = []
    worst = 0.0
    for nu in (0.0, 0.5, 2.0 / 3.0, 2.0, 7.5, 20.0):
        xs = np.linspace(0.5, 60.0, 40)
        ref = np.array([bessel_j_recurrence(nu, x) for x in xs])
        amp = np.maximum(np.abs(ref).max(), 1e-300)
        worst = max(worst, float(np.abs(bessel_j(nu, xs) - ref).max() / amp))
    checks.append(_check("bessel vs recurrence", worst, 1e-10))
    zero_err = max(abs(float(bessel_j(nu, np.array([bessel_zero(nu, k)]))[0]))
                   for nu in (0.0, 2.0 / 3.0, 4.0) for k in (1, 5, 12))
    checks.append(_check("bessel zeros", zero_err, 1e-12))
    rng = np.random.default_rng(1)
    pts = rng.uniform(0.0, 1.0, (200, 2))
    worst = 0.0
    for u in (rectangle_mode(1.0, 1.0, 3, 4), rectangle_mode(1.0, 2.0, 2, 0, NEUMANN), triangle_mode(5, 2)):
        pts_u = pts[pts[:, 1] < pts[:, 0]] if isinstance(u, TriangleMode) else pts
        res = np.abs(u.laplacian(pts_u) + u.lam**2 * u.value(pts_u)).max() / u.lam**2
        worst = max(worst, float(res))
    for th in CORNER_ANGLES:
        for pair in BC_PAIRS.values():
            u = sector_harmonic(th, 1, 20.0, pair)
            r = rng.uniform(0.05, 1.0, 100)
            a = rng.uniform(-th / 2, th / 2, 100)
            p = np.column_stack([r * np.cos(a), r * np.sin(a)])
            res = np.abs(u.laplacian(p) + u.lam**2 * u.value(p)).max() / u.lam**2
            worst = max(worst, float(res))
    checks.append(_check("eigen-equation residual", worst, 1e-9))
    return _summary("oracle", checks, t0)


def run_suite(name: str) -> dict:
    if name == "cutoff":
        return cutoff_suite()
    if name == "commutator":
        return commutator_suite()
    if name == "lemma-zero":
        return lemma_zero_suite()
    if name == "ledger":
        return ledger_suite()
    if name == "oracle":
        return oracle_suite()
    raise ValueError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
