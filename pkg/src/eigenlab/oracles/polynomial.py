"""Exact check of [-Laplacian, x d/dx + y d/dy] = -2 Laplacian on polynomials.

Polynomials are dicts ``{(a, b): coefficient}`` meaning sum c x^a y^b with
integer coefficients, so every residual is computed exactly.
"""

from __future__ import annotations

from collections import defaultdict

Poly = dict


def _clean(p: Poly) -> Poly:
    return {k: v for k, v in p.items() if v != 0}


def add(*polys: Poly) -> Poly:
    out: dict = defaultdict(int)
    for p in polys:
        for k, v in p.items():
            out[k] += v
    return _clean(out)


def scale(p: Poly, c: int) -> Poly:
    return _clean({k: c * v for k, v in p.items()})


def laplacian(p: Poly) -> Poly:
    out: dict = defaultdict(int)
    for (a, b), c in p.items():
        if a >= 2:
            out[(a - 2, b)] += a * (a - 1) * c
        if b >= 2:
            out[(a, b - 2)] += b * (b - 1) * c
    return _clean(out)


def radial_field(p: Poly) -> Poly:
    """X p with X = x d/dx + y d/dy (Euler operator: degree times term)."""
    return _clean({(a, b): (a + b) * c for (a, b), c in p.items()})


def commutator(p: Poly) -> Poly:
    """[-Delta, X] p = -Delta(X p) + X(Delta p)."""
    return add(scale(laplacian(radial_field(p)), -1), radial_field(laplacian(p)))


def poly_commutator_check(max_degree: int) -> int:
    """Largest coefficient of [-Delta, X] p + 2 Delta p over all monomials."""
    if not 0 <= max_degree <= 12:
        raise ValueError("max_degree must lie in 0..12")
    worst = 0
    for total in range(max_degree + 1):
        for a in range(total + 1):
            p = {(a, total - a): 1}
            resid = add(commutator(p), scale(laplacian(p), 2))
            if resid:
                worst = max(worst, max(abs(v) for v in resid.values()))
    return worst
