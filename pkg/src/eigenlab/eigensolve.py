"""Lowest eigenpairs of the pencil K u = lam^2 M u.

The solver is ARPACK's implicitly restarted Lanczos in shift-invert mode
(via ``scipy.sparse.linalg.eigsh``) with the shifted operator factorised
once by SuperLU.  Around it sit the pieces that make results usable for
analysis: shift perturbation when the factorisation is near singular,
restarts, cluster-wise M-orthonormalisation, deterministic signs, and an
independent residual check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import binio
from .discretize import DiscreteMode, FunctionSpace

MODES_FORMAT = "eigenlab-modes"
MODES_VERSION = 1
CLUSTER_RTOL = 1e-10
_SEED = 20240917


class EigenSolveError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class EigenSpectrum:
    """Eigenpairs sorted by lam^2.

    ``vectors`` has one M-normalised column per pair.  ``residuals`` holds
    relative residuals ||K u - lam^2 M u||_{M^-1} / max(lam^2, 1) as seen at
    the end of the solve; ``converged`` reports ``residuals <= tol``.
    """

    lam2: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    shift: float
    tol: float
    clusters: tuple = ()
    space: FunctionSpace | None = field(default=None, repr=False)

    @property
    def lam(self) -> np.ndarray:
        return np.sqrt(np.clip(self.lam2, 0.0, None))

    @property
    def converged(self) -> np.ndarray:
        return self.residuals <= self.tol

    def __len__(self) -> int:
        return len(self.lam2)

    def modes(self) -> list[DiscreteMode]:
        if self.space is None:
            raise EigenSolveError("spectrum carries no function space")
        full = self.space.expand(self.vectors)
        return [DiscreteMode(full[:, i], float(self.lam[i]), self.space, i)
                for i in range(len(self))]


class _Factor:
    """Sparse LU of a symmetric matrix with a crude singularity check."""

    def __init__(self, a):
        self.lu = spla.splu(sp.csc_matrix(a))
        diag = np.abs(self.lu.U.diagonal())
        self.pivot_ratio = float(diag.min() / diag.max()) if diag.size else 0.0

    def solve(self, b):
        return self.lu.solve(np.asarray(b, dtype=float))


def _factor_shift(k, m, sigma: float, scale: float):
    """Factorise K - sigma M, nudging sigma downward if it is (near) singular."""
    for attempt in range(4):
        try:
            fac = _Factor(k - sigma * m)
        except RuntimeError:
            fac = None
        if fac is not None and fac.pivot_ratio > 1e-13:
            return fac, sigma
        if attempt == 3:
            break
        sigma -= scale * 10.0 ** (attempt - 3)
    raise EigenSolveError("factorisation of K - sigma M failed after 3 shift perturbations")


def _m_norm_residuals(k, m, lam2, vecs, m_solve) -> np.ndarray:
    r = k @ vecs - (m @ vecs) * lam2
    mr = m_solve(r)
    nrm = np.sqrt(np.abs(np.einsum("ij,ij->j", r, mr)))
    return nrm / np.maximum(np.abs(lam2), 1.0)


def _clusters(lam2: np.ndarray) -> list[list[int]]:
    groups: list[list[int]] = []
    for i, v in enumerate(lam2):
        if groups:
            ref = lam2[groups[-1][-1]]
            if abs(v - ref) <= CLUSTER_RTOL * max(abs(v), abs(ref), 1.0):
                groups[-1].append(i)
                continue
        groups.append([i])
    return groups


def _orthonormalise(m, vecs: np.ndarray, groups) -> np.ndarray:
    out = vecs.copy()
    for g in groups:
        block = out[:, g]
        gram = block.T @ (m @ block)
        chol = la.cholesky(0.5 * (gram + gram.T), lower=True)
        out[:, g] = la.solve_triangular(chol, block.T, lower=True).T
    return out


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def _inverse_iteration(solve, m, n: int, maxiter: int, rng):
    """Block inverse iteration with Rayleigh-Ritz; used when ARPACK gives up."""
    x = rng.standard_normal((m.shape[0], n))
    for _ in range(max(1, maxiter)):
        x = solve(m @ x)
        q, _ = np.linalg.qr(x)
        x = q
    return x


def solve_lowest(k, m, n: int, shift: float = 0.0, tol: float = 1e-10,
                 maxiter: int | None = None, strict: bool = True,
                 space: FunctionSpace | None = None) -> EigenSpectrum:
    """The ``n`` smallest eigenpairs of K u = lam^2 M u.

    Parameters
    ----------
    shift : float
        Shift-invert target; it should lie at or below the wanted window.
        Eigenvalues are found nearest the shift, and the run is repeated from
        a lower shift if the computed window does not reach down to zero.
    tol : float
        Required relative residual (see ``EigenSpectrum``).
    maxiter : int, optional
        Lanczos restart cap.  With ``strict=False`` an exhausted cap returns
        the best available approximation instead of raising.
    """
    dim = k.shape[0]
    if n < 1:
        raise EigenSolveError("need n >= 1")
    if n > dim:
        raise EigenSolveError(f"requested {n} modes but only {dim} degrees of freedom")
    k = sp.csc_matrix(k)
    m = sp.csc_matrix(m)
    scale = float(abs(k.diagonal()).sum() / max(abs(m.diagonal()).sum(), 1e-300))
    m_fac = _Factor(m)
    rng = np.random.default_rng(_SEED)
    v0 = rng.standard_normal(dim)
    sigma = float(shift)
    lam2 = vecs = None
    for restart in range(4):
        fac, sigma = _factor_shift(k, m, sigma, scale)
        if n >= dim - 1:
            # ARPACK needs k < n; tiny problems go dense
            w, v = la.eigh(k.toarray(), m.toarray())
            lam2, vecs = w[:n], v[:, :n]
            break
        op = spla.LinearOperator((dim, dim), matvec=fac.solve, dtype=float)
        ncv = min(dim, max(2 * n + 1, n + 20))
        try:
            w, v = spla.eigsh(k, n, m, sigma=sigma, which="LM", OPinv=op, v0=v0,
                              tol=tol * 1e-2, ncv=ncv, maxiter=maxiter)
        except spla.ArpackNoConvergence as exc:
            if not strict:
                if len(exc.eigenvalues) >= n:
                    w, v = exc.eigenvalues, exc.eigenvectors
                else:
                    v = _inverse_iteration(fac.solve, m, n, maxiter or 1, rng)
                    kk, mm = v.T @ (k @ v), v.T @ (m @ v)
                    w, z = la.eigh(0.5 * (kk + kk.T), 0.5 * (mm + mm.T))
                    v = v @ z
                lam2, vecs = w, v
                break
            if restart == 3:
                raise EigenSolveError(f"Lanczos did not converge: {exc}") from exc
            sigma -= scale * 1e-3
            maxiter = None if maxiter is None else 2 * maxiter
            continue
        order = np.argsort(w)
        w, v = w[order], v[:, order]
        reach = float(np.max(np.abs(w - sigma)))
        if sigma - reach <= 0.0 or sigma <= w[0] or restart == 3:
            lam2, vecs = w, v
            break
        # part of [0, sigma) may have been skipped; retry from below
        sigma = min(0.0, sigma - reach) - 1e-6 * scale
    order = np.argsort(lam2)
    lam2, vecs = np.asarray(lam2)[order], np.asarray(vecs)[:, order]
    lam2 = np.where(np.abs(lam2) < 1e-12 * scale, 0.0, lam2)
    groups = _clusters(lam2)
    vecs = _fix_signs(_orthonormalise(m, vecs, groups))
    res = _m_norm_residuals(k, m, lam2, vecs, m_fac.solve)
    spec = EigenSpectrum(lam2, vecs, res, sigma, tol,
                         tuple(tuple(g) for g in groups if len(g) > 1), space)
    if strict and not spec.converged.all():
        bad = np.flatnonzero(~spec.converged)
        raise EigenSolveError(f"residual above tol for modes {bad.tolist()}")
    return spec


def solve_modes(k, m, space: FunctionSpace, n: int, **kw) -> EigenSpectrum:
    return solve_lowest(k, m, n, space=space, **kw)


@dataclass(frozen=True)
class ResidualRow:
    index: int
    lam2: float
    residual: float
    flagged: bool


def residual_report(spectrum: EigenSpectrum, k, m, tol: float | None = None) -> list[ResidualRow]:
    """Residuals recomputed from K, M and the stored vectors.

    A fresh factorisation of M gives the exact M^-1 norm; nothing from the
    solver is reused except the eigenpairs themselves.
    """
    tol = spectrum.tol if tol is None else tol
    m_fac = spla.splu(sp.csc_matrix(m))
    res = _m_norm_residuals(sp.csr_matrix(k), sp.csr_matrix(m), spectrum.lam2, spectrum.vectors,
                            lambda b: m_fac.solve(np.asarray(b, dtype=float)))
    return [ResidualRow(i, float(spectrum.lam2[i]), float(r), bool(not r <= tol))
            for i, r in enumerate(res)]


def m_orthogonality_error(spectrum: EigenSpectrum, m) -> float:
    gram = spectrum.vectors.T @ (m @ spectrum.vectors)
    return float(np.max(np.abs(gram - np.eye(len(spectrum)))))


# ---------------------------------------------------------------------------
# cache


def save_modes(spectrum: EigenSpectrum, path, mesh_digest: str, order: int) -> None:
    meta = {
        "mesh_digest": mesh_digest,
        "order": int(order),
        "shift": spectrum.shift,
        "tol": spectrum.tol,
        "clusters": [list(g) for g in spectrum.clusters],
    }
    binio.write(path, MODES_FORMAT, MODES_VERSION, meta, {
        "lam2": spectrum.lam2, "vectors": spectrum.vectors, "residuals": spectrum.residuals,
    })


def load_modes(path, space: FunctionSpace | None = None, mesh_digest: str | None = None):
    """Read a mode cache; returns (spectrum, meta).  Stale digests raise."""
    meta, arr = binio.read(path, MODES_FORMAT, MODES_VERSION)
    if mesh_digest is not None and meta["mesh_digest"] != mesh_digest:
        raise EigenSolveError("mode cache belongs to a different mesh")
    spec = EigenSpectrum(arr["lam2"], arr["vectors"], arr["residuals"], meta["shift"],
                         meta["tol"], tuple(tuple(g) for g in meta["clusters"]), space)
    return spec, meta


def multiplicity_pattern(values, rtol: float) -> list[int]:
    """Sizes of runs of sorted values whose neighbours agree to ``rtol``."""
    vals = np.sort(np.asarray(values, dtype=float))
    sizes: list[int] = []
    for i, v in enumerate(vals):
        if i and abs(v - vals[i - 1]) <= rtol * max(abs(v), abs(vals[i - 1]), 1.0):
            sizes[-1] += 1
        else:
            sizes.append(1)
    return sizes


def exact_rectangle_lam2(lx: float, ly: float, n: int, dirichlet: bool = True) -> np.ndarray:
    """The ``n`` smallest closed-form eigenvalues pi^2 (m^2/lx^2 + k^2/ly^2)."""
    lo = 1 if dirichlet else 0
    top = lo + int(math.ceil(math.sqrt(n))) + 2
    vals = sorted(math.pi**2 * (a * a / lx**2 + b * b / ly**2)
                  for a in range(lo, top + n) for b in range(lo, top + n))
    return np.array(vals[:n])
