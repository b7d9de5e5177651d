"""Numbered acceptance criteria.

Each test carries ``@pytest.mark.acceptance(n)``; the terminal summary prints
one PASS/FAIL line per criterion with the measured figures.
"""

import math
import time

import numpy as np
import pytest

from eigenlab.analysis import bound_value, local_masses, mass_profile, report
from eigenlab.discretize import assemble, triangulate
from eigenlab.eigensolve import exact_rectangle_lam2, multiplicity_pattern, solve_lowest, solve_modes
from eigenlab.geometry import l_shape, unit_square
from eigenlab.oracles import poly_commutator_check, rectangle_mode, triangle_mode
from eigenlab.verify import PAIRING_TOL, BOUNDARY_TOL, cutoff_suite, ledger_suite, lemma_zero_suite

ALPHAS = (0.25, 0.5, 0.75)
SQUARE_POINTS = ((0.0, 0.0), (0.5, 0.0), (0.5, 0.5))


def _timed(fn, *args, **kw):
    t0 = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - t0


@pytest.fixture(scope="module")
def lemma_zero():
    return _timed(lemma_zero_suite)


def _spectrum(domain, h, n):
    k, m, space = assemble(triangulate(domain, h), 2)
    return solve_modes(k, m, space, n)


@pytest.fixture(scope="module")
def square_run():
    t0 = time.perf_counter()
    spec = _spectrum(unit_square(), 0.03, 320)
    modes = spec.modes()
    profiles = {p: mass_profile(modes, p, ALPHAS) for p in SQUARE_POINTS}
    return spec, modes, profiles, time.perf_counter() - t0


@pytest.fixture(scope="module")
def lshape_run():
    t0 = time.perf_counter()
    dom = l_shape()
    spec = _spectrum(dom, 0.02, 200)
    modes = spec.modes()
    profile = mass_profile(modes, (1.0, 1.0), ALPHAS, dom)
    return spec, modes, profile, time.perf_counter() - t0


@pytest.mark.acceptance(1)
def test_exact_commutator(record_property):
    value, secs = _timed(poly_commutator_check, 12)
    record_property("detail", f"max coefficient {value} in {secs:.2f} s")
    assert value == 0
    assert secs < 1.0


@pytest.mark.acceptance(2)
def test_cutoff_conditions(record_property):
    summary, secs = _timed(cutoff_suite)
    worst = max(c["value"] for c in summary["checks"])
    record_property("detail", f"worst violation {worst:.2e} over 1000 x 1e5 samples in {secs:.1f} s")
    assert summary["passed"]
    assert secs < 30.0


@pytest.mark.acceptance(3)
def test_pairing_identity(lemma_zero, record_property):
    summary, secs = lemma_zero
    pairs = [c for c in summary["checks"] if c["name"].startswith("pairing")]
    worst = max(c["value"] for c in pairs)
    record_property("detail", f"{len(pairs)} cases, worst residual {worst:.2e} in {secs:.1f} s")
    assert len(pairs) == 48
    assert worst <= PAIRING_TOL
    assert secs < 120.0


@pytest.mark.acceptance(4)
def test_boundary_terms(lemma_zero, record_property):
    summary, _ = lemma_zero
    terms = [c for c in summary["checks"] if c["name"].startswith("boundary")]
    worst = max(c["value"] for c in terms)
    record_property("detail", f"{len(terms)} side traces, worst ratio {worst:.2e}")
    assert len(terms) == 90
    assert worst <= BOUNDARY_TOL


@pytest.mark.acceptance(5)
def test_solver_fidelity(record_property):
    t0 = time.perf_counter()
    spec = _spectrum(unit_square(), 0.05, 20)
    exact = exact_rectangle_lam2(1.0, 1.0, 20)
    rel = float(np.abs(spec.lam2 / exact - 1).max())
    pattern_ok = multiplicity_pattern(spec.lam2, 1e-3) == multiplicity_pattern(exact, 1e-9)
    hs = np.array([0.2, 0.1, 0.05])
    err = []
    for h in hs:
        k, m, _ = assemble(triangulate(unit_square(), h), 2)
        err.append(solve_lowest(k, m, 1).lam2[0] - 2 * math.pi**2)
    order = float(np.polyfit(np.log(hs), np.log(err), 1)[0])
    secs = time.perf_counter() - t0
    record_property("detail", f"max rel error {rel:.2e}, multiplicities "
                    f"{'match' if pattern_ok else 'differ'}, P2 order {order:.2f}, {secs:.1f} s")
    assert rel <= 5e-3
    assert pattern_ok
    assert order >= 3.8
    assert secs < 120.0


def _top_window_rows(profile, alpha):
    sub = profile.select(alpha=alpha)
    return sub, sub.top_window(0.5)


@pytest.mark.acceptance(6)
def test_non_concentration(square_run, lshape_run, tmp_path_factory, record_property):
    spec, _, profiles, sq_secs = square_run
    lspec, _, lprofile, l_secs = lshape_run
    worst_slack = math.inf
    low_flags = 0
    lines = []
    cases = [(f"square {p}", profiles[p]) for p in SQUARE_POINTS] + [("lshape (1, 1)", lprofile)]
    for label, prof in cases:
        for a in ALPHAS:
            sub, top = _top_window_rows(prof, a)
            peak = max(r.disc_mass for r in top.rows)
            worst_slack = min(worst_slack, bound_value(a) - peak)
            low_flags += len(sub.exceedances()) - len(top.exceedances())
            lines.append(f"{label} alpha={a}: top-window max {peak:.4f} vs {bound_value(a):.4f}")
    out = tmp_path_factory.mktemp("acc6")
    merged = profiles[SQUARE_POINTS[0]]
    for p in SQUARE_POINTS[1:]:
        merged = merged.extend(profiles[p])
    csv_path = report(merged, [], out / "square")[0]
    flagged = [r for r in merged.exceedances()]
    secs = sq_secs + l_secs
    record_property("detail", f"{len(spec)} square + {len(lspec)} L modes, worst top-window slack "
                    f"{worst_slack:.4f}, {low_flags} low-frequency exceedances flagged, {secs:.0f} s")
    print("\n".join(lines))
    assert len(spec) >= 300
    assert worst_slack >= 0
    assert csv_path.read_text().count("\n") == len(merged) + 1
    assert all(r.slack < 0 for r in flagged)
    assert secs < 600.0


@pytest.mark.acceptance(7)
def test_remainder_decay(record_property):
    summary, secs = _timed(ledger_suite)
    deficit = next(c["value"] for c in summary["checks"] if c["name"] == "remainder slope deficit")
    ident = next(c["value"] for c in summary["checks"] if c["name"] == "identity residual")
    record_property("detail", f"fitted slope {0.9 - deficit:.3f} over m = 5..40, "
                    f"identity residual {ident:.1e}, {secs:.0f} s")
    assert summary["passed"]


@pytest.mark.acceptance(8)
def test_mass_bookkeeping(square_run, lshape_run, record_property):
    _, modes, profiles, _ = square_run
    _, lmodes, lprofile, _ = lshape_run
    full = np.concatenate([
        local_masses(modes, (0.5, 0.5), 2.0),
        local_masses(lmodes, (1.0, 1.0), 3.0),
        [local_masses([u], (0.3, 0.3), 3.0)[0]
         for u in (rectangle_mode(1.0, 1.0, 7, 3), rectangle_mode(2.0, 1.0, 1, 4, "neumann"),
                   triangle_mode(6, 2))],
    ])
    worst_full = float(np.abs(full - 1.0).max())
    worst_drop = 0.0
    for prof in list(profiles.values()) + [lprofile]:
        by_mode = {}
        for r in prof.rows:
            by_mode.setdefault(r.mode_index, []).append((r.alpha, r.disc_mass))
        for seq in by_mode.values():
            masses = [m for _, m in sorted(seq)]
            worst_drop = max(worst_drop, float(-np.diff(masses).min()))
    record_property("detail", f"{len(full)} modes, worst |mass - 1| {worst_full:.1e}, "
                    f"largest decrease in alpha {max(worst_drop, 0.0):.1e}")
    assert worst_full <= 1e-6
    assert worst_drop <= 0.0
