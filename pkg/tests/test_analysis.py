import math

import numpy as np
import pytest

from eigenlab.analysis import (
    CSV_COLUMNS, LEDGER_COLUMNS, AnalysisError, MassProfile, boundary_terms, bound_value,
    commutator_pairing, default_eps, fit_loglog_slope, ledger_csv, local_mass, local_masses,
    mass_profile, profile_csv, proof_ledger, report,
)
from eigenlab.cutoff import make_phi1
from eigenlab.discretize import assemble, triangulate
from eigenlab.eigensolve import solve_modes
from eigenlab.geometry import DIRICHLET, NEUMANN, unit_square
from eigenlab.oracles import rectangle_mode, sector_harmonic, triangle_mode

# 10^6-sample Monte Carlo estimate (seed 12345) of the (1,1) mass in D((0.5,0.5), 0.25)
MC_MASS = 0.577567548353727
MC_SE = 1.1093205976122535e-4

# corner pairing (theta0 = pi/2, nu = 2, lam = 20, phi1(0.4, 0.9, 0.1)) from
# scipy's jv and nested adaptive quadrature
CORNER_LHS = 0.016065329597911054
CORNER_RHS = 0.016065329597911068


def test_disc_mass_matches_monte_carlo():
    mass = local_mass(rectangle_mode(1.0, 1.0, 1, 1), (0.5, 0.5), 0.25)
    assert abs(mass - MC_MASS) <= 3 * MC_SE


def test_full_mass_analytic():
    for u, p0 in ((rectangle_mode(1.0, 1.0, 3, 7), (0.2, 0.9)),
                  (rectangle_mode(2.0, 1.0, 2, 3, NEUMANN), (2.0, 0.0)),
                  (triangle_mode(4, 1), (0.7, 0.2))):
        assert local_mass(u, p0, 10.0) == pytest.approx(1.0, abs=1e-6)


def test_full_mass_discrete(square_p2):
    mesh, k, m, space, spec = square_p2
    masses = local_masses(spec.modes(), (0.5, 0.5), 2.0)
    assert np.abs(masses - 1.0).max() <= 1e-12


def test_mass_shrinks_to_zero():
    u = rectangle_mode(1.0, 1.0, 2, 3)
    radii = [0.3, 0.1, 0.03, 0.01, 0.001]
    masses = [local_mass(u, (0.4, 0.4), r) for r in radii]
    assert np.all(np.diff(masses) < 0)
    assert masses[-1] < 1e-5


def test_mass_shrinks_discrete(square_p2):
    mode = square_p2[4].modes()[3]
    masses = [local_mass(mode, (0.0, 0.5), r) for r in (0.4, 0.2, 0.1, 0.05, 0.01)]
    assert np.all(np.diff(masses) < 0) and masses[-1] < 1e-4


def test_fem_mass_agrees_with_analytic(square_p2):
    mode = square_p2[4].modes()[0]
    exact = local_mass(rectangle_mode(1.0, 1.0, 1, 1), (0.5, 0.5), 0.25)
    assert local_mass(mode, (0.5, 0.5), 0.25) == pytest.approx(exact, abs=1e-4)


def test_rejects_bad_radius():
    with pytest.raises(AnalysisError):
        local_mass(rectangle_mode(1.0, 1.0, 1, 1), (0.5, 0.5), 0.0)


def test_bound_value_examples():
    assert bound_value(0.5) == pytest.approx(2.0 / 3.0)
    assert bound_value(1e-12) == pytest.approx(0.5)
    assert bound_value(1 - 1e-12) == pytest.approx(1.0)
    grid = np.linspace(0.001, 0.999, 1000)
    assert np.all(np.diff([bound_value(a) for a in grid]) > 0)
    for a in (0.0, 1.0, -0.2, 1.5):
        with pytest.raises(AnalysisError):
            bound_value(a)


def test_profile_corner_radius():
    prof = mass_profile([rectangle_mode(1.0, 1.0, 1, 1)], (0.0, 0.0), [0.5])
    (row,) = prof.rows
    assert row.d == 1.0 and row.alpha * row.d == 0.5
    assert row.point_class == "convex_corner"
    assert row.theta0 == pytest.approx(math.pi / 2)
    assert row.bound == pytest.approx(2 / 3) and row.slack == pytest.approx(row.bound - row.disc_mass)


def test_profile_constant_neumann_mode():
    const = rectangle_mode(1.0, 1.0, 0, 0, NEUMANN)
    prof = mass_profile([const], (0.0, 0.0), [0.25, 0.5, 0.75], unit_square(NEUMANN))
    for row in prof.rows:
        assert row.disc_mass == pytest.approx(math.pi * row.alpha**2 / 4, abs=1e-9)
    prof = mass_profile([const], (0.5, 0.0), [0.5], unit_square(NEUMANN))
    assert prof.rows[0].disc_mass == pytest.approx(math.pi * 0.25**2 / 2, abs=1e-9)


def test_profile_constant_neumann_discrete(neumann_square_p1):
    mode = neumann_square_p1[4].modes()[0]
    prof = mass_profile([mode], (0.0, 0.0), [0.5])
    assert prof.rows[0].disc_mass == pytest.approx(math.pi / 16, abs=1e-3)


def test_profile_ordering_and_monotone(square_p2):
    modes = square_p2[4].modes()
    prof = mass_profile(modes, (0.5, 0.0), [0.75, 0.25, 0.5])
    assert len(prof) == 60
    keys = [(r.lam, r.alpha) for r in prof.rows]
    assert keys == sorted(keys)
    for i in range(20):
        rows = [r for r in prof.rows if r.mode_index == i]
        assert [r.alpha for r in rows] == [0.25, 0.5, 0.75]
        assert np.all(np.diff([r.disc_mass for r in rows]) >= -1e-8)
    top = prof.top_window(0.5)
    assert len({r.mode_index for r in top.rows}) == 10
    assert min(r.lam for r in top.rows) >= np.median([r.lam for r in prof.rows])


def test_profile_errors(square):
    u = rectangle_mode(1.0, 1.0, 1, 1)
    with pytest.raises(AnalysisError, match="empty"):
        mass_profile([u], (0.5, 0.5), [])
    with pytest.raises(AnalysisError):
        mass_profile([u], (0.5, 0.5), [1.2])
    with pytest.raises(AnalysisError, match="outside"):
        mass_profile([u], (2.0, 2.0), [0.5])


def test_pairing_zero_cutoff():
    u = rectangle_mode(1.0, 1.0, 3, 2)
    res = commutator_pairing(u, (0.5, 0.5), make_phi1(0.1, 0.4, 0.05).scaled(0.0))
    assert (res.lhs, res.rhs, res.residual) == (0.0, 0.0, 0.0)


def test_pairing_corner_frozen():
    u = sector_harmonic(math.pi / 2, 1, 20.0)
    res = commutator_pairing(u, (0.0, 0.0), make_phi1(0.4, 0.9, 0.1), u.local_domain())
    assert res.lhs == pytest.approx(CORNER_LHS, rel=1e-11)
    assert res.rhs == pytest.approx(CORNER_RHS, rel=1e-11)
    assert res.residual <= 1e-8


def test_pairing_interior():
    u = rectangle_mode(1.0, 1.0, 5, 4)
    res = commutator_pairing(u, (0.45, 0.55), make_phi1(0.1, 0.4, 0.05))
    assert res.residual <= 1e-8 and res.lhs > 0


@pytest.mark.parametrize("theta0", [math.pi / 3, math.pi, 1.75 * math.pi])
def test_pairing_mixed_corners(theta0):
    u = sector_harmonic(theta0, 1, 25.0, (DIRICHLET, NEUMANN))
    res = commutator_pairing(u, (0.0, 0.0), make_phi1(0.4, 0.9, 0.1), u.local_domain())
    assert res.residual <= 1e-8


def test_pairing_rejects_long_support():
    u = rectangle_mode(1.0, 1.0, 2, 2)
    with pytest.raises(AnalysisError, match="non-adjacent"):
        commutator_pairing(u, (0.5, 0.5), make_phi1(0.2, 0.6, 0.05))


def test_pairing_discrete_first_order():
    phi = make_phi1(0.05, 0.45, 0.1)
    res = []
    hs = [0.1, 0.05, 0.025]
    for h in hs:
        k, m, space = assemble(triangulate(unit_square(), h), 2)
        mode = solve_modes(k, m, space, 1).modes()[0]
        res.append(commutator_pairing(mode, (0.5, 0.5), phi).residual)
    assert np.all(np.diff(res) < 0)
    assert fit_loglog_slope(hs, res) >= 1.0


def _ratio(bt, lam):
    return max(abs(bt.i1), abs(bt.i2)) / (lam * bt.scale)


@pytest.mark.parametrize("pair", [(DIRICHLET, DIRICHLET), (NEUMANN, NEUMANN), (DIRICHLET, NEUMANN)])
def test_boundary_terms_vanish(pair):
    phi = make_phi1(0.4, 0.9, 0.1)
    for theta0 in (math.pi / 2, 1.5 * math.pi):
        u = sector_harmonic(theta0, 1, 20.0, pair)
        for side in (1, 2):
            bt = boundary_terms(u, (0.0, 0.0), phi, side, u.local_domain())
            assert bt.bc == pair[side - 1]
            assert _ratio(bt, u.lam) <= 1e-9
            if bt.bc == DIRICHLET:
                assert abs(bt.i1) <= 1e-14 and abs(bt.i2) <= 1e-14


def test_boundary_terms_mismatch():
    u = sector_harmonic(math.pi / 2, 1, 20.0, (DIRICHLET, DIRICHLET))
    dom = sector_harmonic(math.pi / 2, 1, 20.0, (NEUMANN, NEUMANN)).local_domain()
    with pytest.raises(AnalysisError, match="carries"):
        boundary_terms(u, (0.0, 0.0), make_phi1(0.4, 0.9, 0.1), 1, dom)


def test_boundary_terms_need_boundary_point():
    u = rectangle_mode(1.0, 1.0, 2, 2)
    with pytest.raises(AnalysisError):
        boundary_terms(u, (0.5, 0.5), make_phi1(0.1, 0.4, 0.05), 1)


def test_ledger_fields():
    led = proof_ledger(rectangle_mode(1.0, 1.0, 12, 12), (0.5, 0.5), 0.5)
    vals = np.array(led.csv_values(), dtype=float)
    assert np.all(np.isfinite(vals))
    assert led.eps == pytest.approx(default_eps(0.5, 0.5)) == pytest.approx(0.03125)
    assert led.identity_residual <= 1e-8
    assert led.radial_energy <= led.mass_outside + abs(led.energy_const) * led.h + 1e-12
    assert led.sup_phi_prime <= led.slope_const_tight <= led.slope_const_loose
    assert led.upper_cap == pytest.approx(4 / 3)
    assert led.lower_chain >= 2 * led.mass_inside - 1e-10
    assert led.mass_inside == pytest.approx(
        local_mass(rectangle_mode(1.0, 1.0, 12, 12), (0.5, 0.5), 0.25), abs=1e-9)


def test_ledger_remainder_shrinks():
    leds = [proof_ledger(rectangle_mode(1.0, 1.0, m, m), (0.5, 0.5), 0.5) for m in (5, 10, 20)]
    slope = fit_loglog_slope([l.h for l in leds], [l.remainder for l in leds])
    assert slope >= 0.9


def test_fit_slope_exact():
    x = np.array([1.0, 2.0, 4.0, 8.0])
    assert fit_loglog_slope(x, 3 * x**1.5) == pytest.approx(1.5)


def test_report_outputs(tmp_path):
    u = rectangle_mode(1.0, 1.0, 1, 1)
    prof = mass_profile([u], (0.5, 0.5), [0.5])
    paths = report(prof, [], tmp_path / "single")
    lines = paths[0].read_text().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 2
    assert paths[1].read_text().lstrip().startswith("<?xml")


def test_report_is_deterministic(tmp_path):
    modes = [rectangle_mode(1.0, 1.0, m, n) for m, n in ((1, 1), (2, 1), (2, 3))]
    prof = mass_profile(modes, (0.0, 0.0), [0.25, 0.75])
    leds = [proof_ledger(modes[0], (0.5, 0.5), 0.5)]
    a = report(prof, leds, tmp_path / "a" / "run")
    b = report(prof, leds, tmp_path / "b" / "run")
    assert len(a) == 3
    for pa, pb in zip(a, b):
        assert pa.read_bytes() == pb.read_bytes()
    assert ledger_csv(leds).splitlines()[0] == ",".join(LEDGER_COLUMNS)
    assert profile_csv(prof).count("\n") == 7


def test_report_rejects_empty(tmp_path):
    with pytest.raises(AnalysisError):
        report(MassProfile(), [], tmp_path / "x")
