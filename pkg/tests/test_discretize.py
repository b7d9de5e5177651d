import math

import numpy as np
import pytest
import scipy.linalg as la

from eigenlab.discretize import (
    AssemblyError, DiscreteMode, Mesh, MeshError, assemble, assemble_full, concave_corner_points,
    evaluate_many, evaluate_mode, function_space, load_mesh, save_mesh, triangulate,
)
from eigenlab.eigensolve import solve_lowest
from eigenlab.geometry import DIRICHLET, NEUMANN, make_domain, rectangle, unit_square


@pytest.fixture(scope="module")
def square_mesh():
    return triangulate(unit_square(), 0.1)


def test_square_mesh_quality(square_mesh):
    m = square_mesh
    assert 200 <= m.n_triangles <= 400
    assert m.min_angles().min() >= 20.0
    assert m.areas().min() > 0
    assert m.edge_lengths().max() <= 1.5 * 0.1
    assert m.areas().sum() == pytest.approx(1.0, abs=1e-12)


def test_mesh_is_conforming(square_mesh):
    # every interior edge is shared by exactly two triangles, boundary edges by one
    tris = square_mesh.triangles
    edges = np.sort(np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]]), axis=1)
    _, counts = np.unique(edges, axis=0, return_counts=True)
    assert set(counts.tolist()) <= {1, 2}
    assert (counts == 1).sum() == len(square_mesh.boundary_edges)


def test_boundary_edges_lie_on_domain_edges(square_mesh):
    dom = square_mesh.domain
    for t, k, e in square_mesh.boundary_edges:
        i, j = square_mesh.triangles[t, k], square_mesh.triangles[t, (k + 1) % 3]
        a, b = dom.edge_starts[e], dom.edge_ends[e]
        d = b - a
        for p in square_mesh.vertices[[i, j]]:
            assert abs(d[0] * (p - a)[1] - d[1] * (p - a)[0]) <= 1e-12


def test_meshing_is_deterministic():
    a = triangulate(unit_square(), 0.1)
    b = triangulate(unit_square(), 0.1)
    assert a.digest() == b.digest()


def test_lshape_grading(lshape):
    h = 0.05
    mesh = triangulate(lshape, h)
    assert len(mesh.grading) == 1
    assert list(mesh.grading.values())[0] == pytest.approx(1.0 / 3.0)
    c = mesh.corners()
    r = np.linalg.norm(c.mean(axis=1) - [1.0, 1.0], axis=1)
    near = r < 0.1
    assert near.sum() > 50
    assert np.all(mesh.diameters()[near] <= h * (r[near] / 0.1) ** (1.0 / 3.0))
    # the size floor is h / 100; one refinement round may halve past it
    assert mesh.diameters().min() >= 0.5e-2 * h
    assert mesh.min_angles().min() >= 20.0


def test_ungraded_lshape_is_coarser(lshape):
    assert triangulate(lshape, 0.05, grade_concave=False).n_triangles < \
        triangulate(lshape, 0.05).n_triangles


def test_mesh_with_hole():
    dom = make_domain([[(0, 0), (3, 0), (3, 3), (0, 3)], [(1, 1), (2, 1), (2, 2), (1, 2)]],
                      [[DIRICHLET] * 4, [NEUMANN] * 4])
    mesh = triangulate(dom, 0.2)
    assert mesh.areas().sum() == pytest.approx(8.0, abs=1e-12)
    cen = mesh.corners().mean(axis=1)
    assert not np.any((np.abs(cen[:, 0] - 1.5) < 0.5) & (np.abs(cen[:, 1] - 1.5) < 0.5))


@pytest.mark.parametrize("h", [10 * math.sqrt(2), 0.0, -1.0])
def test_bad_target_h(h):
    with pytest.raises(MeshError):
        triangulate(unit_square(), h)


def _single_triangle(verts, bc=NEUMANN):
    dom = make_domain([verts], [[bc] * 3])
    bnd = np.array([[0, 0, 0], [0, 1, 1], [0, 2, 2]])
    return Mesh(np.asarray(verts, float), np.array([[0, 1, 2]]), bnd, dom)


def test_p1_element_stiffness_closed_form():
    verts = [(0.0, 0.0), (2.0, 0.3), (0.4, 1.1)]
    k, m = assemble_full(function_space(_single_triangle(verts), 1))
    v = np.array(verts)
    d1, d2 = v[1] - v[0], v[2] - v[0]
    area = 0.5 * abs(d1[0] * d2[1] - d1[1] * d2[0])
    # edge opposite vertex i
    e = np.array([v[2] - v[1], v[0] - v[2], v[1] - v[0]])
    ref = e @ e.T / (4 * area)
    assert np.abs(k.toarray() - ref).max() <= 1e-14
    assert np.abs(k.toarray().sum(axis=1)).max() <= 1e-14
    mref = area / 12 * (np.ones((3, 3)) + np.eye(3))
    assert np.abs(m.toarray() - mref).max() <= 1e-15


def test_p2_single_element_properties():
    verts = [(0.0, 0.0), (1.0, 0.2), (0.3, 0.9)]
    k, m = assemble_full(function_space(_single_triangle(verts), 2))
    k = k.toarray()
    assert np.abs(k.sum(axis=1)).max() <= 1e-13
    assert m.toarray().sum() == pytest.approx(0.5 * (1.0 * 0.9 - 0.2 * 0.3))
    assert np.linalg.eigvalsh(k).min() >= -1e-12


@pytest.mark.parametrize("order", [1, 2])
def test_matrix_structure(square_mesh, order):
    k, m, space = assemble(square_mesh, order)
    assert abs(k - k.T).max() == 0
    assert abs(m - m.T).max() == 0
    la.cholesky(m.toarray())
    la.cholesky(k.toarray())


@pytest.mark.parametrize("order", [1, 2])
def test_mass_sums_to_area(order):
    mesh = triangulate(unit_square(NEUMANN), 0.1)
    _, m = assemble_full(function_space(mesh, order))
    assert m.sum() == pytest.approx(1.0, abs=1e-12)


def test_unsupported_order(square_mesh):
    with pytest.raises(AssemblyError):
        assemble(square_mesh, 3)


def test_all_dirichlet_single_triangle_has_no_dofs():
    with pytest.raises(AssemblyError):
        function_space(_single_triangle([(0, 0), (1, 0), (0, 1)], DIRICHLET), 1)


def test_neumann_constant_mode(neumann_square_p1):
    mesh, k, m, space, spec = neumann_square_p1
    assert abs(spec.lam2[0]) <= 1e-10
    v = spec.vectors[:, 0]
    assert np.abs(v - v[0]).max() <= 1e-10
    mode = spec.modes()[0]
    pts = np.random.default_rng(3).uniform(0, 1, (50, 2))
    val, grad = mode.evaluate(pts)
    assert np.abs(np.abs(val) - 1.0).max() <= 1e-10
    assert np.abs(grad).max() <= 1e-9


def test_dirichlet_entries_exactly_zero(square_p2):
    mesh, k, m, space, spec = square_p2
    full = space.expand(spec.vectors)
    fixed = np.setdiff1d(np.arange(space.n_dofs), space.free)
    assert fixed.size > 0
    assert np.all(full[fixed] == 0.0)
    mode = spec.modes()[0]
    assert float(mode.coeffs[space.free] @ (m @ mode.coeffs[space.free])) == pytest.approx(1.0, abs=1e-12)


def test_patch_p1_affine(square_mesh, rng):
    space = function_space(square_mesh, 1)
    f = lambda p: 2.0 + 3.0 * p[:, 0] - 1.5 * p[:, 1]
    c = space.interpolate(f)
    pts = rng.uniform(0, 1, (500, 2))
    val, grad = evaluate_many(space, c, pts)
    assert np.abs(val - f(pts)).max() <= 1e-12
    assert np.abs(grad - [3.0, -1.5]).max() <= 1e-12


def test_patch_p2_quadratic(square_mesh, rng):
    space = function_space(square_mesh, 2)
    f = lambda p: 1.0 - p[:, 0] + p[:, 0] ** 2 + 2.0 * p[:, 0] * p[:, 1] - 0.5 * p[:, 1] ** 2
    c = space.interpolate(f)
    pts = rng.uniform(0, 1, (500, 2))
    val, grad = evaluate_many(space, c, pts)
    assert np.abs(val - f(pts)).max() <= 1e-12
    exact = np.column_stack([-1 + 2 * pts[:, 0] + 2 * pts[:, 1], 2 * pts[:, 0] - pts[:, 1]])
    assert np.abs(grad - exact).max() <= 1e-11


def test_p2_gradient_of_x_squared(square_mesh):
    space = function_space(square_mesh, 2)
    c = space.interpolate(lambda p: p[:, 0] ** 2)
    mode = DiscreteMode(c, 1.0, space)
    for p in ((0.31, 0.77), (0.5, 0.5), (0.0, 0.2)):
        v, g = evaluate_mode(mode, p)
        assert v == pytest.approx(p[0] ** 2, abs=1e-13)
        assert g == pytest.approx([2 * p[0], 0.0], abs=1e-12)


def test_evaluate_outside_raises(square_mesh):
    space = function_space(square_mesh, 1)
    with pytest.raises(MeshError):
        evaluate_many(space, np.zeros(space.n_dofs), np.array([[1.2, 0.5]]))


def test_evaluate_many_vectors(square_mesh, rng):
    space = function_space(square_mesh, 2)
    cs = np.column_stack([space.interpolate(lambda p: p[:, 0]), space.interpolate(lambda p: p[:, 1])])
    pts = rng.uniform(0, 1, (20, 2))
    val, grad = evaluate_many(space, cs, pts)
    assert val.shape == (20, 2) and grad.shape == (20, 2, 2)
    assert np.abs(val - pts).max() <= 1e-13


def _lam1(h, order):
    k, m, _ = assemble(triangulate(unit_square(), h), order)
    return solve_lowest(k, m, 1).lam2[0]


@pytest.mark.parametrize("order,rate,h0", [(1, 1.9, 0.1), (2, 3.8, 0.2)])
def test_convergence_order(order, rate, h0):
    hs = h0 * np.array([1.0, 0.5, 0.25])
    err = np.array([_lam1(h, order) - 2 * math.pi**2 for h in hs])
    assert np.all(err > 0)
    assert np.polyfit(np.log(hs), np.log(err), 1)[0] >= rate


def test_mesh_cache_round_trip(tmp_path, lshape):
    mesh = triangulate(lshape, 0.2)
    digest = save_mesh(mesh, tmp_path / "m.bin")
    again = load_mesh(tmp_path / "m.bin", lshape)
    assert again.digest() == digest == mesh.digest()
    assert again.grading == mesh.grading
    assert load_mesh(tmp_path / "m.bin").domain.area == pytest.approx(3.0)
    with pytest.raises(MeshError):
        load_mesh(tmp_path / "m.bin", rectangle(2.0, 1.0))


def test_concave_corner_points(square, lshape):
    assert concave_corner_points(square) == []
    assert concave_corner_points(lshape) == [(0, 3)]
