import numpy as np
import pytest

from eigenlab.discretize import assemble, triangulate
from eigenlab.eigensolve import solve_modes
from eigenlab.geometry import l_shape, unit_square


@pytest.fixture(scope="session")
def square():
    return unit_square()


@pytest.fixture(scope="session")
def lshape():
    return l_shape()


@pytest.fixture(scope="session")
def square_p2():
    """P2 problem on the unit square at h = 0.05 with its 20 lowest modes."""
    mesh = triangulate(unit_square(), 0.05)
    k, m, space = assemble(mesh, 2)
    spec = solve_modes(k, m, space, 20)
    return mesh, k, m, space, spec


@pytest.fixture(scope="session")
def neumann_square_p1():
    mesh = triangulate(unit_square("neumann"), 0.1)
    k, m, space = assemble(mesh, 1)
    spec = solve_modes(k, m, space, 4)
    return mesh, k, m, space, spec


@pytest.fixture
def rng():
    return np.random.default_rng(7)


_ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or rep.when != "call":
        return
    detail = dict(item.user_properties).get("detail", "")
    _ACCEPTANCE[mark.args[0]] = (rep.passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        passed, detail = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if passed else 'FAIL'}  {detail}")
