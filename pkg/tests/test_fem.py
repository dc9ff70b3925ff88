import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad
from scipy.optimize import minimize_scalar

from hvicoupling.fem import InteriorOperator, NonlinearityP, monotonicity_constant
from hvicoupling.geometry import Mesh2D, build_mesh, regular_polygon_spec, square_spec

RAT = NonlinearityP.rational(2.0, 1.0)


@pytest.fixture(scope="module")
def square_op():
    return InteriorOperator(build_mesh(square_spec(1.0), 0.2), RAT)


@pytest.fixture(scope="module")
def poly_op():
    return InteriorOperator(build_mesh(regular_polygon_spec(7, 0.45, (0, 3)), 0.1), RAT)


def reference_triangle():
    nodes = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    return Mesh2D(nodes, np.array([[0, 1, 2]]), np.array([[0, 1], [1, 2], [2, 0]]), np.array(["S", "T", "T"]))


def test_constant_state_has_zero_energy_and_flux(square_op):
    u = np.full(square_op.n, 3.7)
    assert square_op.energy_G(u) == pytest.approx(0.0, abs=1e-12)
    v = np.random.default_rng(0).normal(size=square_op.n)
    assert square_op.apply_DG(u, v) == pytest.approx(0.0, abs=1e-10)


def test_linear_energy_is_half_dirichlet():
    op = InteriorOperator(build_mesh(square_spec(1.0), 0.25), NonlinearityP.linear(1.0))
    u = op.mesh.nodes[:, 0] + op.mesh.nodes[:, 1]     # |grad u|^2 integrates to 2
    assert op.energy_G(u) == pytest.approx(1.0, rel=1e-13)


def test_reference_triangle_energy():
    op = InteriorOperator(reference_triangle(), RAT)
    g1 = 1 + 0.5 * np.log(2)
    assert quad(lambda s: s * (2 + 1 / (1 + s * s)), 0, 1)[0] == pytest.approx(g1, rel=1e-13)
    assert op.energy_G(op.mesh.nodes[:, 0]) == pytest.approx(0.5 * g1, rel=1e-13)


def test_linear_DG_is_stiffness(square_op):
    op = InteriorOperator(square_op.mesh, NonlinearityP.linear(1.0))
    rng = np.random.default_rng(1)
    u, v = rng.normal(size=(2, op.n))
    assert op.apply_DG(u, v) == pytest.approx(v @ (op.stiffness @ u), rel=1e-13)
    assert np.allclose(op.dg_jacobian(u).toarray(), op.stiffness.toarray())
    assert np.allclose(op.dg_jacobian(5 * v).toarray(), op.stiffness.toarray())


def test_DG_is_derivative_of_G(poly_op):
    rng = np.random.default_rng(2)
    eps = 1e-5
    for _ in range(10):
        u, v = rng.normal(size=(2, poly_op.n))
        fd = (poly_op.energy_G(u + eps * v) - poly_op.energy_G(u - eps * v)) / (2 * eps)
        assert poly_op.apply_DG(u, v) == pytest.approx(fd, rel=1e-6)


def test_jacobian_symmetric_and_consistent(poly_op):
    rng = np.random.default_rng(3)
    u, v, w = rng.normal(size=(3, poly_op.n))
    Jm = poly_op.dg_jacobian(u).toarray()
    assert np.max(np.abs(Jm - Jm.T)) <= 1e-13 * np.max(np.abs(Jm))
    eps = 1e-6
    fd = (poly_op.apply_DG(u + eps * w, v) - poly_op.apply_DG(u - eps * w, v)) / (2 * eps)
    assert v @ Jm @ w == pytest.approx(fd, rel=1e-6)


def test_monotonicity_constants():
    assert monotonicity_constant(NonlinearityP.linear(1.0)) == 1.0
    assert monotonicity_constant(RAT) == pytest.approx(15 / 8)
    assert monotonicity_constant(NonlinearityP.rational(2.0, 0.0)) == 2.0
    r = minimize_scalar(lambda t: 2 + (1 - t * t) / (1 + t * t) ** 2, bounds=(0, 10), method="bounded")
    assert r.fun == pytest.approx(15 / 8, abs=1e-9)
    assert r.x == pytest.approx(np.sqrt(3), abs=1e-4)


def test_rational_requires_a_above_b_over_8():
    with pytest.raises(ValueError):
        NonlinearityP.rational(1.0, 8.0)
    with pytest.raises(ValueError):
        NonlinearityP.linear(0.0)
    with pytest.raises(ValueError):
        NonlinearityP("cubic", 1.0, 0.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.01, 30.0))
def test_strong_monotonicity(seed, scale):
    op = InteriorOperator(build_mesh(square_spec(0.6), 0.2), RAT)
    rng = np.random.default_rng(seed)
    u, v = scale * rng.normal(size=(2, op.n))
    d = u - v
    lhs = op.apply_DG(u, d) - op.apply_DG(v, d)
    assert lhs >= op.c_G * op.seminorm_sq(d) - 1e-12 * max(1.0, abs(lhs))


def test_boundedness(poly_op):
    rng = np.random.default_rng(4)
    for _ in range(20):
        u, v = rng.normal(scale=3, size=(2, poly_op.n))
        bound = RAT.p0 * np.sqrt(poly_op.seminorm_sq(u) * poly_op.seminorm_sq(v))
        assert poly_op.apply_DG(u, v) <= bound + 1e-12


def test_load_form():
    op = InteriorOperator(build_mesh(square_spec(1.0), 0.2), RAT)
    assert np.all(op.load_form(0.0) == 0)
    assert op.load_form(1.0).sum() == pytest.approx(1.0, rel=1e-13)
    assert op.load_form(lambda x, y: x).sum() == pytest.approx(0.5, rel=1e-13)
    nodal = np.random.default_rng(5).normal(size=op.n)
    assert np.allclose(op.load_form(nodal), op.mass @ nodal)


def test_wrong_length_rejected(square_op):
    with pytest.raises(ValueError):
        square_op.energy_G(np.zeros(square_op.n + 1))


def test_empirical_lipschitz_constant(poly_op):
    # sup of max(p, (t p)') for a = 2, b = 1 is a + b = 3
    L = poly_op.lipschitz_estimate(np.random.default_rng(6), samples=10)
    assert poly_op.c_G <= L <= 3.0 + 1e-9
