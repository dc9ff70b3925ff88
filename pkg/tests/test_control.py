import numpy as np
import pytest

from hvicoupling.control import (
    ControlSpec, active_set, control_norm_matrix, control_to_state, cost, default_true_control, fd_gradient,
    inverse_crime_setup, lumped_laplacian_sq, minimize, misfit, part_errors, patch_prolongation,
    relative_control_error, rho_sweep, segment_prolongation,
)
from hvicoupling.fem import NonlinearityP
from hvicoupling.geometry import build_mesh, square_spec
from hvicoupling.hvi import assemble_problem
from hvicoupling.superpotential import FrictionLaw


@pytest.fixture(scope="module")
def mesh():
    return build_mesh(square_spec(0.6), 0.2)


@pytest.fixture(scope="module")
def nonlinear(mesh):
    return assemble_problem(mesh, nl=NonlinearityP.rational(2, 1), law=FrictionLaw(2, 1, 1),
                            f=lambda x, y: 5 + 0 * x, q=lambda x, y: 3 * np.cos(7 * x) + 2 * y)


@pytest.fixture(scope="module")
def linear(mesh):
    return assemble_problem(mesh, f=lambda x, y: 1 + 0 * x, q=lambda x, y: y)


def spec_for(prob, kind, rho=1e-8, **kw):
    if kind in ("distributed", "distributed_boundary"):
        kw.setdefault("P_f", patch_prolongation(prob.mesh.nodes, 2, 2))
    if kind in ("boundary", "distributed_boundary"):
        kw.setdefault("P_q", segment_prolongation(prob.steklov.ops.bmesh.points, 4))
    return ControlSpec(kind, prob, np.zeros(prob.size), rho, **kw)


def test_prolongations_partition(mesh):
    P = patch_prolongation(mesh.nodes, 3, 2)
    assert P.shape == (mesh.n_nodes, 6)
    assert np.all(P.sum(axis=1) == 1) and np.all(P.sum(axis=0) > 0)
    pts = mesh.nodes[mesh.boundary_nodes()]
    Q = segment_prolongation(pts, 4)
    assert np.all(Q.sum(axis=1) == 1) and np.all(Q.sum(axis=0) > 0)


def test_lumped_laplacian(mesh, linear):
    L = lumped_laplacian_sq(linear.interior)
    one = np.ones(mesh.n_nodes)
    assert one @ (L @ one) <= 1e-10 * L.diagonal().sum()
    # affine fields are discretely harmonic away from the boundary
    a = 1 + 2 * mesh.nodes[:, 0] - mesh.nodes[:, 1]
    inner = np.setdiff1d(np.arange(mesh.n_nodes), mesh.boundary_nodes())
    assert np.max(np.abs((linear.interior.stiffness @ a)[inner])) <= 1e-12


def test_zero_control_gives_baseline(linear):
    s = spec_for(linear, "distributed")
    st = control_to_state(s, np.zeros(s.n_controls))
    base = assemble_problem(linear.mesh, q=lambda x, y: y).solve()
    assert np.allclose(st.z, base.z, atol=1e-10)


def test_state_affine_in_control_for_linear_problem(linear):
    s = spec_for(linear, "distributed_boundary")
    rng = np.random.default_rng(0)
    c1, c2 = rng.normal(size=(2, s.n_controls))
    z0, z1, z2 = (control_to_state(s, c).z for c in (np.zeros(s.n_controls), c1, c2))
    z12 = control_to_state(s, c1 + c2).z
    assert np.allclose(z12 - z0, (z1 - z0) + (z2 - z0), atol=1e-9)


def test_huge_box_matches_unconstrained(nonlinear):
    s = spec_for(nonlinear, "obstacle", obstacle_sides=("lower", "upper"))
    c = np.concatenate([np.full(4, -1e6), np.full(4, 1e6)])
    assert np.allclose(control_to_state(s, c).z, nonlinear.solve().z, atol=1e-9)


def test_cost_identities(nonlinear):
    s = spec_for(nonlinear, "distributed")
    c0 = np.zeros(s.n_controls)
    s.target = control_to_state(s, c0).z
    assert cost(s, c0) == pytest.approx(0.0, abs=1e-20)
    c = np.random.default_rng(1).normal(size=s.n_controls)
    sol = control_to_state(s, c)
    assert cost(s, c, sol) >= 0
    s2 = ControlSpec("distributed", nonlinear, s.target, 2 * s.rho, s.P_f)
    assert cost(s2, c, sol) - cost(s, c, sol) == pytest.approx(0.5 * s.rho * s.control_norm_sq(c), rel=1e-9)


def test_control_norm_is_quadratic(nonlinear):
    for kind in ("distributed", "boundary", "distributed_boundary"):
        s = spec_for(nonlinear, kind)
        R = control_norm_matrix(s)
        c = np.random.default_rng(2).normal(size=s.n_controls)
        assert c @ R @ c == pytest.approx(s.control_norm_sq(c), rel=1e-12)
    so = spec_for(nonlinear, "obstacle")
    c = np.random.default_rng(3).normal(size=so.n_controls)
    assert c @ control_norm_matrix(so) @ c == pytest.approx(so.control_norm_sq(c), rel=1e-10)


def test_fd_gradient_of_quadratic():
    A = np.array([[3.0, 1.0], [1.0, 2.0]])
    f = lambda x: 0.5 * x @ A @ x
    x = np.array([0.3, -1.2])
    assert np.allclose(fd_gradient(f, x, np.full(2, 1e-5)), A @ x, atol=1e-9)


def test_spec_validation(nonlinear):
    with pytest.raises(ValueError):
        ControlSpec("telekinesis", nonlinear, np.zeros(nonlinear.size), 1e-8)
    with pytest.raises(ValueError):
        ControlSpec("distributed", nonlinear, np.zeros(nonlinear.size), 0.0)
    with pytest.raises(ValueError):
        ControlSpec("distributed", nonlinear, np.zeros(3), 1e-8)
    s = spec_for(nonlinear, "distributed")
    with pytest.raises(ValueError):
        s.parts(np.zeros(s.n_controls + 1))


def test_obstacle_projection_keeps_order(nonlinear):
    s = spec_for(nonlinear, "obstacle", obstacle_sides=("lower", "upper"))
    c = s.project(np.concatenate([np.ones(4), np.zeros(4)]))
    lo, hi = s.obstacles(c)
    assert np.all(lo <= hi)


def test_inverse_crime_distributed(nonlinear):
    s = spec_for(nonlinear, "distributed")
    c_true = default_true_control(s, seed=1)
    s = inverse_crime_setup(nonlinear, "distributed", c_true, P_f=s.P_f)
    res = minimize(s, max_evals=600)
    assert relative_control_error(s, res.control, c_true) <= 0.05
    assert res.misfit <= 1e-6 * nonlinear.scale
    assert np.all(np.diff(res.costs) <= 0)
    assert res.as_dict()["evaluations"] == res.evaluations


def test_inverse_crime_both(nonlinear):
    base = spec_for(nonlinear, "distributed_boundary")
    c_true = default_true_control(base, seed=2)
    s = inverse_crime_setup(nonlinear, "distributed_boundary", c_true, P_f=base.P_f, P_q=base.P_q)
    res = minimize(s, max_evals=1500)
    assert max(part_errors(s, res.control, c_true)) <= 0.10
    assert np.all(np.diff(res.costs) <= 0)


def test_large_rho_drives_control_to_zero(nonlinear):
    s = spec_for(nonlinear, "boundary", rho=1e6)
    s.target = control_to_state(s, 3 * np.ones(s.n_controls)).z
    res = minimize(s, max_evals=300)
    assert np.max(np.abs(res.control)) <= 1e-3
    zero_cost = 0.5 * misfit(s, control_to_state(s, np.zeros(s.n_controls))) ** 2
    assert res.costs[-1] == pytest.approx(zero_cost, rel=1e-3)


def test_rho_sweep_monotone(nonlinear):
    base = spec_for(nonlinear, "boundary")
    c_true = default_true_control(base, seed=4)
    s = inverse_crime_setup(nonlinear, "boundary", c_true, P_q=base.P_q)
    rows = rho_sweep(s, c_true, max_evals=400)
    errs = [r["error"] for r in rows]
    assert errs[0] > errs[1] > errs[2]


def test_obstacle_active_set_recovery(nonlinear):
    base = spec_for(nonlinear, "obstacle", obstacle_sides=("upper",))
    c_true = default_true_control(base, seed=5)
    s = inverse_crime_setup(nonlinear, "obstacle", c_true, P_obs=base.P_obs, obstacle_sides=("upper",))
    res = minimize(s, max_evals=400)
    want = active_set(s, c_true)
    assert want.any()
    assert np.array_equal(active_set(s, res.control), want)
    assert np.all(np.diff(res.costs) <= 0)


def test_target_perturbation_bound(nonlinear):
    s = spec_for(nonlinear, "boundary")
    c_true = default_true_control(s, seed=6)
    s = inverse_crime_setup(nonlinear, "boundary", c_true, P_q=s.P_q)
    best = minimize(s, max_evals=300)
    delta = 1e-2 * np.random.default_rng(7).normal(size=nonlinear.size)
    s2 = ControlSpec("boundary", nonlinear, s.target + delta, s.rho, P_q=s.P_q)
    moved = cost(s2, best.control)
    dn = nonlinear.norm_E(delta)
    assert abs(moved - best.costs[-1]) <= dn * (best.misfit + dn / 2) + 1e-14
