import warnings

import numpy as np
import pytest

from hvicoupling.config import TINY, build_problem, fixture_config, tiny_problem
from hvicoupling.fem import NonlinearityP
from hvicoupling.geometry import build_mesh, square_spec
from hvicoupling.hvi import (
    ExtendedF, SolverError, assemble_problem, brute_force_oracle, hvi_residual, inner_convex_solve,
    linear_direct_solve, obstacle_complementarity,
)
from hvicoupling.superpotential import FrictionLaw


@pytest.fixture(scope="module")
def small_mesh():
    return build_mesh(square_spec(0.6), 0.15)


def test_lambda_boundary_entries_are_mass_row_sums(small_mesh):
    p = assemble_problem(small_mesh, q=lambda x, y: 1.0 + 0 * x)
    row = p.Mb.sum(axis=1)
    lam_u, lam_v = p.split(p.lam)
    assert np.allclose(lam_u[p.bd], row, atol=1e-15)
    interior = np.setdiff1d(np.arange(p.n_u), p.bd)
    assert np.all(lam_u[interior] == 0)
    assert np.allclose(lam_v, row[p.gs], atol=1e-15)


def test_linear_problem_is_quadratic(small_mesh):
    p = assemble_problem(small_mesh, f=lambda x, y: 1 + x, q=lambda x, y: np.cos(5 * x))
    H = p.coupled_matrix(p.interior.stiffness)
    assert np.allclose(H, H.T)
    assert np.linalg.eigvalsh(H).min() > 0
    z = np.random.default_rng(0).normal(size=p.size)
    assert p.energy(z) == pytest.approx(0.5 * z @ H @ z - p.lam @ z, rel=1e-12)


def test_zero_data_gives_zero(small_mesh):
    p = assemble_problem(small_mesh, nl=NonlinearityP.rational(2, 1), law=FrictionLaw(2, 1, 1))
    sol = p.solve()
    assert np.max(np.abs(sol.z)) <= 1e-12


def test_linear_reduction_oracle(small_mesh):
    p = assemble_problem(small_mesh, f=lambda x, y: 3 + x * y, q=lambda x, y: np.sin(4 * x) - y)
    sol = p.solve()
    z = linear_direct_solve(p)
    assert p.norm_E(sol.z - z) <= 1e-10 * p.norm_E(z)


def test_margin_regression(canonical):
    rep = canonical.smallness_check()
    assert rep.margin == pytest.approx(0.4749254073, abs=1e-6)
    assert rep.c_J == 1.0
    assert rep.theta_bound == pytest.approx(1 - rep.margin, abs=1e-9)


def test_margin_tends_to_cA_as_alpha_vanishes(small_mesh):
    p = assemble_problem(small_mesh, nl=NonlinearityP.rational(2, 1), law=FrictionLaw(2, 1, 1e-9))
    rep = p.smallness_check()
    assert rep.margin == pytest.approx(rep.c_A_discrete, rel=1e-6)
    assert rep.margin > 0


def test_inflated_alpha_warns(small_mesh):
    p = assemble_problem(small_mesh, nl=NonlinearityP.rational(2, 1), law=FrictionLaw(2, 1, 50.0))
    with pytest.warns(RuntimeWarning, match="smallness"):
        rep = p.smallness_check()
    assert rep.margin < 0


@pytest.mark.parametrize("name", sorted(TINY))
def test_tiny_fixtures_match_brute_force(name):
    p = tiny_problem(name)
    assert p.size <= 6
    sol = p.solve()
    u, v = brute_force_oracle(p)
    assert np.max(np.abs(sol.z - np.concatenate([u, v]))) <= 1e-6
    assert p.energy(sol.z) <= p.energy(np.concatenate([u, v])) + 1e-12


def test_brute_force_quadratic_matches_normal_equations():
    p = tiny_problem("tiny-quadratic")
    u, v = brute_force_oracle(p)
    assert np.allclose(np.concatenate([u, v]), linear_direct_solve(p), atol=1e-8)


def test_brute_force_stick_at_kink():
    p = tiny_problem("tiny-kink")
    _, v = brute_force_oracle(p)
    assert np.all(v == 0)


def test_pinned_box_returns_pin():
    p = tiny_problem("tiny-pinned")
    sol = p.solve()
    assert np.all(sol.u == 0)
    u, v = brute_force_oracle(p)
    assert np.all(u == 0)
    assert np.allclose(sol.v, v, atol=1e-7)


def test_uniqueness_from_random_starts(canonical, canonical_solution):
    rng = np.random.default_rng(7)
    for _ in range(4):
        s = canonical.solve(start=rng.normal(scale=5, size=canonical.size), check_residual=False)
        assert canonical.norm_E(s.z - canonical_solution.z) <= 1e-8


def test_contraction_factor(canonical, canonical_solution):
    rep = canonical.smallness_check()
    theta = max(canonical_solution.contraction_factors)
    assert theta < 1
    assert theta <= rep.theta_bound + 0.1


def test_hvi_residual(canonical, canonical_solution):
    assert canonical_solution.residual >= -1e-8 * canonical.scale
    assert hvi_residual(canonical, canonical_solution, seed=3) >= -1e-8 * canonical.scale


def test_inner_energy_monotone(canonical):
    z0 = np.random.default_rng(2).normal(size=canonical.size)
    inner = inner_convex_solve(canonical, z0[canonical.n_u:], z0)
    e = np.array(inner.energies)
    assert inner.converged
    assert np.all(np.diff(e) <= 1e-12 * np.maximum(1, np.abs(e[1:])))


def test_inner_smooth_quadratic_tail(small_mesh):
    # far in the slip regime every interval is a singleton
    p = assemble_problem(small_mesh, nl=NonlinearityP.rational(2, 1), law=FrictionLaw(2, 1, 0.1),
                         q=lambda x, y: 200 + 0 * x)
    z0 = np.zeros(p.size)
    z0[p.n_u:] = 50.0
    inner = inner_convex_solve(p, z0[p.n_u:], z0)
    assert inner.converged and inner.iterations <= 15


def test_obstacle_complementarity(obstacle_problem):
    sol = obstacle_problem.solve()
    c = obstacle_complementarity(obstacle_problem, sol)
    tol = 1e-8 * obstacle_problem.scale
    assert c["n_upper"] > 0
    assert c["free"] <= tol and c["lower"] <= tol and c["upper"] <= tol
    assert obstacle_problem.feasible(sol.u)


def test_infeasible_box_rejected(small_mesh):
    n = small_mesh.n_nodes
    with pytest.raises(ValueError):
        assemble_problem(small_mesh, extended_F=ExtendedF(lower=np.ones(n), upper=np.zeros(n)))


def test_stagnation_raises(canonical):
    with pytest.raises(SolverError):
        canonical.solve(max_outer=2)


def test_energy_infinite_outside_box(obstacle_problem):
    z = np.full(obstacle_problem.size, 10.0)
    assert obstacle_problem.energy(z) == np.inf


# -- bifunction properties --------------------------------------------------------

def _random_points(p, rng, n):
    Z = rng.normal(scale=rng.choice([0.05, 1, 4], size=(n, 1)), size=(n, p.size))
    kink = rng.random((n, p.n_v)) < 0.3
    Z[:, p.n_u:][kink] = 0.0
    return Z


def test_phi_vanishes_on_diagonal(canonical):
    rng = np.random.default_rng(0)
    for z in _random_points(canonical, rng, 50):
        assert canonical.bifunction_phi(z, z) == 0.0


def test_phi_strongly_monotone(canonical):
    rng = np.random.default_rng(1)
    m = canonical.smallness_check().margin
    A, B = _random_points(canonical, rng, 100), _random_points(canonical, rng, 100)
    for v, w in zip(A, B):
        lhs = canonical.bifunction_phi(v, w) + canonical.bifunction_phi(w, v)
        assert lhs <= -m * canonical.norm_E(v - w) ** 2 + 1e-12 * max(1, abs(lhs))


def test_phi_convex_in_second_argument(canonical):
    rng = np.random.default_rng(2)
    Z = _random_points(canonical, rng, 300).reshape(100, 3, -1)
    for z, w1, w2 in Z:
        mid = canonical.bifunction_phi(z, 0.5 * (w1 + w2))
        avg = 0.5 * (canonical.bifunction_phi(z, w1) + canonical.bifunction_phi(z, w2))
        assert mid <= avg + 1e-12 * max(1, abs(avg))


def test_degenerate_constant_mode_is_fixed(small_mesh):
    # pure linear interior with J = 0 still has a unique solution thanks to S
    p = assemble_problem(small_mesh, f=lambda x, y: 1 + 0 * x)
    a = linear_direct_solve(p)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        s = p.solve()
    assert np.allclose(s.z, a, atol=1e-9)


def test_per_node_laws(small_mesh):
    law = FrictionLaw(2, 1, 1)
    one = assemble_problem(small_mesh, nl=NonlinearityP.rational(2, 1), law=law, f=5.0)
    many = assemble_problem(small_mesh, nl=NonlinearityP.rational(2, 1), law=[law] * one.n_v, f=5.0)
    assert np.allclose(one.solve().z, many.solve().z, atol=1e-12)
    mixed = [law] * (one.n_v - 1) + [FrictionLaw(2, 1, 0.2)]
    p = assemble_problem(small_mesh, nl=NonlinearityP.rational(2, 1), law=mixed, f=5.0)
    assert p.J.c_J() == 1.0
    with pytest.raises(ValueError):
        assemble_problem(small_mesh, law=[law] * (one.n_v + 1))
