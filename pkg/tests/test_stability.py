import csv

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from hvicoupling.fem import NonlinearityP
from hvicoupling.geometry import build_mesh, square_spec
from hvicoupling.hvi import ExtendedF, assemble_problem
from hvicoupling.stability import (
    MoscoSequence, a_priori_bound, geometric, harmonic, make_linear_sequence, make_obstacle_sequence,
    mosco_recovery_cut, pinned_obstacle_sequence, run_stability_experiment,
)
from hvicoupling.superpotential import FrictionLaw


@pytest.fixture(scope="module")
def prob():
    m = build_mesh(square_spec(0.6), 0.15)
    return assemble_problem(m, nl=NonlinearityP.rational(2, 1), law=FrictionLaw(2, 1, 1),
                            f=lambda x, y: 5 + 0 * x, q=lambda x, y: 3 * np.cos(7 * x) + 2 * y)


@pytest.fixture(scope="module")
def free_solution(prob):
    return prob.solve()


def test_constant_sequence_has_zero_error(prob):
    seq = make_linear_sequence(prob.f_load, prob.q_nodal, lambda n: 0.0, N=3)
    rep = run_stability_experiment(prob, seq)
    assert max(rep.errors) <= 1e-10


def test_harmonic_decay(prob):
    seq = make_linear_sequence(prob.f_load, prob.q_nodal, harmonic, N=8, seed=1)
    rep = run_stability_experiment(prob, seq, workers=2)
    assert rep.errors[-1] <= rep.errors[0] / 4
    n = np.arange(1, 9)
    C = rep.errors[0]
    assert np.all(np.asarray(rep.errors) <= 1.5 * C / n)


def test_geometric_decay(prob):
    seq = make_linear_sequence(prob.f_load, prob.q_nodal, geometric(2), N=8, seed=2)
    rep = run_stability_experiment(prob, seq)
    assert rep.monotone_tail
    assert 0.3 <= rep.rate <= 0.7
    assert rep.max_state_norm <= rep.bound


def test_box_wider_than_free_range(prob, free_solution):
    u = free_solution.u
    seq = make_obstacle_sequence(np.full_like(u, u.min() - 0.01), np.full_like(u, u.max() + 0.01),
                                 geometric(2), N=4)
    rep = run_stability_experiment(prob, seq)
    assert max(rep.errors) <= 1e-10
    assert rep.active_set_sizes[-1] == 0


def test_pinned_sequence_is_constant(prob):
    seq = pinned_obstacle_sequence(prob.n_u, N=3)
    rep = run_stability_experiment(prob, seq)
    assert max(rep.errors) == pytest.approx(0.0, abs=1e-12)
    assert rep.active_set_sizes == [prob.n_u] * 3


@pytest.mark.parametrize("mode", ["widen", "shift"])
def test_obstacle_tightening(prob, free_solution, mode):
    level = 0.5 * free_solution.u.max()
    upper = np.full(prob.n_u, level)
    seq = make_obstacle_sequence(np.full(prob.n_u, -np.inf), upper, geometric(10), N=8, seed=3,
                                 amplitude=0.2, mode=mode)
    rep = run_stability_experiment(prob, seq)
    e = np.asarray(rep.errors)
    assert np.all(np.diff(e) < 0)
    assert e[-1] <= 1e-3 * e[0]
    assert rep.active_set_sizes[-3:] == [rep.active_set_sizes[-1]] * 3 and rep.active_set_sizes[-1] > 0
    assert rep.max_state_norm <= rep.bound


def test_a_priori_bound_holds(prob, free_solution):
    assert prob.norm_E(free_solution.z) <= a_priori_bound(prob)


def test_negative_margin_rejected():
    m = build_mesh(square_spec(0.6), 0.2)
    p = assemble_problem(m, nl=NonlinearityP.rational(2, 1), law=FrictionLaw(2, 1, 50), f=1.0)
    seq = make_linear_sequence(p.f_load, p.q_nodal, harmonic, N=2)
    with pytest.warns(RuntimeWarning), pytest.raises(ValueError):
        p.smallness_check()
        run_stability_experiment(p, seq)


def test_sequence_validation():
    with pytest.raises(ValueError):
        MoscoSequence("bogus", [], None)
    with pytest.raises(ValueError):
        make_obstacle_sequence(np.ones(3), np.zeros(3), harmonic)
    with pytest.raises(ValueError):
        make_obstacle_sequence(np.zeros(3), np.ones(3), harmonic, mode="twist")


def test_obstacle_members_ordered_and_converging():
    lo, hi = np.zeros(5), np.ones(5)
    for mode in ("widen", "shift"):
        seq = make_obstacle_sequence(lo, hi, geometric(2), N=6, mode=mode)
        gaps = [np.max(np.abs(F.lower - lo)) + np.max(np.abs(F.upper - hi)) for F in seq.members]
        assert all(np.all(F.lower <= F.upper) for F in seq.members)
        assert np.all(np.diff(gaps) < 0)


def test_infinite_obstacles_stay_infinite():
    seq = make_obstacle_sequence(np.full(4, -np.inf), np.zeros(4), harmonic, N=3)
    assert all(np.all(np.isneginf(F.lower)) for F in seq.members)


def test_report_csv(tmp_path, prob):
    seq = make_linear_sequence(prob.f_load, prob.q_nodal, geometric(4), N=3)
    rep = run_stability_experiment(prob, seq)
    rep.write_csv(tmp_path / "s.csv")
    rows = list(csv.reader(open(tmp_path / "s.csv")))
    assert rows[0] == ["n", "error", "state_norm", "active_set_size"]
    assert len(rows) == 4
    assert "conical_minorization" in rep.as_dict()


# -- clamp ------------------------------------------------------------------------

vec = arrays(np.float64, 6, elements=st.floats(-10, 10))


def test_cut_examples():
    lo, hi = -np.ones(3), np.ones(3)
    u = np.array([0.2, -0.5, 0.9])
    assert np.array_equal(mosco_recovery_cut(u, lo, hi), u)
    assert np.array_equal(mosco_recovery_cut(u + 5, lo, hi), hi)
    with pytest.raises(ValueError):
        mosco_recovery_cut(u, hi, lo)


@given(vec, vec, vec)
def test_cut_idempotent_and_monotone(u, a, b):
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    c = mosco_recovery_cut(u, lo, hi)
    assert np.array_equal(mosco_recovery_cut(c, lo, hi), c)
    assert np.all(mosco_recovery_cut(u + np.abs(a), lo, hi) >= c)


@given(vec, vec, vec, vec, vec, vec)
def test_cut_lipschitz(u, w, a, b, da, db):
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    lo2, hi2 = np.minimum(a + da, b + db), np.maximum(a + da, b + db)
    d = np.max(np.abs(mosco_recovery_cut(u, lo2, hi2) - mosco_recovery_cut(w, lo, hi)))
    bound = np.max(np.abs(u - w)) + np.max(np.abs(lo2 - lo)) + np.max(np.abs(hi2 - hi))
    assert d <= bound + 1e-12
