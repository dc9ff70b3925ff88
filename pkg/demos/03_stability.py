"""
Stability when the data converge
================================

Perturb the loads (or the obstacle) by 10^-n and watch the solutions converge.
"""

import numpy as np

from hvicoupling.config import build_problem, fixture_config
from hvicoupling.stability import geometric, make_linear_sequence, make_obstacle_sequence, \
    run_stability_experiment

prob = build_problem(fixture_config("square-nonmonotone"))

seq = make_linear_sequence(prob.f_load, prob.q_nodal, geometric(10), N=8)
rep = run_stability_experiment(prob, seq, workers=4)
print("linear data")
for n, (e, s) in enumerate(zip(rep.errors, rep.state_norms), 1):
    print(f"  n={n}  |z_n - z| = {e:.2e}   |z_n| = {s:.4f}")
print("  a priori bound on |z_n|:", round(rep.bound, 3))

# An upper obstacle at 60% of the free peak.
peak = prob.solve().u.max()
n = prob.n_u
seq = make_obstacle_sequence(np.full(n, -np.inf), np.full(n, 0.6 * peak), geometric(10), N=8, mode="shift")
rep = run_stability_experiment(prob, seq, workers=4)
print("obstacle")
for k, (e, a) in enumerate(zip(rep.errors, rep.active_set_sizes), 1):
    print(f"  n={k}  error {e:.2e}   active nodes {a}")
