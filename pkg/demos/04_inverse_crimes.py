"""
Recovering controls from their own states
=========================================

Pick a control, compute its state, forget the control and try to get it back
from the state alone. Small rho means little regularization.
"""

import time

import numpy as np

from hvicoupling.config import build_problem, fixture_config
from hvicoupling.control import ControlSpec, active_set, default_true_control, inverse_crime_setup, minimize, \
    part_errors, rho_sweep

prob = build_problem(fixture_config("ocp2-inverse-crime"))

# boundary datum on 8 segments
probe = ControlSpec("boundary", prob, np.zeros(prob.size), 1e-8)
c_true = default_true_control(probe, seed=0)
spec = inverse_crime_setup(prob, "boundary", c_true, rho=1e-8)
t = time.time()
res = minimize(spec)
print(f"boundary control: error {part_errors(spec, res.control, c_true)[0]:.1e} "
      f"after {res.evaluations} state solves ({time.time() - t:.1f}s)")
print("cost history (first few):", np.array(res.costs[:6]))

for row in rho_sweep(spec, c_true):
    print(f"  rho={row['rho']:.0e}  error {row['error']:.2e}  misfit {row['misfit']:.1e}")

# upper obstacle on 2x2 patches: only the active set is identifiable
probe = ControlSpec("obstacle", prob, np.zeros(prob.size), 1e-8, obstacle_sides=("upper",))
c_true = default_true_control(probe, seed=0)
spec = inverse_crime_setup(prob, "obstacle", c_true, obstacle_sides=("upper",))
c0 = spec.project(np.full(spec.n_controls, prob.solve().u.max()))
res = minimize(spec, c0)
print("obstacle: true active set", np.flatnonzero(active_set(spec, c_true)))
print("          recovered     ", np.flatnonzero(active_set(spec, res.control)))
