"""
A nonmonotone friction law on one side of a square
==================================================

Interior: div(p(|grad u|) grad u) with p(t) = 2 + 1/(1+t^2).
Exterior: harmonic, coupled through the Steklov operator.
Contact side: the slope of the friction law drops from mu1 = 2 to mu2 = 1.
"""

import numpy as np

from hvicoupling import FrictionLaw, NonlinearityP, assemble_problem, build_mesh, square_spec
from hvicoupling.hvi import brute_force_oracle, hvi_residual
from hvicoupling.config import tiny_problem

mesh = build_mesh(square_spec(0.6), 0.1)
prob = assemble_problem(mesh, nl=NonlinearityP.rational(2.0, 1.0), law=FrictionLaw(2.0, 1.0, 1.0),
                        f=lambda x, y: 5 + 0 * x, q=lambda x, y: 3 * np.cos(7 * x) + 2 * y)
print(len(mesh.triangles), "triangles,", prob.size, "unknowns")

# is the problem in the uniqueness regime?
rep = prob.smallness_check()
print(rep.as_dict())

sol = prob.solve()
print("outer iterations:", sol.outer_iterations)
print("step ratios:", np.round(sol.contraction_factors, 3))
print("largest ratio", max(sol.contraction_factors), "<= bound", rep.theta_bound)

# the sampled variational residual should not be (noticeably) negative
print("residual over 200 random directions:", hvi_residual(prob, sol))

# where does the contact side stick?
stick = np.abs(sol.v) < 1e-10
print(f"{stick.sum()} of {prob.n_v} contact nodes stick")

# on a five-node mesh the energy can be minimized by brute force
tiny = tiny_problem("tiny-slip")
u, v = brute_force_oracle(tiny)
print("tiny fixture, solver vs brute force:", np.max(np.abs(tiny.solve().z - np.concatenate([u, v]))))
