"""
Exterior Steklov operator on a circle
=====================================

The exterior Dirichlet-to-Neumann map of a circle of radius R sends
cos(n theta) to (n / R) cos(n theta). We assemble the boundary element version
and watch the discrete eigenvalues approach n / R.
"""

import numpy as np

from hvicoupling.bem import (BoundaryMesh, assemble_boundary_operators, assemble_steklov,
                             circle_steklov_oracle, steklov_mode_eigenvalues)

R = 0.25

for n_panels in (32, 64, 128, 256):
    ops = assemble_boundary_operators(BoundaryMesh.circle(R, n_panels))
    st = assemble_steklov(ops)
    ev = steklov_mode_eigenvalues(st)
    errs = [abs(ev[m] - circle_steklov_oracle(R, m)) / circle_steklov_oracle(R, m) for m in ev]
    print(f"{n_panels:4d} panels  " + "  ".join(f"n={m}: {ev[m]:8.4f}" for m in ev)
          + f"   worst rel. error {max(errs):.1e}")

# Halving the panel size divides the error by about four.

# Constants are special in 2D. With the -log|x|/2pi kernel and a boundary of
# diameter below one, the constant trace is not annihilated: it goes to the
# capacity term 1 / (R log(1/R)) instead.
one = np.ones(st.S.shape[0])
print("S 1 / (M 1) =", (st.S @ one / (st.ops.Mb @ one))[0], " vs ", 1 / (R * np.log(1 / R)))
