"""
Reconstructing the exterior field
=================================

The coupled solve only returns interior nodal values and the contact slip.
The exterior field comes back from the boundary data by the representation
formula, and we can check it is harmonic and matches the interior flux.
"""

import numpy as np

from hvicoupling.config import build_mesh_from_config, build_problem, fixture_config
from hvicoupling.exterior import fd_laplacian, radiation_check, reconstruct_u2, transmission_residuals
from hvicoupling.geometry import refine_uniform

cfg = fixture_config("refinement-square")
mesh = build_mesh_from_config(cfg)
for level in range(2):
    prob = build_problem(cfg, mesh)
    sol = prob.solve()
    data = reconstruct_u2(sol, prob)
    res = transmission_residuals(sol, prob, data)
    print(f"{len(mesh.triangles):5d} triangles  neumann {res['neumann_jump']:.3e}"
          f"  inclusion {res['inclusion']:.3e}  (full boundary: {res['neumann_jump_full']:.3e})")
    mesh = refine_uniform(mesh)

# the residual near corners and the ends of the contact side does not shrink:
# the traction is singular there

c = data.bmesh.points.mean(axis=0)
th = np.linspace(0, 2 * np.pi, 12, endpoint=False)
ring = c + data.bmesh.diameter() * np.column_stack([np.cos(th), np.sin(th)])
print("max |FD laplacian| on a ring:", np.abs(fd_laplacian(data, ring)).max())

# far away the field grows like (flux / 2pi) log r
print(radiation_check(data))
