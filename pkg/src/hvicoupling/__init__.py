"""FEM-BEM coupling for a quasilinear interface problem with a nonmonotone,
set-valued transmission law, posed as a hemivariational inequality."""

from .bem import BoundaryMesh, assemble_boundary_operators, assemble_steklov
from .fem import InteriorOperator, NonlinearityP
from .geometry import Mesh2D, PolygonSpec, build_mesh, dof_maps, refine_uniform, regular_polygon_spec, square_spec
from .hvi import ExtendedF, HviProblem, SolverError, assemble_problem, solve
from .superpotential import FrictionLaw

__version__ = "0.1.0"
