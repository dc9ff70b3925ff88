"""Exterior field reconstruction from boundary Cauchy data and the transmission
residual checks that tie a discrete solution back to the interface problem."""

from dataclasses import dataclass

import numpy as np

from .bem import calderon_density, double_layer_panel_integrals, single_layer_panel_integrals
from .geometry import _dist_to_polygon, _inside_polygon
from .superpotential import ZeroFunctional


@dataclass
class CauchyData:
    dirichlet: np.ndarray  # P1 boundary coefficients
    neumann: np.ndarray  # P0 density, d/dn with n pointing out of the interior
    a: float
    bmesh: object
    total_flux: float = 0.0


def _raw_potential(data, pts):
    bm = data.bmesh
    A, B = double_layer_panel_integrals(pts, bm)
    g = data.dirichlet
    dl = A @ g + B @ np.roll(g, -1)
    sl = single_layer_panel_integrals(pts, bm) @ data.neumann
    return dl - sl


def evaluate_exterior(data: CauchyData, points, min_dist=None):
    """u2(x) = DL(g)(x) - SL(psi)(x) + a for points strictly outside."""
    pts = np.atleast_2d(np.asarray(points, float))
    bm = data.bmesh
    if min_dist is None:
        min_dist = float(np.max(bm.lengths))
    if np.any(_inside_polygon(pts, bm.points)):
        raise ValueError("evaluation point inside the interior domain")
    if np.any(_dist_to_polygon(pts, bm.points) <= min_dist):
        raise ValueError("evaluation point too close to the boundary for panel quadrature")
    return _raw_potential(data, pts) + data.a


def far_average(data, radius_factor=20.0, n=256):
    bm = data.bmesh
    c = bm.points.mean(axis=0)
    r = radius_factor * bm.diameter()
    th = 2 * np.pi * np.arange(n) / n
    pts = c + r * np.column_stack([np.cos(th), np.sin(th)])
    return float(np.mean(_raw_potential(data, pts)))


def reconstruct_u2(sol, prob, estimate_a=True):
    """Cauchy data of the exterior field: trace x = u|_Gamma + v and the
    Calderon Neumann density psi = -V^{-1}(M/2 - K) x, the P0 realization of
    -S x. ``a`` is the far-circle average of the potential."""
    ops = prob.steklov.ops
    x = prob.trace(sol.u, sol.v)
    psi = calderon_density(ops, x)
    data = CauchyData(x, psi, 0.0, ops.bmesh, float(psi @ ops.bmesh.lengths))
    if estimate_a:
        data.a = far_average(data)
    return data


def _boundary_triangles(mesh):
    lookup = {}
    for t, tri in enumerate(mesh.triangles):
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            lookup[(min(a, b), max(a, b))] = t
    return np.array([lookup[(min(a, b), max(a, b))] for a, b in mesh.boundary_edges])


def interior_edge_traction(prob, u):
    """p(|grad u|) grad u . n on each boundary edge, from the adjacent triangle."""
    mesh = prob.mesh
    tris = _boundary_triangles(mesh)
    gu = prob.interior.gradient(u)[tris]
    t = np.linalg.norm(gu, axis=1)
    return prob.interior.nl.p(t) * np.sum(gu * mesh.outward_normals(), axis=1)


def singular_points(mesh, corner_angle=np.pi / 6):
    """Boundary points where the traction may blow up: polygon corners turning
    by more than ``corner_angle`` and the end points of Gamma_s."""
    b = mesh.nodes[mesh.boundary_nodes()]
    t_out = np.roll(b, -1, axis=0) - b
    t_in = b - np.roll(b, 1, axis=0)
    cross = t_in[:, 0] * t_out[:, 1] - t_in[:, 1] * t_out[:, 0]
    turn = np.abs(np.arctan2(cross, np.sum(t_in * t_out, axis=1)))
    lab = np.asarray(mesh.edge_labels)
    junction = lab != np.roll(lab, 1)
    return b[(turn > corner_angle) | junction]


def transmission_residuals(sol, prob, data=None, exclude_radius=0.1):
    """Dirichlet jump on Gamma_t, Neumann jump p dn u1 - dn u2 - q on Gamma
    (edgewise, L2 norm) and the distance of the traction to the Clarke interval
    on Gamma_s nodes (lumped L2 norm).

    The traction is singular at corners and at the end points of Gamma_s, so
    the Neumann and inclusion residuals are measured on the part of Gamma at
    distance > ``exclude_radius`` from those points; ``*_full`` keeps all of
    Gamma. ``inclusion_consistent`` uses the variationally consistent nodal
    traction (FEM residual), which satisfies the inclusion up to solver
    tolerance. With J = 0 there is no set-valued law and the inclusion
    residuals are reported as zero.
    """
    if data is None:
        data = reconstruct_u2(sol, prob, estimate_a=False)
    bm = data.bmesh
    L = bm.lengths
    x = data.dirichlet
    u_trace = sol.u[prob.bd]
    jump = x - u_trace  # u2 - u1 on Gamma
    on_t = np.ones(len(x), bool)
    on_t[prob.gs] = False
    dirichlet_jump = float(np.max(np.abs(jump[on_t]), initial=0.0))

    sing = singular_points(prob.mesh)
    mid = 0.5 * (bm.starts + bm.ends)

    def away(pts):
        if len(sing) == 0:
            return np.ones(len(pts), bool)
        return np.min(np.linalg.norm(pts[:, None] - sing[None], axis=2), axis=1) > exclude_radius

    t_edge = interior_edge_traction(prob, sol.u)
    q = prob.q_nodal
    q_edge = 0.5 * (q + np.roll(q, -1))
    r = t_edge - data.neumann - q_edge
    keep = away(mid)
    neumann_full = float(np.sqrt(np.sum(L * r * r)))
    neumann = float(np.sqrt(np.sum((L * r * r)[keep])))

    friction = not isinstance(prob.J, ZeroFunctional)
    inclusion = inclusion_full = inclusion_cons = 0.0
    if friction:
        # nodal traction from the two adjacent edges
        t_node = (L * t_edge + np.roll(L * t_edge, 1)) / (L + np.roll(L, 1))
        w = prob.J.weights
        iv = prob.J.interval(sol.v)
        d2 = w * iv.distance(t_node[prob.gs]) ** 2
        inclusion_full = float(np.sqrt(np.sum(d2)))
        inclusion = float(np.sqrt(np.sum(d2[away(bm.points[prob.gs])])))
        res = prob.interior.residual(sol.u) - prob.f_load
        t_cons = res[prob.bd][prob.gs] / w
        inclusion_cons = float(np.max(iv.distance(t_cons), initial=0.0))
    return {
        "dirichlet_jump_gamma_t": dirichlet_jump,
        "neumann_jump": neumann,
        "neumann_jump_full": neumann_full,
        "inclusion": inclusion,
        "inclusion_full": inclusion_full,
        "inclusion_consistent": inclusion_cons,
        "exclude_radius": float(exclude_radius),
        "friction": friction,
    }


def fd_laplacian(data, points, delta=0.01):
    """Five-point Laplacian of the evaluated exterior field."""
    pts = np.atleast_2d(points)
    e = np.array([[delta, 0.0], [-delta, 0.0], [0.0, delta], [0.0, -delta]])
    vals = [evaluate_exterior(data, pts + s, min_dist=0.0) for s in e]
    c = evaluate_exterior(data, pts, min_dist=0.0)
    return (sum(vals) - 4 * c) / delta**2


def radiation_check(data, radii=(10.0, 100.0, 1000.0), n=64):
    """Far-field behaviour on circles about the boundary centroid.

    The field is a + (flux / 2 pi) log r + O(1/r); ``log_coefficient`` is the
    fitted slope against log r (zero flux means the field tends to ``a``) and
    ``oscillation`` the peak-to-peak variation on each circle, which decays like 1/r.
    """
    bm = data.bmesh
    c = bm.points.mean(axis=0)
    th = 2 * np.pi * np.arange(n) / n
    ring = np.column_stack([np.cos(th), np.sin(th)])
    means, osc = [], []
    for r in radii:
        vals = evaluate_exterior(data, c + r * ring)
        means.append(float(np.mean(vals)))
        osc.append(float(np.ptp(vals)))
    slope = float(np.polyfit(np.log(radii), means, 1)[0]) if len(radii) > 1 else 0.0
    return {"radii": [float(r) for r in radii], "means": means, "oscillation": osc,
            "log_coefficient": slope, "expected_log_coefficient": data.total_flux / (2 * np.pi)}


def write_field_csv(data, points, path):
    vals = evaluate_exterior(data, points)
    with open(path, "w") as fh:
        fh.write("x,y,u2\n")
        for (px, py), val in zip(np.atleast_2d(points), vals):
            fh.write(f"{px:.17g},{py:.17g},{val:.17g}\n")
