"""Polygonal meshes, boundary partition into contact (S) and transmission (T)
parts, and the trace maps between interior, boundary and contact dofs."""

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import Delaunay


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class PolygonSpec:
    """Counterclockwise polygon; ``gamma_s_arcs`` holds ``(start, stop)`` vertex
    indices, the arc running along edges ``start, start+1, ..., stop-1``
    (cyclically)."""

    vertices: np.ndarray
    gamma_s_arcs: tuple = ()

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=float)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "gamma_s_arcs", tuple(tuple(int(i) for i in a) for a in self.gamma_s_arcs))

    @property
    def n_edges(self):
        return len(self.vertices)

    def edge_labels(self):
        """'S' or 'T' for each polygon edge (edge k joins vertex k to k+1)."""
        n = self.n_edges
        labels = np.array(["T"] * n)
        for start, stop in self.gamma_s_arcs:
            k = start % n
            count = (stop - start) % n or n
            for _ in range(count):
                if labels[k] == "S":
                    raise MeshError("gamma_s arcs overlap")
                labels[k] = "S"
                k = (k + 1) % n
        return labels

    def validate(self):
        v = self.vertices
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise MeshError("polygon needs at least 3 two-dimensional vertices")
        if signed_area(v) <= 0:
            raise MeshError("polygon must be counterclockwise with positive area")
        edges = np.roll(v, -1, axis=0) - v
        if np.any(np.hypot(*edges.T) <= 1e-14):
            raise MeshError("degenerate polygon: repeated vertex")
        if _self_intersects(v):
            raise MeshError("polygon is self-intersecting")
        labels = self.edge_labels()
        if not np.any(labels == "S"):
            raise MeshError("gamma_s must be nonempty")
        if not np.any(labels == "T"):
            raise MeshError("gamma_t must be nonempty")
        return self


def signed_area(v):
    x, y = v[:, 0], v[:, 1]
    return 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)


def _segments_cross(p1, p2, q1, q2):
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    return d1 * d2 < 0 and d3 * d4 < 0


def _self_intersects(v):
    n = len(v)
    for i in range(n):
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue
            if _segments_cross(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]):
                return True
    return False


def _inside_polygon(pts, v):
    # even-odd ray casting, vectorized over points
    x, y = pts[:, 0][:, None], pts[:, 1][:, None]
    x1, y1 = v[:, 0][None, :], v[:, 1][None, :]
    x2, y2 = np.roll(v[:, 0], -1)[None, :], np.roll(v[:, 1], -1)[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = (y1 > y) != (y2 > y)
        xint = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
        hits = cond & (x < xint)
    return np.count_nonzero(hits, axis=1) % 2 == 1


def _dist_to_polygon(pts, v):
    a = v[None, :, :]
    b = np.roll(v, -1, axis=0)[None, :, :]
    p = pts[:, None, :]
    ab = b - a
    t = np.clip(np.sum((p - a) * ab, axis=2) / np.sum(ab * ab, axis=2), 0.0, 1.0)
    proj = a + t[..., None] * ab
    return np.min(np.linalg.norm(p - proj, axis=2), axis=1)


@dataclass(frozen=True)
class Mesh2D:
    nodes: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray  # (K, 2), counterclockwise cyclic order
    edge_labels: np.ndarray  # (K,), 'S' or 'T'

    @property
    def h(self):
        t = self.triangles
        p = self.nodes
        lengths = [np.linalg.norm(p[t[:, i]] - p[t[:, (i + 1) % 3]], axis=1) for i in range(3)]
        return float(np.max(lengths))

    @property
    def n_nodes(self):
        return len(self.nodes)

    def areas(self):
        p = self.nodes[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def boundary_nodes(self):
        """Boundary node indices in counterclockwise cyclic order."""
        return self.boundary_edges[:, 0].copy()

    def edge_lengths(self):
        e = self.boundary_edges
        return np.linalg.norm(self.nodes[e[:, 1]] - self.nodes[e[:, 0]], axis=1)

    def outward_normals(self):
        e = self.boundary_edges
        d = self.nodes[e[:, 1]] - self.nodes[e[:, 0]]
        d /= np.linalg.norm(d, axis=1)[:, None]
        return np.column_stack([d[:, 1], -d[:, 0]])

    def diameter(self):
        b = self.nodes[self.boundary_nodes()]
        diff = b[:, None, :] - b[None, :, :]
        return float(np.sqrt(np.max(np.sum(diff**2, axis=2))))

    def scaled(self, s):
        return Mesh2D(self.nodes * s, self.triangles, self.boundary_edges, self.edge_labels)


def _subdivide_boundary(spec, spacing):
    v = spec.vertices
    labels = spec.edge_labels()
    pts, lab = [], []
    for k in range(len(v)):
        a, b = v[k], v[(k + 1) % len(v)]
        m = max(1, int(np.ceil(np.linalg.norm(b - a) / spacing - 1e-9)))
        for i in range(m):
            pts.append(a + (b - a) * i / m)
            lab.append(labels[k])
    return np.array(pts), np.array(lab)


def build_mesh(spec: PolygonSpec, h_target: float) -> Mesh2D:
    """Triangulate ``spec`` with maximal edge length at most ``h_target``.

    Boundary edges are split uniformly at spacing ``<= h_target``; interior nodes
    come from a square grid kept away from the boundary, and the point cloud is
    connected by Delaunay triangulation. The interior spacing shrinks until the
    diameter bound holds.
    """
    spec.validate()
    if not h_target > 0:
        raise MeshError("h_target must be positive")
    v = spec.vertices
    lo, hi = v.min(axis=0), v.max(axis=0)
    bpts, blabels = _subdivide_boundary(spec, h_target)
    nb = len(bpts)
    grid = h_target / np.sqrt(2.0)
    for _ in range(40):
        nx = int(np.floor((hi[0] - lo[0]) / grid))
        ny = int(np.floor((hi[1] - lo[1]) / grid))
        if nx >= 1 and ny >= 1:
            gx = lo[0] + (hi[0] - lo[0] - nx * grid) / 2 + grid * np.arange(nx + 1)
            gy = lo[1] + (hi[1] - lo[1] - ny * grid) / 2 + grid * np.arange(ny + 1)
            X, Y = np.meshgrid(gx, gy)
            cand = np.column_stack([X.ravel(), Y.ravel()])
            keep = _inside_polygon(cand, v) & (_dist_to_polygon(cand, v) > 0.45 * grid)
            ipts = cand[keep]
        else:
            ipts = np.zeros((0, 2))
        nodes = np.vstack([bpts, ipts])
        mesh = _triangulate(nodes, nb, blabels, v)
        if mesh is not None and mesh.h <= h_target * (1 + 1e-12):
            return mesh
        grid *= 0.85
    raise MeshError("could not reach the requested mesh size")


def _triangulate(nodes, nb, blabels, v):
    if len(nodes) < 3:
        return None
    tri = Delaunay(nodes).simplices
    cent = nodes[tri].mean(axis=1)
    tri = tri[_inside_polygon(cent, v)]
    p = nodes[tri]
    area = 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
    flip = area < 0
    tri[flip] = tri[flip][:, [0, 2, 1]]
    tri = tri[np.abs(area) > 1e-14 * np.abs(area).max()]
    if len(tri) == 0:
        raise MeshError("h_target too large: no triangle fits")
    bedges = np.column_stack([np.arange(nb), (np.arange(nb) + 1) % nb])
    # every boundary segment must be a triangle edge
    edge_set = {tuple(sorted(e)) for t in tri for e in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0]))}
    if any(tuple(sorted(e)) not in edge_set for e in bedges):
        return None
    if len(np.unique(tri)) != len(nodes):
        return None
    return Mesh2D(nodes, tri.astype(np.int64), bedges.astype(np.int64), np.asarray(blabels))


def refine_uniform(mesh: Mesh2D) -> Mesh2D:
    """Red refinement: every triangle split into four through edge midpoints.

    Boundary nodes come first in counterclockwise order, as in ``build_mesh``;
    each boundary edge passes its label to both halves.
    """
    tri = mesh.triangles
    edges = np.sort(np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]]), axis=1)
    uniq, inv = np.unique(edges, axis=0, return_inverse=True)
    inv = inv.ravel()
    n_old = mesh.n_nodes
    mids = 0.5 * (mesh.nodes[uniq[:, 0]] + mesh.nodes[uniq[:, 1]])
    nodes = np.vstack([mesh.nodes, mids])
    nt = len(tri)
    m01, m12, m20 = (n_old + inv[:nt], n_old + inv[nt:2 * nt], n_old + inv[2 * nt:])
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    new_tri = np.vstack([np.column_stack([a, m01, m20]), np.column_stack([m01, b, m12]),
                         np.column_stack([m20, m12, c]), np.column_stack([m01, m12, m20])])
    be = mesh.boundary_edges
    key = {tuple(e): n_old + i for i, e in enumerate(uniq)}
    bmid = np.array([key[tuple(sorted(e))] for e in be])
    border = np.column_stack([be[:, 0], bmid]).ravel()
    labels = np.repeat(mesh.edge_labels, 2)
    rest = np.setdiff1d(np.arange(len(nodes)), border)
    perm = np.concatenate([border, rest])
    newidx = np.empty(len(nodes), dtype=np.int64)
    newidx[perm] = np.arange(len(nodes))
    nb = len(border)
    bedges = np.column_stack([np.arange(nb), (np.arange(nb) + 1) % nb])
    return Mesh2D(nodes[perm], newidx[new_tri], bedges.astype(np.int64), labels)


def rescale_for_capacity(mesh: Mesh2D, target=0.9):
    """Scale coordinates so that the diameter is below one.

    The logarithmic single layer operator in 2D is positive definite only when
    the boundary's capacity is below one; diameter < 1 suffices.
    """
    d = mesh.diameter()
    if d < 1.0:
        return mesh, 1.0
    s = target / d
    return mesh.scaled(s), s


@dataclass(frozen=True)
class DofMaps:
    n_interior: int
    boundary_dofs: np.ndarray  # mesh node ids, cyclic order
    gamma_s_local: np.ndarray  # positions within boundary_dofs
    gamma_s_dofs: np.ndarray = field(init=False)
    trace_map: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "gamma_s_dofs", self.boundary_dofs[self.gamma_s_local])
        object.__setattr__(self, "trace_map", self.boundary_dofs)

    @property
    def interior_dofs(self):
        return np.arange(self.n_interior)

    @property
    def n_boundary(self):
        return len(self.boundary_dofs)

    @property
    def n_gamma_s(self):
        return len(self.gamma_s_local)

    def trace(self, u):
        return np.asarray(u)[..., self.boundary_dofs]

    def expand(self, v):
        """Gamma_s coefficients -> full boundary vector (zero on cl Gamma_t)."""
        out = np.zeros(np.shape(v)[:-1] + (self.n_boundary,))
        out[..., self.gamma_s_local] = v
        return out

    def restrict(self, w):
        return np.asarray(w)[..., self.gamma_s_local]

    def trace_matrix(self):
        T = np.zeros((self.n_boundary, self.n_interior))
        T[np.arange(self.n_boundary), self.boundary_dofs] = 1.0
        return T

    def expand_matrix(self):
        E = np.zeros((self.n_boundary, self.n_gamma_s))
        E[self.gamma_s_local, np.arange(self.n_gamma_s)] = 1.0
        return E


def dof_maps(mesh: Mesh2D) -> DofMaps:
    labels = mesh.edge_labels
    nb = len(labels)
    # node k sits between edge k-1 and edge k
    inside = (labels == "S") & (np.roll(labels, 1) == "S")
    local = np.flatnonzero(inside)
    if len(local) == 0:
        raise MeshError("gamma_s has no interior node; refine the mesh")
    if np.all(inside):
        raise MeshError("gamma_t must be nonempty")
    return DofMaps(mesh.n_nodes, mesh.boundary_nodes(), local)


# -- plain-text mesh format ---------------------------------------------------

def write_mesh(mesh: Mesh2D, path):
    with open(path, "w") as fh:
        fh.write(f"nodes {mesh.n_nodes} triangles {len(mesh.triangles)} bedges {len(mesh.boundary_edges)}\n")
        for x, y in mesh.nodes:
            fh.write(f"{x:.17g} {y:.17g}\n")
        for a, b, c in mesh.triangles:
            fh.write(f"{a} {b} {c}\n")
        for (i, j), lab in zip(mesh.boundary_edges, mesh.edge_labels):
            fh.write(f"{i} {j} {lab}\n")


def read_mesh(path) -> Mesh2D:
    with open(path) as fh:
        head = fh.readline().split()
        if len(head) != 6 or head[0] != "nodes" or head[2] != "triangles" or head[4] != "bedges":
            raise MeshError("bad mesh header")
        nn, nt, nbe = int(head[1]), int(head[3]), int(head[5])
        lines = [ln.split() for ln in fh if ln.strip()]
    if len(lines) != nn + nt + nbe:
        raise MeshError("mesh file length does not match header")
    nodes = np.array([[float(a), float(b)] for a, b in lines[:nn]])
    tris = np.array([[int(a) for a in ln] for ln in lines[nn:nn + nt]], dtype=np.int64)
    be = lines[nn + nt:]
    edges = np.array([[int(a), int(b)] for a, b, _ in be], dtype=np.int64)
    labels = np.array([lab for _, _, lab in be])
    if not set(labels) <= {"S", "T"}:
        raise MeshError("boundary labels must be S or T")
    return Mesh2D(nodes, tris, edges, labels)


# -- stock polygons ------------------------------------------------------------

def square_spec(side=1.0, gamma_s_sides=(0,)):
    v = side * np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    return PolygonSpec(v, tuple((k, k + 1) for k in gamma_s_sides))


def regular_polygon_spec(n, radius, gamma_s_arc=(0, 1), center=(0.0, 0.0)):
    th = 2 * np.pi * np.arange(n) / n
    v = np.column_stack([center[0] + radius * np.cos(th), center[1] + radius * np.sin(th)])
    return PolygonSpec(v, (gamma_s_arc,))
