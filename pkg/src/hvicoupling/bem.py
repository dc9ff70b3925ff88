"""Galerkin boundary elements for the 2D Laplace exterior problem.

Kernel G(x, y) = -log|x - y| / (2 pi) on a closed counterclockwise polygon.
Neumann densities are piecewise constant (P0, one per panel); traces are
continuous piecewise linear (P1, one per node). Node k starts panel k.

Inner integrals over a source panel are done in closed form, outer integrals by
Gauss-Legendre quadrature; the self-panel single layer entry is exact.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

INV_2PI = 1.0 / (2.0 * np.pi)


@dataclass(frozen=True)
class BoundaryMesh:
    points: np.ndarray  # (n, 2), counterclockwise

    @classmethod
    def from_mesh(cls, mesh):
        return cls(mesh.nodes[mesh.boundary_nodes()])

    @classmethod
    def circle(cls, radius, n, center=(0.0, 0.0)):
        th = 2 * np.pi * np.arange(n) / n
        return cls(np.column_stack([center[0] + radius * np.cos(th), center[1] + radius * np.sin(th)]))

    @property
    def n(self):
        return len(self.points)

    @property
    def starts(self):
        return self.points

    @property
    def ends(self):
        return np.roll(self.points, -1, axis=0)

    @property
    def lengths(self):
        return np.linalg.norm(self.ends - self.starts, axis=1)

    @property
    def tangents(self):
        d = self.ends - self.starts
        return d / np.linalg.norm(d, axis=1)[:, None]

    @property
    def normals(self):
        t = self.tangents
        return np.column_stack([t[:, 1], -t[:, 0]])

    def diameter(self):
        d = self.points[:, None, :] - self.points[None, :, :]
        return float(np.sqrt(np.max(np.sum(d**2, axis=2))))

    def mass_p1(self):
        """P1 x P1 boundary mass matrix."""
        n, L = self.n, self.lengths
        M = np.zeros((n, n))
        i = np.arange(n)
        j = (i + 1) % n
        np.add.at(M, (i, i), L / 3)
        np.add.at(M, (j, j), L / 3)
        np.add.at(M, (i, j), L / 6)
        np.add.at(M, (j, i), L / 6)
        return M

    def mass_p0_p1(self):
        """M[i, j] = int_{panel i} phi_j."""
        n, L = self.n, self.lengths
        M = np.zeros((n, n))
        i = np.arange(n)
        M[i, i] = L / 2
        M[i, (i + 1) % n] = L / 2
        return M

    def lumped_weights(self):
        L = self.lengths
        return 0.5 * (L + np.roll(L, 1))

    def derivative_p1_to_p0(self):
        """Arc-length derivative of a P1 function, one value per panel."""
        n, L = self.n, self.lengths
        D = np.zeros((n, n))
        i = np.arange(n)
        D[i, i] = -1.0 / L
        D[i, (i + 1) % n] = 1.0 / L
        return D

    def gauss_points(self, order=8):
        xg, wg = np.polynomial.legendre.leggauss(order)
        s = 0.5 * (xg + 1.0)
        pts = self.starts[:, None, :] + s[None, :, None] * (self.ends - self.starts)[:, None, :]
        w = 0.5 * wg[None, :] * self.lengths[:, None]
        return pts, w


def _local_coords(x, bmesh):
    """Coordinates of points x (m, 2) relative to every panel: along, normal."""
    rel = x[:, None, :] - bmesh.starts[None, :, :]
    s0 = np.einsum("mpd,pd->mp", rel, bmesh.tangents)
    d = np.einsum("mpd,pd->mp", rel, bmesh.normals)
    return s0, d


def _xlogx(u, d):
    # antiderivative of 0.5 log(u^2 + d^2) in u
    r2 = u * u + d * d
    with np.errstate(divide="ignore", invalid="ignore"):
        lg = np.where(r2 > 0, np.log(np.where(r2 > 0, r2, 1.0)), 0.0)
        at = np.where(d != 0, d * np.arctan(u / np.where(d != 0, d, 1.0)), 0.0)
    return 0.5 * u * lg - u + at


def single_layer_panel_integrals(x, bmesh):
    """int_{panel p} G(x, y) ds_y for every point in x and panel p."""
    s0, d = _local_coords(x, bmesh)
    L = bmesh.lengths[None, :]
    return -INV_2PI * (_xlogx(L - s0, d) - _xlogx(-s0, d))


def double_layer_panel_integrals(x, bmesh):
    """int_{panel p} dG/dn_y(x, y) phi(y) ds_y for the two hat pieces on panel p.

    Returns (A, B): weights of the panel's start and end node. The kernel is
    (x - y).n_y / (2 pi |x - y|^2); on the panel's own line it vanishes.
    """
    s0, d = _local_coords(x, bmesh)
    L = bmesh.lengths[None, :]
    u1, u2 = -s0, L - s0
    nz = np.abs(d) > 1e-14 * L
    dd = np.where(nz, d, 1.0)
    I0 = np.where(nz, np.arctan(u2 / dd) - np.arctan(u1 / dd), 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        I1 = np.where(nz, 0.5 * d * (np.log(u2 * u2 + d * d) - np.log(u1 * u1 + d * d)), 0.0)
    Is = s0 * I0 + I1  # int s * d / |x-y|^2
    B = INV_2PI * Is / L
    A = INV_2PI * I0 - B
    return A, B


@dataclass
class BoundaryOperatorSet:
    """Galerkin matrices of the standard operators (kernel G)."""

    V: np.ndarray  # P0 x P0
    K: np.ndarray  # P0 x P1
    W: np.ndarray  # P1 x P1
    M: np.ndarray  # P0 x P1 pairing
    Mb: np.ndarray  # P1 x P1 mass
    bmesh: BoundaryMesh


def _p0_to_p1_scatter(A, B, n):
    K = np.zeros((A.shape[0], n))
    idx = np.arange(n)
    K[:, idx] += A
    K[:, (idx + 1) % n] += B
    return K


def assemble_boundary_operators(mesh, order=8, check_diameter=True) -> BoundaryOperatorSet:
    bmesh = mesh if isinstance(mesh, BoundaryMesh) else BoundaryMesh.from_mesh(mesh)
    if check_diameter and bmesh.diameter() >= 1.0:
        raise ValueError("boundary diameter must be < 1 for a definite single layer operator; rescale first")
    n = bmesh.n
    pts, w = bmesh.gauss_points(order)
    X = pts.reshape(-1, 2)
    Vin = single_layer_panel_integrals(X, bmesh).reshape(n, order, n)
    V = np.einsum("iq,iqj->ij", w, Vin)
    L = bmesh.lengths
    V[np.arange(n), np.arange(n)] = -INV_2PI * L**2 * (np.log(L) - 1.5)
    V = 0.5 * (V + V.T)
    A, B = double_layer_panel_integrals(X, bmesh)
    Kin = _p0_to_p1_scatter(A, B, n).reshape(n, order, n)
    K = np.einsum("iq,iqj->ij", w, Kin)
    D = bmesh.derivative_p1_to_p0()
    W = D.T @ V @ D
    W = 0.5 * (W + W.T)
    return BoundaryOperatorSet(V, K, W, bmesh.mass_p0_p1(), bmesh.mass_p1(), bmesh)


@dataclass
class SteklovOperator:
    S: np.ndarray
    asymmetry: float
    ops: BoundaryOperatorSet
    c_S_discrete: float = float("nan")


def assemble_steklov(ops: BoundaryOperatorSet) -> SteklovOperator:
    """S = 1/2 [W2 + (M - K2)^T V2^{-1} (M - K2)] with the doubled operators
    V2 = 2V, K2 = 2K, W2 = 2W, which equals W + (M/2 - K)^T V^{-1} (M/2 - K)."""
    V2, K2, W2 = 2 * ops.V, 2 * ops.K, 2 * ops.W
    try:
        cho = sla.cho_factor(V2)
    except np.linalg.LinAlgError as exc:
        raise ValueError("single layer matrix is not positive definite (capacity violation?)") from exc
    B = ops.M - K2
    S = 0.5 * (W2 + B.T @ sla.cho_solve(cho, B))
    asym = float(np.max(np.abs(S - S.T)) / max(np.max(np.abs(S)), 1e-300))
    S = 0.5 * (S + S.T)
    st = SteklovOperator(S, asym, ops)
    st.c_S_discrete = discrete_cS(st)
    return st


def calderon_density(ops: BoundaryOperatorSet, g):
    """P0 Neumann datum dn u2 of the exterior field with Dirichlet trace g:
    psi = -V^{-1} (M/2 - K) g."""
    return -np.linalg.solve(ops.V, (0.5 * ops.M - ops.K) @ g)


def circle_steklov_oracle(R, n):
    if not R > 0:
        raise ValueError("radius must be positive")
    return abs(int(n)) / R


def h_half_norm_matrix(ops: BoundaryOperatorSet):
    """W + Mb: hypersingular seminorm plus L2 mass, an H^{1/2}-equivalent norm."""
    return ops.W + ops.Mb


def discrete_cS(st: SteklovOperator, norm=None, exclude_constants=True):
    """Smallest generalized Rayleigh quotient of S against an H^{1/2}-norm matrix.

    With ``exclude_constants`` the quotient is taken over the Mb-orthogonal
    complement of the constants.
    """
    ops = st.ops
    N = h_half_norm_matrix(ops) if norm is None else norm
    S = st.S
    if exclude_constants:
        one = np.ones(len(S))
        c = ops.Mb @ one
        Q, _ = np.linalg.qr(np.column_stack([c, np.eye(len(S))[:, : len(S) - 1]]))
        P = Q[:, 1:]
        S, N = P.T @ S @ P, P.T @ N @ P
    lam = sla.eigh(S, N, eigvals_only=True, subset_by_index=[0, 0])[0]
    return float(lam)


def steklov_mode_eigenvalues(st: SteklovOperator, modes=(1, 2, 3, 4)):
    """Generalized eigenvalues S x = lam Mb x assigned to Fourier modes by the
    dominant DFT component of each eigenvector (for boundaries parametrized
    uniformly by angle). Returns dict mode -> mean of the matched eigenvalues."""
    lam, X = sla.eigh(st.S, st.ops.Mb)
    F = np.abs(np.fft.rfft(X, axis=0))
    dominant = np.argmax(F, axis=0)
    out = {}
    for m in modes:
        sel = lam[dominant == m]
        out[m] = float(np.mean(sel)) if len(sel) else float("nan")
    return out


def dump_matrix_csv(A, path):
    np.savetxt(path, np.atleast_2d(A), delimiter=",", fmt="%.17g")
