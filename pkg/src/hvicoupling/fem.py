"""P1 assembly of the monotone quasilinear interior operator.

With P1 elements the gradient is constant on each triangle, so the energy
G(u) = sum_T |T| g(|grad u|_T) and its derivatives are evaluated exactly.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class NonlinearityP:
    """p(t) = p_const (linear) or p(t) = a + b / (1 + t^2) (rational)."""

    kind: str = "linear"
    a: float = 1.0
    b: float = 0.0

    def __post_init__(self):
        if self.kind not in ("linear", "rational"):
            raise ValueError(f"unknown nonlinearity kind {self.kind!r}")
        if self.kind == "linear":
            if not self.a > 0:
                raise ValueError("linear p requires p_const > 0")
        else:
            # t p(t) strictly increasing with a positive monotonicity constant
            if not self.a > self.b / 8:
                raise ValueError(f"rational p requires a > b/8 (got a={self.a}, b={self.b})")
            if not self.a + min(self.b, 0.0) > 0:
                raise ValueError("rational p requires a + b > 0")

    @classmethod
    def linear(cls, p_const=1.0):
        return cls("linear", p_const, 0.0)

    @classmethod
    def rational(cls, a, b):
        return cls("rational", a, b)

    @property
    def b_eff(self):
        return self.b if self.kind == "rational" else 0.0

    def p(self, t):
        return self.a + self.b_eff / (1.0 + np.asarray(t) ** 2)

    def dp_over_t(self, t):
        """p'(t)/t, smooth at t = 0."""
        return -2.0 * self.b_eff / (1.0 + np.asarray(t) ** 2) ** 2

    def g(self, t):
        """Antiderivative of s p(s) from 0 to t."""
        t = np.asarray(t)
        return 0.5 * self.a * t**2 + 0.5 * self.b_eff * np.log1p(t**2)

    def flux_derivative(self, t):
        """d/dt [t p(t)]."""
        t2 = np.asarray(t) ** 2
        return self.a + self.b_eff * (1 - t2) / (1 + t2) ** 2

    @property
    def p0(self):
        return self.a + max(self.b_eff, 0.0)


def monotonicity_constant(nl: NonlinearityP):
    """inf_t min(p(t), (t p(t))'), the strong monotonicity constant of p(|x|) x."""
    if nl.b_eff >= 0:
        # (t p)' bottoms out at t = sqrt(3) with value a - b/8
        return nl.a - nl.b_eff / 8
    return nl.a + nl.b_eff


def p1_gradients(nodes, triangles):
    """Per-triangle areas and basis gradients, shape (nt, 3, 2)."""
    p = nodes[triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    inv = np.empty((len(triangles), 2, 2))
    inv[:, 0, 0] = d2[:, 1] / det
    inv[:, 0, 1] = -d2[:, 0] / det
    inv[:, 1, 0] = -d1[:, 1] / det
    inv[:, 1, 1] = d1[:, 0] / det
    ref = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    grads = np.einsum("ij,tjk->tik", ref, inv)
    return 0.5 * det, grads


class InteriorOperator:
    def __init__(self, mesh, nonlinearity: NonlinearityP):
        self.mesh = mesh
        self.nl = nonlinearity
        self.tri = mesh.triangles
        self.n = mesh.n_nodes
        self.area, self.grads = p1_gradients(mesh.nodes, mesh.triangles)
        if np.any(self.area <= 0):
            raise ValueError("mesh has non-positive triangle areas")
        self.c_G = monotonicity_constant(nonlinearity)
        self.stiffness = self._assemble(np.ones(len(self.tri)))
        self.mass = self._mass()
        self._rows = np.repeat(self.tri, 3, axis=1).ravel()
        self._cols = np.tile(self.tri, (1, 3)).ravel()

    def _assemble(self, coef):
        K = np.einsum("t,tid,tjd->tij", coef * self.area, self.grads, self.grads)
        rows = np.repeat(self.tri, 3, axis=1).ravel()
        cols = np.tile(self.tri, (1, 3)).ravel()
        return sp.csr_matrix((K.ravel(), (rows, cols)), shape=(self.n, self.n))

    def _mass(self):
        local = (np.ones((3, 3)) + np.eye(3)) / 12.0
        M = self.area[:, None, None] * local[None]
        rows = np.repeat(self.tri, 3, axis=1).ravel()
        cols = np.tile(self.tri, (1, 3)).ravel()
        return sp.csr_matrix((M.ravel(), (rows, cols)), shape=(self.n, self.n))

    def _check(self, *vs):
        for v in vs:
            if np.shape(v) != (self.n,):
                raise ValueError(f"expected a vector of length {self.n}, got shape {np.shape(v)}")

    def gradient(self, u):
        return np.einsum("tid,ti->td", self.grads, np.asarray(u)[self.tri])

    def energy_G(self, u):
        self._check(u)
        t = np.linalg.norm(self.gradient(u), axis=1)
        return float(self.area @ self.nl.g(t))

    def residual(self, u):
        """Vector r_i = DG(u; phi_i)."""
        self._check(u)
        gu = self.gradient(u)
        t = np.linalg.norm(gu, axis=1)
        flux = (self.area * self.nl.p(t))[:, None] * gu
        loc = np.einsum("tid,td->ti", self.grads, flux)
        return np.bincount(self.tri.ravel(), loc.ravel(), minlength=self.n)

    def apply_DG(self, u, v):
        self._check(u, v)
        return float(self.residual(u) @ v)

    def dg_jacobian(self, u):
        """Derivative of u -> DG(u; .): per triangle p I + (p'/t) g g^T."""
        self._check(u)
        gu = self.gradient(u)
        t = np.linalg.norm(gu, axis=1)
        D = self.nl.p(t)[:, None, None] * np.eye(2)[None] + self.nl.dp_over_t(t)[:, None, None] * np.einsum("ti,tj->tij", gu, gu)
        K = np.einsum("t,tia,tab,tjb->tij", self.area, self.grads, D, self.grads)
        return sp.csr_matrix((K.ravel(), (self._rows, self._cols)), shape=(self.n, self.n))

    def seminorm_sq(self, u):
        return float(u @ (self.stiffness @ u))

    def load_form(self, f):
        """Entries int f phi_i; callables are interpolated at nodes (exact for P1 data)."""
        if callable(f):
            x, y = self.mesh.nodes.T
            vals = np.broadcast_to(np.asarray(f(x, y), dtype=float), (self.n,))
        else:
            vals = np.broadcast_to(np.asarray(f, dtype=float), (self.n,))
        return self.mass @ vals

    def lipschitz_estimate(self, rng, samples=20, scale=1.0):
        """Empirical Lipschitz constant of DG w.r.t. the discrete H1 seminorm."""
        K = self.stiffness.toarray()
        # dual seminorm via pseudo-inverse on the complement of constants
        Kp = np.linalg.pinv(K)
        best = 0.0
        for _ in range(samples):
            u, v = scale * rng.standard_normal((2, self.n))
            r = self.residual(u) - self.residual(v)
            d = self.seminorm_sq(u - v)
            if d > 0:
                best = max(best, np.sqrt(r @ Kp @ r / d))
        return best
