"""Discrete hemivariational inequality on (interior nodes) x (Gamma_s nodes).

Unknowns z = (u, v): u holds P1 values on all mesh nodes, v the P1 values of
the jump on the contact part (zero on cl Gamma_t). With x = u|_Gamma + v,

    A(u, v)(u', v') = DG(u; u') + <S x, x'>,
    energy(u, v)    = G(u) + 1/2 <S x, x> + J(v) + F(u, v) - lambda(u, v),

where F = (linear functional) + (indicator of a nodal box on u).

The friction law splits into mu1 |v| (convex) plus a concave C^1 remainder whose
gradient is Lipschitz with constant c_J. The outer loop freezes that gradient
at the current iterate; each inner problem is strongly convex and is solved by
a semismooth Newton (primal-dual active set) method.
"""

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .bem import BoundaryMesh, assemble_boundary_operators, assemble_steklov
from .fem import InteriorOperator
from .geometry import dof_maps
from .superpotential import BoundaryFunctionalJ, ZeroFunctional

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    pass


@dataclass
class ExtendedF:
    lin_u: np.ndarray = None
    lin_v: np.ndarray = None
    lower: np.ndarray = None
    upper: np.ndarray = None

    def resolve(self, n_u, n_v):
        lin_u = np.zeros(n_u) if self.lin_u is None else np.asarray(self.lin_u, float)
        lin_v = np.zeros(n_v) if self.lin_v is None else np.asarray(self.lin_v, float)
        lo = np.full(n_u, -np.inf) if self.lower is None else np.broadcast_to(np.asarray(self.lower, float), (n_u,)).copy()
        hi = np.full(n_u, np.inf) if self.upper is None else np.broadcast_to(np.asarray(self.upper, float), (n_u,)).copy()
        if lin_u.shape != (n_u,) or lin_v.shape != (n_v,):
            raise ValueError("linear part of F has the wrong size")
        if np.any(lo > hi):
            raise ValueError("infeasible box: lower obstacle exceeds upper obstacle")
        return ExtendedF(lin_u, lin_v, lo, hi)

    @property
    def has_box(self):
        return self.lower is not None and (np.any(np.isfinite(self.lower)) or np.any(np.isfinite(self.upper)))


@dataclass
class HviSolution:
    u: np.ndarray
    v: np.ndarray
    outer_iterations: int = 0
    steps: list = field(default_factory=list)
    contraction_factors: list = field(default_factory=list)
    residual: float = float("nan")
    smallness_satisfied: bool = False
    converged: bool = False
    inner_iterations: list = field(default_factory=list)
    energies: list = field(default_factory=list)

    @property
    def z(self):
        return np.concatenate([self.u, self.v])


@dataclass
class SmallnessReport:
    c_A_discrete: float
    gamma_norm_sq: float
    c_J: float
    margin: float

    @property
    def theta_bound(self):
        return self.c_J * self.gamma_norm_sq / self.c_A_discrete

    def as_dict(self):
        return {"c_A": self.c_A_discrete, "gamma_norm_sq": self.gamma_norm_sq, "c_J": self.c_J,
                "margin": self.margin, "theta_bound": self.theta_bound}


def _boundary_values(q, bmesh, n):
    if q is None:
        return np.zeros(n)
    if callable(q):
        x, y = bmesh.points.T
        return np.broadcast_to(np.asarray(q(x, y), float), (n,)).copy()
    return np.broadcast_to(np.asarray(q, float), (n,)).copy()


class HviProblem:
    def __init__(self, mesh, dofs, interior, steklov, functional, f_load, q_nodal, F):
        self.mesh = mesh
        self.dofs = dofs
        self.interior = interior
        self.steklov = steklov
        self.S = steklov.S
        self.J = functional
        self.bd = dofs.boundary_dofs
        self.gs = dofs.gamma_s_local
        self.n_u = dofs.n_interior
        self.n_v = dofs.n_gamma_s
        self.size = self.n_u + self.n_v
        self.Mb = steklov.ops.Mb
        self.f_load = np.asarray(f_load, float)
        self.q_nodal = np.asarray(q_nodal, float)
        qb = self.Mb @ self.q_nodal
        lam_u = self.f_load.copy()
        lam_u[self.bd] += qb
        self.lam = np.concatenate([lam_u, qb[self.gs]])
        self.F = F.resolve(self.n_u, self.n_v)
        self.lin_F = np.concatenate([self.F.lin_u, self.F.lin_v])
        self.kink_w = self.J.weights * self.J.kink()
        self._NE = None
        self._smallness = None

    # -- replacing data (control loops) --------------------------------------
    def with_data(self, f_load=None, q_nodal=None, F=None):
        return HviProblem(self.mesh, self.dofs, self.interior, self.steklov, self.J,
                          self.f_load if f_load is None else f_load,
                          self.q_nodal if q_nodal is None else q_nodal,
                          self.F if F is None else F)._share(self)

    def _share(self, other):
        self._NE = other._NE
        self._smallness = other._smallness
        return self

    # -- basic pieces ----------------------------------------------------------
    def split(self, z):
        return z[: self.n_u], z[self.n_u:]

    def trace(self, u, v):
        x = u[self.bd].copy()
        x[self.gs] += v
        return x

    def _lift(self, y):
        """Adjoint of (u, v) -> x for a boundary vector y."""
        out = np.zeros(self.size)
        np.add.at(out, self.bd, y)
        out[self.n_u:] = y[self.gs]
        return out

    def coupled_matrix(self, Kuu):
        """Dense [Kuu + T'ST, T'SE; E'ST, E'SE]."""
        H = np.zeros((self.size, self.size))
        H[: self.n_u, : self.n_u] = Kuu.toarray() if hasattr(Kuu, "toarray") else Kuu
        idx = np.concatenate([self.bd, self.n_u + np.arange(self.n_v)])
        B = np.zeros((len(self.bd), self.size))
        B[np.arange(len(self.bd)), self.bd] = 1.0
        B[self.gs, self.n_u + np.arange(self.n_v)] = 1.0
        cols = np.unique(idx)
        Bc = B[:, cols]
        H[np.ix_(cols, cols)] += Bc.T @ self.S @ Bc
        return H

    @property
    def norm_matrix(self):
        """Energy inner product of E: |u|_H1^2 + <S(u|_Gamma + v), u|_Gamma + v>."""
        if self._NE is None:
            self._NE = self.coupled_matrix(self.interior.stiffness)
        return self._NE

    def norm_E(self, z):
        return float(np.sqrt(max(z @ self.norm_matrix @ z, 0.0)))

    def dual_norm(self, g):
        return float(np.sqrt(max(g @ np.linalg.solve(self.norm_matrix, g), 0.0)))

    def operator(self, z):
        """Vector of A(z)(e_i)."""
        u, v = self.split(z)
        out = self._lift(self.S @ self.trace(u, v))
        out[: self.n_u] += self.interior.residual(u)
        return out

    def apply_A(self, z, w):
        return float(self.operator(z) @ w)

    def feasible(self, u, tol=0.0):
        return bool(np.all(u >= self.F.lower - tol) and np.all(u <= self.F.upper + tol))

    def project(self, z):
        z = z.copy()
        z[: self.n_u] = np.clip(z[: self.n_u], self.F.lower, self.F.upper)
        return z

    def energy(self, z):
        u, v = self.split(z)
        if not self.feasible(u):
            return np.inf
        x = self.trace(u, v)
        return (self.interior.energy_G(u) + 0.5 * x @ self.S @ x + self.J.value(v)
                + (self.lin_F - self.lam) @ z)

    def hvi_form(self, z, d):
        """A(z)(d) + J0(v; d_v) + F_lin(d) - lambda(d)."""
        _, v = self.split(z)
        return self.apply_A(z, d) + self.J.j0(v, d[self.n_u:]) + (self.lin_F - self.lam) @ d

    def bifunction_phi(self, z, w):
        d = w - z
        _, v = self.split(z)
        return self.apply_A(z, d) + self.J.j0(v, d[self.n_u:]) - (self.lam - self.lin_F) @ d

    @property
    def scale(self):
        """Size of the data: dual norm of lambda - F plus the friction bound."""
        g = self.lam - self.lin_F
        return self.dual_norm(g) + float(np.sqrt(np.sum(self.J.weights)) * self.J.c_j1()) + 1e-300

    # -- smallness ----------------------------------------------------------
    def smallness_check(self, warn=True) -> SmallnessReport:
        if self._smallness is None:
            NE = self.norm_matrix
            Ac = self.coupled_matrix(self.interior.c_G * self.interior.stiffness)
            c_A = float(sla.eigh(Ac, NE, eigvals_only=True, subset_by_index=[0, 0])[0])
            Nv = NE[self.n_u:, self.n_u:] - NE[self.n_u:, : self.n_u] @ np.linalg.solve(
                NE[: self.n_u, : self.n_u], NE[: self.n_u, self.n_u:])
            gam = float(sla.eigh(np.diag(self.J.weights), Nv, eigvals_only=True,
                                 subset_by_index=[self.n_v - 1, self.n_v - 1])[0])
            c_J = self.J.c_J()
            self._smallness = SmallnessReport(c_A, gam, c_J, c_A - c_J * gam)
        rep = self._smallness
        if warn and rep.margin <= 0:
            warnings.warn(f"smallness condition fails (margin {rep.margin:.3g}): existence only, "
                          "no uniqueness certificate", RuntimeWarning, stacklevel=2)
        return rep

    # -- solvers --------------------------------------------------------------
    def solve(self, start=None, tol=1e-11, inner_tol=1e-11, max_outer=200, check_residual=True):
        return solve(self, start=start, tol=tol, inner_tol=inner_tol, max_outer=max_outer,
                     check_residual=check_residual)


def assemble_problem(mesh, dofs=None, nl=None, law=None, f=None, q=None, extended_F=None, steklov=None):
    """Assemble the coupled problem on a mesh of diameter < 1.

    ``law`` is a FrictionLaw, a list of per-node laws, or None for J = 0;
    ``f`` and ``q`` are callables ``(x, y) -> value`` or nodal arrays (``q`` on
    boundary nodes in cyclic order).
    """
    from .fem import NonlinearityP

    dofs = dof_maps(mesh) if dofs is None else dofs
    nl = NonlinearityP.linear(1.0) if nl is None else nl
    interior = InteriorOperator(mesh, nl)
    if steklov is None:
        steklov = assemble_steklov(assemble_boundary_operators(mesh))
    bmesh = steklov.ops.bmesh
    weights = bmesh.lumped_weights()[dofs.gamma_s_local]
    functional = ZeroFunctional(weights) if law is None else BoundaryFunctionalJ(law, weights)
    f_load = np.zeros(mesh.n_nodes) if f is None else interior.load_form(f)
    q_nodal = _boundary_values(q, bmesh, dofs.n_boundary)
    F = ExtendedF() if extended_F is None else extended_F
    return HviProblem(mesh, dofs, interior, steklov, functional, f_load, q_nodal, F)


# -- inner convex problem -------------------------------------------------------

@dataclass
class InnerResult:
    z: np.ndarray
    iterations: int
    residual: float
    converged: bool
    energies: list


def _natural_residual(prob, z, g, c):
    """Gradient-unit residual of z = prox(z - c g) and the implied active sets."""
    nu = prob.n_u
    u, v = z[:nu], z[nu:]
    du = u - c[:nu] * g[:nu]
    pu = np.clip(du, prob.F.lower, prob.F.upper)
    dv = v - c[nu:] * g[nu:]
    thr = c[nu:] * prob.kink_w
    pv = np.sign(dv) * np.maximum(np.abs(dv) - thr, 0.0)
    r = (z - np.concatenate([pu, pv])) / c
    return r, du, dv, thr


def inner_convex_solve(prob, frozen_v, start, tol=1e-11, max_iter=100):
    """Minimize G(u) + 1/2<Sx,x> + sum w mu1 |v| + <w h'(v_k), v> + F - lambda
    over the box, by semismooth Newton on the prox fixed-point equation."""
    nu = prob.n_u
    lin = prob.lin_F - prob.lam
    lin = lin.copy()
    lin[nu:] += prob.J.weights * prob.J.smooth_grad(frozen_v)
    S = prob.S
    Bfix = prob.coupled_matrix(np.zeros((nu, nu)))

    def grad(z):
        u, v = z[:nu], z[nu:]
        gz = prob._lift(S @ prob.trace(u, v)) + lin
        gz[:nu] += prob.interior.residual(u)
        return gz

    def objective(z):
        u, v = z[:nu], z[nu:]
        if not prob.feasible(u):
            return np.inf
        x = prob.trace(u, v)
        return prob.interior.energy_G(u) + 0.5 * x @ S @ x + prob.kink_w @ np.abs(v) + lin @ z

    z = prob.project(np.asarray(start, float).copy())
    phi = objective(z)
    energies = [phi]
    gscale = max(np.max(np.abs(lin)), np.max(np.abs(prob.kink_w), initial=0.0), 1e-300)
    res = np.inf
    for it in range(1, max_iter + 1):
        H = Bfix.copy()
        H[:nu, :nu] += prob.interior.dg_jacobian(z[:nu]).toarray()
        g = grad(z)
        c = 1.0 / np.maximum(np.diag(H), 1e-300)
        r, du, dv, thr = _natural_residual(prob, z, g, c)
        res = np.max(np.abs(r)) / gscale
        if res <= tol:
            return InnerResult(z, it - 1, res, True, energies)
        # active sets
        target = np.full(prob.size, np.nan)
        lo_act = du <= prob.F.lower
        hi_act = du >= prob.F.upper
        target[:nu][lo_act] = prob.F.lower[lo_act]
        target[:nu][hi_act] = prob.F.upper[hi_act]
        zero_act = np.abs(dv) <= thr
        target[nu:][zero_act] = 0.0
        act = ~np.isnan(target)
        free = ~act
        rhs = -g.copy()
        rhs[nu:] -= np.where(zero_act, 0.0, np.sign(dv) * prob.kink_w)
        d = np.zeros(prob.size)
        d[act] = target[act] - z[act]
        if np.any(free):
            Hff = H[np.ix_(free, free)]
            b = rhs[free] - H[np.ix_(free, act)] @ d[act]
            try:
                d[free] = sla.solve(Hff, b, assume_a="pos")
            except (np.linalg.LinAlgError, ValueError):
                d[free] = np.linalg.lstsq(Hff, b, rcond=None)[0]
        accepted = False
        t = 1.0
        rnorm = np.max(np.abs(r))
        for _ in range(40):
            zt = prob.project(z + t * d)
            pt = objective(zt)
            slack = 1e-13 * (abs(phi) + gscale)
            if pt <= phi + slack:
                if pt < phi - slack:
                    accepted = True
                else:
                    ct = 1.0 / np.maximum(np.diag(H), 1e-300)
                    rt, *_ = _natural_residual(prob, zt, grad(zt), ct)
                    accepted = np.max(np.abs(rt)) < rnorm
                if accepted:
                    break
            t *= 0.5
        if not accepted:
            # proximal gradient fallback: monotone decrease with step 1/L
            Lh = float(sla.eigh(H, eigvals_only=True, subset_by_index=[prob.size - 1, prob.size - 1])[0])
            cc = np.full(prob.size, 1.0 / Lh)
            _, du2, dv2, thr2 = _natural_residual(prob, z, g, cc)
            zt = np.concatenate([np.clip(du2, prob.F.lower, prob.F.upper),
                                 np.sign(dv2) * np.maximum(np.abs(dv2) - thr2, 0.0)])
            pt = objective(zt)
            if pt > phi + 1e-13 * (abs(phi) + gscale):
                return InnerResult(z, it, res, False, energies)
        z, phi = zt, pt
        energies.append(phi)
    H = Bfix.copy()
    H[:nu, :nu] += prob.interior.dg_jacobian(z[:nu]).toarray()
    r, *_ = _natural_residual(prob, z, grad(z), 1.0 / np.diag(H))
    res = np.max(np.abs(r)) / gscale
    return InnerResult(z, max_iter, res, res <= tol, energies)


def solve(prob: HviProblem, start=None, tol=1e-11, inner_tol=1e-11, max_outer=200,
          check_residual=True) -> HviSolution:
    """Outer fixed-point loop; stops when the E-norm step is below
    ``tol * (1 + |z|_E)``. ``check_residual`` evaluates the sampled HVI
    residual at the end (skipped in control loops)."""
    rep = prob.smallness_check(warn=True)
    z = np.zeros(prob.size) if start is None else np.asarray(start, float).copy()
    z = prob.project(z)
    sol = HviSolution(z[: prob.n_u], z[prob.n_u:], smallness_satisfied=rep.margin > 0)
    converged = False
    for k in range(1, max_outer + 1):
        inner = inner_convex_solve(prob, z[prob.n_u:], z, tol=inner_tol)
        if not inner.converged and inner.residual > 1e3 * inner_tol:
            raise SolverError(f"inner solver failed at outer iteration {k} (residual {inner.residual:.2e})")
        step = prob.norm_E(inner.z - z)
        if sol.steps and sol.steps[-1] > 0:
            sol.contraction_factors.append(step / sol.steps[-1])
        sol.steps.append(step)
        sol.inner_iterations.append(inner.iterations)
        z = inner.z
        sol.energies.append(prob.energy(z))
        if step <= tol * (1.0 + prob.norm_E(z)):
            converged = True
            break
    sol.u, sol.v = z[: prob.n_u].copy(), z[prob.n_u:].copy()
    sol.outer_iterations = k
    sol.converged = converged
    if not converged:
        raise SolverError(f"outer iteration stagnated after {max_outer} iterations (last step {step:.2e})")
    if check_residual:
        sol.residual = hvi_residual(prob, sol)
    return sol


def hvi_residual(prob, sol, n_dirs=200, seed=0):
    """min over random unit feasible directions of A(z)(d) + J0(v; d_v) - (lambda - F)(d)."""
    rng = np.random.default_rng(seed)
    z = sol.z
    g = prob.operator(z) + prob.lin_F - prob.lam
    D = rng.standard_normal((n_dirs, prob.size))
    D /= np.sqrt(np.einsum("ki,ij,kj->k", D, prob.norm_matrix, D))[:, None]
    lo = np.concatenate([prob.F.lower, np.full(prob.n_v, -np.inf)])
    hi = np.concatenate([prob.F.upper, np.full(prob.n_v, np.inf)])
    D = np.clip(z + D, lo, hi) - z
    worst = min(D[k] @ g + prob.J.j0(sol.v, D[k, prob.n_u:]) for k in range(n_dirs))
    return float(worst)


def obstacle_complementarity(prob, sol):
    """Smooth residual r_u = DG(u) + (T'S x) + F_lin_u - lambda_u split by the
    three obstacle cases. Returns max violations for (free, lower, upper)."""
    z = sol.z
    r = (prob.operator(z) + prob.lin_F - prob.lam)[: prob.n_u]
    u = sol.u
    lo_act = u <= prob.F.lower
    hi_act = u >= prob.F.upper
    free = ~(lo_act | hi_act)
    v_free = float(np.max(np.abs(r[free]), initial=0.0))
    v_lo = float(np.max(-r[lo_act], initial=0.0))
    v_hi = float(np.max(r[hi_act], initial=0.0))
    return {"free": v_free, "lower": max(v_lo, 0.0), "upper": max(v_hi, 0.0),
            "n_lower": int(lo_act.sum()), "n_upper": int(hi_act.sum()), "residual": r}


def linear_direct_solve(prob):
    """Direct solve of the coupled system when p is constant, J = 0 and there is no box."""
    A = prob.coupled_matrix(prob.interior.stiffness * prob.interior.nl.a)
    return np.linalg.solve(A, prob.lam - prob.lin_F)


def brute_force_oracle(prob, n_starts=6, seed=0, sweeps=4000, tol=1e-13):
    """Global minimizer of the energy by multi-start cyclic coordinate minimization.

    Only for tiny problems (at most 6 unknowns); the nonsmooth terms are
    separable in the coordinates so coordinate search does not stall at kinks.
    """
    from scipy.optimize import minimize_scalar

    if prob.size > 6:
        raise ValueError("brute_force_oracle is limited to at most 6 unknowns")
    rng = np.random.default_rng(seed)
    radius = 4.0 * prob.scale / max(prob.smallness_check(warn=False).c_A_discrete, 1e-12)
    radius = max(radius, 1.0)
    best, best_e = None, np.inf
    for s in range(n_starts):
        z = prob.project(np.zeros(prob.size) if s == 0 else rng.uniform(-radius, radius, prob.size))
        e = prob.energy(z)
        width = radius
        for sweep in range(sweeps):
            z_old = z.copy()
            for i in range(prob.size):
                lo, hi = z[i] - width, z[i] + width
                if i < prob.n_u:
                    lo, hi = max(lo, prob.F.lower[i]), min(hi, prob.F.upper[i])
                if hi - lo <= 0:
                    z[i] = lo
                    continue

                def fi(t, i=i):
                    zz = z.copy()
                    zz[i] = t
                    return prob.energy(zz)

                cands = [z[i], lo, hi]
                if lo <= 0.0 <= hi and i >= prob.n_u:
                    cands.append(0.0)
                r = minimize_scalar(fi, bounds=(lo, hi), method="bounded", options={"xatol": 1e-14})
                cands.append(r.x)
                vals = [fi(t) for t in cands]
                z[i] = cands[int(np.argmin(vals))]
            e_new = prob.energy(z)
            move = np.max(np.abs(z - z_old))
            width = max(min(width, 4 * move), 1e-12)
            if move <= tol and sweep > 2:
                break
            e = e_new
        e = prob.energy(z)
        if e < best_e:
            best, best_e = z.copy(), e
    return best[: prob.n_u], best[prob.n_u:]
