"""Optimal control on top of the control-to-state map.

Four kinds: distributed load f, boundary datum q, both, or an obstacle pair.
Controls live on a coarse grid (patches of the bounding box for nodal fields,
arc-length segments for boundary fields) and are prolongated as piecewise
constants. Gradients are central finite differences; the optimizer is a
projected BFGS with Armijo backtracking.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .hvi import ExtendedF, SolverError

log = logging.getLogger(__name__)

KINDS = ("distributed", "boundary", "distributed_boundary", "obstacle")


def patch_prolongation(nodes, nx=4, ny=4):
    """0/1 matrix assigning every node to one cell of an nx x ny box grid."""
    lo, hi = nodes.min(axis=0), nodes.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    ix = np.clip(np.floor((nodes[:, 0] - lo[0]) / span[0] * nx).astype(int), 0, nx - 1)
    iy = np.clip(np.floor((nodes[:, 1] - lo[1]) / span[1] * ny).astype(int), 0, ny - 1)
    cols = iy * nx + ix
    return sp.csr_matrix((np.ones(len(nodes)), (np.arange(len(nodes)), cols)), shape=(len(nodes), nx * ny))


def segment_prolongation(points, n_seg=8):
    """0/1 matrix assigning every boundary node to one of n_seg arc-length segments."""
    d = np.linalg.norm(np.roll(points, -1, axis=0) - points, axis=1)
    s = np.concatenate([[0.0], np.cumsum(d)[:-1]])
    seg = np.minimum((s / d.sum() * n_seg).astype(int), n_seg - 1)
    return sp.csr_matrix((np.ones(len(points)), (np.arange(len(points)), seg)), shape=(len(points), n_seg))


def lumped_laplacian_sq(interior):
    """Matrix of |Delta_h u|^2 with Delta_h = M_L^{-1} K (natural boundary)."""
    K = interior.stiffness
    ml = np.asarray(interior.mass.sum(axis=1)).ravel()
    return (K.T @ sp.diags(1.0 / ml) @ K).tocsr()


@dataclass
class ControlSpec:
    kind: str
    problem: object
    target: np.ndarray  # E coefficients (u_d, v_d)
    rho: float
    P_f: object = None
    P_q: object = None
    P_obs: object = None
    obstacle_sides: tuple = ("lower", "upper")
    fixed_lower: np.ndarray = None
    fixed_upper: np.ndarray = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown control kind {self.kind!r}")
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        prob = self.problem
        if self.kind in ("distributed", "distributed_boundary") and self.P_f is None:
            self.P_f = patch_prolongation(prob.mesh.nodes)
        if self.kind in ("boundary", "distributed_boundary") and self.P_q is None:
            self.P_q = segment_prolongation(prob.steklov.ops.bmesh.points)
        if self.kind == "obstacle":
            if self.P_obs is None:
                self.P_obs = patch_prolongation(prob.mesh.nodes, 2, 2)
            n = prob.mesh.n_nodes
            if self.fixed_lower is None:
                self.fixed_lower = np.full(n, -np.inf)
            if self.fixed_upper is None:
                self.fixed_upper = np.full(n, np.inf)
            self._H2 = prob.interior.mass + prob.interior.stiffness + lumped_laplacian_sq(prob.interior)
        self.target = np.asarray(self.target, float)
        if self.target.shape != (prob.size,):
            raise ValueError("target must be a vector of E coefficients")

    # -- control layout -------------------------------------------------------
    @property
    def sizes(self):
        if self.kind == "distributed":
            return [self.P_f.shape[1]]
        if self.kind == "boundary":
            return [self.P_q.shape[1]]
        if self.kind == "distributed_boundary":
            return [self.P_f.shape[1], self.P_q.shape[1]]
        return [self.P_obs.shape[1]] * len(self.obstacle_sides)

    @property
    def n_controls(self):
        return int(sum(self.sizes))

    def parts(self, c):
        c = np.asarray(c, float)
        if c.shape != (self.n_controls,):
            raise ValueError(f"control vector must have length {self.n_controls}")
        return np.split(c, np.cumsum(self.sizes)[:-1])

    def project(self, c):
        """Clamp the lower obstacle below the upper one (coarse dofs)."""
        if self.kind != "obstacle" or len(self.obstacle_sides) < 2:
            return np.asarray(c, float).copy()
        lo, hi = self.parts(c)
        return np.concatenate([np.minimum(lo, hi), hi])

    def obstacles(self, c):
        parts = dict(zip(self.obstacle_sides, self.parts(c)))
        lo = self.P_obs @ parts["lower"] if "lower" in parts else self.fixed_lower
        hi = self.P_obs @ parts["upper"] if "upper" in parts else self.fixed_upper
        return lo, hi

    def nodal(self, c):
        """Prolongated nodal fields for a control vector."""
        p = self.parts(c)
        if self.kind == "distributed":
            return {"f": self.P_f @ p[0]}
        if self.kind == "boundary":
            return {"q": self.P_q @ p[0]}
        if self.kind == "distributed_boundary":
            return {"f": self.P_f @ p[0], "q": self.P_q @ p[1]}
        lo, hi = self.obstacles(c)
        return {"lower": lo, "upper": hi}

    def control_norm_sq(self, c):
        prob = self.problem
        fields = self.nodal(c)
        total = 0.0
        if "f" in fields:
            total += fields["f"] @ (prob.interior.mass @ fields["f"])
        if "q" in fields:
            total += fields["q"] @ (prob.Mb @ fields["q"])
        for side in self.obstacle_sides if self.kind == "obstacle" else ():
            w = fields[side]
            total += w @ (self._H2 @ w)
        return float(total)


def control_to_state(spec: ControlSpec, c, start=None):
    """State for a control; ``start`` warm-starts the fixed-point loop."""
    prob = spec.problem
    fields = spec.nodal(c)
    if spec.kind == "obstacle":
        lo, hi = fields["lower"], fields["upper"]
        if np.any(lo > hi):
            raise ValueError("obstacle control violates lower <= upper")
        p = prob.with_data(F=ExtendedF(prob.F.lin_u, prob.F.lin_v, lo, hi))
    else:
        f_load = prob.interior.mass @ fields["f"] if "f" in fields else prob.f_load
        q = fields.get("q", prob.q_nodal)
        p = prob.with_data(f_load=f_load, q_nodal=q)
    if start is not None:
        start = p.project(start)
    return p.solve(start=start, check_residual=False)


def misfit(spec, sol):
    return spec.problem.norm_E(sol.z - spec.target)


def cost(spec: ControlSpec, c, sol=None):
    if sol is None:
        sol = control_to_state(spec, c)
    return 0.5 * misfit(spec, sol) ** 2 + 0.5 * spec.rho * spec.control_norm_sq(c)


@dataclass
class ControlResult:
    control: np.ndarray
    costs: list
    misfit: float
    state: object
    evaluations: int
    iterations: int
    converged: bool
    budget_exhausted: bool = False
    rejected_steps: int = 0
    grad_norms: list = field(default_factory=list)

    def as_dict(self):
        return {"control": [float(x) for x in self.control], "costs": [float(x) for x in self.costs],
                "misfit": float(self.misfit), "evaluations": self.evaluations,
                "iterations": self.iterations, "converged": self.converged,
                "budget_exhausted": self.budget_exhausted, "rejected_steps": self.rejected_steps}


class _Evaluator:
    def __init__(self, spec, max_evals):
        self.spec = spec
        self.max_evals = max_evals
        self.count = 0
        self.warm = None

    def __call__(self, c):
        if self.count >= self.max_evals:
            raise _Budget()
        self.count += 1
        try:
            sol = control_to_state(self.spec, c, self.warm)
        except SolverError:
            return np.inf, None
        return cost(self.spec, c, sol), sol


class _Budget(Exception):
    pass


def fd_gradient(fun, c, h, proj=None):
    """Central differences; ``proj`` keeps trial points admissible (a clamped
    coordinate falls back to a one-sided difference)."""
    g = np.zeros(len(c))
    for i in range(len(c)):
        e = np.zeros(len(c))
        e[i] = h[i]
        cp, cm = c + e, c - e
        if proj is not None:
            cp, cm = proj(cp), proj(cm)
        dp, dm = cp[i] - c[i], c[i] - cm[i]
        fp, fm = fun(cp), fun(cm)
        g[i] = (fp - fm) / (dp + dm)
    return g


def control_norm_matrix(spec):
    """Matrix R with control_norm_sq(c) = c' R c (the norm is quadratic)."""
    n = spec.n_controls
    E = np.eye(n)
    d = np.array([spec.control_norm_sq(E[i]) for i in range(n)])
    R = np.diag(d)
    for i in range(n):
        for j in range(i + 1, n):
            R[i, j] = R[j, i] = 0.5 * (spec.control_norm_sq(E[i] + E[j]) - d[i] - d[j])
    return R


def minimize(spec: ControlSpec, c0=None, max_evals=4000, gtol=1e-9, ftol=1e-14, max_iter=200, fd_step=1e-5,
             gauss_newton_start=True):
    """Projected BFGS with central finite-difference gradients.

    With ``gauss_newton_start`` the initial inverse Hessian is the inverse of
    J' N_E J + rho R, where J is a central-difference Jacobian of the state at
    the starting control; BFGS updates take over from there.
    """
    n = spec.n_controls
    c = spec.project(np.zeros(n) if c0 is None else np.asarray(c0, float))
    ev = _Evaluator(spec, max_evals)
    f, sol = ev(c)
    if not np.isfinite(f):
        raise SolverError("state solve failed at the initial control")
    ev.warm = sol.z
    costs = [f]
    Hinv = np.eye(n)
    rejected = 0
    grad_norms = []
    converged = exhausted = False
    it = 0

    def fval(x):
        return ev(x)[0]

    try:
        h = fd_step * np.maximum(1.0, np.abs(c))
        if gauss_newton_start:
            Jz = np.zeros((spec.problem.size, n))
            g = np.zeros(n)
            for i in range(n):
                e = np.zeros(n)
                e[i] = h[i]
                cp, cm = spec.project(c + e), spec.project(c - e)
                (fp, sp_), (fm, sm_) = ev(cp), ev(cm)
                if sp_ is None or sm_ is None:
                    raise SolverError("state solve failed while building the initial Jacobian")
                step = cp[i] - cm[i]
                Jz[:, i] = (sp_.z - sm_.z) / step
                g[i] = (fp - fm) / step
            G = Jz.T @ spec.problem.norm_matrix @ Jz + spec.rho * control_norm_matrix(spec)
            G = 0.5 * (G + G.T)
            w = np.linalg.eigvalsh(G)
            Hinv = np.linalg.inv(G + max(1e-12 * w[-1], 0.0) * np.eye(n))
        else:
            g = fd_gradient(fval, c, h, spec.project)
        for it in range(1, max_iter + 1):
            gn = float(np.linalg.norm(g))
            grad_norms.append(gn)
            if gn <= gtol * max(1.0, abs(f)):
                converged = True
                break
            d = -Hinv @ g
            if d @ g >= 0:
                Hinv = np.eye(n)
                d = -g
            t, accepted = 1.0, False
            for _ in range(40):
                ct = spec.project(c + t * d)
                ft, st = ev(ct)
                if np.isfinite(ft) and ft <= f + 1e-4 * (g @ (ct - c)):
                    accepted = True
                    break
                rejected += 1
                t *= 0.5
            if not accepted or ft > f:
                converged = True  # no descent available at FD resolution
                break
            s = ct - c
            h = fd_step * np.maximum(1.0, np.abs(ct))
            g_new = fd_gradient(fval, ct, h, spec.project)
            y = g_new - g
            rel_drop = (f - ft) / max(abs(f), 1e-300)
            c, f, sol, g = ct, ft, st, g_new
            ev.warm = sol.z
            costs.append(f)
            if s @ y > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
                if it == 1 and not gauss_newton_start:
                    Hinv = (s @ y) / (y @ y) * np.eye(n)
                r = 1.0 / (s @ y)
                I = np.eye(n)
                Hinv = (I - r * np.outer(s, y)) @ Hinv @ (I - r * np.outer(y, s)) + r * np.outer(s, s)
            if rel_drop <= ftol:
                converged = True
                break
    except _Budget:
        exhausted = True
    return ControlResult(c, costs, misfit(spec, sol), sol, ev.count, it, converged, exhausted, rejected, grad_norms)


def inverse_crime_setup(problem, kind, true_control, rho=1e-8, **kw):
    """Spec whose target is the state of a known control."""
    spec = ControlSpec(kind, problem, np.zeros(problem.size), rho, **kw)
    sol = control_to_state(spec, spec.project(true_control))
    spec.target = sol.z.copy()
    return spec


def relative_control_error(spec, c, c_true):
    """Error of the prolongated fields in the regularization norm."""
    num = spec.control_norm_sq(np.asarray(c) - np.asarray(c_true)) if spec.kind != "obstacle" else \
        float(np.sum((np.asarray(c) - c_true) ** 2))
    den = spec.control_norm_sq(c_true) if spec.kind != "obstacle" else float(np.sum(np.asarray(c_true) ** 2))
    return float(np.sqrt(num / den))


def part_errors(spec, c, c_true):
    """Relative L2 error per control component (f and q separately for kind 3)."""
    out = []
    for a, b in zip(spec.parts(c), spec.parts(c_true)):
        out.append(float(np.linalg.norm(a - b) / np.linalg.norm(b)))
    return out


def rho_sweep(spec, c_true, rhos=(1e-2, 1e-4, 1e-8), **opts):
    rows = []
    for rho in rhos:
        s = ControlSpec(spec.kind, spec.problem, spec.target, rho, spec.P_f, spec.P_q, spec.P_obs,
                        spec.obstacle_sides, spec.fixed_lower, spec.fixed_upper)
        res = minimize(s, **opts)
        rows.append({"rho": rho, "error": relative_control_error(s, res.control, c_true),
                     "cost": res.costs[-1], "misfit": res.misfit})
    return rows


def restarts(spec, n=20, seed=0, radius=1.0, **opts):
    """Best costs from random starts; returns (costs, relative spread)."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        c0 = spec.project(radius * rng.standard_normal(spec.n_controls))
        out.append(minimize(spec, c0, **opts).costs[-1])
    out = np.asarray(out)
    return out, float((out.max() - out.min()) / max(abs(out.min()), 1e-300))


def active_set(spec, c, tol=1e-9):
    sol = control_to_state(spec, c)
    lo, hi = spec.obstacles(c)
    return (sol.u <= lo + tol) | (sol.u >= hi - tol)


def default_true_control(spec, seed=0):
    """Reference controls for the shipped inverse-crime fixtures."""
    rng = np.random.default_rng(seed)
    if spec.kind == "distributed":
        return 5.0 + 2.0 * rng.standard_normal(spec.n_controls)
    if spec.kind == "boundary":
        return 3.0 * rng.standard_normal(spec.n_controls)
    if spec.kind == "distributed_boundary":
        nf, nq = spec.sizes
        return np.concatenate([5.0 + 2.0 * rng.standard_normal(nf), 3.0 * rng.standard_normal(nq)])
    # obstacle: half the peak of the unconstrained state, so the box binds
    peak = float(np.max(spec.problem.solve(check_residual=False).u))
    m = spec.sizes[0]
    parts = {"lower": np.full(m, -peak), "upper": 0.5 * peak + 0.02 * rng.standard_normal(m)}
    return spec.project(np.concatenate([parts[s] for s in spec.obstacle_sides]))
