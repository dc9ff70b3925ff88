"""Perturbation stability of the discrete HVI under converging data.

In finite dimensions weak and strong convergence coincide, so a Mosco-convergent
sequence of extended functionals reduces to nodewise convergence of the data:
linear forms (loads f_n, boundary data q_n) or obstacle pairs (lo_n, hi_n).
"""

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .hvi import ExtendedF


def geometric(base):
    return lambda n: float(base) ** (-n)


def harmonic(n):
    return 1.0 / n


@dataclass
class MoscoSequence:
    kind: str  # "linear_form" or "obstacle"
    members: list  # per n: (f_load, q_nodal) or ExtendedF
    limit: object
    decay: list = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in ("linear_form", "obstacle"):
            raise ValueError(f"unknown sequence kind {self.kind!r}")
        if self.kind == "obstacle":
            for F in list(self.members) + [self.limit]:
                _check_order(F.lower, F.upper)

    @property
    def N(self):
        return len(self.members)


def _check_order(lo, hi):
    if lo is not None and hi is not None and np.any(np.asarray(lo) > np.asarray(hi)):
        raise ValueError("obstacle ordering violated: lower > upper at some node")


def make_linear_sequence(f_load, q_nodal, decay, N=8, seed=0, amplitude=1.0):
    """f_n = f + decay(n) * df, q_n = q + decay(n) * dq with fixed random
    perturbations (the recovery sequence is constant)."""
    f_load = np.asarray(f_load, float)
    q_nodal = np.asarray(q_nodal, float)
    rng = np.random.default_rng(seed)
    df = amplitude * rng.standard_normal(f_load.shape) * max(np.max(np.abs(f_load)), 1.0)
    dq = amplitude * rng.standard_normal(q_nodal.shape) * max(np.max(np.abs(q_nodal)), 1.0)
    ds = [float(decay(n)) for n in range(1, N + 1)]
    members = [(f_load + d * df, q_nodal + d * dq) for d in ds]
    return MoscoSequence("linear_form", members, (f_load, q_nodal), ds)


def make_obstacle_sequence(lower, upper, decay, N=8, seed=0, amplitude=1.0, mode="widen"):
    """Obstacle pairs converging nodewise to (lower, upper).

    ``mode="widen"`` moves lo down and hi up by decay(n) times a nonnegative
    random profile, ``"shift"`` moves both by the same signed profile. Both keep
    lo_n <= hi_n whenever lo <= hi.
    """
    lower = np.asarray(lower, float)
    upper = np.asarray(upper, float)
    _check_order(lower, upper)
    rng = np.random.default_rng(seed)
    n = len(lower)
    a = amplitude * rng.uniform(0.5, 1.5, n)
    b = amplitude * rng.uniform(0.5, 1.5, n)
    if mode == "shift":
        b = a * rng.choice([-1.0, 1.0], n)
    members, ds = [], []
    for k in range(1, N + 1):
        d = float(decay(k))
        ds.append(d)
        if mode == "widen":
            lo, hi = lower - d * a, upper + d * b
        elif mode == "shift":
            lo, hi = lower + d * b, upper + d * b
        else:
            raise ValueError(f"unknown obstacle sequence mode {mode!r}")
        # infinite obstacles stay infinite
        lo = np.where(np.isfinite(lower), lo, lower)
        hi = np.where(np.isfinite(upper), hi, upper)
        members.append(ExtendedF(lower=lo, upper=hi))
    return MoscoSequence("obstacle", members, ExtendedF(lower=lower, upper=upper), ds)


def pinned_obstacle_sequence(n_nodes, N=8):
    z = np.zeros(n_nodes)
    return MoscoSequence("obstacle", [ExtendedF(lower=z, upper=z) for _ in range(N)],
                         ExtendedF(lower=z, upper=z), [0.0] * N)


def mosco_recovery_cut(u, lower, upper):
    """max(lower, min(upper, u)) nodewise."""
    lower = np.asarray(lower, float)
    upper = np.asarray(upper, float)
    _check_order(lower, upper)
    return np.maximum(lower, np.minimum(upper, np.asarray(u, float)))


@dataclass
class StabilityReport:
    kind: str
    errors: list
    state_norms: list
    active_set_sizes: list
    limit_norm: float
    bound: float
    scale: float
    decay: list

    @property
    def monotone_tail(self):
        e = np.asarray(self.errors)
        return bool(np.all(np.diff(e) <= 1e-14 * max(self.scale, 1.0)))

    @property
    def rate(self):
        """Mean ratio of consecutive errors over the nonzero part of the sequence."""
        e = np.asarray(self.errors)
        e = e[e > 1e-14 * max(self.scale, 1.0)]
        if len(e) < 2:
            return 0.0
        return float(np.exp(np.mean(np.diff(np.log(e)))))

    @property
    def max_state_norm(self):
        return float(max(self.state_norms))

    def as_dict(self):
        return {"kind": self.kind, "errors": list(map(float, self.errors)),
                "state_norms": list(map(float, self.state_norms)),
                "active_set_sizes": list(map(int, self.active_set_sizes)),
                "limit_norm": self.limit_norm, "bound": self.bound, "scale": self.scale,
                "monotone": self.monotone_tail, "rate": self.rate,
                "conical_minorization": "not binding (indicator plus linear F)"}

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "error", "state_norm", "active_set_size"])
            for n, (e, s, a) in enumerate(zip(self.errors, self.state_norms, self.active_set_sizes), 1):
                w.writerow([n, f"{e:.17g}", f"{s:.17g}", a])


def a_priori_bound(prob):
    """Bound on |z|_E for the solution of ``prob`` from the smallness margin.

    Tests the inequality with a feasible reference point w = (clamp(0), 0):
    m |z - w|^2 <= (|A(w) - lambda + F|_* + d_J |gamma|) |z - w|.
    """
    rep = prob.smallness_check(warn=False)
    w = prob.project(np.zeros(prob.size))
    g = prob.operator(w) - prob.lam + prob.lin_F
    dJ = prob.J.c_j1() * np.sqrt(np.sum(prob.J.weights)) * np.sqrt(rep.gamma_norm_sq)
    return prob.norm_E(w) + (prob.dual_norm(g) + dJ) / rep.margin


def _member_problem(prob, seq, item):
    if seq.kind == "linear_form":
        f_load, q_nodal = item
        return prob.with_data(f_load=f_load, q_nodal=q_nodal)
    return prob.with_data(F=item)


def run_stability_experiment(prob, seq: MoscoSequence, N=None, workers=1, tol=1e-12):
    """Solve with every member and the limit; errors in the E-norm."""
    rep = prob.smallness_check(warn=False)
    if rep.margin <= 0:
        raise ValueError("stability experiment needs a positive smallness margin")
    N = seq.N if N is None else min(N, seq.N)
    probs = [_member_problem(prob, seq, seq.members[i]) for i in range(N)]
    limit_prob = _member_problem(prob, seq, seq.limit)
    all_probs = [limit_prob] + probs

    def run(p):
        return p.solve(tol=tol)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            sols = list(ex.map(run, all_probs))
    else:
        sols = [run(p) for p in all_probs]
    ref = sols[0].z
    errors, norms, active = [], [], []
    for p, s in zip(probs, sols[1:]):
        errors.append(prob.norm_E(s.z - ref))
        norms.append(prob.norm_E(s.z))
        act = (s.u <= p.F.lower) | (s.u >= p.F.upper)
        active.append(int(act.sum()))
    bound = max(a_priori_bound(p) for p in all_probs)
    return StabilityReport(seq.kind, errors, norms, active, prob.norm_E(ref), float(bound),
                           float(limit_prob.scale), list(seq.decay[:N]))
