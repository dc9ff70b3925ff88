"""Nonmonotone friction superpotential and its Clarke calculus.

The law is

    j(xi) = mu2 |xi| + (mu1 - mu2) / alpha * (1 - exp(-alpha |xi|)),

whose slope decays from ``mu1`` at the origin to ``mu2`` at infinity. It splits
as ``mu1 |xi| + h(xi)`` with ``h`` concave and C^1, ``h'`` Lipschitz with
constant ``alpha (mu1 - mu2)``; the solver freezes only ``h'``.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FrictionLaw:
    mu1: float
    mu2: float
    alpha: float

    def __post_init__(self):
        if not (self.mu1 > self.mu2 > 0):
            raise ValueError(f"friction law requires mu1 > mu2 > 0 (got mu1={self.mu1}, mu2={self.mu2})")
        if not self.alpha > 0:
            raise ValueError(f"friction law requires alpha > 0 (got alpha={self.alpha})")

    def j(self, xi):
        a = np.abs(xi)
        return self.mu2 * a + (self.mu1 - self.mu2) / self.alpha * -np.expm1(-self.alpha * a)

    def slope(self, xi):
        """|j'| away from the origin."""
        return self.mu2 + (self.mu1 - self.mu2) * np.exp(-self.alpha * np.abs(xi))

    # convex/smooth splitting
    @property
    def kink(self):
        return self.mu1

    def smooth_part(self, xi):
        a = np.abs(xi)
        d = self.mu1 - self.mu2
        return d / self.alpha * -np.expm1(-self.alpha * a) - d * a

    def smooth_grad(self, xi):
        return np.sign(xi) * (self.mu1 - self.mu2) * np.expm1(-self.alpha * np.abs(xi))


@dataclass(frozen=True)
class ClarkeInterval:
    lo: np.ndarray
    hi: np.ndarray

    def selection(self):
        return 0.5 * (self.lo + self.hi)

    def distance(self, eta):
        return np.maximum(0.0, np.maximum(self.lo - eta, eta - self.hi))


def clarke_interval(law: FrictionLaw, xi) -> ClarkeInterval:
    xi = np.asarray(xi, dtype=float)
    eta = np.sign(xi) * law.slope(xi)
    at0 = xi == 0
    lo = np.where(at0, -law.mu1, eta)
    hi = np.where(at0, law.mu1, eta)
    return ClarkeInterval(lo, hi)


def j0(law, xi, z):
    """Generalized directional derivative: support function of the interval."""
    iv = clarke_interval(law, xi)
    z = np.asarray(z, dtype=float)
    return np.where(z >= 0, iv.hi * z, iv.lo * z)


def smoothed_j0(law, eps, xi, z):
    """Huber-type Moreau smoothing of ``max(lo z, hi z)`` in ``z``.

    Writing ``max(lo z, hi z) = c z + r |z|`` with centre ``c`` and radius ``r``,
    ``|z|`` is replaced by its Moreau envelope of parameter ``eps``.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    iv = clarke_interval(law, xi)
    z = np.asarray(z, dtype=float)
    c = 0.5 * (iv.lo + iv.hi)
    r = 0.5 * (iv.hi - iv.lo)
    a = np.abs(z)
    huber = np.where(a <= eps, z * z / (2 * eps), a - eps / 2)
    return c * z + r * huber


def one_sided_lipschitz_cJ(law):
    """Most negative slope of the single-valued branch, attained at 0+."""
    return law.alpha * (law.mu1 - law.mu2)


def growth_constants(law, gamma_s_length=1.0):
    """(c_j1, c_j2, d_J): |eta| <= mu1 everywhere and eta*xi >= 0.

    ``d_J`` bounds the subgradients of the integrated functional in the lumped
    L2(Gamma_s) norm: ||zeta|| <= mu1 |Gamma_s|^(1/2).
    """
    return law.mu1, 0.0, law.mu1 * np.sqrt(gamma_s_length)


class BoundaryFunctionalJ:
    """Lumped quadrature of J over Gamma_s; one law, or one law per node."""

    def __init__(self, law, weights):
        self.weights = np.asarray(weights, dtype=float)
        if np.any(self.weights <= 0):
            raise ValueError("quadrature weights must be positive")
        self.laws = law if isinstance(law, (list, tuple)) else None
        self.law = None if self.laws is not None else law
        if self.laws is not None and len(self.laws) != len(self.weights):
            raise ValueError("one law per gamma_s node required")

    def _check(self, *vs):
        for v in vs:
            if np.shape(v)[-1] != len(self.weights):
                raise ValueError("size mismatch with gamma_s dofs")

    def _per_node(self, fn, *args):
        if self.law is not None:
            return fn(self.law, *args)
        return np.array([fn(l, *[a[i] for a in args]) for i, l in enumerate(self.laws)], dtype=float)

    def value(self, v):
        self._check(v)
        return float(self.weights @ self._per_node(FrictionLaw.j, np.asarray(v, float)))

    def j0(self, y, z):
        self._check(y, z)
        return float(self.weights @ self._per_node(j0, np.asarray(y, float), np.asarray(z, float)))

    def interval(self, y):
        lo = self._per_node(lambda l, x: clarke_interval(l, x).lo, np.asarray(y, float))
        hi = self._per_node(lambda l, x: clarke_interval(l, x).hi, np.asarray(y, float))
        return ClarkeInterval(lo, hi)

    def kink(self):
        if self.law is not None:
            return np.full(len(self.weights), self.law.kink)
        return np.array([l.kink for l in self.laws])

    def smooth_grad(self, y):
        return self._per_node(FrictionLaw.smooth_grad, np.asarray(y, float))

    def smooth_value(self, y):
        return float(self.weights @ self._per_node(FrictionLaw.smooth_part, np.asarray(y, float)))

    def c_J(self):
        if self.law is not None:
            return one_sided_lipschitz_cJ(self.law)
        return max(one_sided_lipschitz_cJ(l) for l in self.laws)

    def c_j1(self):
        return float(np.max(self.kink()))


class ZeroFunctional(BoundaryFunctionalJ):
    """J identically zero (frictionless transmission on Gamma_s)."""

    def __init__(self, weights):
        self.weights = np.asarray(weights, dtype=float)
        self.law = self.laws = None

    def value(self, v):
        self._check(v)
        return 0.0

    def j0(self, y, z):
        self._check(y, z)
        return 0.0

    def interval(self, y):
        z = np.zeros(len(self.weights))
        return ClarkeInterval(z, z.copy())

    def kink(self):
        return np.zeros(len(self.weights))

    def smooth_grad(self, y):
        return np.zeros(len(self.weights))

    def smooth_value(self, y):
        return 0.0

    def c_J(self):
        return 0.0

    def c_j1(self):
        return 0.0
