"""Quadratic example problem with closed-form DC iterates.

Minimizes f(u) = ||u||^2/2 - (alpha/2) <u, e>^2 on a midpoint-quadrature
discretization of L^2(0,1), e being the constant-one function.  Starting
from u0 = e with exact subsolves and no acceleration, the iterates are
u_k = alpha^k e and f(u_k) = ((1-alpha)/2) alpha^(2k), which makes this the
convergence oracle for the solver engine.  An optional bounded perturbation
of the subproblem solution exercises the engine's inexactness handling.
"""

import math

import numpy as np

from .dca import DcProblem

__all__ = ["ToyProblem"]


class ToyProblem(DcProblem):
    """g(u) = ||u||^2/2, h(u) = (alpha/2) <u, e>^2 under the weighted product.

    The inner product is <u, v> = (1/n) sum u_i v_i, so ||e|| = 1 exactly for
    every n and all closed-form constants hold at finite n.  g is strongly
    convex with modulus 1; h contributes no modulus.
    """

    sigma_g = 1.0
    sigma_h = 0.0

    def __init__(self, alpha, n=64, noise=None):
        if not 0.0 < alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if n < 1:
            raise ValueError("need at least one quadrature point")
        self.alpha = float(alpha)
        self.n = int(n)
        self.noise = noise
        self.e = np.ones(n)
        # fixed unit-norm perturbation direction; keeps noisy runs deterministic
        self._noise_dir = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)

    def inner_product(self, x, y):
        return float(np.dot(x, y)) / self.n

    def objective(self, u):
        u = np.asarray(u, dtype=np.float64)
        mean = self.inner_product(u, self.e)
        return 0.5 * self.inner_product(u, u) - 0.5 * self.alpha * mean * mean

    def gradient(self, u):
        """Riesz gradient of f under the weighted inner product."""
        u = np.asarray(u, dtype=np.float64)
        return u - self.alpha * self.inner_product(u, self.e) * self.e

    def eps_subgradient_h(self, w, eps):
        # h is smooth; the exact gradient is admissible for every eps >= 0
        return self.alpha * self.inner_product(w, self.e) * self.e

    def eps_argmin_linearized(self, v, eps):
        """Minimize ||u||^2/2 - <v, u>; the exact solution is u = v.

        With ``noise`` set, a perturbation delta with ||delta||^2/2 bounded by
        min(eps, noise) is added and certified exactly: for the strongly
        convex subproblem the objective gap at v + delta is ||delta||^2/2.
        """
        v = np.asarray(v, dtype=np.float64)
        if self.noise is None:
            return v.copy(), 0.0
        budget = min(eps, self.noise)
        scale = 0.999 * math.sqrt(2.0 * budget)
        delta = scale * self._noise_dir
        return v + delta, 0.5 * self.inner_product(delta, delta)
