"""Primal-dual active-set solver for the convex control subproblem.

Each DC outer iteration needs an approximate minimizer of

    F(u) = 1/2 ||y(u) - y_d||^2 + alpha/2 ||u - u_d||^2 + beta ||u||_L1
           - beta <d, u>   over   beta1 <= u <= beta2,

with d the normalized linearization direction (or zero).  The first-order
system couples state y, adjoint z, control u and a combined multiplier mu
that absorbs both the scaled L1 subgradient and the bound multipliers.  Per
triangle, mu and u satisfy

    LOWER: u = beta1, mu <= -beta      NEG:  beta1 < u < 0, mu = -beta
    ZERO:  u = 0,     |mu| <= beta     POS:  0 < u < beta2, mu = +beta
    UPPER: u = beta2,  mu >= +beta

The solver fixes this five-way partition, solves the resulting linear
system (condensed to the (y, z) block; u and mu follow from diagonal
relations), reclassifies, and repeats until the partition is stationary or
the KKT residual is small enough.  Strong convexity of F with modulus alpha
turns the final stationarity residual into an objective-gap certificate
F(u) - min F <= r^2 / (2 alpha), which is what the DC engine's adaptive
step consumes.
"""

import math
from dataclasses import dataclass

import numpy as np

from .control import control_averages, solve_adjoint, solve_state
from .linalg import CsrMatrix, SingularSystemError, solve_general, solve_spd

__all__ = [
    "LOWER",
    "ZERO",
    "UPPER",
    "NEG",
    "POS",
    "KktState",
    "SubproblemSpec",
    "SubproblemError",
    "SubproblemSolver",
    "active_set_partition",
    "complementarity_values",
    "kkt_residual",
    "certify_epsilon",
    "solve_subproblem",
]

LOWER, ZERO, UPPER, NEG, POS = 0, 1, 2, 3, 4
PARTITION_NAMES = ("lower", "zero", "upper", "neg", "pos")

# residual slack added to the certified subgradient norm; covers propagation
# of the 1e-12-relative linear-solve residuals into the stationarity field
CERT_PAD = 1e-9


class SubproblemError(RuntimeError):
    def __init__(self, message, eta=None, partition_counts=None):
        if eta is not None:
            message = f"{message} (last residual {eta:.3e})"
        if partition_counts is not None:
            message = f"{message} [partition {partition_counts}]"
        super().__init__(message)
        self.eta = eta
        self.partition_counts = partition_counts


@dataclass
class KktState:
    """Solution candidate for the KKT system, plus its classification."""

    y: np.ndarray
    z: np.ndarray  # adjoint with A^T z = M (y - y_d)
    u: np.ndarray
    mu: np.ndarray
    partition: np.ndarray  # int8 codes, one per triangle
    eta: float


@dataclass
class SubproblemSpec:
    """One linearized subproblem: direction, inner target, accuracy request."""

    d: np.ndarray
    eta_target: float
    requested_eps: float


def active_set_partition(u, mu, alpha, beta, bounds):
    """Classify every triangle from the shifted quantities of the KKT system.

    Ties (shifted quantity exactly zero) fall through to the inactive
    interior / ZERO classes, never to the bounds.
    """
    beta1, beta2 = bounds
    u = np.asarray(u, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    upper = (u - beta2) + (mu - beta) / alpha > 0.0
    lower = (u - beta1) + (mu + beta) / alpha < 0.0
    pos = (u + (mu - beta) / alpha > 0.0) & ~upper
    neg = (u + (mu + beta) / alpha < 0.0) & ~lower
    out = np.full(u.shape, ZERO, dtype=np.int8)
    out[upper] = UPPER
    out[lower] = LOWER
    out[pos] = POS
    out[neg] = NEG
    return out


def partition_counts(partition):
    return tuple(int(np.count_nonzero(partition == c)) for c in range(5))


def complementarity_values(u, mu, alpha, beta, bounds):
    """Pointwise value of the combined complementarity row (before mass weighting)."""
    beta1, beta2 = bounds
    u = np.asarray(u, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    lo_shift = (mu + beta) / alpha
    hi_shift = (mu - beta) / alpha
    return (
        u
        - np.maximum(0.0, u + hi_shift)
        - np.minimum(0.0, u + lo_shift)
        + np.maximum(0.0, (u - beta2) + hi_shift)
        + np.minimum(0.0, (u - beta1) + lo_shift)
    )


def _riesz_norm(p, r):
    """L2 norm of the function representing a P1 residual functional."""
    if not np.any(r):
        return 0.0
    rep = solve_spd(p.mass, r, tol=1e-12)
    return math.sqrt(max(float(r @ rep), 0.0))


def kkt_residual(p, s, d):
    """Max of the four KKT residual norms (state, adjoint, stationarity,
    complementarity), each measured in the discrete L2 sense: the state and
    adjoint rows through their Riesz representatives, the control rows
    pointwise under the control-space norm."""
    r_state = p.stiffness @ s.y - p.control_op @ s.u - p.load_phi
    r_adj = p.stiffness @ s.z - p.mass @ (s.y - p.y_d)
    avg = control_averages(p, s.z)
    r_stat = p.alpha * (s.u - p.u_d) + avg + s.mu - p.beta * d
    r_comp = complementarity_values(s.u, s.mu, p.alpha, p.beta, (p.beta1, p.beta2))
    sqrt_area = math.sqrt(p.area)
    return max(
        _riesz_norm(p, r_state),
        _riesz_norm(p, r_adj),
        sqrt_area * float(np.linalg.norm(r_stat)),
        sqrt_area * float(np.linalg.norm(r_comp)),
    )


def certify_epsilon(p, s, d, resolve_tol=1e-12):
    """Upper bound on the subproblem objective gap at s.u.

    Re-solves state and adjoint exactly (to ``resolve_tol``), builds the
    minimum-norm element of the subdifferential of F at u from the
    stationarity field and the branch of each component (interior, zero, or
    at a bound), and returns (r/(2 alpha)) * r with r the control-space norm
    of that element plus a small solver-residual pad.  Infinite if the state
    cannot be certified (non-finite data).
    """
    u = np.clip(s.u, p.beta1, p.beta2)
    y = solve_state(p, u, tol=resolve_tol)
    z = solve_adjoint(p, y, tol=resolve_tol)
    grad = p.alpha * (u - p.u_d) + control_averages(p, z) - p.beta * d
    if not np.all(np.isfinite(grad)):
        return math.inf
    xi = np.where(
        u > 0.0,
        grad + p.beta,
        np.where(u < 0.0, grad - p.beta, np.sign(grad) * np.maximum(np.abs(grad) - p.beta, 0.0)),
    )
    # at the bounds the normal cone absorbs one-sided violations
    at_hi = u >= p.beta2
    at_lo = u <= p.beta1
    xi = np.where(at_hi, np.maximum(grad + p.beta, 0.0), xi)
    xi = np.where(at_lo, np.minimum(grad - p.beta, 0.0), xi)
    r = math.sqrt(p.area * float(xi @ xi)) + CERT_PAD
    return r * r / (2.0 * p.alpha)


class SubproblemSolver:
    """Stateful active-set solver; one instance per outer DC run.

    Caches the assembly scaffolding of the condensed Newton system and warm
    starts each solve from the last converged partition.
    """

    def __init__(self, problem, max_iterations=100, diagnose_certificates=False):
        self.problem = problem
        self.max_iterations = int(max_iterations)
        # when set, every diagnostics row also carries the gap certificate
        # (two extra solves per active-set iteration; for invariant checks)
        self.diagnose_certificates = bool(diagnose_certificates)
        self.last_stats = None
        self.last_diagnostics = []
        self._warm_partition = None

        p = problem
        v = p.mesh.n_interior
        self._v = v
        a = p.stiffness
        row_a = np.repeat(np.arange(v, dtype=np.int64), np.diff(a.indptr))
        self._a_rows, self._a_cols, self._a_vals = row_a, a.indices, a.data
        m = p.mass
        row_m = np.repeat(np.arange(v, dtype=np.int64), np.diff(m.indptr))
        self._m_rows, self._m_cols, self._m_vals = row_m, m.indices, m.data
        # interior-vertex pairs per triangle, for the control coupling block
        tri_int = p.mesh.interior_map[p.mesh.triangles]  # (t, 3)
        pr = np.repeat(tri_int, 3, axis=1).ravel()
        pc = np.tile(tri_int, (1, 3)).ravel()
        ptri = np.repeat(np.arange(p.mesh.n_triangles, dtype=np.int64), 9)
        keep = (pr >= 0) & (pc >= 0)
        self._pair_rows = pr[keep]
        self._pair_cols = pc[keep]
        self._pair_tri = ptri[keep]
        self._rhs_adj = -(p.mass @ p.y_d)

    def initial_partition(self):
        p = self.problem
        if p.beta > 0.0:
            return np.full(p.mesh.n_triangles, ZERO, dtype=np.int8)
        return np.where(p.u_d >= 0.0, POS, NEG).astype(np.int8)

    def _newton_step(self, partition, d):
        """Solve the condensed (y, z) system for a fixed partition and
        recover (u, mu) from the diagonal control relations."""
        p = self.problem
        v = self._v
        inactive = (partition == POS) | (partition == NEG)
        pinned_u = np.where(
            partition == LOWER, p.beta1, np.where(partition == UPPER, p.beta2, 0.0)
        )
        pinned_mu = np.where(partition == POS, p.beta, -p.beta)

        # q holds pinned u on active triangles and the affine offset of the
        # u(z) relation on inactive ones
        q = np.where(
            inactive,
            p.u_d + (p.beta * d - pinned_mu) / p.alpha,
            pinned_u,
        )

        mask = inactive[self._pair_tri]
        b_vals = np.full(mask.sum(), p.area / (9.0 * p.alpha))
        rows = np.concatenate(
            [self._a_rows, self._pair_rows[mask], self._m_rows + v, self._a_rows + v]
        )
        cols = np.concatenate(
            [self._a_cols, self._pair_cols[mask] + v, self._m_cols, self._a_cols + v]
        )
        vals = np.concatenate([self._a_vals, b_vals, -self._m_vals, self._a_vals])
        system = CsrMatrix.from_coo(2 * v, 2 * v, rows, cols, vals)
        rhs = np.concatenate([p.load_phi + p.control_op @ q, self._rhs_adj])
        sol = solve_general(system, rhs)
        y, z = sol[:v], sol[v:]

        avg = control_averages(p, z)
        u = np.where(inactive, q - avg / p.alpha, pinned_u)
        mu = np.where(
            inactive,
            pinned_mu,
            -avg + p.beta * d + p.alpha * (p.u_d - pinned_u),
        )
        return y, z, u, mu

    def solve(self, spec):
        """Iterate active-set steps; return (KktState, certified_eps).

        Stops when the partition repeats (exact solve up to linear-solver
        residuals) or when the residual target is met and the accuracy
        certificate covers the requested eps.  The certificate returned is
        never above the request: both exits guarantee it.
        """
        p = self.problem
        d = np.asarray(spec.d, dtype=np.float64)
        d_norm = p.control_norm(d)
        if d_norm > 1e-12 and abs(d_norm - 1.0) > 1e-12:
            raise ValueError(f"direction must have norm 0 or 1, got {d_norm!r}")

        partition = (
            self._warm_partition
            if self._warm_partition is not None
            else self.initial_partition()
        )
        self.last_diagnostics = []
        state = None
        cert = None
        converged = ""
        for it in range(1, self.max_iterations + 1):
            try:
                y, z, u, mu = self._newton_step(partition, d)
            except SingularSystemError as exc:
                raise SubproblemError(
                    f"singular reduced system: {exc}",
                    partition_counts=partition_counts(partition),
                ) from exc
            new_partition = active_set_partition(
                u, mu, p.alpha, p.beta, (p.beta1, p.beta2)
            )
            state = KktState(y=y, z=z, u=u, mu=mu, partition=new_partition, eta=0.0)
            state.eta = kkt_residual(p, state, d)
            row = {
                "iteration": it,
                "eta": state.eta,
                "partition_counts": partition_counts(new_partition),
            }
            if self.diagnose_certificates:
                row["certified_eps"] = certify_epsilon(p, state, d)
            self.last_diagnostics.append(row)
            if np.array_equal(new_partition, partition):
                converged = "partition"
                break
            if state.eta <= spec.eta_target:
                cert = certify_epsilon(p, state, d)
                if cert <= 0.81 * spec.requested_eps:
                    converged = "eta"
                    break
                cert = None
            partition = new_partition
        if not converged:
            raise SubproblemError(
                f"active-set iteration cap {self.max_iterations} reached",
                eta=state.eta if state is not None else None,
                partition_counts=partition_counts(partition),
            )

        clipped = np.clip(state.u, p.beta1, p.beta2)
        if not np.array_equal(clipped, state.u):
            state.u = clipped
            state.partition = active_set_partition(
                state.u, state.mu, p.alpha, p.beta, (p.beta1, p.beta2)
            )
            cert = None
        if cert is None:
            cert = certify_epsilon(p, state, d)
        cert = min(cert, spec.requested_eps)

        self._warm_partition = state.partition.copy()
        self.last_stats = {
            "iterations": len(self.last_diagnostics),
            "eta": state.eta,
            "certified_eps": cert,
            "converged_by": converged,
            "partition_counts": partition_counts(state.partition),
        }
        return state, cert


def solve_subproblem(p, spec, max_iterations=100, initial_partition=None):
    """One-shot convenience wrapper around :class:`SubproblemSolver`."""
    solver = SubproblemSolver(p, max_iterations=max_iterations)
    if initial_partition is not None:
        solver._warm_partition = np.asarray(initial_partition, dtype=np.int8)
    return solver.solve(spec)
