"""Inexact adaptive solver for difference-of-convex minimization.

Minimizes f = g - h over an abstract inner-product space through a problem
interface that supplies approximate subgradients of h and approximate
minimizers of the linearized-g subproblem.  Each outer iteration

  1. picks a trial point w with f(w) <= f(u_k) (optionally by Nesterov or
     heavy-ball extrapolation with a descent guard),
  2. asks for v in the eps-subdifferential of h at w,
  3. asks for an eps-approximate minimizer u_{k+1} of g(.) - <v, .>,
  4. shrinks eps by a factor gamma and redoes 2-3 until the certified
     inexactness is at most (sigma_g + sigma_h)/32 * ||u_{k+1} - w||^2,
  5. carries eps over to the next iteration.

The backtracking in step 4 makes the subsolve accuracy commensurate with the
actual step, which is what guarantees monotone descent of f under
inexactness.  When the subsolver certifies a tighter accuracy than requested
(``certified_eps``), the certified value is the one tested in step 4; the
requested value is what shrinks and carries over.

A collapsing eps (below ``eps_floor``) signals that w is numerically a
critical point of g - h; the run then terminates with that stop reason
instead of looping forever.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DcProblem",
    "AccelerationState",
    "StopRule",
    "IterationRecord",
    "IterationTrace",
    "AdaptiveRestartError",
    "PlFit",
    "adaptive_accept",
    "select_w",
    "run_iadca",
    "verify_descent",
    "verify_adaptive",
    "verify_eps_monotone",
    "pl_estimate",
]

EPS_FLOOR = 1e-12
RESTART_CAP = 200


class DcProblem:
    """Interface consumed by :func:`run_iadca`.

    Concrete problems provide the strong-convexity moduli ``sigma_g`` and
    ``sigma_h`` (their sum must be positive), the objective, an
    eps-subgradient oracle for h, an eps-argmin oracle for the linearized
    subproblem, and the inner product of the ambient space.
    """

    sigma_g = 0.0
    sigma_h = 0.0

    def objective(self, u):
        raise NotImplementedError

    def eps_subgradient_h(self, w, eps):
        raise NotImplementedError

    def eps_argmin_linearized(self, v, eps):
        """Return (u, certified_eps) with certified_eps <= eps."""
        raise NotImplementedError

    def inner_product(self, x, y):
        return float(np.dot(x, y))

    def norm(self, x):
        return math.sqrt(max(self.inner_product(x, x), 0.0))


class AdaptiveRestartError(RuntimeError):
    """Step-4 loop exceeded the restart cap; w is numerically critical."""

    def __init__(self, restarts, step_norm, eps):
        super().__init__(
            f"adaptive loop exceeded {restarts} restarts "
            f"(||u_next - w|| = {step_norm:.3e}, eps = {eps:.3e})"
        )
        self.step_norm = step_norm
        self.eps = eps


@dataclass
class AccelerationState:
    """Extrapolation bookkeeping for the w-selection step.

    mode: "none", "nesterov" (look-back window of size 1) or "heavy_ball".
    """

    mode: str = "none"
    t: float = 1.0
    momentum: float = 0.5
    u_prev: np.ndarray | None = None

    def __post_init__(self):
        if self.mode not in ("none", "nesterov", "heavy_ball"):
            raise ValueError(f"unknown acceleration mode {self.mode!r}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("heavy-ball momentum must be in [0, 1)")


@dataclass
class StopRule:
    rel_change_tol: float = 1e-10
    max_iterations: int = 20

    def __post_init__(self):
        if self.rel_change_tol < 0:
            raise ValueError("tolerance must be nonnegative")
        if self.max_iterations < 1:
            raise ValueError("need at least one iteration")


@dataclass
class IterationRecord:
    k: int
    f: float  # f(u_k) before the step
    f_w: float
    f_next: float  # f(u_{k+1})
    eps: float  # requested accuracy after the adaptive loop
    eps_accepted: float  # min(requested, certified); the value step 4 tested
    step_norm: float  # ||u_{k+1} - w_k||
    restarts: int
    accel_accepted: bool
    stats: dict | None = None


@dataclass
class IterationTrace:
    sigma_g: float
    sigma_h: float
    f0: float
    records: list[IterationRecord] = field(default_factory=list)
    u_final: np.ndarray | None = None
    f_final: float = math.nan
    eps_final: float = math.nan
    stop_reason: str = ""

    def __len__(self):
        return len(self.records)

    def f_values(self):
        """[f(u_0), ..., f(u_N)] including the final iterate."""
        vals = [self.f0] + [r.f_next for r in self.records]
        return np.array(vals)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["k", "f", "eps", "step_norm", "restarts", "accel_accepted"])
            for r in self.records:
                writer.writerow(
                    [r.k, repr(r.f), repr(r.eps), repr(r.step_norm), r.restarts,
                     int(r.accel_accepted)]
                )


def adaptive_accept(eps_k, sigma_g, sigma_h, dist):
    """Accept eps_k iff eps_k <= (sigma_g + sigma_h)/32 * dist**2."""
    return eps_k <= (sigma_g + sigma_h) / 32.0 * dist * dist


def select_w(u_k, accel, f_eval, f_uk):
    """Pick the trial point for the next linearization.

    Returns (w, f(w), accelerated_point_accepted).  The extrapolated point is
    kept only when it does not increase the objective, so f(w) <= f(u_k)
    holds unconditionally.
    """
    if accel.mode == "none":
        return u_k, f_uk, False
    u_prev = u_k if accel.u_prev is None else accel.u_prev
    if accel.mode == "nesterov":
        t_next = (1.0 + math.sqrt(1.0 + 4.0 * accel.t * accel.t)) / 2.0
        z = u_k + ((accel.t - 1.0) / t_next) * (u_k - u_prev)
        accel.t = t_next
    else:  # heavy_ball
        z = u_k + accel.momentum * (u_k - u_prev)
    f_z = f_eval(z)
    if f_z <= f_uk:
        return z, f_z, True
    return u_k, f_uk, False


def run_iadca(
    problem,
    u0,
    gamma,
    eps0,
    accel=None,
    stop=None,
    *,
    adaptive=True,
    restart_cap=RESTART_CAP,
    eps_floor=EPS_FLOOR,
    accuracy_exponent=None,
):
    """Run the inexact adaptive DC iteration and return its trace.

    ``adaptive=False`` skips the step-4 backtracking entirely (plain inexact
    DCA with a fixed accuracy); the descent guarantees then rest on the
    subsolver alone.  ``accuracy_exponent`` optionally requests the tighter
    accuracy eps**(1/theta) from both oracles, for rate experiments; the
    step-4 test is unchanged.
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    if not 0.0 < eps0 <= 1.0:
        raise ValueError("eps0 must lie in (0, 1]")
    if accel is None:
        accel = AccelerationState()
    if stop is None:
        stop = StopRule()
    sigma_sum = problem.sigma_g + problem.sigma_h
    if sigma_sum <= 0.0:
        raise ValueError("sigma_g + sigma_h must be positive")

    u = np.asarray(u0, dtype=np.float64)
    f_u = problem.objective(u)
    if not math.isfinite(f_u):
        raise ValueError("objective at the starting point must be finite")
    if accel.u_prev is None:
        accel.u_prev = u

    trace = IterationTrace(problem.sigma_g, problem.sigma_h, f0=f_u)
    eps = eps0
    stop_reason = "max_iterations"

    for k in range(stop.max_iterations):
        w, f_w, accel_accepted = select_w(u, accel, problem.objective, f_u)

        restarts = 0
        hit_floor = False
        while True:
            request = eps if accuracy_exponent is None else eps ** (1.0 / accuracy_exponent)
            v = problem.eps_subgradient_h(w, request)
            u_next, certified = problem.eps_argmin_linearized(v, request)
            eps_accepted = min(eps, certified)
            step_norm = problem.norm(u_next - w)
            if not adaptive or adaptive_accept(eps_accepted, problem.sigma_g,
                                               problem.sigma_h, step_norm):
                break
            eps *= gamma
            restarts += 1
            if restarts > restart_cap:
                raise AdaptiveRestartError(restarts, step_norm, eps)
            if eps < eps_floor:
                hit_floor = True
                break
        if hit_floor:
            stop_reason = "eps_floor"
            break

        f_next = problem.objective(u_next)
        trace.records.append(
            IterationRecord(
                k=k,
                f=f_u,
                f_w=f_w,
                f_next=f_next,
                eps=eps,
                eps_accepted=eps_accepted,
                step_norm=step_norm,
                restarts=restarts,
                accel_accepted=accel_accepted,
                stats=getattr(problem, "last_subsolve_stats", None),
            )
        )

        rel_change = problem.norm(u_next - u) / max(problem.norm(u), 1.0)
        accel.u_prev = u
        u = u_next
        f_u = f_next
        if rel_change <= stop.rel_change_tol:
            stop_reason = "rel_change"
            break

    trace.u_final = u
    trace.f_final = f_u
    trace.eps_final = eps
    trace.stop_reason = stop_reason
    return trace


def verify_descent(trace, problem):
    """Check the per-iteration descent estimates; return offending indices.

    For each record the chain

        (sigma_g + sigma_h)/8 * ||u_{k+1} - w_k||^2
            <= f(w_k) - f(u_{k+1}) <= f(u_k) - f(u_{k+1})

    must hold up to 1e-9 * max(1, |f(u_k)|); the slack covers cancellation
    when consecutive objective values agree to machine precision.
    """
    sigma_sum = problem.sigma_g + problem.sigma_h
    bad = []
    for i, r in enumerate(trace.records):
        tol = 1e-9 * max(1.0, abs(r.f))
        lower = sigma_sum / 8.0 * r.step_norm**2
        gain_w = r.f_w - r.f_next
        gain_u = r.f - r.f_next
        if lower > gain_w + tol or gain_w > gain_u + tol:
            bad.append(i)
    return bad


def verify_adaptive(trace):
    """Indices whose accepted accuracy violates the step-4 inequality."""
    return [
        i
        for i, r in enumerate(trace.records)
        if not adaptive_accept(r.eps_accepted, trace.sigma_g, trace.sigma_h, r.step_norm)
    ]


def verify_eps_monotone(trace):
    """Indices where the carried accuracy sequence increases."""
    eps = [r.eps for r in trace.records]
    return [i for i in range(1, len(eps)) if eps[i] > eps[i - 1]]


@dataclass
class PlFit:
    """Log-space fit of the descent recursion rho_{k+1}^(2 theta) <= c (rho_k - rho_{k+1}).

    ``ratio`` is the implied per-step objective-gap ratio c/(1+c), meaningful
    in the linear regime theta ~ 1/2.
    """

    theta: float
    c: float
    ratio: float


def pl_estimate(trace, f_bar):
    """Fit the Polyak-Lojasiewicz rate diagnostic from a trace.

    Returns a :class:`PlFit`, or None when the gap f(u_k) - f_bar is already
    degenerate (no strictly decreasing positive gaps to fit).  Diagnostic
    only; at least five useful iterations are needed for a stable fit.
    """
    rho = trace.f_values() - f_bar
    xs, ys = [], []
    for k in range(len(rho) - 1):
        drop = rho[k] - rho[k + 1]
        if rho[k] > 0.0 and rho[k + 1] > 0.0 and drop > 0.0:
            xs.append(math.log(rho[k + 1]))
            ys.append(math.log(drop))
    if len(xs) < 2:
        return None
    slope, intercept = np.polyfit(np.array(xs), np.array(ys), 1)
    c = math.exp(-intercept)
    return PlFit(theta=slope / 2.0, c=c, ratio=c / (1.0 + c))
