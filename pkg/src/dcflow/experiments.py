"""Benchmark harness: solver-profile tables, sparsity sweeps, mesh-rate studies.

Reproduces the desk-scale numerics: per-mesh convergence profiles of the
plain and accelerated inexact DC solvers on the two benchmark data sets, the
sparsity-versus-weight sweep, and the control-error refinement study against
a fine-mesh reference.  Everything is deterministic; the only run-to-run
variation in the emitted files is the wall-clock column.

Table CSV columns are ``h,dofs,E2,residual,iters,cpu_s,method``.  The E2
column is the distance between the state at the returned control and the
state of an exactly re-solved final subproblem (tiny at convergence); the
companion ``tracking_error_l2`` field in the manifest, ||y - y_d||, is the
quantity whose magnitudes match the published tables.
"""

import csv
import dataclasses
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, control, fem
from .active_set import SubproblemSolver, SubproblemSpec
from .dca import (
    AccelerationState,
    StopRule,
    run_iadca,
    verify_adaptive,
    verify_descent,
    verify_eps_monotone,
)
from .toy import ToyProblem

__all__ = [
    "ExperimentConfig",
    "ReportRow",
    "RunReport",
    "run_example",
    "beta_sweep",
    "refinement_study",
    "restrict_p0",
    "emit_report",
    "emit_sweep",
    "emit_rates",
]

# table-reproduction defaults; example2 keeps its data-set values
TABLE_DEFAULTS = {
    "example1": {"alpha": 0.01},
    "example2": {},
}

SUPPORT_THRESHOLD = 1e-8


@dataclass
class ExperimentConfig:
    example: str = "example1"
    levels: tuple = (16,)
    alpha: float | None = None  # None: harness default for the example
    beta_frac: float | None = None  # None: data-set default fraction
    bounds: tuple | None = None
    accel: str = "nesterov"
    gamma: float = 0.5
    eps0: float = 1.0
    tol: float = 1e-6
    max_iter: int = 20
    out_dir: str = "out"
    compare_dca: bool = True
    momentum: float = 0.5

    def __post_init__(self):
        self.levels = tuple(int(m) for m in self.levels)
        if self.example != "toy":
            for m in self.levels:
                if not (4 <= m <= 256 and (m & (m - 1)) == 0):
                    raise ValueError(f"mesh level {m} must be a power of two in [4, 256]")
        if not self.levels:
            raise ValueError("need at least one mesh level")

    def problem_config(self, m):
        cfg = {"m": m, "data": self.example}
        defaults = TABLE_DEFAULTS.get(self.example, {})
        if self.alpha is not None:
            cfg["alpha"] = self.alpha
        elif "alpha" in defaults:
            cfg["alpha"] = defaults["alpha"]
        if self.beta_frac is not None:
            cfg["beta_fraction"] = self.beta_frac
        if self.bounds is not None:
            cfg["bounds"] = tuple(self.bounds)
        return cfg

    def acceleration(self, method):
        if method == "dca":
            return AccelerationState("none")
        return AccelerationState(self.accel, momentum=self.momentum)

    def stop_rule(self):
        return StopRule(rel_change_tol=self.tol, max_iterations=self.max_iter)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["levels"] = list(self.levels)
        if d["bounds"] is not None:
            d["bounds"] = list(d["bounds"])
        return d


@dataclass
class ReportRow:
    method: str
    m: int
    h: float
    dofs: int
    e2: float = math.nan
    residual: float = math.nan
    iters: int = 0
    cpu_s: float = math.nan
    f_final: float = math.nan
    tracking_error: float = math.nan
    beta: float = math.nan
    beta_c: float = math.nan
    stop_reason: str = ""
    failed: bool = False
    error: str = ""


@dataclass
class RunReport:
    config: dict
    rows: list = field(default_factory=list)
    traces: dict = field(default_factory=dict)  # (method, m) -> IterationTrace
    fields: dict = field(default_factory=dict)  # (method, m) -> (u, y, mesh)
    invariant_violations: dict = field(default_factory=dict)

    @property
    def any_failed(self):
        return any(r.failed for r in self.rows)


def _final_eta(trace):
    for record in reversed(trace.records):
        if record.stats and "eta" in record.stats:
            return float(record.stats["eta"])
    return math.nan


def _check_invariants(trace, dc_problem):
    return {
        "descent": verify_descent(trace, dc_problem),
        "adaptive": verify_adaptive(trace),
        "eps_monotone": verify_eps_monotone(trace),
    }


def _exact_resolve(problem, solver, u_final):
    """Re-solve the final linearized subproblem to partition stationarity."""
    v = control.h_subgradient(problem, u_final)
    d = v / problem.beta if problem.beta > 0.0 else np.zeros_like(u_final)
    spec = SubproblemSpec(d=d, eta_target=0.0, requested_eps=1.0)
    state, _ = solver.solve(spec)
    return state


def _run_one_method(cfg, problem, method):
    solver = SubproblemSolver(problem)
    dc = control.make_dc_problem(problem, solver)
    u0 = np.zeros(problem.mesh.n_triangles)
    started = time.perf_counter()
    trace = run_iadca(
        dc, u0, gamma=cfg.gamma, eps0=cfg.eps0,
        accel=cfg.acceleration(method), stop=cfg.stop_rule(),
    )
    elapsed = time.perf_counter() - started
    y_final = control.solve_state(problem, trace.u_final)
    optimum = _exact_resolve(problem, solver, trace.u_final)
    diff = y_final - optimum.y
    e2 = fem.norm_l2_p1(problem.mesh, diff)
    track = fem.norm_l2_p1(problem.mesh, y_final - problem.y_d)
    row = ReportRow(
        method=method,
        m=problem.mesh.m,
        h=problem.mesh.h,
        dofs=problem.mesh.n_interior,
        e2=e2,
        residual=_final_eta(trace),
        iters=len(trace),
        cpu_s=elapsed,
        f_final=trace.f_final,
        tracking_error=track,
        beta=problem.beta,
        stop_reason=trace.stop_reason,
    )
    return row, trace, (trace.u_final, y_final), _check_invariants(trace, dc)


def _run_toy(cfg):
    report = RunReport(config=cfg.to_dict())
    alpha = cfg.alpha if cfg.alpha is not None else 0.5
    problem = ToyProblem(alpha, n=64)
    methods = (["dca"] if cfg.compare_dca else []) + ["iadca"]
    for method in methods:
        started = time.perf_counter()
        trace = run_iadca(
            problem, problem.e.copy(), gamma=cfg.gamma, eps0=cfg.eps0,
            accel=cfg.acceleration(method), stop=cfg.stop_rule(),
        )
        elapsed = time.perf_counter() - started
        report.rows.append(
            ReportRow(
                method=method, m=0, h=0.0, dofs=problem.n,
                e2=trace.f_final, residual=trace.records[-1].eps_accepted,
                iters=len(trace), cpu_s=elapsed, f_final=trace.f_final,
                stop_reason=trace.stop_reason,
            )
        )
        report.traces[(method, 0)] = trace
        report.invariant_violations[(method, 0)] = _check_invariants(trace, problem)
    return report


def run_example(cfg):
    """Run the configured example on every mesh level; never raises on a
    subsolver failure (the row is marked failed and the run continues)."""
    if cfg.example == "toy":
        return _run_toy(cfg)
    report = RunReport(config=cfg.to_dict())
    methods = (["dca"] if cfg.compare_dca else []) + ["iadca"]
    for m in cfg.levels:
        base_cfg = cfg.problem_config(m)
        base_cfg["beta_fraction"] = 0.0  # assemble once, beta resolved below
        base = control.problem_from_config(base_cfg)
        beta_c = control.beta_critical(base)
        frac = cfg.beta_frac
        if frac is None:
            frac = control.EXAMPLE_DATA[cfg.example].get("beta_fraction", 0.1)
        problem = base.with_beta(frac * beta_c)
        for method in methods:
            try:
                row, trace, fields, violations = _run_one_method(cfg, problem, method)
                row.beta_c = beta_c
                report.traces[(method, m)] = trace
                report.fields[(method, m)] = (*fields, problem.mesh)
                report.invariant_violations[(method, m)] = violations
            except Exception as exc:  # subsolver failure: mark and continue
                row = ReportRow(
                    method=method, m=m, h=1.0 / m, dofs=(m - 1) ** 2,
                    beta=problem.beta, beta_c=beta_c,
                    failed=True, error=f"{type(exc).__name__}: {exc}",
                )
            report.rows.append(row)
    return report


def beta_sweep(cfg, fractions):
    """Support of the optimal control as the sparsity weight grows.

    Runs the accelerated solver on the first configured level for each
    fraction of the critical weight; reports the area fraction where the
    control exceeds the support threshold.
    """
    fractions = [float(f) for f in fractions]
    if any(f < 0 for f in fractions):
        raise ValueError("fractions must be nonnegative")
    if sorted(fractions) != fractions:
        raise ValueError("fractions must be sorted ascending")
    m = cfg.levels[0]
    base_cfg = cfg.problem_config(m)
    base_cfg["beta_fraction"] = 0.0
    base = control.problem_from_config(base_cfg)
    beta_c = control.beta_critical(base)
    rows = []
    fields = {}
    for frac in fractions:
        problem = base.with_beta(frac * beta_c)
        row, trace, (u, y), _ = _run_one_method(cfg, problem, "iadca")
        n_support = int(np.count_nonzero(np.abs(u) > SUPPORT_THRESHOLD))
        rows.append(
            {
                "fraction": frac,
                "beta": problem.beta,
                "support_fraction": n_support * problem.mesh.triangle_area,
                "n_support": n_support,
                "iters": row.iters,
                "f_final": row.f_final,
            }
        )
        fields[frac] = (u, y, problem.mesh)
    return {"config": cfg.to_dict(), "m": m, "beta_c": beta_c, "rows": rows, "fields": fields}


def restrict_p0(fine_mesh, coarse_mesh, u_fine):
    """Average a fine-mesh P0 field over the triangles of a nested coarse mesh.

    Requires the coarse subdivision count to divide the fine one; with the
    shared-diagonal splitting every coarse triangle is then a union of fine
    triangles, so the restriction is an exact area-weighted mean (the plain
    mean, areas being uniform).  Restriction onto the same mesh is the
    identity.
    """
    mf, mc = fine_mesh.m, coarse_mesh.m
    if mf % mc != 0:
        raise ValueError("meshes are not nested")
    r = mf // mc
    t = np.arange(fine_mesh.n_triangles)
    cell, up = t // 2, t % 2
    fa, fb = cell % mf, cell // mf
    ci, cj = fa // r, fb // r
    la, lb = fa - ci * r, fb - cj * r
    coarse_up = np.where(la > lb, 0, np.where(la < lb, 1, up))
    coarse_tri = 2 * (cj * mc + ci) + coarse_up
    sums = np.zeros(coarse_mesh.n_triangles)
    np.add.at(sums, coarse_tri, np.asarray(u_fine, dtype=np.float64))
    return sums / (r * r)


def refinement_study(cfg, levels):
    """Control error of one frozen subproblem against the finest level.

    The subproblem direction comes from a fixed smooth reference control
    (normalized per level); the sparsity weight is frozen from the finest
    level so that every level discretizes the same continuous problem.  The
    finest solution, averaged onto each coarser mesh, serves as reference.
    """
    levels = sorted(int(m) for m in levels)
    if len(levels) < 3:
        raise ValueError("need at least three levels")
    if len(set(levels)) != len(levels):
        raise ValueError("levels must be distinct")
    m_ref = levels[-1]
    for m in levels[:-1]:
        if m_ref % m != 0:
            raise ValueError(f"level {m} is not nested in the reference {m_ref}")

    def w_ref(x, y):
        return np.sin(2 * np.pi * x) * np.sin(np.pi * y) * np.exp(x)

    frac = cfg.beta_frac
    if frac is None:
        frac = control.EXAMPLE_DATA[cfg.example].get("beta_fraction", 0.1)

    solutions = {}
    beta = None
    for m in reversed(levels):  # finest first to freeze beta
        pcfg = cfg.problem_config(m)
        pcfg["beta_fraction"] = 0.0
        base = control.problem_from_config(pcfg)
        if beta is None:
            beta = frac * control.beta_critical(base)
        problem = base.with_beta(beta)
        d = fem.project_p0(problem.mesh, w_ref)
        nrm = problem.control_norm(d)
        d = d / nrm
        state, _ = SubproblemSolver(problem).solve(
            SubproblemSpec(d=d, eta_target=0.0, requested_eps=1.0)
        )
        solutions[m] = (state.u, problem.mesh)

    u_ref, mesh_ref = solutions[m_ref]
    rows = []
    for m in levels[:-1]:
        u_m, mesh_m = solutions[m]
        restricted = restrict_p0(mesh_ref, mesh_m, u_ref)
        diff = restricted - u_m
        rows.append(
            {
                "m": m,
                "h": mesh_m.h,
                "err_linf": float(np.abs(diff).max()),
                "err_l2": fem.norm_l2_p0(mesh_m, diff),
            }
        )
    log_h = np.log([row["h"] for row in rows])

    def fitted_order(key):
        errs = np.array([row[key] for row in rows])
        if np.any(errs <= 0):
            return math.inf  # exact agreement; any order is attained
        return float(np.polyfit(log_h, np.log(errs), 1)[0])

    return {
        "config": cfg.to_dict(),
        "levels": levels,
        "reference": m_ref,
        "beta": beta,
        "rows": rows,
        "order_linf": fitted_order("err_linf"),
        "order_l2": fitted_order("err_l2"),
    }


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return value


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _subsolve_rows(trace):
    rows = []
    for r in trace.records:
        if not r.stats:
            continue
        counts = r.stats.get("partition_counts", (0,) * 5)
        rows.append(
            [r.k, r.stats.get("iterations", 0), float(r.stats.get("eta", math.nan)),
             float(r.stats.get("certified_eps", math.nan)), *counts]
        )
    return rows


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def emit_report(report, out_dir):
    """Write the table CSV, run manifest, traces, diagnostics and field dumps."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    table = out / "table.csv"
    _write_csv(
        table,
        ["h", "dofs", "E2", "residual", "iters", "cpu_s", "method"],
        [[r.h, r.dofs, r.e2, r.residual, r.iters, r.cpu_s, r.method] for r in report.rows],
    )
    written.append(table)

    for (method, m), trace in sorted(report.traces.items()):
        trace_path = out / f"trace_{method}_m{m}.csv"
        trace.write_csv(trace_path)
        written.append(trace_path)
        sub_rows = _subsolve_rows(trace)
        if sub_rows:
            sub_path = out / f"subsolves_{method}_m{m}.csv"
            _write_csv(
                sub_path,
                ["outer_k", "as_iters", "eta", "eps_cert",
                 "n_lower", "n_zero", "n_upper", "n_neg", "n_pos"],
                sub_rows,
            )
            written.append(sub_path)

    for (method, m), (u, y, mesh) in sorted(report.fields.items()):
        control_path = out / f"control_{method}_m{m}.csv"
        fem.export_p0_csv(mesh, u, control_path)
        state_path = out / f"state_{method}_m{m}.csv"
        fem.export_p1_csv(mesh, y, state_path)
        written.extend([control_path, state_path])

    manifest = {
        "version": __version__,
        "config": report.config,
        "rows": [dataclasses.asdict(r) for r in report.rows],
        "invariants": {
            f"{method}_m{m}": v for (method, m), v in sorted(report.invariant_violations.items())
        },
        "notes": {
            "E2": "state distance to the exactly re-solved final subproblem",
            "tracking_error_l2": "||y - y_d||; matches the magnitude of the published E2 column",
        },
    }
    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True,
                                        default=_json_default) + "\n")
    written.append(manifest_path)
    return written


def emit_sweep(sweep, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    path = out / "sparsity.csv"
    _write_csv(
        path,
        ["fraction", "beta", "support_fraction", "n_support", "iters"],
        [[r["fraction"], r["beta"], r["support_fraction"], r["n_support"], r["iters"]]
         for r in sweep["rows"]],
    )
    written.append(path)
    for frac, (u, y, mesh) in sorted(sweep["fields"].items()):
        tag = repr(float(frac)).replace(".", "p")
        p0_path = out / f"control_frac{tag}.csv"
        fem.export_p0_csv(mesh, u, p0_path)
        written.append(p0_path)
    manifest = {k: v for k, v in sweep.items() if k != "fields"}
    manifest["version"] = __version__
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_json_default) + "\n")
    written.append(path)
    return written


def emit_rates(rates, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    path = out / "rates.csv"
    _write_csv(
        path,
        ["m", "h", "err_linf", "err_l2"],
        [[r["m"], r["h"], r["err_linf"], r["err_l2"]] for r in rates["rows"]],
    )
    written.append(path)
    path = out / "manifest.json"
    path.write_text(json.dumps(rates, indent=2, sort_keys=True, default=_json_default) + "\n")
    written.append(path)
    return written
