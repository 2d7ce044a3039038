import math

import numpy as np
import pytest

from dcflow.dca import (
    AccelerationState,
    AdaptiveRestartError,
    StopRule,
    adaptive_accept,
    pl_estimate,
    run_iadca,
    select_w,
    verify_adaptive,
    verify_descent,
    verify_eps_monotone,
)
from dcflow.toy import ToyProblem


def toy_trace(alpha=0.5, n=64, iters=40, accel="none", noise=None, eps0=0.5, gamma=0.5):
    p = ToyProblem(alpha, n=n, noise=noise)
    trace = run_iadca(
        p, p.e.copy(), gamma=gamma, eps0=eps0,
        accel=AccelerationState(accel), stop=StopRule(0.0, iters),
    )
    return p, trace


class TestAdaptiveAccept:
    def test_boundary_exact(self):
        # threshold is exactly 1 for sigma sum 32 and unit distance
        assert adaptive_accept(1.0, 32.0, 0.0, 1.0)

    def test_inside(self):
        assert adaptive_accept(0.1, 16.0, 16.0, 2.0)  # threshold 4

    def test_zero_distance_rejects_positive_eps(self):
        assert not adaptive_accept(1e-300, 1.0, 0.0, 0.0)
        assert adaptive_accept(0.0, 1.0, 0.0, 0.0)


class TestSelectW:
    def test_start_is_no_momentum(self):
        u0 = np.array([1.0, 2.0])
        accel = AccelerationState("nesterov", u_prev=u0)
        w, f_w, accepted = select_w(u0, accel, lambda z: float(z @ z), 5.0)
        np.testing.assert_array_equal(w, u0)
        assert accepted  # z == u0 passes the look-back test trivially

    def test_t_sequence(self):
        accel = AccelerationState("nesterov", u_prev=np.zeros(1))
        select_w(np.zeros(1), accel, lambda z: 0.0, 0.0)
        assert accel.t == pytest.approx((1 + math.sqrt(5.0)) / 2, abs=1e-12)

    def test_rejects_ascent_point(self):
        u_prev = np.array([0.0])
        u = np.array([1.0])
        accel = AccelerationState("heavy_ball", momentum=0.5, u_prev=u_prev)
        f = lambda z: float(z[0] ** 2)
        w, f_w, accepted = select_w(u, accel, f, f(u))
        assert not accepted
        np.testing.assert_array_equal(w, u)
        assert f_w == f(u)

    def test_heavy_ball_accepts_descent_point(self):
        accel = AccelerationState("heavy_ball", momentum=0.5, u_prev=np.array([2.0]))
        f = lambda z: float(z[0] ** 2)
        # z = 1 + 0.5*(1-2) = 0.5, f(z) = 0.25 < 1
        w, f_w, accepted = select_w(np.array([1.0]), accel, f, 1.0)
        assert accepted and w[0] == pytest.approx(0.5)


class TestRunIadca:
    def test_toy_closed_form_iterates(self):
        p, trace = toy_trace(alpha=0.5, iters=40)
        assert len(trace) == 40
        np.testing.assert_allclose(trace.u_final, 0.5**40 * p.e, rtol=0, atol=1e-24)
        for k, r in enumerate(trace.records):
            expected = (1 - 0.5) / 2 * 0.5 ** (2 * k)
            assert r.f == pytest.approx(expected, rel=1e-12)

    def test_fixed_point_start(self):
        p = ToyProblem(0.5)
        trace = run_iadca(p, np.zeros(p.n), gamma=0.5, eps0=0.5,
                          accel=AccelerationState("none"), stop=StopRule(1e-12, 10))
        assert len(trace) == 1
        assert trace.stop_reason == "rel_change"
        np.testing.assert_array_equal(trace.u_final, np.zeros(p.n))

    def test_f_ratio_is_alpha_squared(self):
        p, trace = toy_trace(alpha=0.5, iters=20)
        f = trace.f_values()
        ratios = f[1:] / f[:-1]
        np.testing.assert_allclose(ratios, 0.25, rtol=1e-10)

    def test_descent_and_adaptive_invariants(self):
        for accel in ("none", "nesterov", "heavy_ball"):
            p, trace = toy_trace(alpha=0.7, iters=25, accel=accel)
            assert verify_descent(trace, p) == []
            assert verify_adaptive(trace) == []
            assert verify_eps_monotone(trace) == []

    def test_square_summability_bound(self):
        p, trace = toy_trace(alpha=0.9, iters=30)
        total = sum(r.step_norm**2 for r in trace.records)
        bound = 8.0 * (trace.f0 - trace.f_final) / (p.sigma_g + p.sigma_h) + 1e-6
        assert total <= bound

    def test_w_selection_safety(self):
        p, trace = toy_trace(alpha=0.6, iters=25, accel="nesterov")
        for r in trace.records:
            assert r.f_w <= r.f + 1e-15

    def test_noisy_run_descends_and_restarts(self):
        p, trace = toy_trace(alpha=0.5, iters=25, noise=1e-6)
        assert verify_descent(trace, p) == []
        assert any(r.restarts > 0 for r in trace.records)
        assert trace.stop_reason in ("eps_floor", "max_iterations")

    def test_restart_cap_raises(self):
        # gamma close to 1 exhausts the cap before the eps floor
        p = ToyProblem(0.5, noise=1.0)
        with pytest.raises(AdaptiveRestartError) as info:
            run_iadca(p, np.zeros(p.n), gamma=0.99, eps0=1.0,
                      accel=AccelerationState("none"), stop=StopRule(0.0, 5),
                      restart_cap=50)
        assert info.value.step_norm >= 0.0

    def test_eps_floor_stop_from_critical_point(self):
        # noisy subsolves at the stationary point force the criticality exit
        p = ToyProblem(0.5, noise=1.0)
        trace = run_iadca(p, np.zeros(p.n), gamma=0.5, eps0=1.0,
                          accel=AccelerationState("none"), stop=StopRule(0.0, 5))
        assert trace.stop_reason == "eps_floor"

    def test_determinism_bitwise(self):
        _, t1 = toy_trace(alpha=0.5, iters=30, accel="nesterov", noise=1e-7)
        _, t2 = toy_trace(alpha=0.5, iters=30, accel="nesterov", noise=1e-7)
        assert len(t1) == len(t2)
        np.testing.assert_array_equal(t1.u_final, t2.u_final)
        for a, b in zip(t1.records, t2.records):
            assert (a.f, a.eps, a.step_norm, a.restarts) == (b.f, b.eps, b.step_norm, b.restarts)

    def test_rejects_bad_parameters(self):
        p = ToyProblem(0.5)
        with pytest.raises(ValueError):
            run_iadca(p, p.e, gamma=1.0, eps0=0.5)
        with pytest.raises(ValueError):
            run_iadca(p, p.e, gamma=0.5, eps0=2.0)

    def test_nonadaptive_variant_runs(self):
        p = ToyProblem(0.5)
        trace = run_iadca(p, p.e.copy(), gamma=0.5, eps0=1.0,
                          accel=AccelerationState("none"), stop=StopRule(0.0, 10),
                          adaptive=False)
        assert len(trace) == 10
        assert all(r.restarts == 0 for r in trace.records)


class TestVerifyDescent:
    def test_clean_trace_empty(self):
        p, trace = toy_trace(alpha=0.5, iters=15)
        assert verify_descent(trace, p) == []

    def test_single_iterate_vacuous(self):
        p = ToyProblem(0.5)
        trace = run_iadca(p, np.zeros(p.n), gamma=0.5, eps0=0.5,
                          accel=AccelerationState("none"), stop=StopRule(1e-12, 1))
        assert verify_descent(trace, p) == []

    def test_corrupted_f_reported(self):
        p, trace = toy_trace(alpha=0.5, iters=10)
        trace.records[4].f_next = trace.records[4].f + 1.0  # fake ascent
        assert verify_descent(trace, p) == [4]


class TestPlEstimate:
    def test_linear_regime_alpha_half(self):
        p, trace = toy_trace(alpha=0.5, iters=30)
        fit = pl_estimate(trace, 0.0)
        assert fit.ratio == pytest.approx(0.25, abs=0.01)
        assert fit.theta == pytest.approx(0.5, abs=0.02)

    def test_linear_regime_alpha_09(self):
        p, trace = toy_trace(alpha=0.9, iters=40)
        fit = pl_estimate(trace, 0.0)
        assert fit.ratio == pytest.approx(0.81, abs=0.01)

    def test_constant_trace_unavailable(self):
        p = ToyProblem(0.5)
        trace = run_iadca(p, np.zeros(p.n), gamma=0.5, eps0=0.5,
                          accel=AccelerationState("none"), stop=StopRule(1e-12, 3))
        assert pl_estimate(trace, 0.0) is None


def test_trace_csv_roundtrip(tmp_path):
    p, trace = toy_trace(alpha=0.5, iters=8, accel="nesterov")
    path = tmp_path / "trace.csv"
    trace.write_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "k,f,eps,step_norm,restarts,accel_accepted"
    assert len(lines) == 9
    first = lines[1].split(",")
    assert int(first[0]) == 0
    assert float(first[1]) == pytest.approx(0.25)
