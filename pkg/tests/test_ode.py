"""Integrator contract: convergence order, event location, dense sampling,
reversibility, and the trajectory CSV format.
"""

import math

import numpy as np
import pytest

from conftest import make_reference_problem
from vwbound.errors import StepSizeUnderflow
from vwbound.ode import (
    EventSpec,
    integrate,
    make_region_events,
    eval_v_w_along,
    write_trajectory_csv,
)


def linear_rhs(t, x):
    return np.array([x[0], -x[1]])


def oscillator_rhs(t, x):
    # van der Pol with mu = 1: smooth, nonlinear, non-stiff on short spans
    return np.array([x[1], (1.0 - x[0] ** 2) * x[1] - x[0]])


class TestAccuracy:
    def test_exponential_error(self):
        traj = integrate(linear_rhs, 0.0, np.array([1.0, 1.0]), 2.0, tol=1e-9)
        exact = np.array([math.e**2, math.e**-2])
        assert np.max(np.abs(traj.x_end - exact)) < 1e-7

    def test_error_scales_with_tolerance(self):
        # halving the tolerance five times must cut the error by well
        # over the single-halving factor of 8
        x0 = np.array([2.0, 0.0])

        def err(tol):
            traj = integrate(oscillator_rhs, 0.0, x0, 10.0, tol=tol)
            tight = integrate(oscillator_rhs, 0.0, x0, 10.0, tol=1e-12)
            return float(np.max(np.abs(traj.x_end - tight.x_end)))

        ratio = err(1e-6) / err(1e-6 / 32.0)
        assert ratio >= 8.0

    def test_time_reversal(self):
        # harmonic oscillator: neutrally stable both ways, so the
        # round trip error is pure integrator error
        rhs = lambda t, x: np.array([x[1], -x[0]])
        x0 = np.array([2.0, 0.0])
        tol = 1e-9
        fwd = integrate(rhs, 0.0, x0, 10.0, tol=tol)
        back = integrate(rhs, 10.0, fwd.x_end, 0.0, tol=tol)
        assert np.max(np.abs(back.x_end - x0)) <= 100.0 * tol

    def test_time_reversal_expanding_direction(self):
        # van der Pol run backwards reverses the limit-cycle contraction;
        # the round trip error is tol amplified by that conditioning, not
        # an integrator defect
        x0 = np.array([2.0, 0.0])
        fwd = integrate(oscillator_rhs, 0.0, x0, 10.0, tol=1e-9)
        back = integrate(oscillator_rhs, 10.0, fwd.x_end, 0.0, tol=1e-9)
        assert np.max(np.abs(back.x_end - x0)) <= 3e-4

    def test_backward_integration(self):
        traj = integrate(linear_rhs, 0.0, np.array([1.0, 1.0]), -1.0, tol=1e-10)
        exact = np.array([math.exp(-1.0), math.exp(1.0)])
        assert np.max(np.abs(traj.x_end - exact)) < 1e-8
        assert traj.ts[0] == 0.0 and traj.t_end == -1.0


class TestSampling:
    def test_samples_are_exact_nodes(self):
        samples = np.array([0.3, 1.1, 1.9])
        traj = integrate(
            linear_rhs, 0.0, np.array([1.0, 1.0]), 2.0, tol=1e-9,
            t_samples=samples,
        )
        assert np.array_equal(traj.ts, np.array([0.0, 0.3, 1.1, 1.9, 2.0]))

    def test_empty_samples(self):
        traj = integrate(
            linear_rhs, 0.0, np.array([1.0, 1.0]), 2.0, tol=1e-9,
            t_samples=np.array([]),
        )
        assert np.array_equal(traj.ts, np.array([0.0, 2.0]))

    def test_dense_output_accuracy(self):
        samples = np.linspace(0.1, 1.9, 50)
        traj = integrate(
            linear_rhs, 0.0, np.array([1.0, 1.0]), 2.0, tol=1e-10,
            t_samples=samples,
        )
        exact = np.exp(np.outer(traj.ts, [1.0, -1.0]))
        assert np.max(np.abs(traj.xs - exact)) < 1e-8


class TestEvents:
    def test_located_crossing_matches_closed_form(self):
        # x' = x from 1 crosses the level x = e exactly at t = 1
        ev = EventSpec("hits_e", lambda t, x: x[0] - math.e, direction=+1)
        traj = integrate(
            lambda t, x: x, 0.0, np.array([1.0]), 3.0, tol=1e-10, events=[ev]
        )
        assert traj.status == "event:hits_e"
        assert len(traj.events) == 1
        assert traj.events[0].t == pytest.approx(1.0, abs=1e-9)
        assert traj.t_end == pytest.approx(1.0, abs=1e-9)

    def test_boundary_start_with_outgoing_slope(self):
        # starting on the watched level while moving outward fires at t0
        ev = EventSpec("at_one", lambda t, x: x[0] - 1.0, direction=+1)
        traj = integrate(
            lambda t, x: x, 0.0, np.array([1.0]), 3.0, tol=1e-9, events=[ev]
        )
        assert traj.status == "event:at_one"
        assert traj.events[0].t == 0.0
        assert traj.ts.size == 1

    def test_boundary_start_moving_inward_does_not_fire(self):
        ev = EventSpec("at_one", lambda t, x: x[0] - 1.0, direction=+1)
        traj = integrate(
            lambda t, x: -x, 0.0, np.array([1.0]), 3.0, tol=1e-9, events=[ev]
        )
        assert traj.status == "reached_end"

    def test_direction_filter(self):
        # sin t crosses zero falling at pi; a rising-only watcher skips it
        rhs = lambda t, x: np.array([math.cos(t)])
        rising = EventSpec("up", lambda t, x: x[0], direction=+1)
        traj = integrate(rhs, 0.5, np.array([math.sin(0.5)]), 7.0,
                         tol=1e-10, events=[rising])
        assert traj.events[0].t == pytest.approx(2.0 * math.pi, abs=1e-7)

    def test_nonterminal_event_recorded_not_truncating(self):
        ev = EventSpec("across", lambda t, x: x[0] - 2.0, terminal=False)
        traj = integrate(
            lambda t, x: x, 0.0, np.array([1.0]), 2.0, tol=1e-10, events=[ev]
        )
        assert traj.status == "reached_end"
        assert traj.t_end == 2.0
        assert len(traj.events) == 1
        assert traj.events[0].t == pytest.approx(math.log(2.0), abs=1e-9)

    def test_region_events_shape(self):
        qp = make_reference_problem()
        evs = make_region_events(qp.quad_w, qp.quad_v, 0.02, -0.02, 0.02, 0.15)
        kinds = [e.kind for e in evs]
        assert kinds == [
            "W_hits_wplus", "W_hits_wminus", "V_hits_v0", "V_hits_Vstar"
        ]
        v0_spec = evs[2]
        assert not v0_spec.terminal
        no_star = make_region_events(qp.quad_w, qp.quad_v, 0.02, -0.02,
                                     0.02, None)
        assert len(no_star) == 3


class TestBlowUp:
    def test_step_underflow_reports_location(self):
        # x' = x^2 from 1 blows up at t = 1
        with pytest.raises(StepSizeUnderflow) as info:
            integrate(lambda t, x: x**2, 0.0, np.array([1.0]), 2.0, tol=1e-9)
        assert info.value.t == pytest.approx(1.0, abs=1e-3)


class TestCsvAndCurves:
    def test_trajectory_csv_layout(self, tmp_path):
        qp = make_reference_problem()
        ev = EventSpec("across", lambda t, x: qp.quad_w(t, x) - 0.01,
                       terminal=False)
        traj = integrate(qp.rhs, 0.0, np.array([0.05, 0.1]), 2.0, tol=1e-9,
                         events=[ev], t_samples=np.linspace(0.2, 1.8, 9))
        path = tmp_path / "traj.csv"
        write_trajectory_csv(path, traj, qp.quad_v, qp.quad_w)
        lines = path.read_text().splitlines()
        assert lines[0] == "t,x1,x2,V,W"
        data = [ln for ln in lines[1:] if not ln.startswith("#")]
        assert len(data) == traj.ts.size
        first = data[0].split(",")
        assert len(first) == 5
        assert float(first[0]) == 0.0
        # V column really is <B x, x> at the node
        assert float(first[3]) == pytest.approx(
            qp.quad_v(0.0, traj.xs[0]), rel=1e-15
        )
        event_lines = [ln for ln in lines if ln.startswith("#event,")]
        assert len(event_lines) == len(traj.events)
        assert event_lines[0].startswith("#event,across,")

    def test_vw_derivatives_match_finite_differences(self):
        qp = make_reference_problem()
        dt = 1e-6
        t_mid = np.linspace(-1.0, 1.0, 21)
        samples = np.sort(np.concatenate([t_mid - dt, t_mid, t_mid + dt]))
        traj = integrate(qp.rhs, -1.0 - 1e-3, np.array([-0.04, 0.06]),
                         1.0 + 1e-3, tol=1e-12, t_samples=samples)
        curves = eval_v_w_along(qp, traj)
        ts = curves.ts
        for i, t in enumerate(ts):
            if not np.any(np.abs(t_mid - t) < 1e-12):
                continue
            lo = np.argmin(np.abs(ts - (t - dt)))
            hi = np.argmin(np.abs(ts - (t + dt)))
            fd_v = (curves.v[hi] - curves.v[lo]) / (ts[hi] - ts[lo])
            fd_w = (curves.w[hi] - curves.w[lo]) / (ts[hi] - ts[lo])
            assert curves.v_dot[i] == pytest.approx(fd_v, abs=5e-6)
            assert curves.w_dot[i] == pytest.approx(fd_w, abs=5e-6)

    def test_clock_rate_nan_below_threshold(self):
        qp = make_reference_problem()
        from vwbound.quadratic import certify

        cert = certify(qp)
        traj = integrate(qp.rhs, 0.0, np.array([-0.05, 0.05]), 2.0,
                         tol=1e-9, t_samples=np.linspace(0.2, 1.8, 17))
        curves = eval_v_w_along(qp, traj, gp=cert.growth_pair())
        # the trapped solution stays below v0 = 0.02, so no clock runs
        assert np.all(curves.v < 0.021)
        assert np.all(np.isnan(curves.f_dot))
