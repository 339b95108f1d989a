"""Adaptive explicit integrator with event location.

An embedded 5(4) Runge-Kutta pair (Dormand-Prince coefficients, first-same-
as-last) propagates the fifth-order solution under PI step-size control,
keeping the local error estimate of every accepted step below
``tol * (1 + |x|)`` componentwise.  The pair's free fourth-order dense
output interpolates inside accepted steps; events are located by sign
-change bracketing on the dense output and polished to ``1e-9`` in time.

Blow-up shows up as step-size underflow and is reported as
:class:`~vwbound.errors.StepSizeUnderflow` with the last reachable point,
which the shooting layer treats as an exit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import StepSizeUnderflow
from .expr import compile_quadform, compile_rhs

__all__ = [
    "EventSpec",
    "EventRecord",
    "Trajectory",
    "integrate",
    "make_region_events",
    "write_trajectory_csv",
    "VWCurves",
    "eval_v_w_along",
]

TOL_MIN = 1e-12
TOL_MAX = 1e-3

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
_A = (
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
)
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
# fifth-minus-fourth error weights (7 stages, first-same-as-last)
_E = np.array(
    [71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40]
)
# dense-output polynomial weights (order 4 continuous extension)
_P = np.array(
    [
        [
            1.0,
            -8048581381 / 2820520608,
            8663915743 / 2820520608,
            -12715105075 / 11282082432,
        ],
        [0.0, 0.0, 0.0, 0.0],
        [
            0.0,
            131558114200 / 32700410799,
            -68118460800 / 10900136933,
            87487479700 / 32700410799,
        ],
        [
            0.0,
            -1754552775 / 470086768,
            14199869525 / 1410260304,
            -10690763975 / 1880347072,
        ],
        [
            0.0,
            127303824393 / 49829197408,
            -318862633887 / 49829197408,
            701980252875 / 199316789632,
        ],
        [
            0.0,
            -282668133 / 205662961,
            2019193451 / 616988883,
            -1453857185 / 822651844,
        ],
        [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
    ]
)

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0
# PI controller exponents (error order 5)
_ALPHA = 0.7 / 5.0
_BETA = 0.4 / 5.0


@dataclass
class EventSpec:
    """A scalar level function whose zero crossings are watched.

    ``direction``: +1 fires on rising crossings, -1 on falling, 0 on any.
    ``terminal``: a firing event truncates the trajectory there.
    ``tol``: absolute tolerance used for the starts-on-the-boundary check.
    """

    kind: str
    level: callable
    direction: int = 0
    terminal: bool = True
    tol: float = 1e-9


@dataclass
class EventRecord:
    kind: str
    t: float
    x: np.ndarray


@dataclass
class Trajectory:
    """Recorded solution path.

    ``ts``/``xs`` hold the nodes (accepted steps, or the requested sample
    times when ``t_samples`` was passed to :func:`integrate`); ``events``
    the located crossings in time order; ``status`` is ``"reached_end"``
    or ``"event:<kind>"`` when a terminal event truncated the run.
    """

    ts: np.ndarray
    xs: np.ndarray
    events: list = field(default_factory=list)
    status: str = "reached_end"
    n_accepted: int = 0
    n_rejected: int = 0
    n_rhs: int = 0

    @property
    def t_end(self) -> float:
        return float(self.ts[-1])

    @property
    def x_end(self) -> np.ndarray:
        return self.xs[-1]


def _initial_step(rhs, t0, x0, f0, direction, tol, t_span):
    scale = tol * (1.0 + np.abs(x0))
    d0 = float(np.sqrt(np.mean((x0 / scale) ** 2)))
    d1 = float(np.sqrt(np.mean((f0 / scale) ** 2)))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    x1 = x0 + h0 * direction * f0
    f1 = rhs(t0 + h0 * direction, x1)
    d2 = float(np.sqrt(np.mean(((f1 - f0) / scale) ** 2))) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100.0 * h0, h1, t_span)


def integrate(
    rhs,
    t0: float,
    x0,
    t_end: float,
    tol: float = 1e-9,
    events: list[EventSpec] | None = None,
    t_samples=None,
    max_steps: int = 5_000_000,
) -> Trajectory:
    """Integrate ``dx/dt = rhs(t, x)`` from ``t0`` to ``t_end``.

    Parameters
    ----------
    rhs : callable
        Right-hand side; typically built by
        :func:`vwbound.expr.compile_rhs`.
    tol : float
        Local error tolerance in ``[1e-12, 1e-3]``; each accepted step
        keeps the embedded error estimate below ``tol * (1 + |x|)``.
    events : list of EventSpec
        Watched level functions.  Terminal events truncate; all fired
        events are recorded with their located time and state.
    t_samples : array, optional
        When given, the recorded nodes are exactly these times (dense
        -output evaluated, restricted to the covered span plus the two
        endpoints) instead of the accepted steps.
    """
    if not TOL_MIN <= tol <= TOL_MAX:
        raise ValueError(
            f"tol must lie in [{TOL_MIN:g}, {TOL_MAX:g}], got {tol:g}"
        )
    t0 = float(t0)
    t_end = float(t_end)
    x0 = np.asarray(x0, dtype=float).copy()
    n = x0.size
    events = list(events) if events else []
    direction = 1.0 if t_end >= t0 else -1.0
    span = abs(t_end - t0)

    record_steps = t_samples is None
    if t_samples is not None:
        t_samples = np.asarray(t_samples, dtype=float)
        t_samples = t_samples[
            (t_samples - t0) * direction > 1e-14 * max(1.0, abs(t0))
        ]
        t_samples = t_samples[
            (t_end - t_samples) * direction > 1e-14 * max(1.0, abs(t_end))
        ]
        t_samples = np.sort(t_samples)[:: 1 if direction > 0 else -1]
    sample_idx = 0

    ts = [t0]
    xs = [x0.copy()]
    records: list[EventRecord] = []
    status = "reached_end"

    # a start sitting on a watched level with matching outgoing slope is an
    # immediate event (boundary starts of the shooting stage rely on this)
    f0 = rhs(t0, x0)
    n_rhs = 2  # f0 plus the probe in _initial_step
    for ev in events:
        g0 = float(ev.level(t0, x0))
        if abs(g0) <= ev.tol:
            dt_probe = 1e-8 * max(1.0, abs(t0)) * direction
            g_probe = float(ev.level(t0 + dt_probe, x0 + dt_probe * f0))
            slope = (g_probe - g0) / dt_probe
            fires = (
                ev.direction == 0
                or (ev.direction > 0 and slope > 0.0)
                or (ev.direction < 0 and slope < 0.0)
            )
            if fires:
                records.append(EventRecord(ev.kind, t0, x0.copy()))
                if ev.terminal:
                    return Trajectory(
                        ts=np.array(ts),
                        xs=np.array(xs),
                        events=records,
                        status=f"event:{ev.kind}",
                        n_accepted=0,
                        n_rejected=0,
                        n_rhs=n_rhs,
                    )

    if span == 0.0:
        return Trajectory(
            ts=np.array(ts), xs=np.array(xs), events=records, n_rhs=n_rhs
        )

    h = _initial_step(rhs, t0, x0, f0, direction, tol, span)
    t = t0
    x = x0
    k = np.empty((7, n))
    k[0] = f0
    g_prev = [float(ev.level(t, x)) for ev in events]
    err_prev = 1.0  # PI memory
    n_accepted = 0
    n_rejected = 0
    just_rejected = False

    while (t_end - t) * direction > 1e-14 * max(1.0, abs(t)):
        if n_accepted + n_rejected >= max_steps:
            raise RuntimeError(f"step budget {max_steps} exhausted at t={t:.9g}")
        h = min(h, abs(t_end - t))
        h_min = 1e-14 * max(1.0, abs(t))
        if h < h_min:
            raise StepSizeUnderflow(t, x.copy())
        h_signed = h * direction

        # stages
        ok = True
        for s in range(1, 6):
            xs_stage = x + h_signed * (k[:s].T @ _A[s])
            k[s] = rhs(t + _C[s] * h_signed, xs_stage)
        x_new = x + h_signed * (k[:6].T @ _B5)
        t_new = t + h_signed
        k[6] = rhs(t_new, x_new)
        n_rhs += 6
        err_vec = h_signed * (k.T @ _E)
        if not (np.all(np.isfinite(x_new)) and np.all(np.isfinite(err_vec))):
            ok = False
            err_norm = np.inf
        else:
            scale = tol * (1.0 + np.maximum(np.abs(x), np.abs(x_new)))
            err_norm = float(np.sqrt(np.mean((err_vec / scale) ** 2)))
            ok = err_norm <= 1.0

        if not ok:
            n_rejected += 1
            just_rejected = True
            if np.isfinite(err_norm):
                factor = max(_MIN_FACTOR, _SAFETY * err_norm ** (-0.2))
                h *= min(1.0, factor)
            else:
                h *= 0.5
            continue

        # accepted: locate events inside [t, t_new] on the dense output
        q = None
        step_records = []
        truncate_at = None
        for i, ev in enumerate(events):
            g_new = float(ev.level(t_new, x_new))
            g_old = g_prev[i]
            crossed = (
                (ev.direction >= 0 and g_old < 0.0 <= g_new)
                or (ev.direction <= 0 and g_old > 0.0 >= g_new)
            )
            if crossed:
                if q is None:
                    q = k.T @ _P  # (n, 4)

                def dense(tau, _q=q, _x=x, _h=h_signed, _t=t):
                    theta = (tau - _t) / _h
                    powers = np.array(
                        [theta, theta**2, theta**3, theta**4]
                    )
                    return _x + _h * (_q @ powers)

                def levelf(tau, _ev=ev, _dense=dense):
                    return float(_ev.level(tau, _dense(tau)))

                lo, hi = (t, t_new) if direction > 0 else (t_new, t)
                if levelf(lo) == 0.0:
                    t_ev = lo
                elif levelf(hi) == 0.0:
                    t_ev = hi
                else:
                    t_ev = float(
                        brentq(
                            levelf,
                            lo,
                            hi,
                            xtol=1e-12 * max(1.0, abs(t_new)),
                            rtol=8.9e-16,
                        )
                    )
                x_ev = dense(t_ev)
                step_records.append((t_ev, ev, x_ev))
            g_prev[i] = g_new

        if step_records:
            step_records.sort(key=lambda rec: rec[0] * direction)
            for t_ev, ev, x_ev in step_records:
                if truncate_at is not None and (
                    (t_ev - truncate_at[0]) * direction > 0
                ):
                    break
                records.append(EventRecord(ev.kind, t_ev, x_ev))
                if ev.terminal and truncate_at is None:
                    truncate_at = (t_ev, x_ev, ev.kind)

        # emit sample nodes up to the end of this step (or the truncation)
        step_end_t = truncate_at[0] if truncate_at else t_new
        if not record_steps and t_samples is not None:
            while sample_idx < t_samples.size and (
                (t_samples[sample_idx] - step_end_t) * direction
                <= 1e-14 * max(1.0, abs(step_end_t))
            ):
                tau = float(t_samples[sample_idx])
                if q is None:
                    q = k.T @ _P
                theta = (tau - t) / h_signed
                powers = np.array([theta, theta**2, theta**3, theta**4])
                ts.append(tau)
                xs.append(x + h_signed * (q @ powers))
                sample_idx += 1

        if truncate_at is not None:
            t_ev, x_ev, kind = truncate_at
            ts.append(t_ev)
            xs.append(np.asarray(x_ev, dtype=float))
            status = f"event:{kind}"
            n_accepted += 1
            break

        t = t_new
        x = x_new
        k[0] = k[6]  # first-same-as-last
        n_accepted += 1
        if record_steps:
            ts.append(t)
            xs.append(x.copy())

        # PI step-size update
        err_clamped = max(err_norm, 1e-10)
        factor = _SAFETY * err_clamped ** (-_ALPHA) * err_prev ** (_BETA)
        factor = min(_MAX_FACTOR, max(_MIN_FACTOR, factor))
        if just_rejected:
            factor = min(1.0, factor)
            just_rejected = False
        h *= factor
        err_prev = err_clamped

    else:
        # reached t_end without terminal event
        if not record_steps:
            ts.append(t_end)
            xs.append(x.copy())

    return Trajectory(
        ts=np.array(ts),
        xs=np.array(xs),
        events=records,
        status=status,
        n_accepted=n_accepted,
        n_rejected=n_rejected,
        n_rhs=n_rhs,
    )


# ---------------------------------------------------------------------------
# problem-specific helpers


def make_region_events(
    quadform_w,
    quadform_v,
    w_plus: float,
    w_minus: float,
    v0: float,
    v_star: float | None,
    stop_on_exit: bool = True,
) -> list[EventSpec]:
    """Standard watched levels for a region run.

    ``W = w_plus`` (rising) and ``W = w_minus`` (falling) are the region
    exits; ``V = v0`` is recorded for excursion accounting; ``V = V*``
    (rising) guards the certified ceiling.
    """
    tol = 1e-9 * (1.0 + abs(w_plus) + abs(w_minus))
    tol_v = 1e-9 * (1.0 + abs(v0) + (abs(v_star) if v_star else 0.0))
    evs = [
        EventSpec(
            "W_hits_wplus",
            lambda t, x: quadform_w(t, x) - w_plus,
            direction=+1,
            terminal=stop_on_exit,
            tol=tol,
        ),
        EventSpec(
            "W_hits_wminus",
            lambda t, x: quadform_w(t, x) - w_minus,
            direction=-1,
            terminal=stop_on_exit,
            tol=tol,
        ),
        EventSpec(
            "V_hits_v0",
            lambda t, x: quadform_v(t, x) - v0,
            direction=0,
            terminal=False,
            tol=tol_v,
        ),
    ]
    if v_star is not None:
        evs.append(
            EventSpec(
                "V_hits_Vstar",
                lambda t, x: quadform_v(t, x) - v_star,
                direction=+1,
                terminal=stop_on_exit,
                tol=tol_v,
            )
        )
    return evs


def write_trajectory_csv(path, traj: Trajectory, quadform_v, quadform_w):
    """Plot-ready CSV: header ``t,x1,...,xn,V,W``, one row per node,
    events appended as ``#event,kind,t,x1,...,xn`` comment lines."""
    n = traj.xs.shape[1]
    with open(path, "w", encoding="utf-8") as fh:
        cols = ",".join(f"x{i + 1}" for i in range(n))
        fh.write(f"t,{cols},V,W\n")
        for t, x in zip(traj.ts, traj.xs):
            v = quadform_v(float(t), x)
            w = quadform_w(float(t), x)
            row = ",".join(f"{val:.17g}" for val in x)
            fh.write(f"{t:.17g},{row},{v:.17g},{w:.17g}\n")
        for ev in traj.events:
            row = ",".join(f"{val:.17g}" for val in ev.x)
            fh.write(f"#event,{ev.kind},{ev.t:.17g},{row}\n")


@dataclass
class VWCurves:
    """V, W and their exact time derivatives along trajectory nodes, plus
    the growth-clock rate ``dF(V)/dt`` where V exceeds the threshold."""

    ts: np.ndarray
    v: np.ndarray
    w: np.ndarray
    v_dot: np.ndarray
    w_dot: np.ndarray
    f_dot: np.ndarray | None = None  # nan below the threshold


def eval_v_w_along(qp, traj: Trajectory, gp=None) -> VWCurves:
    """Evaluate the quadratic pair and its derivatives along ``traj``.

    Derivatives are analytic — ``dV/dt = <B' x, x> + 2 <B x, f>`` and
    likewise for W along the vector field — so the curves are exact at the
    nodes regardless of node spacing.  With a growth pair supplied, the
    growth-clock rate ``dF(V)/dt = g(V)/G(V) * dV/dt`` is attached
    (``nan`` where ``V < v0``, where the clock is not running).
    """
    m = traj.ts.size
    v = np.empty(m)
    w = np.empty(m)
    v_dot = np.empty(m)
    w_dot = np.empty(m)
    b_dot = qp.b.diff_t()
    c_dot = qp.c.diff_t()
    rhs = qp.rhs
    for i in range(m):
        t = float(traj.ts[i])
        x = traj.xs[i]
        bmat = qp.b.eval(t, x)
        cmat = qp.c.eval(t, x)
        f = rhs(t, x)
        v[i] = float(x @ bmat @ x)
        w[i] = float(x @ cmat @ x)
        v_dot[i] = float(x @ b_dot.eval(t, x) @ x + 2.0 * (bmat @ x) @ f)
        w_dot[i] = float(x @ c_dot.eval(t, x) @ x + 2.0 * (cmat @ x) @ f)
    f_dot = None
    if gp is not None:
        f_dot = np.full(m, np.nan)
        above = v >= gp.v0
        for i in np.nonzero(above)[0]:
            f_dot[i] = gp.g(v[i]) / gp.big_g(v[i]) * v_dot[i]
    return VWCurves(ts=traj.ts.copy(), v=v, w=w, v_dot=v_dot, w_dot=w_dot, f_dot=f_dot)
