"""Scalar growth-pair calculus.

A *growth pair* is a threshold ``v0 > 0`` together with two scalar laws
``g`` and ``G`` of one variable ``v`` satisfying ``0 < g(v0) <= g(v)`` and
``G(v) > 0`` for ``v >= v0``.  Along any trajectory whose quadratic pair
(V, W) obeys ``|dV/dt| <= a(t) G(V)`` and ``dW/dt >= a(t) g(V)`` above the
threshold, the increasing function

    ``F(v) = integral from v0 to v of g(u)/G(u) du``

changes no faster than W: ``|dF(V)/dt| <= dW/dt``.  That single inequality
converts a budget on W into certified ceilings for V, which is what the
``bound_*`` functions below compute:

* :func:`bound_from_threshold`   — trajectory last seen at ``V = v0``,
* :func:`bound_from_interior`    — trajectory never seen at ``v0``,
* :func:`bound_mixed`            — maximum of both when the history is
  unknown,
* :func:`bound_excursion`        — over one excursion with ``V = v0`` at
  both ends,
* :func:`return_time`            — how long V can stay above ``v0``,
* :func:`global_sup_bound` / :func:`sup_bound_curve` — ceilings along the
  whole line from the W-window alone.

:func:`check_uniqueness` is the sampled separation test for two solutions:
a comparison function U squeezed between ``b(t) H(V)`` from above and an
accumulating rate ``beta(t) h(V)`` from below forces any two distinct
V-bounded solutions apart unless the normalized rate integral diverges —
so divergence (certified on the finite window) yields uniqueness.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .errors import DomainError, NoUpperBracket, WindowExhausted
from .expr import ExprAST, compile_expr, diff_t, eval_expr, parse_expr, to_text

__all__ = [
    "GrowthPair",
    "growth_integral",
    "growth_integral_inv",
    "bound_from_threshold",
    "bound_from_interior",
    "bound_mixed",
    "bound_excursion",
    "return_time",
    "global_sup_bound",
    "sup_bound_curve",
    "UniquenessReport",
    "check_uniqueness",
]

#: default ceiling multiplier for inverse bracketing
VMAX_FACTOR = 1.0e6


@dataclass
class GrowthPair:
    """Threshold ``v0`` with the laws ``g`` and ``G`` as expressions in the
    single variable ``v``.

    Construction validates on a logarithmic grid over
    ``[v0, VMAX_FACTOR * v0]`` that ``g(v0) > 0``, ``g`` never drops below
    ``g(v0)`` and ``G`` stays positive; a pair failing these cannot certify
    anything and is rejected immediately.
    """

    v0: float
    g_ast: ExprAST
    big_g_ast: ExprAST
    _g: callable = field(init=False, repr=False)
    _big_g: callable = field(init=False, repr=False)

    def __post_init__(self):
        self.v0 = float(self.v0)
        if not self.v0 > 0.0:
            raise ValueError(f"v0 must be positive, got {self.v0:.6g}")
        self._g = compile_expr(self.g_ast)
        self._big_g = compile_expr(self.big_g_ast)
        self._validate()

    @classmethod
    def from_strings(cls, v0: float, g_text: str, big_g_text: str) -> "GrowthPair":
        return cls(
            v0=v0,
            g_ast=parse_expr(g_text, 1, state_names=("v",)),
            big_g_ast=parse_expr(big_g_text, 1, state_names=("v",)),
        )

    def g(self, v: float) -> float:
        return self._g(0.0, (v,))

    def big_g(self, v: float) -> float:
        return self._big_g(0.0, (v,))

    @property
    def vmax(self) -> float:
        return VMAX_FACTOR * self.v0

    def _validate(self):
        grid = np.geomspace(self.v0, self.vmax, 256)
        g0 = self.g(self.v0)
        if not g0 > 0.0:
            raise ValueError(
                f"g(v0) = {g0:.6g} must be positive (v0 = {self.v0:.6g})"
            )
        slack = 1e-12 * (1.0 + abs(g0))
        for v in grid:
            gv = self.g(float(v))
            if gv < g0 - slack:
                raise ValueError(
                    f"g({v:.6g}) = {gv:.6g} drops below g(v0) = {g0:.6g}"
                )
            bg = self.big_g(float(v))
            if not bg > 0.0:
                raise ValueError(f"G({v:.6g}) = {bg:.6g} is not positive")

    def texts(self) -> tuple[str, str]:
        return to_text(self.g_ast), to_text(self.big_g_ast)


def _ratio(gp: GrowthPair):
    g, big_g = gp._g, gp._big_g
    return lambda u: g(0.0, (u,)) / big_g(0.0, (u,))


def growth_integral(gp: GrowthPair, v: float) -> float:
    """``F(v)``: integral of ``g/G`` from ``v0`` to ``v`` (``v >= v0``).

    Strictly increasing with ``F(v0) = 0``; absolute quadrature tolerance
    ``1e-10 * (1 + |F|)``.
    """
    v = float(v)
    if v < gp.v0:
        raise DomainError(
            f"growth integral needs v >= v0, got v = {v:.6g} < {gp.v0:.6g}"
        )
    if v == gp.v0:
        return 0.0
    value, _ = quad(_ratio(gp), gp.v0, v, epsabs=1e-12, epsrel=1e-12, limit=200)
    return float(value)


def growth_integral_inv(gp: GrowthPair, z: float, vmax: float | None = None) -> float:
    """``F^-1(z)`` for ``z >= 0``; satisfies ``|F(v) - z| <= 1e-9 (1+z)``.

    Brackets by doubling from ``v0`` and polishes with a bracketed
    root-finder.

    Raises
    ------
    NoUpperBracket
        If ``F`` never reaches ``z`` below the ceiling (default
        ``1e6 * v0``): the requested budget exceeds what the growth pair
        can certify.
    """
    z = float(z)
    if z < 0.0:
        raise DomainError(f"growth integral inverse needs z >= 0, got {z:.6g}")
    if z == 0.0:
        return gp.v0
    if vmax is None:
        vmax = gp.vmax
    ratio = _ratio(gp)

    # doubling bracket with accumulated quadrature so each rung costs one
    # local integral, not one global one
    lo, acc_lo = gp.v0, 0.0
    hi = 2.0 * gp.v0
    while True:
        if hi > vmax:
            hi = vmax
        inc, _ = quad(ratio, lo, hi, epsabs=1e-12, epsrel=1e-12, limit=200)
        acc_hi = acc_lo + inc
        if acc_hi >= z:
            break
        if hi >= vmax:
            raise NoUpperBracket(z, vmax, acc_hi)
        lo, acc_lo = hi, acc_hi
        hi *= 2.0

    def resid(v: float) -> float:
        inc_local, _ = quad(ratio, lo, v, epsabs=1e-13, epsrel=1e-13, limit=200)
        return acc_lo + inc_local - z

    if resid(lo) >= 0.0:  # z hit exactly on a rung boundary
        return lo
    root = brentq(resid, lo, hi, xtol=1e-14 * max(1.0, hi), rtol=8.9e-16)
    return float(root)


# ---------------------------------------------------------------------------
# ceilings from the W budget


def bound_from_threshold(gp: GrowthPair, w_sup: float, w_entry: float) -> float:
    """Ceiling for V after the trajectory was last at ``V = v0``.

    ``w_sup`` is the largest W available afterwards; ``w_entry`` the W
    value when V last equalled ``v0``.
    """
    return growth_integral_inv(gp, max(0.0, w_sup - w_entry))


def bound_from_interior(
    gp: GrowthPair, v_start: float, w_sup: float, w_start: float
) -> float:
    """Ceiling for V from an interior start ``(v_start, w_start)`` with
    ``v_start >= v0``, valid while V has not returned to ``v0``."""
    z = growth_integral(gp, v_start) + (w_sup - w_start)
    return growth_integral_inv(gp, max(0.0, z))


def bound_mixed(
    gp: GrowthPair,
    v_start: float,
    w_sup: float,
    w_start: float,
    w_entry: float,
) -> float:
    """Ceiling valid regardless of whether V revisited ``v0``: the larger
    of the interior and threshold ceilings.

    A negative F-argument means the corresponding branch is impossible
    given the budget; it is clamped to zero (yielding the trivial ceiling
    ``v0``).  Both branches negative means the data are inconsistent.
    """
    z_interior = growth_integral(gp, v_start) + (w_sup - w_start)
    z_threshold = w_sup - w_entry
    if z_interior < 0.0 and z_threshold < 0.0:
        raise DomainError(
            "both ceiling arguments are negative "
            f"({z_interior:.6g}, {z_threshold:.6g}); W budget inconsistent"
        )
    b_interior = growth_integral_inv(gp, max(0.0, z_interior))
    b_threshold = growth_integral_inv(gp, max(0.0, z_threshold))
    return max(b_interior, b_threshold)


def bound_excursion(gp: GrowthPair, w_exit: float, w_entry: float) -> float:
    """Ceiling for V over one excursion above ``v0`` (``V = v0`` at both
    ends); ``w_entry`` / ``w_exit`` are the W values at the endpoints."""
    return growth_integral_inv(gp, max(0.0, 0.5 * (w_exit - w_entry)))


def return_time(
    ts: np.ndarray,
    alpha: np.ndarray,
    t0: float,
    w_sup: float,
    w_inf: float,
    g_v0: float,
) -> float:
    """First time ``theta >= t0`` with ``integral of alpha >= (w_sup -
    w_inf)/g(v0)``; V must have returned to ``v0`` by then.

    ``alpha`` is the rate floor sampled on the grid ``ts``; the cumulative
    integral uses the trapezoid rule with linear interpolation inside the
    deciding segment.

    Raises
    ------
    WindowExhausted
        If the accumulated integral never reaches the requirement inside
        the sampled window.
    """
    ts = np.asarray(ts, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if ts.ndim != 1 or ts.shape != alpha.shape or ts.size < 2:
        raise ValueError("ts and alpha must be equal-length 1-D arrays")
    if not g_v0 > 0.0:
        raise ValueError(f"g(v0) must be positive, got {g_v0:.6g}")
    if t0 < ts[0] or t0 > ts[-1]:
        raise ValueError(f"t0 = {t0:.6g} outside the sampled window")
    target = (w_sup - w_inf) / g_v0
    if target <= 0.0:
        return float(t0)

    # restrict to [t0, end], inserting t0 as a grid point
    k = int(np.searchsorted(ts, t0, side="right"))
    a0 = float(np.interp(t0, ts, alpha))
    sub_t = np.concatenate(([t0], ts[k:]))
    sub_a = np.concatenate(([a0], alpha[k:]))
    seg = 0.5 * (sub_a[1:] + sub_a[:-1]) * np.diff(sub_t)
    cum = np.concatenate(([0.0], np.cumsum(seg)))
    idx = int(np.searchsorted(cum, target, side="left"))
    if idx >= cum.size:
        raise WindowExhausted(
            f"rate integral reaches only {cum[-1]:.6g} by t = {ts[-1]:.6g}; "
            f"needs {target:.6g}"
        )
    if idx == 0:
        return float(t0)
    # linear interpolation of the cumulative integral inside the segment
    need = target - cum[idx - 1]
    width = sub_t[idx] - sub_t[idx - 1]
    frac = need / seg[idx - 1] if seg[idx - 1] > 0.0 else 1.0
    return float(sub_t[idx - 1] + min(1.0, frac) * width)


def global_sup_bound(gp: GrowthPair, w_plus: float, w_minus: float) -> float:
    """Constant ceiling for V along any solution confined to
    ``w_minus <= W <= w_plus``: ``F^-1((w_plus - w_minus)/2)``."""
    return bound_excursion(gp, w_plus, w_minus)


def sup_bound_curve(
    gp: GrowthPair,
    ts: np.ndarray,
    w_upper: np.ndarray,
    w_lower: np.ndarray,
) -> np.ndarray:
    """Sharper time-dependent ceiling from sampled envelope curves.

    ``w_upper(t)`` bounds W from above where trajectories can exit and
    ``w_lower(t)`` from below where they enter; the ceiling at ``t`` uses
    the least favourable exit after ``t`` and entry before ``t``:
    ``F^-1( [sup_{s>=t} w_upper(s) - inf_{s<=t} w_lower(s)] / 2 )``.
    """
    ts = np.asarray(ts, dtype=float)
    w_upper = np.asarray(w_upper, dtype=float)
    w_lower = np.asarray(w_lower, dtype=float)
    sup_right = np.maximum.accumulate(w_upper[::-1])[::-1]
    inf_left = np.minimum.accumulate(w_lower)
    return np.array(
        [
            growth_integral_inv(gp, max(0.0, 0.5 * (hi - lo)))
            for hi, lo in zip(sup_right, inf_left)
        ]
    )


# ---------------------------------------------------------------------------
# sampled uniqueness test


@dataclass
class UniquenessReport:
    """Outcome of the sampled two-solution separation test."""

    status: str  # "pass" | "fail" | "vacuous"
    n_samples: int
    min_bound_margin: float
    min_rate_margin: float
    bound_witness: tuple | None
    rate_witness: tuple | None
    h_nondecreasing: bool
    big_h_increasing: bool
    divergence_left: float
    divergence_right: float
    divergence_threshold: float
    diverges: bool
    notes: list = field(default_factory=list)


def _increasing_inverse(fn, target: float, hi0: float) -> float:
    """Inverse of a continuous increasing ``fn`` with ``fn(0) <= target``."""
    hi = max(hi0, 1e-30)
    for _ in range(200):
        if fn(hi) >= target:
            break
        hi *= 2.0
    else:
        raise NoUpperBracket(target, hi, fn(hi))
    return float(brentq(lambda v: fn(v) - target, 0.0, hi, maxiter=200))


def check_uniqueness(
    u_ast: ExprAST,
    big_h,
    small_h,
    b_fn,
    beta_fn,
    v_fn,
    f_fn,
    samples,
    window: tuple[float, float],
    n_states: int,
    probe_u: float = 1.0,
    threshold: float = 10.0,
    n_grid: int = 2001,
) -> UniquenessReport:
    """Sampled check of the two-solution separation hypotheses.

    Parameters
    ----------
    u_ast : ExprAST
        Comparison function ``U(t, z)`` of time and the difference state
        ``z = x - y`` (state variables of the expression are the
        components of z).  Its time derivative is exact (symbolic); the
        z-gradient uses central differences, adequate for a sampled check.
    big_h, small_h, b_fn, beta_fn : callables
        ``H`` (strictly increasing), ``h`` (nondecreasing), weight ``b(t) >
        0`` and rate ``beta(t)``.
    v_fn : callable
        Estimating value ``V(t, z)`` of the difference.
    f_fn : callable
        Right-hand side ``f(t, x)`` of the system.
    samples : iterable of (t, x, y)
        Probe pairs; an empty iterable yields a vacuous report.
    window : (t_minus, t_plus)
        Divergence of the normalized rate integral is certified on this
        window only.

    The hypotheses verified per sample: ``|U(t, z)| <= b(t) H(V(t, z))``
    and ``dU/dt along the pair >= beta(t) h(V(t, z))``.  Divergence
    evidence: ``D(T) = |integral_0^T beta(s) h(H^-1(probe_u / b(s))) ds| /
    b(T)`` at both window ends, compared against ``threshold``.
    """
    notes = []
    u_dt_ast = diff_t(u_ast)
    u_c = compile_expr(u_ast)
    u_dt_c = compile_expr(u_dt_ast)

    # monotonicity probes
    probe_hi = 10.0
    grid = np.linspace(0.0, probe_hi, 101)
    big_vals = np.array([big_h(float(v)) for v in grid])
    small_vals = np.array([small_h(float(v)) for v in grid])
    big_h_increasing = bool(np.all(np.diff(big_vals) > 0.0))
    h_nondecreasing = bool(np.all(np.diff(small_vals) >= -1e-14))
    if not big_h_increasing:
        notes.append("H fails the strict-increase probe")
    if not h_nondecreasing:
        notes.append("h fails the nondecrease probe")

    min_bound = np.inf
    min_rate = np.inf
    bound_witness = None
    rate_witness = None
    count = 0
    for t, x, y in samples:
        t = float(t)
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        z = x - y
        vz = float(v_fn(t, z))
        bound_margin = b_fn(t) * big_h(vz) - abs(u_c(t, z))
        if bound_margin < min_bound:
            min_bound, bound_witness = bound_margin, (t, x.copy(), y.copy())
        # dU/dt along the pair: exact in t, central differences in z
        dz = f_fn(t, x) - f_fn(t, y)
        udot = u_dt_c(t, z)
        for i in range(n_states):
            step = 1e-6 * (1.0 + abs(z[i]))
            zp = z.copy()
            zm = z.copy()
            zp[i] += step
            zm[i] -= step
            udot += (u_c(t, zp) - u_c(t, zm)) / (2.0 * step) * dz[i]
        rate_margin = udot - beta_fn(t) * small_h(vz)
        if rate_margin < min_rate:
            min_rate, rate_witness = rate_margin, (t, x.copy(), y.copy())
        count += 1

    # normalized divergence evidence at both window ends
    def divergence_at(t_end: float) -> float:
        if t_end == 0.0:
            return 0.0
        s_grid = np.linspace(0.0, t_end, n_grid)
        vals = np.empty_like(s_grid)
        for i, s in enumerate(s_grid):
            bs = b_fn(float(s))
            level = _increasing_inverse(big_h, probe_u / bs, 1.0)
            vals[i] = beta_fn(float(s)) * small_h(level)
        integral = np.trapezoid(vals, s_grid)
        return abs(float(integral)) / b_fn(float(t_end))

    div_left = divergence_at(float(window[0]))
    div_right = divergence_at(float(window[1]))
    diverges = min(div_left, div_right) >= threshold

    if count == 0:
        status = "vacuous"
        notes.append("no samples supplied")
    elif not (big_h_increasing and h_nondecreasing):
        status = "fail"
    elif min_bound < 0.0 or min_rate < 0.0:
        status = "fail"
    else:
        status = "pass"

    return UniquenessReport(
        status=status,
        n_samples=count,
        min_bound_margin=float(min_bound) if count else float("nan"),
        min_rate_margin=float(min_rate) if count else float("nan"),
        bound_witness=bound_witness,
        rate_witness=rate_witness,
        h_nondecreasing=h_nondecreasing,
        big_h_increasing=big_h_increasing,
        divergence_left=div_left,
        divergence_right=div_right,
        divergence_threshold=threshold,
        diverges=diverges,
        notes=notes,
    )
