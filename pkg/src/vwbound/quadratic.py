"""Certification pipeline for quadratic estimating/guiding pairs.

The system is ``dx/dt = A(t,x) x + f0(t)`` watched through the pair
``V(t,x) = <B(t)x, x>`` (estimating, B symmetric positive definite) and
``W(t,x) = <C(t)x, x>`` (guiding, C symmetric nondegenerate).  This module
computes the spectral rates that control dV/dt and dW/dt, fits the scalar
growth pair ``g(v) = v - c2 sqrt(v)``, ``G(v) = c3 v^sigma (v + c1 sqrt(v))``
from sampled data, checks the certification conditions (a)-(g) plus the two
asymptotic conditions (A) and (B) on the configured window, and assembles
everything into a :class:`Certificate` that the shooting and CLI layers
consume.

Asymptotic quantities (liminf/limsup as t -> -infinity, divergent
integrals) are necessarily evaluated on the finite window; every such
check is flagged ``window_certified`` instead of pretending to be a proof
at infinity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .errors import (
    ConditionGFailed,
    DegeneratePencil,
    DomainError,
    InfeasibleConditionE,
    NotPositiveDefinite,
    NotRetractable,
)
from .expr import MatrixFunction, VectorFunction, compile_quadform, compile_rhs
from .growth import (
    GrowthPair,
    bound_excursion,
    growth_integral,
    growth_integral_inv,
    sup_bound_curve,
)
from .pencil import (
    SymmetricPencil,
    cholesky_spd,
    lambda_extremes,
    lambda_minus_plus,
    signed_parts,
    solve_pencil,
    spectral_projectors,
)

__all__ = [
    "QuadraticProblem",
    "phi",
    "psi",
    "v_rate_extreme",
    "w_rate_min",
    "RateCheckReport",
    "rate_inequalities_check",
    "sample_region_states",
    "FittedConstants",
    "fit_constants",
    "closed_form_ceiling",
    "alpha_curve",
    "TailLimits",
    "limits_from_tail",
    "ConditionResult",
    "Certificate",
    "certify",
    "check_v_star",
    "retract_exit",
    "UniquenessQuadraticReport",
    "uniqueness_quadratic",
    "SIGMA_GRID",
]

SIGMA_GRID = (0.25, 0.5, 0.75, 1.0)
SAFETY_INFLATION = 1.01
VSTAR_HEADROOM = 1.05


@dataclass
class QuadraticProblem:
    """System plus quadratic pair plus the certification window/region.

    ``v0`` and ``v_star`` may be ``None``; :func:`certify` then picks them
    (half the tightest disk allowed by condition (d) for ``v0``; 5% above
    the largest required ceiling for ``v_star``).
    """

    a: MatrixFunction
    f0: VectorFunction
    b: MatrixFunction
    c: MatrixFunction
    window: tuple[float, float]
    v0: float | None
    w_minus: float
    w_plus: float
    v_star: float | None = None
    n_grid: int = 201
    n_state_samples: int = 48
    seed: int = 0

    def __post_init__(self):
        n = self.a.rows
        if self.a.cols != n:
            raise ValueError("A must be square")
        if self.b.rows != n or self.c.rows != n or self.f0.size != n:
            raise ValueError("A, B, C, f0 dimensions disagree")
        if not (self.b.symmetric and self.c.symmetric):
            raise ValueError("B and C must be declared symmetric")
        if self.b.depends_on_state or self.c.depends_on_state:
            raise ValueError("B and C must not depend on the state")
        t_lo, t_hi = self.window
        if not t_lo < 0.0 < t_hi:
            raise ValueError("window must contain 0 strictly inside")
        if not self.w_minus < 0.0 < self.w_plus:
            raise ValueError("need w_minus < 0 < w_plus")
        if self.v0 is not None and self.v0 <= 0.0:
            raise ValueError("v0 must be positive")
        if self.n_grid < 9:
            raise ValueError("n_grid too small to resolve the window")
        self.n = n
        self.rhs = compile_rhs(self.a, self.f0)
        self.quad_v = compile_quadform(self.b)
        self.quad_w = compile_quadform(self.c)
        self.b_dot = self.b.diff_t()
        self.c_dot = self.c.diff_t()

    # -- pointwise spectral quantities ------------------------------------

    def _zeros(self):
        return np.zeros(self.n)


def phi(qp: QuadraticProblem, t: float) -> float:
    """Forcing size in the B metric: ``sqrt(<B f0, f0>)``."""
    f = qp.f0.eval(t, qp._zeros())
    bmat = qp.b.eval(t, qp._zeros())
    return math.sqrt(max(0.0, float(f @ bmat @ f)))


def psi(qp: QuadraticProblem, t: float) -> float:
    """Forcing size seen by W: ``sqrt(<B^-1 C f0, C f0>)``.

    Computed by triangular solves against the Cholesky factor of B; no
    explicit inverse is formed.
    """
    z = qp._zeros()
    f = qp.f0.eval(t, z)
    u = qp.c.eval(t, z) @ f
    low = cholesky_spd(qp.b.eval(t, z))
    y = solve_triangular(low, u, lower=True, check_finite=False)
    return float(np.sqrt(y @ y))


def _v_rate_matrix(qp: QuadraticProblem, t: float, x) -> np.ndarray:
    amat = qp.a.eval(t, x)
    bmat = qp.b.eval(t, x)
    m = bmat @ amat
    return m + m.T + qp.b_dot.eval(t, x)


def _w_rate_matrix(qp: QuadraticProblem, t: float, x) -> np.ndarray:
    amat = qp.a.eval(t, x)
    cmat = qp.c.eval(t, x)
    m = cmat @ amat
    return m + m.T + qp.c_dot.eval(t, x)


def v_rate_extreme(qp: QuadraticProblem, t: float, x) -> float:
    """Characteristic value of ``(BA + A^T B + B') - lambda B`` that is
    maximal in absolute value (ties resolve to the positive one).

    Its absolute value bounds ``|dV/dt|`` relative to V; the sign is kept
    because the value is a genuine characteristic value.
    """
    x = np.asarray(x, dtype=float)
    pencil = SymmetricPencil(_v_rate_matrix(qp, t, x), qp.b.eval(t, x))
    lo, hi = lambda_extremes(pencil)
    return hi if abs(hi) >= abs(lo) else lo


def w_rate_min(qp: QuadraticProblem, t: float, x) -> float:
    """Smallest characteristic value of ``(CA + A^T C + C') - lambda B``;
    it bounds ``dW/dt`` from below relative to V."""
    x = np.asarray(x, dtype=float)
    pencil = SymmetricPencil(_w_rate_matrix(qp, t, x), qp.b.eval(t, x))
    return lambda_extremes(pencil)[0]


# ---------------------------------------------------------------------------
# region sampling and the two-sided rate self-test


def sample_region_states(
    qp: QuadraticProblem,
    t: float,
    rng: np.random.Generator,
    n: int,
    v_lo: float,
    v_hi: float,
    max_tries: int = 64,
) -> list[np.ndarray]:
    """Draw up to ``n`` states with ``V(t,x)`` uniform in [v_lo, v_hi] and
    ``W(t,x)`` inside [w_minus, w_plus].

    V is hit exactly by scaling B-unit directions; W is then enforced by
    rejection, so the draw is uniform over directions, not over the region
    volume — adequate for worst-case margin estimation.
    """
    z = qp._zeros()
    low = cholesky_spd(qp.b.eval(t, z))
    out: list[np.ndarray] = []
    for _ in range(max_tries):
        if len(out) >= n:
            break
        m = n - len(out)
        u = rng.standard_normal((m, qp.n))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        vs = rng.uniform(v_lo, v_hi, size=m)
        # x = sqrt(v) L^-T u  has  <Bx, x> = v exactly
        xs = solve_triangular(low.T, u.T, lower=False, check_finite=False).T
        xs *= np.sqrt(vs)[:, None]
        for x in xs:
            w = qp.quad_w(t, x)
            if qp.w_minus <= w <= qp.w_plus:
                out.append(x)
                if len(out) >= n:
                    break
    return out


@dataclass
class RateCheckReport:
    """Two-sided self-test of the spectral rate bounds.

    ``worst_v_margin`` is the minimum over samples of
    ``|Lam_V| V + 2 phi sqrt(V) - |dV/dt|`` (should be >= -1e-9-ish), and
    analogously ``worst_w_margin`` for
    ``dW/dt - (lam_W V - 2 psi sqrt(V))``.
    """

    n_samples: int
    worst_v_margin: float
    worst_w_margin: float
    witness_v: tuple | None = None
    witness_w: tuple | None = None

    @property
    def passed(self) -> bool:
        slack = 1e-9
        return self.worst_v_margin >= -slack and self.worst_w_margin >= -slack


def rate_inequalities_check(
    qp: QuadraticProblem,
    v_hi: float,
    n_samples: int = 2000,
    seed: int = 0,
) -> RateCheckReport:
    """Sample the region and compare direct dV/dt, dW/dt along the vector
    field against their spectral bounds — both sides computed by
    independent routes (quadratic forms vs. pencil extremes)."""
    if qp.v0 is None:
        raise ValueError("rate check needs a concrete v0")
    rng = np.random.default_rng(seed)
    t_lo, t_hi = qp.window
    worst_v = math.inf
    worst_w = math.inf
    wit_v = wit_w = None
    count = 0
    while count < n_samples:
        t = float(rng.uniform(t_lo, t_hi))
        states = sample_region_states(
            qp, t, rng, min(16, n_samples - count), qp.v0, v_hi
        )
        if not states:
            continue
        ph = phi(qp, t)
        ps = psi(qp, t)
        z = qp._zeros()
        bmat = qp.b.eval(t, z)
        cmat = qp.c.eval(t, z)
        bdot = qp.b_dot.eval(t, z)
        cdot = qp.c_dot.eval(t, z)
        for x in states:
            f = qp.rhs(t, x)
            v = float(x @ bmat @ x)
            sq = math.sqrt(v)
            v_dot = float(x @ bdot @ x + 2.0 * (bmat @ x) @ f)
            w_dot = float(x @ cdot @ x + 2.0 * (cmat @ x) @ f)
            lam_v = abs(v_rate_extreme(qp, t, x))
            lam_w = w_rate_min(qp, t, x)
            margin_v = lam_v * v + 2.0 * ph * sq - abs(v_dot)
            margin_w = w_dot - (lam_w * v - 2.0 * ps * sq)
            if margin_v < worst_v:
                worst_v, wit_v = margin_v, (t, x.copy())
            if margin_w < worst_w:
                worst_w, wit_w = margin_w, (t, x.copy())
            count += 1
    return RateCheckReport(
        n_samples=count,
        worst_v_margin=worst_v,
        worst_w_margin=worst_w,
        witness_v=wit_v,
        witness_w=wit_w,
    )


# ---------------------------------------------------------------------------
# constant fitting and the scalar growth pair


@dataclass(frozen=True)
class FittedConstants:
    """The scalar data feeding the growth pair: exponent ``sigma`` in
    (0, 1] and positive ``c1, c2, c3`` with ``c2**2 < v0``."""

    sigma: float
    c1: float
    c2: float
    c3: float
    v0: float

    def __post_init__(self):
        if not 0.0 < self.sigma <= 1.0:
            raise DomainError(f"sigma must lie in (0, 1], got {self.sigma}")
        if self.c2**2 >= self.v0:
            raise InfeasibleConditionE(
                f"c2^2 = {self.c2**2:.6g} must stay below v0 = {self.v0:.6g}"
            )

    def growth_pair(self) -> GrowthPair:
        g_text = f"v - {self.c2!r}*sqrt(v)"
        big_g_text = f"{self.c3!r}*v^{self.sigma!r}*(v + {self.c1!r}*sqrt(v))"
        return GrowthPair.from_strings(self.v0, g_text, big_g_text)

    # the growth pair is immutable; build it once on demand
    def _gp(self) -> GrowthPair:
        gp = getattr(self, "_gp_cache", None)
        if gp is None:
            gp = self.growth_pair()
            object.__setattr__(self, "_gp_cache", gp)
        return gp

    def f(self, v: float) -> float:
        """Growth clock ``F(v) = (1/c3) int_{v0}^{v} g/G*c3 du`` (the c3
        sits inside G)."""
        return growth_integral(self._gp(), v)

    def f_inv(self, z: float) -> float:
        return growth_integral_inv(self._gp(), z)

    # closed-form surrogate: a lower bound F1 <= F with explicit inverse
    def f1(self, v: float) -> float:
        """Closed-form lower bound for :meth:`f`, exact enough for
        ceilings: conservative because smaller F means larger F^-1."""
        if v < self.v0:
            raise DomainError(f"f1 needs v >= v0, got {v} < {self.v0}")
        c1, c2, c3, v0 = self.c1, self.c2, self.c3, self.v0
        if self.sigma == 1.0:
            lead = math.sqrt(v0) / ((math.sqrt(v0) + c1) * c3)
            return lead * (math.log(v) - math.log(v0) - 2.0 * c2 / math.sqrt(v0))
        s = self.sigma
        p = (1.0 - s) / 2.0
        m = c2 ** (1.0 - s)
        lead = math.sqrt(v0) / ((1.0 - s) * (math.sqrt(v0) + c1) * c3)
        return lead * ((v**p - m) ** 2 - (v0**p - m) ** 2)

    def f1_inv(self, z: float) -> float:
        """Inverse of :meth:`f1`.

        For sigma = 1 the algebraically consistent inverse carries the
        c3 factor (exp((sqrt(v0)+c1) c3 z / sqrt(v0) + 2 c2/sqrt(v0)));
        dropping c3 would not invert f1.
        """
        c1, c2, c3, v0 = self.c1, self.c2, self.c3, self.v0
        if self.sigma == 1.0:
            arg = (math.sqrt(v0) + c1) * c3 / math.sqrt(v0) * z + 2.0 * c2 / math.sqrt(
                v0
            )
            return v0 * math.exp(arg)
        if z < self.f1(self.v0):
            raise DomainError("f1_inv argument below the range of f1")
        s = self.sigma
        m = c2 ** (1.0 - s)
        p = (1.0 - s) / 2.0
        rad = (1.0 - s) * (math.sqrt(v0) + c1) * c3 / math.sqrt(
            v0
        ) * z + (v0**p - m) ** 2
        return (math.sqrt(rad) + m) ** (2.0 / (1.0 - s))


def fit_constants(
    qp: QuadraticProblem,
    sigma: float,
    samples: list[tuple[float, np.ndarray]],
    v0: float,
) -> FittedConstants:
    """Smallest admissible ``c1, c2, c3`` over the sample set, inflated by
    1.01 because finitely many samples under-cover the region.

    The three inequalities fitted are ``2 phi <= c1 |Lam_V|``,
    ``2 psi <= c2 lam_W`` and ``|Lam_V| <= c3 V^sigma lam_W``.

    Raises
    ------
    InfeasibleConditionE
        Naming the first unsatisfiable inequality and a witness sample
        (lam_W <= 0 somewhere, a forced rate with zero |Lam_V|, or a
        fitted c2 with c2^2 >= v0).
    """
    if not 0.0 < sigma <= 1.0:
        raise DomainError(f"sigma must lie in (0, 1], got {sigma}")
    c1 = c2 = c3 = 0.0
    for t, x in samples:
        lam_v = abs(v_rate_extreme(qp, t, x))
        lam_w = w_rate_min(qp, t, x)
        ph = phi(qp, t)
        ps = psi(qp, t)
        v = float(qp.quad_v(t, np.asarray(x, dtype=float)))
        if lam_w <= 0.0:
            raise InfeasibleConditionE(
                f"lam_W = {lam_w:.6g} <= 0 at a region sample; "
                "the W-rate inequality 2 psi <= c2 lam_W has no positive fit",
                witness=(t, np.asarray(x, dtype=float)),
            )
        if lam_v == 0.0 and ph > 0.0:
            raise InfeasibleConditionE(
                "|Lam_V| vanishes at a sample with phi > 0; "
                "2 phi <= c1 |Lam_V| has no fit",
                witness=(t, np.asarray(x, dtype=float)),
            )
        if lam_v > 0.0:
            c1 = max(c1, 2.0 * ph / lam_v)
        c2 = max(c2, 2.0 * ps / lam_w)
        c3 = max(c3, lam_v / (v**sigma * lam_w))
    c1 *= SAFETY_INFLATION
    c2 *= SAFETY_INFLATION
    c3 *= SAFETY_INFLATION
    if c2**2 >= v0:
        raise InfeasibleConditionE(
            f"fitted c2 = {c2:.6g} has c2^2 >= v0 = {v0:.6g}; "
            "the forcing is too large for this v0"
        )
    if c3 == 0.0:
        raise InfeasibleConditionE(
            "|Lam_V| = 0 on every sample; the growth pair degenerates "
            "(nothing to certify through G)"
        )
    return FittedConstants(sigma=sigma, c1=c1, c2=c2, c3=c3, v0=v0)


def closed_form_ceiling(consts: FittedConstants, delta: float) -> float:
    """Window-free ceiling for V from the constants alone, at threshold
    ``v0 -> c2^2``: for spread ``delta = sup lam_plus - inf lam_minus``,

    * sigma < 1:  ``(C1 sqrt(delta) + c2^(1-sigma))^(2/(1-sigma))``
    * sigma = 1:  ``(e c2)^2 exp(C2 delta)``

    with ``C2 = (c1+c2) c2 c3 / 2`` and ``C1 = sqrt((1-sigma) C2)``.
    """
    if delta < 0.0:
        raise DomainError(f"spread must be >= 0, got {delta}")
    c_two = (consts.c1 + consts.c2) * consts.c2 * consts.c3 / 2.0
    if consts.sigma == 1.0:
        return (math.e * consts.c2) ** 2 * math.exp(c_two * delta)
    c_one = math.sqrt((1.0 - consts.sigma) * c_two)
    exponent = 2.0 / (1.0 - consts.sigma)
    return (
        c_one * math.sqrt(delta) + consts.c2 ** (1.0 - consts.sigma)
    ) ** exponent


# ---------------------------------------------------------------------------
# sampled curves and tail limits


def alpha_curve(
    qp: QuadraticProblem,
    ts: np.ndarray,
    v0: float,
    v_hi: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """``alpha(t) = inf { lam_W(t,x) : x in region, V(t,x) > v0 }``,
    approximated by the min over state samples (exact when A is
    state-independent, since lam_W then does not depend on x)."""
    out = np.empty(ts.size)
    state_free = not qp.a.depends_on_state
    for i, t in enumerate(ts):
        t = float(t)
        if state_free:
            out[i] = w_rate_min(qp, t, qp._zeros())
            continue
        states = sample_region_states(
            qp, t, rng, qp.n_state_samples, v0 * (1.0 + 1e-9), v_hi
        )
        if not states:
            out[i] = math.nan
            continue
        out[i] = min(w_rate_min(qp, t, x) for x in states)
    return out


@dataclass
class TailLimits:
    """Window approximations of the three liminf quantities as
    t -> -infinity, taken over the trailing window quarter."""

    nu: float
    omega_tilde: float
    omega0: float
    tail_span: tuple[float, float]


def limits_from_tail(
    ts: np.ndarray,
    lam_mp: np.ndarray,
    lam_minus: np.ndarray,
    w_plus: float,
    v0: float,
) -> TailLimits:
    """liminf values over the trailing quarter ``[T-, T- + |T-|/4]``.

    ``nu = liminf w_plus / lam_mp`` uses only samples with ``lam_mp > 0``
    (elsewhere the entry-disk size is not defined); ``omega_tilde`` and
    ``omega0`` are plain minima of ``lam_mp * v0`` and ``lam_minus * v0``.

    Raises
    ------
    ConditionGFailed
        If ``lam_mp`` has no positive sample in the trailing quarter, so
        the entry disks degenerate (limsup over the window tail <= 0).
    """
    t_lo = float(ts[0])
    cut = t_lo + 0.25 * (0.0 - t_lo)
    tail = ts <= cut
    if not np.any(tail):
        tail = np.zeros(ts.size, dtype=bool)
        tail[0] = True
    mp_tail = lam_mp[tail]
    lm_tail = lam_minus[tail]
    if float(np.max(mp_tail)) <= 0.0:
        raise ConditionGFailed(
            "lam_minus_plus has no positive sample in the trailing window "
            f"quarter [{t_lo:.6g}, {cut:.6g}]"
        )
    pos = mp_tail > 0.0
    nu = float(np.min(w_plus / mp_tail[pos]))
    omega_tilde = float(np.min(mp_tail * v0))
    omega0 = float(np.min(lm_tail * v0))
    return TailLimits(
        nu=nu,
        omega_tilde=omega_tilde,
        omega0=omega0,
        tail_span=(t_lo, float(cut)),
    )


# ---------------------------------------------------------------------------
# certificate assembly


@dataclass
class ConditionResult:
    name: str
    passed: bool
    margin: float = math.nan
    window_certified: bool = False
    note: str = ""


@dataclass
class Certificate:
    """Everything :func:`certify` establishes about one problem.

    ``conditions`` maps the condition tags (a)-(g), (A), (B) to their
    results; ``feasible`` is True when every non-window condition passed
    and the ceiling check ``v_star > max(required)`` holds.
    """

    sigma: float
    c1: float
    c2: float
    c3: float
    v0: float
    v0_auto: bool
    v_star: float
    v_star_auto: bool
    w_minus: float
    w_plus: float
    window: tuple[float, float]
    nu: float
    omega_tilde: float
    omega0: float
    v_small_star: float
    vstar_required: tuple[float, float]
    vstar_slack: float
    ts: np.ndarray = field(repr=False)
    lam_plus: np.ndarray = field(repr=False)
    lam_minus: np.ndarray = field(repr=False)
    lam_mp: np.ndarray = field(repr=False)
    alpha: np.ndarray = field(repr=False)
    ceiling: np.ndarray = field(repr=False)
    conditions: dict = field(repr=False)
    seed: int = 0
    notes: list = field(default_factory=list, repr=False)

    @property
    def constants(self) -> FittedConstants:
        return FittedConstants(
            sigma=self.sigma, c1=self.c1, c2=self.c2, c3=self.c3, v0=self.v0
        )

    def growth_pair(self) -> GrowthPair:
        return self.constants.growth_pair()

    @property
    def feasible(self) -> bool:
        return all(c.passed for c in self.conditions.values())

    @property
    def window_certified_only(self) -> bool:
        """True when every hard condition passed but at least one passing
        condition could only be checked on the finite window."""
        return self.feasible and any(
            c.window_certified for c in self.conditions.values()
        )


def check_v_star(
    v_star: float,
    gp: GrowthPair,
    nu: float,
    omega_tilde: float,
    omega0: float,
    w_plus: float,
) -> tuple[tuple[float, float], float]:
    """The two required ceilings and the slack of ``v_star`` above them:
    ``F^-1(F(nu) + w_plus - omega_tilde)`` and ``F^-1(w_plus - omega0)``.
    Positive slack means the region cap is compatible with entry disks.
    """
    term1 = growth_integral_inv(
        gp, max(0.0, growth_integral(gp, max(nu, gp.v0)) + w_plus - omega_tilde)
    )
    term2 = growth_integral_inv(gp, max(0.0, w_plus - omega0))
    required = max(term1, term2)
    return (term1, term2), v_star - required


def _lambda_curves(qp: QuadraticProblem, ts: np.ndarray):
    """Sampled extreme characteristic values of C - lambda B and the
    minimum over the positive C-subspace, plus the worst degeneracy
    margin of C (relative |eig|)."""
    z = qp._zeros()
    lam_plus = np.empty(ts.size)
    lam_minus = np.empty(ts.size)
    lam_mp = np.empty(ts.size)
    split = None
    worst_gap = math.inf
    for i, t in enumerate(ts):
        t = float(t)
        bmat = qp.b.eval(t, z)
        cmat = qp.c.eval(t, z)
        pencil = SymmetricPencil(cmat, bmat)
        lam_minus[i], lam_plus[i] = lambda_extremes(pencil)
        proj = spectral_projectors(cmat)
        eigs = np.concatenate([proj.eigs_minus, proj.eigs_plus])
        scale = float(np.max(np.abs(eigs)))
        worst_gap = min(worst_gap, float(np.min(np.abs(eigs))) / scale)
        if split is None:
            split = (proj.n_plus, proj.n_minus)
        elif split != (proj.n_plus, proj.n_minus):
            raise DegeneratePencil(
                f"signature of C changes across the window at t = {t:.6g}: "
                f"{split} -> {(proj.n_plus, proj.n_minus)}"
            )
        lam_mp[i] = lambda_minus_plus(pencil, proj)
    return lam_plus, lam_minus, lam_mp, worst_gap, split


def certify(
    qp: QuadraticProblem,
    sigma_grid=SIGMA_GRID,
    seed: int | None = None,
) -> Certificate:
    """Run the full condition pipeline and assemble a :class:`Certificate`.

    Condition tags in the result:

    * (a) B(t) positive definite on the grid
    * (b) C(t) nondegenerate with constant signature
    * (c) region sign conventions (w- < 0 < w+, v0 > 0, V* > 0)
    * (d) entry/exit disks: lam_minus v0 >= w-, lam_plus v0 <= w+
    * (e) constants c1, c2, c3, sigma fit with c2^2 < v0
    * (f) divergence of the alpha integral (window-certified)
    * (g) positive tail of lam_minus_plus (trailing-quarter proxy)
    * (A) growth clock reaches every needed value by Vmax (window-certified)
    * (B) same integral evidence as (f), the general-form condition
    """
    seed = qp.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    t_lo, t_hi = qp.window
    ts = np.linspace(t_lo, t_hi, qp.n_grid)
    conditions: dict[str, ConditionResult] = {}
    notes: list[str] = []
    z = qp._zeros()

    # (a) SPD check of B on the grid
    min_b_eig = math.inf
    spd_ok = True
    for t in ts:
        bmat = qp.b.eval(float(t), z)
        try:
            cholesky_spd(bmat)
        except NotPositiveDefinite:
            spd_ok = False
        min_b_eig = min(min_b_eig, float(np.linalg.eigvalsh(bmat)[0]))
    conditions["a"] = ConditionResult(
        name="B positive definite",
        passed=spd_ok and min_b_eig > 0.0,
        margin=min_b_eig,
    )
    if not conditions["a"].passed:
        raise NotPositiveDefinite(-1, min_b_eig)

    # (b) + curves; signature constancy enforced inside
    try:
        lam_plus, lam_minus, lam_mp, worst_gap, split = _lambda_curves(qp, ts)
        conditions["b"] = ConditionResult(
            name="C nondegenerate, constant signature",
            passed=True,
            margin=worst_gap,
            note=f"signature (+{split[0]}, -{split[1]})",
        )
    except DegeneratePencil as exc:
        conditions["b"] = ConditionResult(
            name="C nondegenerate, constant signature",
            passed=False,
            note=str(exc),
        )
        raise

    # auto v0: half the largest disk condition (d) permits
    v0_auto = qp.v0 is None
    if v0_auto:
        caps = []
        pos = lam_plus > 0.0
        if np.any(pos):
            caps.append(float(np.min(qp.w_plus / lam_plus[pos])))
        neg = lam_minus < 0.0
        if np.any(neg):
            caps.append(float(np.min(qp.w_minus / lam_minus[neg])))
        if not caps:
            raise DomainError(
                "cannot choose v0 automatically: no positive lam_plus or "
                "negative lam_minus sample on the grid"
            )
        v0 = 0.5 * min(caps)
        notes.append(f"v0 chosen automatically as {v0:.9g}")
    else:
        v0 = float(qp.v0)

    # (c) sign conventions (the ambient domain is the whole space here,
    # so the containment part is automatic)
    conditions["c"] = ConditionResult(
        name="region sign conventions",
        passed=(qp.w_minus < 0.0 < qp.w_plus) and v0 > 0.0,
        margin=min(qp.w_plus, -qp.w_minus, v0),
        note="ambient domain is all of R^(1+n)",
    )

    # (d) disk inclusions
    margin_hi = float(np.min(qp.w_plus - lam_plus * v0))
    margin_lo = float(np.min(lam_minus * v0 - qp.w_minus))
    conditions["d"] = ConditionResult(
        name="entry/exit disk inclusions",
        passed=margin_hi >= 0.0 and margin_lo >= 0.0,
        margin=min(margin_hi, margin_lo),
    )

    # (g) + tail limits
    try:
        tail = limits_from_tail(ts, lam_mp, lam_minus, qp.w_plus, v0)
        tail_margin = float(
            np.max(lam_mp[ts <= tail.tail_span[1]])
        )
        conditions["g"] = ConditionResult(
            name="positive tail of lam_minus_plus",
            passed=True,
            margin=tail_margin,
            window_certified=True,
            note=f"trailing quarter {tail.tail_span}",
        )
    except ConditionGFailed as exc:
        conditions["g"] = ConditionResult(
            name="positive tail of lam_minus_plus",
            passed=False,
            window_certified=True,
            note=str(exc),
        )
        raise

    # (e) constants: fit on samples (exact fast path when A is
    # state-independent), sigma by grid search on the t = 0 ceiling,
    # V* by fixed-point iteration when not supplied
    state_free = not qp.a.depends_on_state
    v_star_auto = qp.v_star is None
    v_star = float(qp.v_star) if qp.v_star is not None else 4.0 * v0
    spread = float(np.max(lam_plus) - np.min(lam_minus))

    def fit_for(sigma: float, v_hi: float) -> FittedConstants:
        if state_free:
            # lam/phi/psi do not depend on x, and V^-sigma is maximal at
            # v0, so per-t samples at V = v0 fit the whole region exactly
            samples = []
            sqv0 = math.sqrt(v0)
            e_first = np.eye(qp.n)[:, 0]
            for t in ts:
                tt = float(t)
                lowt = cholesky_spd(qp.b.eval(tt, z))
                direction = solve_triangular(
                    lowt.T, e_first, lower=False, check_finite=False
                )
                samples.append((tt, sqv0 * direction))
            return fit_constants(qp, sigma, samples, v0)
        samples = []
        for t in ts:
            tt = float(t)
            states = sample_region_states(
                qp, tt, rng, qp.n_state_samples, v0, v_hi
            )
            samples.extend((tt, x) for x in states)
        if not samples:
            raise InfeasibleConditionE(
                "region sampler produced no states; region may be empty"
            )
        return fit_constants(qp, sigma, samples, v0)

    best: FittedConstants | None = None
    best_bound = math.inf
    infeasible_reasons = []
    for _round in range(6):
        best = None
        best_bound = math.inf
        infeasible_reasons = []
        for sigma in sigma_grid:
            try:
                consts = fit_for(sigma, v_star)
                gp_try = consts.growth_pair()
                bound0 = growth_integral_inv(
                    gp_try, max(0.0, 0.5 * v0 * spread)
                )
            except InfeasibleConditionE as exc:
                infeasible_reasons.append(f"sigma={sigma:g}: {exc}")
                continue
            if bound0 < best_bound:
                best, best_bound = consts, bound0
        if best is None:
            conditions["e"] = ConditionResult(
                name="growth constants fit",
                passed=False,
                note="; ".join(infeasible_reasons),
            )
            raise InfeasibleConditionE("; ".join(infeasible_reasons))
        gp = best.growth_pair()
        (term1, term2), slack = check_v_star(
            v_star, gp, tail.nu, tail.omega_tilde, tail.omega0, qp.w_plus
        )
        if not v_star_auto:
            break
        needed = VSTAR_HEADROOM * max(term1, term2, v0)
        if needed <= v_star * (1.0 + 1e-9):
            v_star = needed
            # one more pass so the fit region matches the final V*
            (term1, term2), slack = check_v_star(
                v_star, gp, tail.nu, tail.omega_tilde, tail.omega0, qp.w_plus
            )
            break
        v_star = needed
    else:
        notes.append(
            "V* fixed-point iteration did not settle in 6 rounds; using "
            f"the last iterate {v_star:.9g}"
        )
    if v_star_auto:
        notes.append(f"V* chosen automatically as {v_star:.9g}")

    conditions["e"] = ConditionResult(
        name="growth constants fit",
        passed=True,
        margin=v0 - best.c2**2,
        note=(
            f"sigma={best.sigma:g} picked from {tuple(sigma_grid)} by the "
            "t=0 ceiling"
        ),
    )
    if best.sigma == 1.0:
        notes.append(
            "sigma=1 surrogate inverse carries the c3 factor required for "
            "algebraic consistency with the surrogate itself"
        )
    gp = best.growth_pair()

    # alpha curve, (f) and (B): window divergence of the return clock
    alpha = alpha_curve(qp, ts, v0, v_star, rng)
    if np.any(np.isnan(alpha)):
        conditions["f"] = ConditionResult(
            name="alpha integral divergence",
            passed=False,
            window_certified=True,
            note="alpha had empty sample sets on the grid",
        )
        int_left = int_right = math.nan
    else:
        left = ts <= 0.0
        right = ts >= 0.0
        int_left = float(np.trapezoid(alpha[left], ts[left]))
        int_right = float(np.trapezoid(alpha[right], ts[right]))
        g_v0 = gp.g(v0)
        target = (qp.w_plus - qp.w_minus) / g_v0
        passed_f = min(int_left, int_right) >= target
        conditions["f"] = ConditionResult(
            name="alpha integral divergence",
            passed=passed_f,
            margin=min(int_left, int_right) - target,
            window_certified=True,
            note=(
                f"integrals ({int_left:.6g}, {int_right:.6g}) vs return "
                f"target {target:.6g}"
            ),
        )
    conditions["B"] = ConditionResult(
        name="return-clock divergence (general form)",
        passed=conditions["f"].passed,
        margin=conditions["f"].margin,
        window_certified=True,
        note="same evidence as (f): alpha == inf lam_W over the region",
    )

    # ceilings
    v_small_star = bound_excursion(gp, qp.w_plus, qp.w_minus)
    w_hi_curve = lam_plus * v0
    w_lo_curve = lam_minus * v0
    ceiling = sup_bound_curve(gp, ts, w_hi_curve, w_lo_curve)

    (term1, term2), slack = check_v_star(
        v_star, gp, tail.nu, tail.omega_tilde, tail.omega0, qp.w_plus
    )
    conditions["V*"] = ConditionResult(
        name="ceiling strictly above required entries",
        passed=slack > 0.0,
        margin=slack,
        note=f"required max({term1:.9g}, {term2:.9g})",
    )

    # (A): every growth-clock inverse we may take must resolve below Vmax
    needed_clock = max(
        growth_integral(gp, max(tail.nu, v0)) + qp.w_plus - tail.omega_tilde,
        qp.w_plus - tail.omega0,
        0.5 * v0 * spread,
        0.5 * (qp.w_plus - qp.w_minus),
    )
    clock_at_vmax = growth_integral(gp, gp.vmax)
    conditions["A"] = ConditionResult(
        name="growth clock unbounded",
        passed=clock_at_vmax > needed_clock,
        margin=clock_at_vmax - needed_clock,
        window_certified=True,
        note=f"F(Vmax={gp.vmax:.3g}) = {clock_at_vmax:.6g}",
    )

    # certificate-level sanity of the tail quantities
    if not (qp.w_minus <= tail.omega0 <= qp.w_plus):
        notes.append(
            f"omega0 = {tail.omega0:.9g} escapes [w-, w+]; the window tail "
            "is inconsistent with condition (d)"
        )
    if tail.nu < v0 * (1.0 - 1e-12):
        notes.append(
            f"nu = {tail.nu:.9g} fell below v0 = {v0:.9g}; entry disks "
            "do not reach the threshold"
        )

    return Certificate(
        sigma=best.sigma,
        c1=best.c1,
        c2=best.c2,
        c3=best.c3,
        v0=v0,
        v0_auto=v0_auto,
        v_star=v_star,
        v_star_auto=v_star_auto,
        w_minus=qp.w_minus,
        w_plus=qp.w_plus,
        window=(t_lo, t_hi),
        nu=tail.nu,
        omega_tilde=tail.omega_tilde,
        omega0=tail.omega0,
        v_small_star=v_small_star,
        vstar_required=(term1, term2),
        vstar_slack=slack,
        ts=ts,
        lam_plus=lam_plus,
        lam_minus=lam_minus,
        lam_mp=lam_mp,
        alpha=alpha,
        ceiling=ceiling,
        conditions=conditions,
        seed=seed,
        notes=notes,
    )


# ---------------------------------------------------------------------------
# exit-ellipsoid retraction and the two-solution separation test


def retract_exit(qp: QuadraticProblem, t: float, x, c: float) -> np.ndarray:
    """Project a state onto the exit ellipsoid ``{ y in L_+(t) :
    <C(t)y, y> = c }`` by ``y = sqrt(c / <C_+ x, x>) P_+ x``.

    Raises
    ------
    NotRetractable
        If ``<C_+ x, x> <= 1e-12`` — x has no component to retract along.
    """
    if c <= 0.0:
        raise DomainError(f"exit level must be positive, got {c}")
    x = np.asarray(x, dtype=float)
    cmat = qp.c.eval(float(t), x)
    proj = spectral_projectors(cmat)
    c_plus, _ = signed_parts(cmat, proj)
    quad = float(x @ c_plus @ x)
    if quad <= 1e-12:
        raise NotRetractable(
            f"<C_+ x, x> = {quad:.3e} <= 1e-12; no positive component"
        )
    theta = math.sqrt(c / quad)
    return theta * (proj.p_plus @ x)


@dataclass
class UniquenessQuadraticReport:
    """Outcome of the quadratic two-solution separation test.

    Uses a comparison pair ``C_hat``/``A_hat``: the difference of two
    solutions obeys the same rate structure with ``lam_hat`` the minimal
    characteristic value of ``(C_hat A_hat + A_hat^T C_hat + C_hat') -
    lambda B``; divergence of the normalized integral of the floor
    ``beta_hat`` rules out two distinct V-bounded solutions.
    """

    status: str  # "pass", "fail", "vacuous"
    beta_min: float
    witness: tuple | None
    lam_hat_curve: np.ndarray
    big_lam_curve: np.ndarray
    divergence_left: float
    divergence_right: float
    divergence_threshold: float
    diverges: bool
    notes: list


def uniqueness_quadratic(
    qp: QuadraticProblem,
    c_hat: MatrixFunction | None = None,
    a_hat=None,
    n_pairs: int = 24,
    v_hi: float | None = None,
    divergence_threshold: float = 10.0,
    seed: int = 0,
) -> UniquenessQuadraticReport:
    """Separation test with comparison form ``C_hat`` (default C) and
    difference matrix ``A_hat(t, x, y)`` (default A, exact when A is
    state-independent).

    ``a_hat`` may be a callable ``(t, x, y) -> ndarray``; for
    state-dependent A without a supplied ``a_hat`` the test is vacuous
    (the difference representation is not available) and says so.
    """
    rng = np.random.default_rng(seed)
    t_lo, t_hi = qp.window
    ts = np.linspace(t_lo, t_hi, qp.n_grid)
    z = qp._zeros()
    c_hat = c_hat if c_hat is not None else qp.c
    c_hat_dot = c_hat.diff_t()
    notes: list[str] = []

    if a_hat is None:
        if qp.a.depends_on_state:
            return UniquenessQuadraticReport(
                status="vacuous",
                beta_min=math.nan,
                witness=None,
                lam_hat_curve=np.full(ts.size, math.nan),
                big_lam_curve=np.full(ts.size, math.nan),
                divergence_left=math.nan,
                divergence_right=math.nan,
                divergence_threshold=divergence_threshold,
                diverges=False,
                notes=[
                    "A depends on the state and no difference matrix was "
                    "supplied; the separation test cannot run"
                ],
            )

        def a_hat(t, x, y):
            return qp.a.eval(t, z)

        notes.append("A is state-independent; difference matrix equals A")

    v_hi = v_hi if v_hi is not None else (qp.v_star or 1.0)
    v_lo = qp.v0 if qp.v0 is not None else v_hi / 4.0

    beta = np.empty(ts.size)
    big_lam = np.empty(ts.size)
    beta_min = math.inf
    witness = None
    for i, t in enumerate(ts):
        tt = float(t)
        bmat = qp.b.eval(tt, z)
        ch = c_hat.eval(tt, z)
        big_lo, big_hi = lambda_extremes(SymmetricPencil(ch, bmat))
        big_lam[i] = big_hi if abs(big_hi) >= abs(big_lo) else big_lo
        chd = c_hat_dot.eval(tt, z)
        worst = math.inf
        states = sample_region_states(qp, tt, rng, max(2, n_pairs), v_lo, v_hi)
        if len(states) < 2:
            states = [z.copy(), z.copy()]
        for j in range(0, len(states) - 1, 2):
            x, y = states[j], states[j + 1]
            am = np.asarray(a_hat(tt, x, y), dtype=float)
            m = ch @ am
            lam = lambda_extremes(
                SymmetricPencil(m + m.T + chd, bmat)
            )[0]
            if lam < worst:
                worst = lam
                if lam < beta_min:
                    beta_min = lam
                    witness = (tt, x.copy(), y.copy())
        beta[i] = worst

    # normalized divergence evidence: (1/|Lam_hat(t)|) |int_0^t beta/Lam_hat|
    def normalized(t_index_mask, endpoint):
        sel = np.nonzero(t_index_mask)[0]
        if sel.size < 2:
            return 0.0
        tsel = ts[sel]
        integrand = beta[sel] / big_lam[sel]
        integral = abs(float(np.trapezoid(integrand, tsel)))
        return integral / abs(float(big_lam[endpoint]))

    div_left = normalized(ts <= 0.0, 0)
    div_right = normalized(ts >= 0.0, ts.size - 1)
    diverges = min(div_left, div_right) >= divergence_threshold

    status = "pass" if (beta_min > 0.0 and diverges) else "fail"
    if beta_min > 0.0 and not diverges:
        notes.append(
            "rate floor positive but the window integral stays below the "
            "divergence threshold; uniqueness is only window-supported"
        )
    return UniquenessQuadraticReport(
        status=status,
        beta_min=beta_min,
        witness=witness,
        lam_hat_curve=beta,
        big_lam_curve=big_lam,
        divergence_left=div_left,
        divergence_right=div_right,
        divergence_threshold=divergence_threshold,
        diverges=diverges,
        notes=notes,
    )
