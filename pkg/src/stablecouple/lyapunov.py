"""Radial Lyapunov functions for the coupled distance process and the
certified contraction constants.

For a pair coupled by reflection (small jumps, small separation) and
synchronously otherwise, the separation r = |x - y| is a jump process whose
generator acts on radial test functions psi as

    L psi(r) = J(r) + psi'(r) D(r),

where D(r) is the worst drift allowed by the two-regime condition
(K1 r below L0, -K2 r^(theta-1) above) and J(r) integrates the reflected
second difference psi(r + 2 z_1) + psi(r - 2 z_1) - 2 psi(r) against the
stable jump measure restricted to |z| <= a r (zero above L0, where the
coupling is synchronous).

Two concave-then-convex piecewise shapes of psi are used, one for
alpha in (1, 2) and one for alpha in (0, 1]; both are C^2 glued at 2 L0 and
make L psi <= -lambda psi for a computable lambda > 0, which is the content
of the certificate assembled here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import special

from .drift_models import DriftCondition, check_small_alpha_gate
from .stable_noise import StableSpec


class Regime(Enum):
    HIGH_ALPHA = "high_alpha"   # alpha in (1, 2): 1 - exp(-c1 r) core
    LOW_ALPHA = "low_alpha"     # alpha in (0, 1]: r - c r^(1+alpha) core


class GateError(ValueError):
    """Small-alpha admissibility gate failed; carries the signed margin."""

    def __init__(self, margin: float):
        self.margin = margin
        super().__init__(
            f"small-alpha gate failed: margin {margin:.6e} <= 0"
        )


class CertificateError(RuntimeError):
    """A numeric certificate check failed; carries the offending radius."""

    def __init__(self, message: str, r: float | None = None):
        self.r = r
        super().__init__(message)


# exponent arguments above this are delegated to the asymptotic ratio path
_EXP_SAFE = 600.0


@dataclass(frozen=True)
class RadialLyapunov:
    """Piecewise radial Lyapunov function with its derived constants.

    High-alpha regime (alpha in (1, 2)):
        psi(r) = 1 - exp(-c1 r)                                 on [0, 2 L0]
        psi(r) = A e^{c2 (r-2L0)} + B (r-2L0)^2 + K             on [2 L0, inf)
    with c1 = (2 K1 / big_c)^(1/(alpha-1)) e^(2 L0/(alpha-1)) + 2,
    a = 1/c1, c2 = 20 c1, A = (c1/c2) e^(-2 L0 c1),
    B = -((c1+c2) c1 / 2) e^(-2 L0 c1) and
    big_c = 2 c_dalpha omega_d L0^(1-alpha) / (d (2-alpha)).

    Low-alpha regime (alpha in (0, 1]):
        psi(r) = r - c r^(1+alpha)                              on [0, 2 L0]
        psi(r) = A e^{c0 (r-2L0)} + B (r-2L0)^2 + K             on [2 L0, inf)
    with a = 1/4, c = 1 / (2^(1+alpha) (1+alpha) L0^alpha), c0 = 10 alpha/L0,
    A = 1/(2 c0), B = -(alpha/(4 L0) + c0/2)/2.

    The constants force value, slope and curvature to agree at 2 L0, and the
    tail envelope g(r) = A cexp e^{cexp (r-2L0)} / 2 + 2 B (r-2L0) stays
    positive, which keeps psi strictly increasing.
    """

    regime: Regime
    alpha: float
    l0: float
    a: float
    A: float
    B: float
    c1: float | None = None
    c2: float | None = None
    c: float | None = None
    c0: float | None = None
    big_c: float | None = None

    # ---- piece bookkeeping -------------------------------------------------

    @property
    def switch_r(self) -> float:
        return 2.0 * self.l0

    @property
    def tail_exp(self) -> float:
        """Exponential rate of the outer piece (c2 or c0 by regime)."""
        return self.c2 if self.regime is Regime.HIGH_ALPHA else self.c0

    @property
    def tail_const(self) -> float:
        """Additive constant K of the outer piece (continuity at 2 L0)."""
        return self._core_value_switch() - self.A

    def _core_value_switch(self) -> float:
        if self.regime is Regime.HIGH_ALPHA:
            return -math.expm1(-self.c1 * self.switch_r)
        s = self.switch_r
        return s - self.c * s ** (1.0 + self.alpha)

    @property
    def prime_at_zero(self) -> float:
        return self.c1 if self.regime is Regime.HIGH_ALPHA else 1.0

    # ---- evaluation --------------------------------------------------------

    def value(self, r):
        """psi(r) for r >= 0 (scalar or array). Overflows to +inf far out."""
        r = np.asarray(r, dtype=float)
        if np.any(r < 0.0):
            raise ValueError("psi is only defined for r >= 0")
        dd = r - self.switch_r
        with np.errstate(over="ignore", invalid="ignore"):
            if self.regime is Regime.HIGH_ALPHA:
                core = -np.expm1(-self.c1 * np.minimum(r, self.switch_r))
            else:
                rc = np.minimum(r, self.switch_r)
                core = rc - self.c * rc ** (1.0 + self.alpha)
            tail = (self.A * np.exp(self.tail_exp * np.maximum(dd, 0.0))
                    + self.B * np.maximum(dd, 0.0) ** 2 + self.tail_const)
        out = np.where(r <= self.switch_r, core, tail)
        return float(out) if out.ndim == 0 else out

    def prime(self, r):
        """psi'(r)."""
        r = np.asarray(r, dtype=float)
        if np.any(r < 0.0):
            raise ValueError("psi' is only defined for r >= 0")
        dd = np.maximum(r - self.switch_r, 0.0)
        with np.errstate(over="ignore", invalid="ignore"):
            if self.regime is Regime.HIGH_ALPHA:
                core = self.c1 * np.exp(-self.c1 * np.minimum(r, self.switch_r))
            else:
                rc = np.minimum(r, self.switch_r)
                core = 1.0 - self.c * (1.0 + self.alpha) * rc ** self.alpha
            tail = self.A * self.tail_exp * np.exp(self.tail_exp * dd) + 2.0 * self.B * dd
        out = np.where(r <= self.switch_r, core, tail)
        return float(out) if out.ndim == 0 else out

    def second(self, r):
        """psi''(r)."""
        r = np.asarray(r, dtype=float)
        if np.any(r < 0.0):
            raise ValueError("psi'' is only defined for r >= 0")
        dd = np.maximum(r - self.switch_r, 0.0)
        with np.errstate(over="ignore", invalid="ignore"):
            if self.regime is Regime.HIGH_ALPHA:
                core = -self.c1 ** 2 * np.exp(-self.c1 * np.minimum(r, self.switch_r))
            else:
                rc = np.minimum(r, self.switch_r)
                core = -self.c * self.alpha * (1.0 + self.alpha) * rc ** (self.alpha - 1.0)
            tail = self.A * self.tail_exp ** 2 * np.exp(self.tail_exp * dd) + 2.0 * self.B
        out = np.where(r <= self.switch_r, core, tail)
        return float(out) if out.ndim == 0 else out

    def second_difference(self, r, h):
        """psi(r+h) + psi(r-h) - 2 psi(r), cancellation-free on the core piece.

        Requires 0 <= h <= r and r + h <= 2 L0 (always true inside the
        reflected-jump integral, where h <= 2 a r with a <= 1/2 and r <= L0).
        """
        r = np.asarray(r, dtype=float)
        h = np.asarray(h, dtype=float)
        if self.regime is Regime.HIGH_ALPHA:
            return -4.0 * np.exp(-self.c1 * r) * np.sinh(self.c1 * h / 2.0) ** 2
        return -self.c * _power_second_difference(r, h, 1.0 + self.alpha)

    def prime_over_value(self, r: float) -> float:
        """psi'(r)/psi(r), stable against tail overflow.

        On the core the high-alpha ratio is c1 / (e^{c1 r} - 1).  On the tail
        the exponential dominates once its argument passes ~600 and the ratio
        is the tail rate up to a relative correction below e^{-600}/A.
        """
        r = float(r)
        if r <= 0.0:
            raise ValueError("ratio defined for r > 0")
        if r <= self.switch_r:
            if self.regime is Regime.HIGH_ALPHA:
                return self.c1 / math.expm1(self.c1 * r)
            num = 1.0 - self.c * (1.0 + self.alpha) * r ** self.alpha
            return num / (r - self.c * r ** (1.0 + self.alpha))
        dd = r - self.switch_r
        cexp = self.tail_exp
        if cexp * dd > _EXP_SAFE:
            return cexp
        e = math.exp(cexp * dd)
        num = self.A * cexp * e + 2.0 * self.B * dd
        den = self.A * e + self.B * dd ** 2 + self.tail_const
        return num / den


def _power_second_difference(r, h, p):
    """(r+h)^p + (r-h)^p - 2 r^p for 0 <= h < r, avoiding cancellation.

    Direct evaluation loses all precision for small h/r because the O(1)
    terms cancel to O((h/r)^2); the even part of the binomial series in
    x = h/r converges geometrically for x < 1:

        second difference = 2 r^p sum_{k>=1} C(p, 2k) x^(2k).
    """
    r = np.asarray(r, dtype=float)
    h = np.asarray(h, dtype=float)
    x2 = np.broadcast_arrays((h / r) ** 2, r)[0].astype(float)
    tk = p * (p - 1.0) / 2.0 * x2  # C(p, 2) x^2
    total = tk.copy()
    k = 1
    while True:
        # C(p, 2k+2) / C(p, 2k) = (p-2k)(p-2k-1) / ((2k+1)(2k+2))
        ratio = ((p - 2 * k) * (p - 2 * k - 1.0)) / ((2 * k + 1.0) * (2 * k + 2.0))
        tk = tk * ratio * x2
        total += tk
        k += 1
        if np.all(np.abs(tk) <= 1e-18 * (1.0 + np.abs(total))) or k > 60:
            break
    return r ** p * 2.0 * total


def build_lyapunov(spec: StableSpec, cond: DriftCondition) -> RadialLyapunov:
    """Construct the regime-appropriate radial Lyapunov function.

    For alpha in (0, 1] the small-alpha gate must pass; on failure a
    :class:`GateError` carrying the margin is raised.
    """
    a_idx = spec.alpha
    if a_idx > 1.0:
        big_c = (2.0 * spec.c_dalpha * spec.omega_d * cond.l0 ** (1.0 - a_idx)
                 / (spec.d * (2.0 - a_idx)))
        c1 = ((2.0 * cond.k1 / big_c) ** (1.0 / (a_idx - 1.0))
              * math.exp(2.0 * cond.l0 / (a_idx - 1.0)) + 2.0)
        c2 = 20.0 * c1
        decay = math.exp(-2.0 * cond.l0 * c1)
        return RadialLyapunov(
            regime=Regime.HIGH_ALPHA, alpha=a_idx, l0=cond.l0, a=1.0 / c1,
            c1=c1, c2=c2, big_c=big_c,
            A=c1 / c2 * decay, B=-(c1 + c2) * c1 / 2.0 * decay,
        )
    gate = check_small_alpha_gate(spec, cond)
    if not gate.passed:
        raise GateError(gate.margin)
    c0 = 10.0 * a_idx / cond.l0
    return RadialLyapunov(
        regime=Regime.LOW_ALPHA, alpha=a_idx, l0=cond.l0, a=0.25,
        c=1.0 / (2.0 ** (1.0 + a_idx) * (1.0 + a_idx) * cond.l0 ** a_idx),
        c0=c0, A=1.0 / (2.0 * c0),
        B=-0.5 * (a_idx / (4.0 * cond.l0) + c0 / 2.0),
    )


# ---------------------------------------------------------------------------
# Generator quadrature
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuadratureConfig:
    """Refinement policy for the reflected-jump integral J(r).

    The radial singularity s^(1-alpha) is removed by the substitution
    s = (a r) u^(1/(2-alpha)); tensor Gauss rules are then refined until the
    value is stable to ``tol`` in combined absolute/relative terms.
    """

    tol: float = 1e-10
    n_radial: int = 32
    n_radial_max: int = 1024
    n_angular: int = 48

    def __post_init__(self):
        if self.tol <= 0 or self.n_radial < 4 or self.n_radial_max < self.n_radial:
            raise ValueError("invalid quadrature configuration")


def _angular_rule(d: int, n: int):
    """Average over t = z_1/|z| on [0, 1] (the integrand is even in t).

    The sphere marginal of the first coordinate has density proportional to
    (1 - t^2)^((d-3)/2); for d = 1 it degenerates to atoms at +-1.
    """
    if d == 1:
        return np.array([1.0]), np.array([1.0])
    nodes, weights = special.roots_jacobi(n, (d - 3) / 2.0, (d - 3) / 2.0)
    return np.abs(nodes), weights / weights.sum()


def _jump_term_fixed(lyap: RadialLyapunov, spec: StableSpec, r: float,
                     n_radial: int, n_angular: int) -> float:
    ar = lyap.a * r
    tn, tw = _angular_rule(spec.d, n_angular)
    un, uw = np.polynomial.legendre.leggauss(n_radial)
    un = 0.5 * (un + 1.0)
    uw = 0.5 * uw
    expo = 1.0 / (2.0 - spec.alpha)
    s = ar * un ** expo
    # s^(-1-alpha) ds = (a r)^(-alpha) expo u^(-2 expo) du under s = a r u^expo
    jac = ar ** (-spec.alpha) * expo * un ** (-2.0 * expo)
    f_avg = np.zeros_like(s)
    for t, w in zip(tn, tw):
        f_avg += w * lyap.second_difference(r, 2.0 * s * t)
    return float(spec.c_dalpha * spec.omega_d / 2.0 * np.sum(uw * jac * f_avg))


def jump_term(lyap: RadialLyapunov, spec: StableSpec, r: float,
              quad: QuadratureConfig | None = None) -> float:
    """Reflected-jump part J(r) of the distance generator, r in (0, L0].

    J(r) = 1/2 int_{|z| <= a r} [psi(r + 2 z_1) + psi(r - 2 z_1) - 2 psi(r)]
           c_dalpha |z|^(-d-alpha) dz,
    reduced to a radial x angular tensor quadrature.  Nonpositive whenever
    psi is concave on the integration range.
    """
    if r <= 0.0:
        raise ValueError("r must be positive")
    quad = quad or QuadratureConfig()
    n = quad.n_radial
    prev = _jump_term_fixed(lyap, spec, r, n, quad.n_angular)
    while n < quad.n_radial_max:
        n *= 2
        cur = _jump_term_fixed(lyap, spec, r, n, quad.n_angular)
        if abs(cur - prev) <= quad.tol * (1.0 + abs(cur)):
            return cur
        prev = cur
    raise CertificateError(
        f"jump-term quadrature did not stabilize to {quad.tol:g} at r={r:g}", r=r
    )


def worst_drift_term(cond: DriftCondition, r: float) -> float:
    """Largest admissible radial drift D(r): K1 r below L0, -K2 r^(theta-1) above."""
    if r <= cond.l0:
        return cond.k1 * r
    return -cond.k2 * r ** (cond.theta - 1.0)


def distance_generator_bound(lyap: RadialLyapunov, spec: StableSpec,
                             cond: DriftCondition, r: float,
                             quad: QuadratureConfig | None = None) -> float:
    """Worst-case generator action L psi(r) = J(r) + psi'(r) D(r).

    J vanishes above L0 where the coupling is synchronous and jumps cancel
    in the separation.
    """
    if r <= 0.0:
        raise ValueError("r must be positive")
    drift_part = float(lyap.prime(r)) * worst_drift_term(cond, r)
    if r > cond.l0:
        return drift_part
    return jump_term(lyap, spec, r, quad) + drift_part


def small_distance_rate(lyap: RadialLyapunov, spec: StableSpec,
                        cond: DriftCondition) -> float:
    """Closed-form small-separation rate lambda_1.

    High alpha: big_c c1^(alpha-1) e^(-2 L0) / 2.
    Low  alpha: alpha c_dalpha omega_d 3^(alpha-1) / (8 (2-alpha) d L0^alpha) - K1,
    positive exactly when the small-alpha gate passes.
    """
    if lyap.regime is Regime.HIGH_ALPHA:
        return lyap.big_c * lyap.c1 ** (spec.alpha - 1.0) * math.exp(-2.0 * cond.l0) / 2.0
    lam = (spec.alpha * spec.c_dalpha * spec.omega_d * 3.0 ** (spec.alpha - 1.0)
           / (8.0 * (2.0 - spec.alpha) * spec.d * cond.l0 ** spec.alpha)
           - cond.k1)
    if lam <= 0.0:
        raise GateError(lam)
    return lam


def default_radial_grid(l0: float, n: int = 400, r_min_factor: float = 1e-4,
                        r_max_factor: float = 10.0) -> np.ndarray:
    """Geometric grid on (r_min_factor L0, r_max_factor L0] used by the sweeps."""
    return np.geomspace(r_min_factor * l0, r_max_factor * l0, n)


@dataclass(frozen=True)
class RateSweep:
    """Grid sweep of the contraction ratio -L psi(r) / psi(r)."""

    rs: np.ndarray
    ratios: np.ndarray
    lambda_star: float
    argmin_r: float
    tail_increasing: bool

    @property
    def certified(self) -> bool:
        return self.lambda_star > 0.0


def rate_sweep(lyap: RadialLyapunov, spec: StableSpec, cond: DriftCondition,
               grid: np.ndarray | None = None,
               quad: QuadratureConfig | None = None) -> RateSweep:
    """Sweep -L psi / psi over a radial grid; the infimum is the numeric rate.

    Above L0 the ratio K2 r^(theta-1) psi'(r)/psi(r) is evaluated through the
    overflow-safe ratio.  ``tail_increasing`` records whether the ratio is
    rising at the grid end (the exponential tail of psi dominates beyond it,
    so the infimum over the unbounded tail is attained on the grid).
    """
    grid = default_radial_grid(cond.l0) if grid is None else np.asarray(grid, float)
    if len(grid) < 200 or grid.max() < 4.0 * cond.l0 or grid.min() <= 0.0:
        raise ValueError("grid must have >= 200 points on (0, R] with R >= 4 L0")
    ratios = np.empty(len(grid))
    for i, r in enumerate(grid):
        if r <= cond.l0:
            gen = distance_generator_bound(lyap, spec, cond, float(r), quad)
            ratios[i] = -gen / float(lyap.value(r))
        else:
            ratios[i] = (cond.k2 * r ** (cond.theta - 1.0)
                         * lyap.prime_over_value(float(r)))
    idx = int(np.argmin(ratios))
    return RateSweep(rs=grid, ratios=ratios, lambda_star=float(ratios[idx]),
                     argmin_r=float(grid[idx]),
                     tail_increasing=bool(ratios[-1] > ratios[-2] > ratios[-3]))


@dataclass(frozen=True)
class TailEnvelopeReport:
    """Positivity of g(r) = A cexp e^{cexp(r-2L0)}/2 + 2B(r-2L0) on [2L0, inf).

    g > 0 keeps psi' positive beyond the gluing point.  The unique stationary
    point r1 and the value there have closed forms; the bracket is
    1 - log(-4B/(A cexp^2)).
    """

    stationary_r: float
    value_at_stationary: float
    log_bracket: float
    grid_min: float
    ok: bool
    failure_r: float | None


def tail_envelope_positivity(lyap: RadialLyapunov,
                             grid: np.ndarray | None = None) -> TailEnvelopeReport:
    """Check the tail envelope g on [2 L0, 10 L0] and at its stationary point."""
    cexp = lyap.tail_exp
    two_l0 = lyap.switch_r
    if grid is None:
        grid = np.linspace(two_l0, 10.0 * lyap.l0, 400)
    grid = np.asarray(grid, float)
    dd = np.maximum(grid - two_l0, 0.0)
    with np.errstate(over="ignore"):
        g = 0.5 * lyap.A * cexp * np.exp(cexp * dd) + 2.0 * lyap.B * dd

    ratio = -4.0 * lyap.B / (lyap.A * cexp ** 2)
    if ratio >= 1.0:
        r1 = two_l0 + math.log(ratio) / cexp
        bracket = 1.0 - math.log(ratio)
        g_r1 = (-2.0 * lyap.B / cexp) * bracket
    else:
        # stationary point below the domain: g is increasing from g(2 L0)
        r1 = two_l0
        bracket = float("inf")
        g_r1 = 0.5 * lyap.A * cexp

    min_idx = int(np.nanargmin(g))
    ok = bool(g_r1 > 0.0) and bool(np.all(g > 0.0))
    return TailEnvelopeReport(
        stationary_r=float(r1), value_at_stationary=float(g_r1),
        log_bracket=float(bracket), grid_min=float(g[min_idx]), ok=ok,
        failure_r=None if ok else float(grid[min_idx]),
    )


# ---------------------------------------------------------------------------
# Certificate assembly
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ContractionCertificate:
    """Machine-checked contraction constants.

    ``lam`` = min(lambda1, lambda2) is the decay rate of E psi(r_t);
    ``c_p`` converts psi decay into a p-th moment bound
    E |X_t - Y_t|^p <= c_p e^(-lam t) |x - y| for |x - y| <= L0;
    ``c2_chain`` extends it across larger separations by chaining;
    ``t0`` bounds the synchronous hitting time of L0 (theta > 2 only);
    ``prefactor`` is the assembled constant of the distance bound

        W_p <= prefactor e^(-lam t / p) (r0^(1/p) v r0) / (1 + r0 1{t>1}),

    the divisor applying only for theta > 2.  ``provenance`` tags every
    constant as closed-form, numeric-infimum or assembled.
    """

    lam: float
    lambda1: float
    lambda2: float
    c_p: float
    c2_chain: float
    t0: float | None
    p: float
    prefactor: float
    theta: float
    provenance: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)

    def wp_bound(self, t, r0: float):
        """Certified Wasserstein bound at time(s) t from separation r0."""
        t = np.asarray(t, dtype=float)
        envelope = max(r0 ** (1.0 / self.p), r0)
        divisor = np.where((self.theta > 2.0) & (t > 1.0), 1.0 + r0, 1.0)
        out = self.prefactor * np.exp(-self.lam * t / self.p) * envelope / divisor
        return float(out) if out.ndim == 0 else out

    def to_record(self) -> str:
        """Serialize as flat `key = value # provenance` lines."""
        lines = ["# contraction certificate"]
        for key, val in self.inputs.items():
            lines.append(f"{key} = {val} # input")
        items = [
            ("lambda", self.lam), ("lambda1", self.lambda1),
            ("lambda2", self.lambda2), ("c_p", self.c_p),
            ("c2_chain", self.c2_chain), ("p", self.p),
            ("prefactor", self.prefactor), ("theta", self.theta),
        ]
        if self.t0 is not None:
            items.append(("t0", self.t0))
        for key, val in items:
            tag = self.provenance.get(key, "assembled")
            lines.append(f"{key} = {val:.17g} # {tag}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_record(cls, text: str) -> "ContractionCertificate":
        values: dict[str, float] = {}
        prov: dict[str, str] = {}
        inputs: dict[str, float] = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            body, _, tag = line.partition("#")
            key, _, val = body.partition("=")
            key, tag = key.strip(), tag.strip()
            if tag == "input":
                inputs[key] = float(val)
            else:
                values[key] = float(val)
                prov[key] = tag
        return cls(
            lam=values["lambda"], lambda1=values["lambda1"],
            lambda2=values["lambda2"], c_p=values["c_p"],
            c2_chain=values["c2_chain"], t0=values.get("t0"),
            p=values["p"], prefactor=values["prefactor"],
            theta=values["theta"], provenance=prov, inputs=inputs,
        )


def _sup_on_grid(fn, grid: np.ndarray) -> tuple[float, float]:
    vals = fn(grid)
    vals = np.where(np.isfinite(vals), vals, -np.inf)
    i = int(np.argmax(vals))
    # local refinement around the grid argmax
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, len(grid) - 1)]
    fine = np.linspace(lo, hi, 2001)
    fvals = fn(fine)
    fvals = np.where(np.isfinite(fvals), fvals, -np.inf)
    j = int(np.argmax(fvals))
    if fvals[j] >= vals[i]:
        return float(fvals[j]), float(fine[j])
    return float(vals[i]), float(grid[i])


def contraction_certificate(spec: StableSpec, cond: DriftCondition, p: float,
                            grid: np.ndarray | None = None,
                            quad: QuadratureConfig | None = None) -> ContractionCertificate:
    """Assemble the full contraction certificate for exponent ``p`` >= 1.

    lambda1 is the closed-form small-separation rate, lambda2 the numeric
    infimum of -L psi / psi over (L0, 10 L0] (the ratio is verified to be
    increasing at the grid end, where the exponential tail dominates), and
    lam = min of the two.  The moment constant c_p multiplies the suprema of
    r^p / psi(r) (numeric, finite by the exponential tail) and psi(r)/r on
    (0, L0] (attained at 0+, equal to psi'(0)).  The distance-bound
    prefactor is assembled case by case:

    - separations below L0: c_p^(1/p), with divisor absorption (1 + L0) when
      theta > 2;
    - above L0 via chaining: c2_chain = 2 c_p^(1/p) L0^(1/p - 1);
    - theta > 2, t beyond the hitting bound t0: (c_p L0)^(1/p) e^(lam t0 / p)
      against the numeric infimum of (u^(1/p) v u)/(1+u) over u > L0;
    - theta > 2, t in (1, t0]: the synchronous phase contracts pathwise like
      the power-law envelope R(t) = (K2 (theta-2) t)^(-1/(theta-2)), handled
      with a numeric supremum.
    """
    if p < 1.0:
        raise ValueError(f"p must be >= 1, got {p}")
    lyap = build_lyapunov(spec, cond)
    envelope = tail_envelope_positivity(lyap)
    if not envelope.ok:
        raise CertificateError("tail envelope positivity failed",
                               r=envelope.failure_r)

    lambda1 = small_distance_rate(lyap, spec, cond)
    grid = default_radial_grid(cond.l0) if grid is None else np.asarray(grid, float)
    above = grid[grid > cond.l0]
    ratios = np.array([cond.k2 * r ** (cond.theta - 1.0) * lyap.prime_over_value(float(r))
                       for r in above])
    i2 = int(np.argmin(ratios))
    lambda2 = float(ratios[i2])
    if lambda2 <= 0.0:
        raise CertificateError("numeric large-separation rate is not positive",
                               r=float(above[i2]))
    if not (ratios[-1] > ratios[-2]):
        raise CertificateError("contraction ratio not increasing at grid end",
                               r=float(above[-1]))
    lam = min(lambda1, lambda2)

    def moment_ratio(rs):
        rs = np.asarray(rs, float)
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            return rs ** p / lyap.value(rs)

    sup_moment, _ = _sup_on_grid(moment_ratio, grid)
    sup_near_zero = lyap.prime_at_zero  # psi concave on the core: psi(r) <= psi'(0) r
    c_p = sup_moment * sup_near_zero
    c2_chain = 2.0 * c_p ** (1.0 / p) * cond.l0 ** (1.0 / p - 1.0)

    prov = {
        "lambda1": "closed-form", "lambda2": "numeric-infimum",
        "lambda": "assembled", "c_p": "numeric-infimum",
        "c2_chain": "assembled", "p": "parameter", "theta": "parameter",
        "prefactor": "assembled",
    }

    def envelope_ratio(u):
        u = np.asarray(u, float)
        return np.maximum(u ** (1.0 / p), u) / (1.0 + u)

    pieces = [c_p ** (1.0 / p), c2_chain]
    t0 = None
    if cond.theta > 2.0:
        t0 = cond.l0 ** (2.0 - cond.theta) / (cond.k2 * (cond.theta - 2.0))
        prov["t0"] = "closed-form"
        pieces[0] = c_p ** (1.0 / p) * (1.0 + cond.l0)
        u_grid = np.geomspace(cond.l0, 1e6 * max(1.0, cond.l0), 4001)
        m_c = float(np.min(envelope_ratio(u_grid)))
        pieces.append((c_p * cond.l0) ** (1.0 / p) * math.exp(lam * t0 / p) / m_c)
        if t0 > 1.0:
            # synchronous-phase envelope for t in (1, t0]
            r_env = (cond.k2 * (cond.theta - 2.0)) ** (-1.0 / (cond.theta - 2.0))
            cap = max(cond.l0, r_env)

            def phase_sup(u):
                u = np.asarray(u, float)
                return (np.minimum(u, cap) * (1.0 + u)
                        / np.maximum(u ** (1.0 / p), u))

            sup_phase = float(np.max(phase_sup(u_grid)))
            pieces[-1] += math.exp(lam * t0 / p) * sup_phase
    prefactor = max(pieces)

    inputs = {"d": spec.d, "alpha": spec.alpha, "k1": cond.k1, "k2": cond.k2,
              "l0": cond.l0, "theta_in": cond.theta, "p_in": p}
    return ContractionCertificate(
        lam=lam, lambda1=lambda1, lambda2=lambda2, c_p=c_p,
        c2_chain=c2_chain, t0=t0, p=p, prefactor=prefactor,
        theta=cond.theta, provenance=prov, inputs=inputs,
    )
