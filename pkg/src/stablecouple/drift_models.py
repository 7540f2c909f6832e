"""Drift fields and the empirical two-regime dissipativity verifier.

A drift is admissible when <b(x)-b(y), x-y> is at most K1 |x-y|^2 for
|x-y| <= L0 and at most -K2 |x-y|^theta beyond L0.  The condition is checked
statistically on random probe pairs (the drift is an opaque callable), with a
stratified band around |x-y| = L0 to stress the regime boundary.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .stable_noise import StableSpec


@dataclass(frozen=True)
class DriftCondition:
    """Constants (K1, K2, L0, theta) of the two-regime drift condition."""

    k1: float
    k2: float
    l0: float
    theta: float

    def __post_init__(self):
        if self.k1 <= 0 or self.k2 <= 0 or self.l0 <= 0:
            raise ValueError("k1, k2, l0 must be positive")
        if self.theta < 2.0:
            raise ValueError(f"theta must be >= 2, got {self.theta}")


@dataclass(frozen=True)
class DriftField:
    """A drift b: R^d -> R^d with an optional claimed dissipativity condition.

    ``evaluate`` accepts a single point of shape (d,) or a batch (n, d) and
    returns the same shape.
    """

    evaluate: Callable[[np.ndarray], np.ndarray]
    d: int
    label: str
    claimed_condition: DriftCondition | None = None

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.evaluate(np.asarray(x, dtype=float))


def linear_drift(kappa: float, d: int) -> DriftField:
    """b(x) = -kappa x; uniformly dissipative with rate kappa."""
    if kappa <= 0:
        raise ValueError(f"kappa must be positive, got {kappa}")
    return DriftField(evaluate=lambda x: -kappa * x, d=int(d),
                      label=f"linear(kappa={kappa})",
                      claimed_condition=DriftCondition(k1=kappa, k2=kappa,
                                                       l0=1.0, theta=2.0))


def monomial_drift(c: float, q: float, d: int,
                   claimed: DriftCondition | None = None) -> DriftField:
    """b(x) = -c |x|^q x for c > 0, q >= 0."""
    if c <= 0 or q < 0:
        raise ValueError("need c > 0 and q >= 0")

    def b_any(x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            r = np.linalg.norm(x)
            return -c * r ** q * x
        r = np.linalg.norm(x, axis=1, keepdims=True)
        return -c * r ** q * x

    return DriftField(evaluate=b_any, d=int(d), label=f"monomial(c={c},q={q})",
                      claimed_condition=claimed)


def power_potential_drift(beta: float, d: int, k1: float = 1.0,
                          l0: float = 1.0) -> DriftField:
    """Gradient drift of the super-convex potential -|x|^(2 beta), beta > 1.

    b(x) = -2 beta |x|^(2 beta - 2) x.  Satisfies
    <b(x)-b(y), x-y> <= -beta 2^(4 - 3 beta) |x-y|^(2 beta) everywhere, so the
    two-regime condition holds with K2 = beta 2^(4-3beta), theta = 2 beta and
    any positive K1, L0 (defaults 1; shrink them to satisfy the small-alpha
    gate when needed).
    """
    if beta <= 1.0:
        raise ValueError(f"beta must exceed 1, got {beta}")
    cond = DriftCondition(k1=k1, k2=beta * 2.0 ** (4.0 - 3.0 * beta),
                          l0=l0, theta=2.0 * beta)
    field = monomial_drift(2.0 * beta, 2.0 * beta - 2.0, d, claimed=cond)
    return DriftField(evaluate=field.evaluate, d=int(d),
                      label=f"power_potential(beta={beta})",
                      claimed_condition=cond)


def drift_from_label(label: str, d: int, **params) -> DriftField:
    """Resolve a drift by registry label.

    Labels: ``linear`` (kappa), ``power_potential`` (beta, optional k1/l0),
    ``monomial`` (c, q).
    """
    if label == "linear":
        return linear_drift(params.get("kappa", 1.0), d)
    if label == "power_potential":
        return power_potential_drift(params.get("beta", 1.5), d,
                                     k1=params.get("k1", 1.0),
                                     l0=params.get("l0", 1.0))
    if label == "monomial":
        return monomial_drift(params.get("c", 1.0), params.get("q", 1.0), d)
    raise ValueError(f"unknown drift label {label!r}")


@dataclass(frozen=True)
class DissipativityReport:
    n_probes: int
    violations: int
    worst_margin: float
    witness_x: np.ndarray | None
    witness_y: np.ndarray | None

    @property
    def ok(self) -> bool:
        return self.violations == 0


def _uniform_ball(d: int, n: int, radius: float, rng: np.random.Generator) -> np.ndarray:
    g = rng.standard_normal((n, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return radius * (rng.random(n) ** (1.0 / d))[:, None] * g


def verify_dissipativity(field: DriftField, cond: DriftCondition,
                         n_probes: int, radius: float,
                         rng: np.random.Generator,
                         band_fraction: float = 0.2) -> DissipativityReport:
    """Probe the two-regime condition on random pairs in a ball.

    A ``band_fraction`` share of the probes is stratified so that
    |x - y| lies in [0.9 L0, 1.1 L0], stressing the regime switch.  A pair is
    a violation when <b(x)-b(y), x-y> exceeds the regime bound by more than a
    relative rounding tolerance; the report carries the worst margin
    (positive = violated) and the witnessing pair.
    """
    if n_probes < 1 or radius <= 0:
        raise ValueError("need n_probes >= 1 and radius > 0")
    d = field.d
    n_band = int(band_fraction * n_probes)
    n_unif = n_probes - n_band

    xs = _uniform_ball(d, n_unif, radius, rng)
    ys = _uniform_ball(d, n_unif, radius, rng)
    if n_band > 0:
        xb = _uniform_ball(d, n_band, radius, rng)
        u = rng.standard_normal((n_band, d))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        sep = cond.l0 * rng.uniform(0.9, 1.1, n_band)
        yb = xb + sep[:, None] * u
        xs = np.vstack([xs, xb])
        ys = np.vstack([ys, yb])

    diff = xs - ys
    r = np.linalg.norm(diff, axis=1)
    keep = r > 0
    xs, ys, diff, r = xs[keep], ys[keep], diff[keep], r[keep]

    lhs = np.einsum("ij,ij->i", field(xs) - field(ys), diff)
    rhs = np.where(r <= cond.l0, cond.k1 * r ** 2, -cond.k2 * r ** cond.theta)
    margin = lhs - rhs
    tol = 1e-12 * (1.0 + np.abs(lhs) + np.abs(rhs))
    bad = margin > tol

    worst = int(np.argmax(margin))
    return DissipativityReport(
        n_probes=len(r),
        violations=int(bad.sum()),
        worst_margin=float(margin[worst]),
        witness_x=xs[worst].copy(),
        witness_y=ys[worst].copy(),
    )


@dataclass(frozen=True)
class GateResult:
    """Outcome of the small-alpha admissibility gate."""

    passed: bool
    margin: float


def check_small_alpha_gate(spec: StableSpec, cond: DriftCondition) -> GateResult:
    """Check the small-alpha condition required for alpha in (0, 1].

    Evaluates alpha c_dalpha omega_d 3^(alpha-1) / (8 (2-alpha) d)
    minus K1 L0^alpha.  For alpha in (1, 2) the gate is vacuous and the
    margin infinite.
    """
    a = spec.alpha
    if a > 1.0:
        return GateResult(passed=True, margin=float("inf"))
    lhs = (a * spec.c_dalpha * spec.omega_d * 3.0 ** (a - 1.0)
           / (8.0 * (2.0 - a) * spec.d))
    margin = lhs - cond.k1 * cond.l0 ** a
    return GateResult(passed=bool(margin > 0.0), margin=float(margin))
