"""Event-driven simulation of the reflection/synchronous coupling.

A coupled pair (X, Y) driven by the same stable noise evolves, before
merging, with jumps handled in three channels:

- reflection: when |x - y| <= L0 and the jump satisfies |z| <= a |x - y|,
  one component receives z and the other its mirror image across the
  hyperplane orthogonal to x - y (with the two assignments mixed half/half;
  they are equal in law because the restricted jump measure is mirror
  invariant);
- synchronous: every other jump is applied identically to both components,
  so it cancels in the separation;
- an optional finite-activity extra jump component, always synchronous.

Time stepping is jump-adapted: within frozen windows of length at most
``dt_max`` the jump clock runs at the compound-Poisson rate of jumps above a
truncation radius delta = max(delta_floor, eps_delta a r); drift is
integrated between events with classical fourth-order steps.  Jump activity
below delta is applied to both components as a common Gaussian kick with the
matched per-coordinate variance: it cancels in the separation (those jumps
would overwhelmingly be synchronous) while keeping the marginal law of each
component faithful for any truncation level.  The omitted reflected band
|z| <= min(delta, a r) slows contraction slightly and never fakes it; the
optional ``compensate_small`` scheme re-injects its separation variance as an
antithetic kick along the separation axis.

Pairs merge (and stick) once the separation falls below ``eps_couple``;
exact meeting has probability zero under discretized reflection, and the
jump intensity grows like r^(-alpha) as r -> 0, so a positive threshold
bounds the event budget at a quantifiable Lyapunov cost psi(eps_couple).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .drift_models import DriftCondition, DriftField
from .stable_noise import StableSpec, pareto_radius
from .streams import derive_stream

_CHUNK = 16384  # paths per derived stream; fixed so ensembles are reproducible
_DRIFT_SUBSTEP = 5e-3


class EventBudgetError(RuntimeError):
    """Total jump-event budget exceeded (diverging intensity guard)."""


class DriftBlowupError(RuntimeError):
    """Non-finite state encountered while integrating the drift."""


@dataclass(frozen=True)
class SchemeConfig:
    """Numerical parameters of the coupled simulation scheme.

    ``eps_delta`` truncates explicit jumps at the fraction eps_delta * a * r
    of the reflection band (never below the absolute floor ``delta_floor``);
    ``eps_couple`` is the merge threshold on the separation;
    ``compensate_small`` enables the antithetic variance compensation of the
    omitted reflected band; ``force_synchronous`` disables reflection
    entirely (every jump is applied to both components).
    """

    dt_max: float = 1e-2
    eps_delta: float = 1e-2
    eps_couple: float = 1e-6
    delta_floor: float = 2e-3
    compensate_small: bool = False
    force_synchronous: bool = False
    max_events: int = 2_000_000_000

    def __post_init__(self):
        if not 0.0 < self.eps_delta < 1.0:
            raise ValueError("eps_delta must lie in (0, 1)")
        if self.eps_couple <= 0.0 or self.dt_max <= 0.0 or self.delta_floor <= 0.0:
            raise ValueError("eps_couple, dt_max, delta_floor must be positive")


@dataclass(frozen=True)
class ExcessComponent:
    """Finite-activity extra jump component, applied synchronously.

    ``sampler(rng, n)`` must return n jump vectors of shape (n, d).
    """

    rate: float
    sampler: Callable[[np.random.Generator, int], np.ndarray]


@dataclass(frozen=True)
class CoupledState:
    t: float
    x: np.ndarray
    y: np.ndarray
    merged: bool

    def __post_init__(self):
        if self.merged and not np.array_equal(self.x, self.y):
            raise ValueError("a merged state must have x == y")


@dataclass(frozen=True)
class CoupledPath:
    """A single coupled trajectory recorded on a time grid."""

    times: np.ndarray          # (T,)
    xs: np.ndarray             # (T, d)
    ys: np.ndarray             # (T, d)
    merged: np.ndarray         # (T,) bool

    @property
    def r(self) -> np.ndarray:
        return np.linalg.norm(self.xs - self.ys, axis=1)

    def state(self, i: int) -> CoupledState:
        return CoupledState(t=float(self.times[i]), x=self.xs[i].copy(),
                            y=self.ys[i].copy(), merged=bool(self.merged[i]))

    def __len__(self) -> int:
        return len(self.times)


@dataclass(frozen=True)
class PathEnsemble:
    """Coupled trajectories of an ensemble, recorded on a common grid."""

    times: np.ndarray          # (T,)
    xs: np.ndarray             # (n, T, d)
    ys: np.ndarray             # (n, T, d)
    merged: np.ndarray         # (n, T) bool

    @property
    def n_paths(self) -> int:
        return self.xs.shape[0]

    @property
    def r(self) -> np.ndarray:
        return np.linalg.norm(self.xs - self.ys, axis=2)

    def path(self, i: int) -> CoupledPath:
        return CoupledPath(times=self.times, xs=self.xs[i], ys=self.ys[i],
                           merged=self.merged[i])


# ---------------------------------------------------------------------------
# Reflection map and single-jump coupling
# ---------------------------------------------------------------------------


def reflect(x: np.ndarray, y: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Mirror z across the hyperplane orthogonal to x - y; -z when x == y.

    An involution that preserves |z| and moves z only along x - y.
    Accepts single vectors (d,) or batches (n, d).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    if x.ndim == 1:
        e = x - y
        nrm2 = float(e @ e)
        if nrm2 == 0.0:
            return -z
        return z - (2.0 * float(e @ z) / nrm2) * e
    e = x - y
    nrm2 = np.einsum("ij,ij->i", e, e)
    safe = np.where(nrm2 > 0.0, nrm2, 1.0)
    proj = np.einsum("ij,ij->i", e, z) / safe
    out = z - 2.0 * proj[:, None] * e
    return np.where((nrm2 > 0.0)[:, None], out, -z)


def coupled_jump(x: np.ndarray, y: np.ndarray, z: np.ndarray, channel: str,
                 a: float, l0: float, rng: np.random.Generator,
                 merged: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Increments (dx, dy) caused by a single jump z.

    The stable channel reflects when the pair is within L0 and |z| <= a r,
    picking uniformly between the two mirror assignments (z, phi(z)) and
    (phi(z), z); everything else, including the excess channel and merged
    pairs, is synchronous.
    """
    if channel not in ("stable", "excess"):
        raise ValueError(f"unknown channel {channel!r}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    r = float(np.linalg.norm(x - y))
    if (channel != "stable" or merged or r > l0
            or float(np.linalg.norm(z)) > a * r):
        return z.copy(), z.copy()
    phi = reflect(x, y, z)
    if rng.random() < 0.5:
        return z.copy(), phi
    return phi, z.copy()


# ---------------------------------------------------------------------------
# Drift integration
# ---------------------------------------------------------------------------


_STABILITY_MARGIN = 0.2  # |b'| h kept below this for the explicit steps


def _rk4_one(field: DriftField, x: np.ndarray, h: np.ndarray,
             k1: np.ndarray | None = None) -> np.ndarray:
    """One classical fourth-order step with per-row step h; x is (n, d)."""
    h = h[:, None]
    if k1 is None:
        k1 = field(x)
    k2 = field(x + 0.5 * h * k1)
    k3 = field(x + 0.5 * h * k2)
    k4 = field(x + h * k3)
    return x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _drift_flow(field: DriftField, x: np.ndarray, h: np.ndarray,
                substep: float = _DRIFT_SUBSTEP) -> np.ndarray:
    """Integrate dx = b(x) dt over per-row horizons h with stable steps.

    Explicit steps are kept inside the stability region by bounding the step
    against the local scale |b(x)| / (1 + |x|); superlinear drifts hit by a
    heavy-tailed jump are therefore contracted back instead of overflowing.
    """
    x = x.copy()
    remaining = np.asarray(h, dtype=float).copy()
    # non-finite intermediates are possible for pathological fields and are
    # caught by the caller's guard; keep the warnings quiet here
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(100_000):
            act = remaining > 0.0
            if not act.any():
                return x
            xa = x[act]
            k1 = field(xa)
            scale = (np.linalg.norm(k1, axis=1)
                     / (1.0 + np.linalg.norm(xa, axis=1)))
            if not np.isfinite(scale).all():
                raise DriftBlowupError("non-finite drift value encountered")
            cap = _STABILITY_MARGIN / np.maximum(scale,
                                                 _STABILITY_MARGIN / substep)
            step = np.minimum(remaining[act], cap)
            x[act] = _rk4_one(field, xa, step, k1)
            remaining[act] = remaining[act] - step
    raise DriftBlowupError("drift flow did not finish; field too stiff")


def step_drift(x: np.ndarray, field: DriftField, dt: float,
               tol: float = 1e-10, max_doublings: int = 22) -> np.ndarray:
    """Integrate dx = b(x) dt over ``dt`` to a local error below tol (1+|x|).

    Stability-capped fourth-order steps, halved until two successive
    resolutions agree; raises on step-size underflow for stiff drifts.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xb = x[None, :] if single else x
    h = np.full(xb.shape[0], float(dt))

    substep = min(_DRIFT_SUBSTEP, dt)
    prev = _drift_flow(field, xb, h, substep)
    for _ in range(max_doublings):
        substep /= 2.0
        cur = _drift_flow(field, xb, h, substep)
        if np.isfinite(cur).all() and np.isfinite(prev).all():
            err = np.max(np.abs(cur - prev) / (1.0 + np.abs(cur)))
            if err <= tol:
                return cur[0] if single else cur
        prev = cur
    raise DriftBlowupError(
        f"drift step of {dt:g} did not converge below tol={tol:g}; "
        f"the field is too stiff at this step floor"
    )


# ---------------------------------------------------------------------------
# Hitting-time bound for the synchronous phase
# ---------------------------------------------------------------------------


def hitting_time_bound(r0: float, cond: DriftCondition) -> tuple[float, float]:
    """Time bound for the synchronous separation to fall from r0 to L0.

    Under dr <= -K2 r^(theta-1), theta > 2, the crossing happens by
    (r0^(2-theta) - L0^(2-theta)) / (K2 (2-theta)); the r0-free cap is
    t0 = L0^(2-theta) / (K2 (theta-2)).  Returns (bound, t0).
    """
    if cond.theta <= 2.0:
        raise ValueError("hitting bound requires theta > 2")
    if r0 <= cond.l0:
        raise ValueError("need r0 > L0")
    bound = (r0 ** (2.0 - cond.theta) - cond.l0 ** (2.0 - cond.theta)) / (
        cond.k2 * (2.0 - cond.theta))
    t0 = cond.l0 ** (2.0 - cond.theta) / (cond.k2 * (cond.theta - 2.0))
    return float(bound), float(t0)


# ---------------------------------------------------------------------------
# Ensemble simulation
# ---------------------------------------------------------------------------


def _chunk_spans(n_paths: int) -> list[tuple[int, int]]:
    return [(lo, min(lo + _CHUNK, n_paths)) for lo in range(0, n_paths, _CHUNK)]


def _simulate_chunk(x0: np.ndarray, y0: np.ndarray, field: DriftField,
                    spec: StableSpec, a: float, l0: float, cfg: SchemeConfig,
                    record_grid: np.ndarray, rng: np.random.Generator,
                    excess: ExcessComponent | None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n, d = x0.shape
    X = x0.copy()
    Y = y0.copy()
    r0 = np.linalg.norm(X - Y, axis=1)
    merged = r0 <= cfg.eps_couple
    Y[merged] = X[merged]

    T = len(record_grid)
    xs = np.empty((n, T, d))
    ys = np.empty((n, T, d))
    mg = np.empty((n, T), dtype=bool)
    rec = 0
    t = 0.0
    if record_grid[0] <= 1e-15:
        xs[:, 0], ys[:, 0], mg[:, 0] = X, Y, merged
        rec = 1

    rate_coeff = spec.c_dalpha * spec.omega_d / spec.alpha
    var_coeff = spec.c_dalpha * spec.omega_d / (spec.d * (2.0 - spec.alpha))
    events = 0

    while rec < T:
        target = float(record_grid[rec])
        while t < target - 1e-12:
            h = min(cfg.dt_max, target - t)
            r = np.linalg.norm(X - Y, axis=1)
            if cfg.force_synchronous:
                delta = np.full(n, cfg.delta_floor)
            else:
                reflecting = (~merged) & (r <= l0)
                delta = np.where(reflecting,
                                 np.maximum(cfg.delta_floor, cfg.eps_delta * a * r),
                                 cfg.delta_floor)
            lam = rate_coeff * delta ** (-spec.alpha)
            var_coord = var_coeff * delta ** (2.0 - spec.alpha)

            t_path = np.zeros(n)
            next_jump = rng.standard_exponential(n) / lam
            while True:
                active = next_jump < h
                if not active.any():
                    break
                idx = np.nonzero(active)[0]
                events += idx.size
                if events > cfg.max_events:
                    raise EventBudgetError(
                        f"event budget {cfg.max_events} exceeded at t={t:g} "
                        f"({idx.size} active paths)"
                    )
                dt = next_jump[idx] - t_path[idx]
                X[idx] = _drift_flow(field, X[idx], dt)
                um = idx[~merged[idx]]
                if um.size:
                    Y[um] = _drift_flow(field, Y[um], dt[~merged[idx]])
                Y[idx[merged[idx]]] = X[idx[merged[idx]]]
                t_path[idx] = next_jump[idx]

                radius = pareto_radius(delta[idx], spec.alpha,
                                       1.0 - rng.random(idx.size))
                direc = rng.standard_normal((idx.size, d))
                direc /= np.linalg.norm(direc, axis=1, keepdims=True)
                z = radius[:, None] * direc

                dx = z
                dy = z.copy()
                if not cfg.force_synchronous:
                    diff = X[idx] - Y[idx]
                    rcur = np.linalg.norm(diff, axis=1)
                    do_refl = (~merged[idx]) & (rcur <= l0) & (radius <= a * rcur)
                    if do_refl.any():
                        safe = np.where(rcur > 0.0, rcur, 1.0)
                        e = diff / safe[:, None]
                        zdot = np.einsum("ij,ij->i", z, e)
                        phi = z - 2.0 * zdot[:, None] * e
                        swap = rng.random(idx.size) < 0.5
                        keep = do_refl & ~swap
                        sw = do_refl & swap
                        dy[keep] = phi[keep]
                        dx[sw] = phi[sw]
                        # dy keeps z on the swapped branch
                X[idx] += dx
                Y[idx] += dy

                rn = np.linalg.norm(X[idx] - Y[idx], axis=1)
                newly = (~merged[idx]) & (rn <= cfg.eps_couple)
                just = idx[newly]
                Y[just] = X[just]
                merged[just] = True
                next_jump[idx] = next_jump[idx] + rng.standard_exponential(idx.size) / lam[idx]

            # drift to the window end
            dt = h - t_path
            X = _drift_flow(field, X, dt)
            um = ~merged
            if um.any():
                Y[um] = _drift_flow(field, Y[um], dt[um])
            Y[merged] = X[merged]

            # common Gaussian kick standing in for sub-delta jump activity;
            # identical on both components, so the separation is untouched
            g = rng.standard_normal((n, d)) * np.sqrt(var_coord * h)[:, None]
            X += g
            Y[um] += g[um]
            Y[merged] = X[merged]

            if cfg.compensate_small and not cfg.force_synchronous:
                band = np.minimum(delta, a * r)
                active_band = (~merged) & (r <= l0) & (band > 0.0)
                if active_band.any():
                    v_band = var_coeff * band ** (2.0 - spec.alpha)
                    gk = rng.standard_normal(n) * np.sqrt(v_band * h)
                    diff = X - Y
                    rr = np.linalg.norm(diff, axis=1)
                    ok = active_band & (rr > 0.0)
                    e = diff[ok] / rr[ok][:, None]
                    kick = gk[ok][:, None] * e
                    X[ok] += kick
                    Y[ok] -= kick

            if excess is not None and excess.rate > 0.0:
                counts = rng.poisson(excess.rate * h, n)
                total = int(counts.sum())
                if total:
                    jumps = np.asarray(excess.sampler(rng, total), dtype=float)
                    sums = np.zeros((n, d))
                    np.add.at(sums, np.repeat(np.arange(n), counts), jumps)
                    X += sums
                    Y[um] += sums[um]
                    Y[merged] = X[merged]

            # drift or kicks may have crossed the merge threshold
            rn = np.linalg.norm(X - Y, axis=1)
            newly = (~merged) & (rn <= cfg.eps_couple)
            Y[newly] = X[newly]
            merged[newly] = True

            if not (np.isfinite(X).all() and np.isfinite(Y).all()):
                bad = int(np.nonzero(~np.isfinite(X).all(axis=1)
                                     | ~np.isfinite(Y).all(axis=1))[0][0])
                raise DriftBlowupError(f"non-finite state on path {bad} at t={t + h:g}")
            t += h

        xs[:, rec], ys[:, rec], mg[:, rec] = X, Y, merged
        rec += 1
    return xs, ys, mg


def _resolve_band(lyap) -> tuple[float, float]:
    if lyap is None:
        return 0.0, float("inf")
    return float(lyap.a), float(lyap.l0)


def simulate_coupled_ensemble(x0: np.ndarray, y0: np.ndarray, field: DriftField,
                              spec: StableSpec, lyap, cfg: SchemeConfig,
                              horizon: float, record_grid: np.ndarray,
                              n_paths: int, seed: int,
                              excess: ExcessComponent | None = None) -> PathEnsemble:
    """Simulate ``n_paths`` independent coupled pairs from (x0, y0).

    Paths are processed in fixed-size chunks, one derived stream per chunk,
    so the output depends only on (inputs, seed).  ``lyap`` supplies the
    reflection band (a, L0); pass None to force synchronous coupling.
    """
    record_grid = np.asarray(record_grid, dtype=float)
    if record_grid.ndim != 1 or len(record_grid) == 0:
        raise ValueError("record_grid must be a nonempty 1-d array")
    if record_grid.min() < 0.0 or record_grid.max() > horizon + 1e-12:
        raise ValueError("record_grid must lie within [0, horizon]")
    if np.any(np.diff(record_grid) <= 0.0):
        raise ValueError("record_grid must be strictly increasing")
    a, l0 = _resolve_band(lyap)
    if lyap is None and not cfg.force_synchronous:
        cfg = replace(cfg, force_synchronous=True)
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))

    chunks = []
    for ci, (lo, hi) in enumerate(_chunk_spans(n_paths)):
        m = hi - lo
        rng = derive_stream(seed, ci)
        chunk = _simulate_chunk(
            np.tile(x0, (m, 1)), np.tile(y0, (m, 1)), field, spec, a, l0,
            cfg, record_grid, rng, excess,
        )
        chunks.append(chunk)
    xs = np.concatenate([c[0] for c in chunks], axis=0)
    ys = np.concatenate([c[1] for c in chunks], axis=0)
    mg = np.concatenate([c[2] for c in chunks], axis=0)
    return PathEnsemble(times=record_grid.copy(), xs=xs, ys=ys, merged=mg)


def simulate_coupled_path(x0, y0, field: DriftField, spec: StableSpec, lyap,
                          cfg: SchemeConfig, horizon: float, record_grid,
                          rng: np.random.Generator,
                          excess: ExcessComponent | None = None) -> CoupledPath:
    """Simulate one coupled pair; the single-path form of the ensemble loop."""
    record_grid = np.asarray(record_grid, dtype=float)
    a, l0 = _resolve_band(lyap)
    if lyap is None and not cfg.force_synchronous:
        cfg = replace(cfg, force_synchronous=True)
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    xs, ys, mg = _simulate_chunk(
        x0[None, :], y0[None, :], field, spec, a, l0, cfg, record_grid, rng,
        excess,
    )
    return CoupledPath(times=record_grid.copy(), xs=xs[0], ys=ys[0], merged=mg[0])


def simulate_marginal_ensemble(x0, field: DriftField, spec: StableSpec,
                               cfg: SchemeConfig, horizon: float, record_grid,
                               n_paths: int, seed: int,
                               excess: ExcessComponent | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Uncoupled ensemble of the single SDE, same scheme, no coupling machinery.

    Realized as pairs merged from the start (Y tracks X exactly); returns
    (times, xs) with xs of shape (n, T, d).
    """
    ens = simulate_coupled_ensemble(x0, x0, field, spec, None, cfg, horizon,
                                    record_grid, n_paths, seed, excess)
    return ens.times, ens.xs


@dataclass(frozen=True)
class DecaySeries:
    """Ensemble mean of psi(r_t) with CLT standard errors."""

    times: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    n_paths: int


def lyapunov_decay_series(ensemble: PathEnsemble, lyap) -> DecaySeries:
    """Mean and standard error of psi(r_t) over the ensemble at each grid time.

    Merged pairs contribute psi(0) = 0 exactly.
    """
    r = ensemble.r
    vals = np.where(ensemble.merged, 0.0, lyap.value(np.maximum(r, 0.0)))
    mean = vals.mean(axis=0)
    n = vals.shape[0]
    stderr = vals.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros_like(mean)
    return DecaySeries(times=ensemble.times.copy(), mean=mean, stderr=stderr,
                       n_paths=n)


# ---------------------------------------------------------------------------
# CSV export (stable schemas)
# ---------------------------------------------------------------------------


def write_paths_csv(path, ensemble: PathEnsemble, lyap=None) -> None:
    """Write the per-path series: path_id, t, r, psi_r, merged.

    ``psi_r`` is nan when no Lyapunov function is supplied (synchronous runs).
    """
    r = ensemble.r
    if lyap is not None:
        psi_r = np.where(ensemble.merged, 0.0, lyap.value(r))
    else:
        psi_r = np.full_like(r, np.nan)
    with open(path, "w") as fh:
        fh.write("path_id,t,r,psi_r,merged\n")
        for i in range(ensemble.n_paths):
            for k, t in enumerate(ensemble.times):
                fh.write(f"{i},{t:.17g},{r[i, k]:.17g},{psi_r[i, k]:.17g},"
                         f"{int(ensemble.merged[i, k])}\n")


def write_positions_csv(path, ensemble: PathEnsemble) -> None:
    """Write full positions: path_id, t, x0..x{d-1}, y0..y{d-1}, merged."""
    d = ensemble.xs.shape[2]
    cols = (["path_id", "t"] + [f"x{j}" for j in range(d)]
            + [f"y{j}" for j in range(d)] + ["merged"])
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for i in range(ensemble.n_paths):
            for k, t in enumerate(ensemble.times):
                xv = ",".join(f"{v:.17g}" for v in ensemble.xs[i, k])
                yv = ",".join(f"{v:.17g}" for v in ensemble.ys[i, k])
                fh.write(f"{i},{t:.17g},{xv},{yv},{int(ensemble.merged[i, k])}\n")


def read_positions_csv(path) -> PathEnsemble:
    """Load an ensemble written by :func:`write_positions_csv`."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        d = sum(1 for c in header if c.startswith("x"))
        raw = np.loadtxt(fh, delimiter=",", ndmin=2)
    ids = raw[:, 0].astype(int)
    n = ids.max() + 1
    T = (ids == 0).sum()
    times = raw[:T, 1].copy()
    xs = raw[:, 2:2 + d].reshape(n, T, d)
    ys = raw[:, 2 + d:2 + 2 * d].reshape(n, T, d)
    merged = raw[:, -1].reshape(n, T).astype(bool)
    return PathEnsemble(times=times, xs=xs, ys=ys, merged=merged)
