"""Reflection algebra, single jumps, drift steps, coupled simulation."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from stablecouple.coupling_engine import (
    CoupledState,
    DriftBlowupError,
    EventBudgetError,
    ExcessComponent,
    SchemeConfig,
    coupled_jump,
    hitting_time_bound,
    lyapunov_decay_series,
    read_positions_csv,
    reflect,
    simulate_coupled_ensemble,
    simulate_coupled_path,
    simulate_marginal_ensemble,
    step_drift,
    write_paths_csv,
    write_positions_csv,
)
from stablecouple.drift_models import (
    DriftCondition,
    DriftField,
    linear_drift,
    monomial_drift,
    power_potential_drift,
)
from stablecouple.lyapunov import build_lyapunov
from stablecouple.stable_noise import isotropic_stable
from stablecouple.streams import derive_stream


def rng_at(index: int) -> np.random.Generator:
    return derive_stream(424242, index)


# ------------------------------- reflection ----------------------------------


def test_reflect_examples():
    x, y = np.array([1.0, 0.0]), np.array([0.0, 0.0])
    assert np.allclose(reflect(x, y, np.array([0.0, 1.0])), [0.0, 1.0])
    assert np.allclose(reflect(x, y, np.array([1.0, 0.0])), [-1.0, 0.0])
    z = np.array([2.0, -3.0])
    assert np.allclose(reflect(x, x, z), -z)


finite_vec = arrays(np.float64, 3, elements=st.floats(-1e3, 1e3))


@settings(max_examples=200, deadline=None)
@given(x=finite_vec, y=finite_vec, z=finite_vec)
def test_reflect_properties(x, y, z):
    phi = reflect(x, y, z)
    # involution
    assert np.allclose(reflect(x, y, phi), z, atol=1e-9)
    # isometry
    assert np.linalg.norm(phi) == pytest.approx(np.linalg.norm(z), rel=1e-12,
                                                abs=1e-12)
    e = x - y
    # z + phi(z) orthogonal to x - y; z - phi(z) parallel to it
    assert abs(float((z + phi) @ e)) <= 1e-9 * (1.0 + np.linalg.norm(z)) * (
        1.0 + np.linalg.norm(e))
    diff = z - phi
    cross = np.cross(diff, e) if len(e) == 3 else None
    if cross is not None:
        assert np.linalg.norm(cross) <= 1e-6 * (1.0 + np.linalg.norm(diff)) * (
            1.0 + np.linalg.norm(e))


def test_reflect_batched_matches_loop():
    rng = rng_at(0)
    xs = rng.standard_normal((40, 3))
    ys = rng.standard_normal((40, 3))
    zs = rng.standard_normal((40, 3))
    batch = reflect(xs, ys, zs)
    for i in range(40):
        assert np.allclose(batch[i], reflect(xs[i], ys[i], zs[i]), atol=1e-12)


# ------------------------------ coupled jump ---------------------------------


def test_coupled_jump_synchronous_when_large_z():
    x, y = np.array([0.3, 0.0]), np.array([0.0, 0.0])
    z = np.array([1.0, 0.0])  # |z| > a |x-y|
    dx, dy = coupled_jump(x, y, z, "stable", a=0.25, l0=1.0, rng=rng_at(1))
    assert np.allclose(dx, z) and np.allclose(dy, z)


def test_coupled_jump_synchronous_when_far_apart():
    x, y = np.array([3.0, 0.0]), np.array([0.0, 0.0])
    z = np.array([0.01, 0.0])
    dx, dy = coupled_jump(x, y, z, "stable", a=0.25, l0=1.0, rng=rng_at(2))
    assert np.allclose(dx, z) and np.allclose(dy, z)


def test_coupled_jump_excess_always_synchronous():
    x, y = np.array([0.3, 0.0]), np.array([0.0, 0.0])
    z = np.array([0.01, 0.0])
    dx, dy = coupled_jump(x, y, z, "excess", a=0.25, l0=1.0, rng=rng_at(3))
    assert np.allclose(dx, z) and np.allclose(dy, z)


def test_coupled_jump_distance_algebra():
    # reflected branch moves the separation to |r + 2 s <e, z>| with the
    # branch sign s = +-1; oracle is the direct vector computation
    rng = rng_at(4)
    for _ in range(200):
        x = rng.standard_normal(3)
        y = rng.standard_normal(3)
        r = np.linalg.norm(x - y)
        if r == 0.0 or r > 1.0:
            continue
        e = (x - y) / r
        z = 0.2 * r * rng.standard_normal(3)
        z *= min(1.0, 0.45 * r / np.linalg.norm(z))
        dx, dy = coupled_jump(x, y, z, "stable", a=0.5, l0=1.0, rng=rng)
        r_new = np.linalg.norm(x + dx - y - dy)
        zdot = float(e @ z)
        assert (r_new == pytest.approx(abs(r + 2 * zdot), rel=1e-9, abs=1e-12)
                or r_new == pytest.approx(abs(r - 2 * zdot), rel=1e-9, abs=1e-12))


def test_coupled_jump_rejects_bad_channel():
    with pytest.raises(ValueError):
        coupled_jump(np.zeros(1), np.zeros(1), np.zeros(1), "gamma", 0.25, 1.0,
                     rng_at(5))


def test_coupled_jump_half_branch_mixing():
    # both assignments occur with about equal frequency
    x, y = np.array([0.5]), np.array([0.0])
    z = np.array([0.05])
    rng = rng_at(6)
    firsts = 0
    n = 4000
    for _ in range(n):
        dx, _ = coupled_jump(x, y, z, "stable", a=0.5, l0=1.0, rng=rng)
        firsts += bool(np.allclose(dx, z))
    assert abs(firsts / n - 0.5) < 3.0 * math.sqrt(0.25 / n)


# -------------------------------- drift steps --------------------------------


def test_step_drift_linear_exact():
    field = linear_drift(1.0, 1)
    x = step_drift(np.array([1.0]), field, 2.0)
    assert x[0] == pytest.approx(math.exp(-2.0), rel=1e-9)


def test_step_drift_zero_field():
    field = DriftField(evaluate=lambda x: np.zeros_like(x), d=2, label="null")
    x = step_drift(np.array([1.0, -2.0]), field, 0.7)
    assert np.allclose(x, [1.0, -2.0])


def test_step_drift_riccati():
    field = power_potential_drift(1.5, 1)
    x = step_drift(np.array([1.0]), field, 0.1)
    assert x[0] == pytest.approx(1.0 / 1.3, rel=1e-8)


def test_step_drift_rejects_bad_dt():
    field = linear_drift(1.0, 1)
    with pytest.raises(ValueError):
        step_drift(np.array([1.0]), field, 0.0)


def test_step_drift_stable_far_from_origin():
    # a heavy-tailed jump can leave a path far out where the superlinear
    # drift is stiff; the stability-capped steps must contract it back
    # (here onto the Riccati collapse 1/(3 t)) instead of overflowing
    field = power_potential_drift(1.5, 1)
    x = step_drift(np.array([1e8]), field, 0.01)
    assert np.isfinite(x).all()
    assert x[0] == pytest.approx(1.0 / (3.0 * 0.01), rel=1e-4)


def test_heavy_tail_simulation_stays_finite():
    # regression: alpha = 0.9 routinely throws paths far out; the run must
    # finish without tripping the non-finite guard
    spec = isotropic_stable(1, 0.9)
    field = power_potential_drift(1.5, 1, k1=0.125, l0=0.125)
    lyap = build_lyapunov(spec, field.claimed_condition)
    grid = np.linspace(0.0, 1.0, 5)
    ens = simulate_coupled_ensemble(np.array([0.25]), np.array([-0.25]), field,
                                    spec, lyap, SchemeConfig(), 1.0, grid, 64,
                                    seed=5)
    assert np.isfinite(ens.xs).all() and np.isfinite(ens.ys).all()


# ------------------------------ hitting bound --------------------------------


def test_hitting_time_bound_hand_values():
    cond = DriftCondition(k1=1.0, k2=1.0, l0=1.0, theta=3.0)
    bound, t0 = hitting_time_bound(2.0, cond)
    assert bound == pytest.approx(0.5, rel=1e-12)
    assert t0 == pytest.approx(1.0, rel=1e-12)


def test_hitting_time_bound_limits():
    cond = DriftCondition(k1=1.0, k2=1.0, l0=1.0, theta=3.0)
    near, _ = hitting_time_bound(1.0 + 1e-9, cond)
    assert near == pytest.approx(0.0, abs=1e-8)
    far, t0 = hitting_time_bound(1e9, cond)
    assert far == pytest.approx(t0, rel=1e-8)


def test_hitting_time_bound_domain():
    cond2 = DriftCondition(k1=1.0, k2=1.0, l0=1.0, theta=2.0)
    with pytest.raises(ValueError):
        hitting_time_bound(2.0, cond2)
    cond3 = DriftCondition(k1=1.0, k2=1.0, l0=1.0, theta=3.0)
    with pytest.raises(ValueError):
        hitting_time_bound(0.5, cond3)


# ----------------------------- coupled simulation ----------------------------


def _example_model():
    spec = isotropic_stable(1, 1.5)
    field = power_potential_drift(1.5, 1)
    cond = field.claimed_condition
    lyap = build_lyapunov(spec, cond)
    return spec, field, cond, lyap


def test_equal_start_is_merged_immediately():
    spec, field, _, lyap = _example_model()
    grid = np.linspace(0.0, 0.5, 6)
    path = simulate_coupled_path(np.array([0.4]), np.array([0.4]), field, spec,
                                 lyap, SchemeConfig(), 0.5, grid, rng_at(7))
    assert path.merged.all()
    assert np.allclose(path.xs, path.ys)


def test_merge_is_absorbing():
    spec, field, _, lyap = _example_model()
    cfg = SchemeConfig(eps_couple=5e-2)  # generous threshold to force merges
    grid = np.linspace(0.0, 3.0, 31)
    ens = simulate_coupled_ensemble(np.array([0.1]), np.array([-0.1]), field,
                                    spec, lyap, cfg, 3.0, grid, 128, seed=11)
    merged = ens.merged
    for i in range(merged.shape[0]):
        idx = np.nonzero(merged[i])[0]
        if idx.size:
            assert merged[i, idx[0]:].all()
            assert np.allclose(ens.xs[i, idx[0]:], ens.ys[i, idx[0]:])
    assert merged[:, -1].any()


def test_determinism_same_seed():
    spec, field, _, lyap = _example_model()
    grid = np.linspace(0.0, 0.5, 3)
    a = simulate_coupled_ensemble(np.array([0.25]), np.array([-0.25]), field,
                                  spec, lyap, SchemeConfig(), 0.5, grid, 64,
                                  seed=99)
    b = simulate_coupled_ensemble(np.array([0.25]), np.array([-0.25]), field,
                                  spec, lyap, SchemeConfig(), 0.5, grid, 64,
                                  seed=99)
    assert np.array_equal(a.xs, b.xs) and np.array_equal(a.ys, b.ys)
    assert np.array_equal(a.merged, b.merged)


def test_synchronous_difference_is_drift_ode():
    # forced synchronous: every jump and the small-jump proxy cancel in the
    # difference, so x - y follows the pair drift ODE; linear drift solves it
    # in closed form
    spec = isotropic_stable(1, 1.5)
    field = linear_drift(1.0, 1)
    cfg = SchemeConfig(force_synchronous=True)
    grid = np.linspace(0.0, 3.0, 13)
    ens = simulate_coupled_ensemble(np.array([0.5]), np.array([-0.5]), field,
                                    spec, None, cfg, 3.0, grid, 32, seed=5)
    want = 1.0 * np.exp(-grid)
    for i in range(32):
        assert np.allclose(ens.r[i], want, rtol=1e-7, atol=1e-10)


def test_synchronous_phase_riccati_envelope():
    # r0 > L0 keeps the coupling synchronous; for the odd monomial drift the
    # centered pair is the slowest-contracting configuration, so the Riccati
    # solution 1/(t + 1/r0) is a pathwise upper envelope until L0 is hit
    spec = isotropic_stable(1, 1.5)
    field = monomial_drift(2.0, 1.0, 1)
    cond = DriftCondition(k1=1.0, k2=1.0, l0=1.0, theta=3.0)
    lyap = build_lyapunov(spec, cond)
    grid = np.linspace(0.0, 0.6, 121)
    ens = simulate_coupled_ensemble(np.array([1.0]), np.array([-1.0]), field,
                                    spec, lyap, SchemeConfig(), 0.6, grid, 16,
                                    seed=31)
    envelope = 1.0 / (grid + 0.5)
    r = ens.r
    crossings = 0
    for i in range(16):
        # grid values only see window boundaries: near L0 a path can dip
        # below mid-window and bounce back on a reflected jump of relative
        # size up to 2a, so the crossing is asserted with that allowance
        by_half = grid <= 0.5 + 0.03
        assert r[i][by_half].min() <= 1.0 + 2.5 * 0.025
        crossings += bool((r[i] <= 1.0).any())
        # strictly above the interface the phase is purely synchronous:
        # continuous, nonincreasing, below the Riccati envelope
        strict = r[i] > 1.1
        band = strict[:-1] & strict[1:]
        assert np.all(r[i][strict] <= envelope[strict] * (1 + 1e-7))
        assert np.all(np.diff(r[i])[band] <= 1e-12)
    assert crossings >= 13


def test_marginal_ensemble_matches_exact_increment_law():
    # pure-noise marginal (zero drift): scheme output vs the exact sampler
    from stablecouple.stable_noise import sample_increment

    spec = isotropic_stable(1, 1.5)
    field = DriftField(evaluate=lambda x: np.zeros_like(x), d=1, label="null")
    grid = np.array([0.0, 1.0])
    _, xs = simulate_marginal_ensemble(np.array([0.0]), field, spec,
                                       SchemeConfig(), 1.0, grid, 4000, seed=21)
    exact = sample_increment(spec, 1.0, rng_at(9), size=4000)[:, 0]
    got = xs[:, 1, 0]
    for q in (0.5, 1.0, 2.0):
        ca, cb = np.cos(q * got), np.cos(q * exact)
        se = math.sqrt(ca.var(ddof=1) / len(ca) + cb.var(ddof=1) / len(cb))
        assert abs(ca.mean() - cb.mean()) < 4.0 * se


def test_excess_component_cancels_in_difference():
    spec = isotropic_stable(1, 1.5)
    field = linear_drift(1.0, 1)
    excess = ExcessComponent(rate=3.0,
                             sampler=lambda rng, n: rng.uniform(-1, 1, (n, 1)))
    grid = np.linspace(0.0, 1.0, 5)
    ens = simulate_coupled_ensemble(np.array([2.0]), np.array([1.0]), field,
                                    spec, None, SchemeConfig(), 1.0, grid, 16,
                                    seed=3, excess=excess)
    want = 1.0 * np.exp(-grid)
    for i in range(16):
        assert np.allclose(ens.r[i], want, rtol=1e-7, atol=1e-10)


def test_event_budget_guard():
    spec, field, _, lyap = _example_model()
    cfg = SchemeConfig(max_events=50)
    grid = np.array([0.0, 1.0])
    with pytest.raises(EventBudgetError):
        simulate_coupled_ensemble(np.array([0.25]), np.array([-0.25]), field,
                                  spec, lyap, cfg, 1.0, grid, 64, seed=1)


def test_nan_guard():
    spec = isotropic_stable(1, 1.5)
    bad = DriftField(evaluate=lambda x: x * np.inf, d=1, label="blowup")
    grid = np.array([0.0, 0.1])
    with pytest.raises(DriftBlowupError):
        simulate_coupled_ensemble(np.array([0.25]), np.array([-0.25]), bad,
                                  spec, None, SchemeConfig(), 0.1, grid, 4,
                                  seed=1)


def test_coupled_state_invariant():
    with pytest.raises(ValueError):
        CoupledState(t=0.0, x=np.array([1.0]), y=np.array([0.0]), merged=True)


def test_decay_series_zero_at_equal_start():
    spec, field, _, lyap = _example_model()
    grid = np.linspace(0.0, 0.5, 6)
    ens = simulate_coupled_ensemble(np.array([0.4]), np.array([0.4]), field,
                                    spec, lyap, SchemeConfig(), 0.5, grid, 32,
                                    seed=2)
    series = lyapunov_decay_series(ens, lyap)
    assert np.allclose(series.mean, 0.0)
    assert np.allclose(series.stderr, 0.0)


def test_decay_series_start_value_deterministic():
    spec, field, _, lyap = _example_model()
    grid = np.linspace(0.0, 0.5, 3)
    ens = simulate_coupled_ensemble(np.array([0.25]), np.array([-0.25]), field,
                                    spec, lyap, SchemeConfig(), 0.5, grid, 64,
                                    seed=8)
    series = lyapunov_decay_series(ens, lyap)
    assert series.mean[0] == pytest.approx(float(lyap.value(0.5)), rel=1e-12)
    assert series.stderr[0] <= 1e-15


def test_positions_csv_roundtrip(tmp_path):
    spec, field, _, lyap = _example_model()
    grid = np.linspace(0.0, 0.5, 3)
    ens = simulate_coupled_ensemble(np.array([0.25]), np.array([-0.25]), field,
                                    spec, lyap, SchemeConfig(), 0.5, grid, 8,
                                    seed=13)
    f = tmp_path / "positions.csv"
    write_positions_csv(f, ens)
    back = read_positions_csv(f)
    assert np.allclose(back.xs, ens.xs)
    assert np.allclose(back.ys, ens.ys)
    assert np.array_equal(back.merged, ens.merged)
    f2 = tmp_path / "paths.csv"
    write_paths_csv(f2, ens, lyap)
    header = f2.read_text().splitlines()[0]
    assert header == "path_id,t,r,psi_r,merged"
