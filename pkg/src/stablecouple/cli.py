"""Command-line orchestration.

Subcommands
-----------
certify    gates, Lyapunov construction, rate sweep, certificate record
lyapunov   radial sweep CSV of the generator bound and contraction ratio
simulate   coupled ensemble; per-path CSV, positions CSV, decay series CSV
wp         empirical Wasserstein columns against the certified bound
example    full pipeline for the super-convex potential drift

Configuration is a flat ``key = value`` text file plus flag overrides; runs
are deterministic given (config, seed).  Exit codes: 0 success, 2 gate
failure, 3 certificate failure, 4 bound-violation flag, 5 runtime guard.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .coupling_engine import (
    DriftBlowupError,
    EventBudgetError,
    SchemeConfig,
    lyapunov_decay_series,
    read_positions_csv,
    simulate_coupled_ensemble,
    write_paths_csv,
    write_positions_csv,
)
from .drift_models import DriftCondition, check_small_alpha_gate, drift_from_label
from .lyapunov import (
    CertificateError,
    ContractionCertificate,
    GateError,
    build_lyapunov,
    contraction_certificate,
    default_radial_grid,
    distance_generator_bound,
    rate_sweep,
    tail_envelope_positivity,
)
from .stable_noise import isotropic_stable
from .streams import derive_stream
from .wasserstein_metrics import (
    DegenerateFitError,
    bootstrap_wp_stderr,
    contraction_rate_fit,
    coupling_wp_upper,
    exact_empirical_wp,
)

EXIT_OK = 0
EXIT_GATE = 2
EXIT_CERT = 3
EXIT_FLAGS = 4
EXIT_RUNTIME = 5

_EXACT_WP_CAP = 1024


@dataclass
class ExperimentConfig:
    """Flat run configuration; every field maps to a config-file key."""

    d: int = 1
    alpha: float = 1.5
    k1: float = 1.0
    k2: float = 1.0
    l0: float = 1.0
    theta: float = 2.0
    drift: str = "power_potential"
    beta: float = 1.5
    kappa: float = 1.0
    drift_c: float = 1.0
    drift_q: float = 1.0
    p: float = 1.0
    n_paths: int = 1000
    horizon: float = 5.0
    grid_step: float = 0.25
    r0: float = 0.5
    x0: str = ""
    y0: str = ""
    seed: int = 20250810
    out: str = "runs/out"
    dt_max: float = 1e-2
    eps_delta: float = 1e-2
    eps_couple: float = 1e-6
    delta_floor: float = 2e-3
    compensate_small: bool = False
    force_synchronous: bool = False


_BOOL_KEYS = {"compensate_small", "force_synchronous"}
_INT_KEYS = {"d", "n_paths", "seed"}
_STR_KEYS = {"drift", "out", "x0", "y0"}


def parse_config_file(path: str | Path) -> dict:
    """Parse flat ``key = value`` lines; '#' starts a comment."""
    values: dict = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"malformed config line: {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        values[key] = val
    return values


def _coerce(key: str, val):
    if isinstance(val, str):
        if key in _BOOL_KEYS:
            low = val.lower()
            if low not in ("true", "false", "0", "1"):
                raise ValueError(f"bad boolean for {key}: {val!r}")
            return low in ("true", "1")
        if key in _INT_KEYS:
            return int(val)
        if key in _STR_KEYS:
            return val
        return float(val)
    return val


def build_config(file: str | None, overrides: dict) -> ExperimentConfig:
    cfg = ExperimentConfig()
    fields = {f.name for f in dataclasses.fields(ExperimentConfig)}
    merged: dict = {}
    if file:
        merged.update(parse_config_file(file))
    merged.update({k: v for k, v in overrides.items() if v is not None})
    for key, val in merged.items():
        if key not in fields:
            raise ValueError(f"unknown config key: {key}")
        setattr(cfg, key, _coerce(key, val))
    return cfg


def _vector(text: str, d: int, fallback: np.ndarray) -> np.ndarray:
    if not text:
        return fallback
    vec = np.array([float(s) for s in text.split(",")], dtype=float)
    if len(vec) != d:
        raise ValueError(f"expected {d} components, got {len(vec)}")
    return vec


def resolve_model(cfg: ExperimentConfig):
    """Build (spec, cond, field, x0, y0) from a configuration."""
    spec = isotropic_stable(cfg.d, cfg.alpha)
    if cfg.drift == "power_potential":
        field = drift_from_label("power_potential", cfg.d, beta=cfg.beta,
                                 k1=cfg.k1, l0=cfg.l0)
    elif cfg.drift == "linear":
        field = drift_from_label("linear", cfg.d, kappa=cfg.kappa)
    elif cfg.drift == "monomial":
        field = drift_from_label("monomial", cfg.d, c=cfg.drift_c, q=cfg.drift_q)
    else:
        raise ValueError(f"unknown drift label {cfg.drift!r}")
    claimed = field.claimed_condition
    if claimed is not None:
        cond = DriftCondition(k1=cfg.k1, k2=claimed.k2, l0=cfg.l0,
                              theta=claimed.theta)
    else:
        cond = DriftCondition(k1=cfg.k1, k2=cfg.k2, l0=cfg.l0, theta=cfg.theta)
    e1 = np.zeros(cfg.d)
    e1[0] = 1.0
    x0 = _vector(cfg.x0, cfg.d, +0.5 * cfg.r0 * e1)
    y0 = _vector(cfg.y0, cfg.d, -0.5 * cfg.r0 * e1)
    return spec, cond, field, x0, y0


def scheme_of(cfg: ExperimentConfig) -> SchemeConfig:
    return SchemeConfig(dt_max=cfg.dt_max, eps_delta=cfg.eps_delta,
                        eps_couple=cfg.eps_couple, delta_floor=cfg.delta_floor,
                        compensate_small=cfg.compensate_small,
                        force_synchronous=cfg.force_synchronous)


def record_grid_of(cfg: ExperimentConfig) -> np.ndarray:
    n_steps = int(round(cfg.horizon / cfg.grid_step))
    return np.linspace(0.0, n_steps * cfg.grid_step, n_steps + 1)


def _outdir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_certify(cfg: ExperimentConfig) -> int:
    spec, cond, _, _, _ = resolve_model(cfg)
    gate = check_small_alpha_gate(spec, cond)
    if not gate.passed:
        print(f"gate failure: small-alpha margin = {gate.margin:.12g} <= 0",
              file=sys.stderr)
        return EXIT_GATE
    try:
        lyap = build_lyapunov(spec, cond)
        envelope = tail_envelope_positivity(lyap)
        if not envelope.ok:
            print(f"certificate failure: tail envelope nonpositive at "
                  f"r = {envelope.failure_r:.6g}", file=sys.stderr)
            return EXIT_CERT
        sweep = rate_sweep(lyap, spec, cond)
        if not sweep.certified:
            print(f"certificate failure: contraction ratio {sweep.lambda_star:.6g} "
                  f"at r = {sweep.argmin_r:.6g}", file=sys.stderr)
            return EXIT_CERT
        cert = contraction_certificate(spec, cond, cfg.p)
    except GateError as exc:
        print(f"gate failure: small-alpha margin = {exc.margin:.12g} <= 0",
              file=sys.stderr)
        return EXIT_GATE
    except CertificateError as exc:
        print(f"certificate failure: {exc}", file=sys.stderr)
        return EXIT_CERT
    out = _outdir(cfg)
    (out / "cert.txt").write_text(cert.to_record())
    print(f"lambda = {cert.lam:.12g} (lambda1 = {cert.lambda1:.12g}, "
          f"lambda2 = {cert.lambda2:.12g}); prefactor = {cert.prefactor:.12g}")
    if cert.t0 is not None:
        print(f"t0 = {cert.t0:.12g}")
    print(f"certificate written to {out / 'cert.txt'}")
    return EXIT_OK


def cmd_lyapunov(cfg: ExperimentConfig) -> int:
    spec, cond, _, _, _ = resolve_model(cfg)
    gate = check_small_alpha_gate(spec, cond)
    if not gate.passed:
        print(f"gate failure: small-alpha margin = {gate.margin:.12g} <= 0",
              file=sys.stderr)
        return EXIT_GATE
    try:
        lyap = build_lyapunov(spec, cond)
        grid = default_radial_grid(cond.l0)
        rows = []
        for r in grid:
            r = float(r)
            if r <= cond.l0:
                bound = distance_generator_bound(lyap, spec, cond, r)
                psi = float(lyap.value(r))
                ratio = -bound / psi
            else:
                ratio = cond.k2 * r ** (cond.theta - 1.0) * lyap.prime_over_value(r)
                psi = float(lyap.value(r))
                bound = -ratio * psi
            rows.append((r, bound, psi, ratio))
    except GateError as exc:
        print(f"gate failure: small-alpha margin = {exc.margin:.12g} <= 0",
              file=sys.stderr)
        return EXIT_GATE
    except CertificateError as exc:
        print(f"quadrature failure: {exc} (r = {exc.r})", file=sys.stderr)
        return EXIT_CERT
    out = _outdir(cfg)
    with open(out / "lyapunov.csv", "w") as fh:
        fh.write("r,generator_bound,psi,ratio\n")
        for row in rows:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
    lam_star = min(row[3] for row in rows)
    print(f"lambda_star = {lam_star:.12g}; sweep written to {out / 'lyapunov.csv'}")
    return EXIT_OK if lam_star > 0.0 else EXIT_CERT


def cmd_simulate(cfg: ExperimentConfig) -> int:
    spec, cond, field, x0, y0 = resolve_model(cfg)
    lyap = None
    if not cfg.force_synchronous:
        gate = check_small_alpha_gate(spec, cond)
        if not gate.passed:
            print(f"gate failure: small-alpha margin = {gate.margin:.12g} <= 0",
                  file=sys.stderr)
            return EXIT_GATE
        lyap = build_lyapunov(spec, cond)
    grid = record_grid_of(cfg)
    try:
        ens = simulate_coupled_ensemble(x0, y0, field, spec, lyap, scheme_of(cfg),
                                        cfg.horizon, grid, cfg.n_paths, cfg.seed)
    except (EventBudgetError, DriftBlowupError) as exc:
        print(f"runtime guard: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    out = _outdir(cfg)
    write_paths_csv(out / "paths.csv", ens, lyap)
    write_positions_csv(out / "positions.csv", ens)
    if lyap is not None:
        series = lyapunov_decay_series(ens, lyap)
        with open(out / "psi_decay.csv", "w") as fh:
            fh.write("t,mean_psi,stderr,n_paths\n")
            for t, m, s in zip(series.times, series.mean, series.stderr):
                fh.write(f"{t:.17g},{m:.17g},{s:.17g},{series.n_paths}\n")
    print(f"simulated {cfg.n_paths} paths to horizon {cfg.horizon}; "
          f"outputs in {out}")
    return EXIT_OK


def cmd_wp(cfg: ExperimentConfig, positions: str | None = None,
           cert_path: str | None = None) -> int:
    out = _outdir(cfg)
    pos_file = Path(positions) if positions else out / "positions.csv"
    cert_file = Path(cert_path) if cert_path else out / "cert.txt"
    if not pos_file.exists():
        print(f"missing positions file {pos_file}", file=sys.stderr)
        return EXIT_RUNTIME
    if not cert_file.exists():
        print(f"missing certificate {cert_file}; run certify first",
              file=sys.stderr)
        return EXIT_RUNTIME
    ens = read_positions_csv(pos_file)
    cert = ContractionCertificate.from_record(cert_file.read_text())
    p = cert.p
    r0 = float(np.linalg.norm(ens.xs[:, 0, :] - ens.ys[:, 0, :], axis=1).mean())
    rng = derive_stream(cfg.seed, 997)

    flags = 0
    rows = []
    for k, t in enumerate(ens.times):
        xs, ys = ens.xs[:, k, :], ens.ys[:, k, :]
        upper, upper_se = coupling_wp_upper(xs, ys, p)
        if ens.n_paths <= _EXACT_WP_CAP:
            exact = exact_empirical_wp(xs, ys, p)
            exact_se = bootstrap_wp_stderr(xs, ys, p, rng, n_boot=60)
        else:
            exact, exact_se = float("nan"), float("nan")
        bound = cert.wp_bound(float(t), r0)
        flagged = int(np.isfinite(exact) and exact > bound + 3.0 * exact_se)
        flags += flagged
        rows.append((t, upper, upper_se, exact, exact_se, bound, flagged))
    with open(out / "wp.csv", "w") as fh:
        fh.write("t,wp_upper,wp_upper_se,wp_exact,wp_exact_se,cert_bound,flag\n")
        for row in rows:
            fh.write(",".join(f"{v:.17g}" for v in row[:-1]) + f",{row[-1]}\n")
    print(f"wp columns written to {out / 'wp.csv'}; flags = {flags}")
    return EXIT_FLAGS if flags else EXIT_OK


def cmd_example(cfg: ExperimentConfig) -> int:
    """Full pipeline for the super-convex potential drift.

    For alpha <= 1 the admissibility gate is monotone in K1 L0^alpha, so K1
    and L0 are halved until it passes (each shrink is logged).
    """
    if cfg.beta <= 1.0:
        print(f"invalid beta = {cfg.beta}: must exceed 1", file=sys.stderr)
        return EXIT_GATE
    cfg.drift = "power_potential"
    spec, cond, _, _, _ = resolve_model(cfg)
    shrinks = 0
    while not check_small_alpha_gate(spec, cond).passed:
        cfg.k1 *= 0.5
        cfg.l0 *= 0.5
        shrinks += 1
        print(f"gate shrink {shrinks}: k1 = {cfg.k1:.6g}, l0 = {cfg.l0:.6g}")
        spec, cond, _, _, _ = resolve_model(cfg)
        if shrinks > 200:
            print("gate failure: shrink loop did not satisfy the gate",
                  file=sys.stderr)
            return EXIT_GATE

    status = cmd_certify(cfg)
    if status != EXIT_OK:
        return status
    status = cmd_simulate(cfg)
    if status != EXIT_OK:
        return status
    status_wp = cmd_wp(cfg)
    if status_wp not in (EXIT_OK, EXIT_FLAGS):
        return status_wp

    out = _outdir(cfg)
    cert = ContractionCertificate.from_record((out / "cert.txt").read_text())
    decay = np.loadtxt(out / "psi_decay.csv", delimiter=",", skiprows=1, ndmin=2)
    pos = decay[:, 1] > 0.0
    last = len(pos) if pos.all() else int(np.argmin(pos))
    try:
        fit = contraction_rate_fit(decay[:last, 0], decay[:last, 1],
                                   decay[:last, 2])
        lam_hat, lam_se = fit.lambda_hat, fit.lambda_stderr
    except (DegenerateFitError, ValueError) as exc:
        print(f"rate fit skipped: {exc}", file=sys.stderr)
        lam_hat, lam_se = float("nan"), float("nan")
    wp_rows = np.loadtxt(out / "wp.csv", delimiter=",", skiprows=1, ndmin=2)
    flags = int(wp_rows[:, -1].sum())
    with open(out / "summary.txt", "w") as fh:
        fh.write(f"lambda_cert = {cert.lam:.17g}\n")
        fh.write(f"lambda_hat = {lam_hat:.17g}\n")
        fh.write(f"lambda_hat_stderr = {lam_se:.17g}\n")
        fh.write(f"gate_shrinks = {shrinks}\n")
        fh.write(f"flags = {flags}\n")
    print(f"summary: lambda_cert = {cert.lam:.6g}, lambda_hat = {lam_hat:.6g} "
          f"+- {lam_se:.2g}, flags = {flags}")
    return EXIT_FLAGS if flags else EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="flat key = value configuration file")
    sub.add_argument("--seed", type=int)
    sub.add_argument("--paths", type=int, dest="n_paths")
    sub.add_argument("--horizon", type=float)
    sub.add_argument("--alpha", type=float)
    sub.add_argument("--beta", type=float)
    sub.add_argument("--p", type=float)
    sub.add_argument("--out")
    sub.add_argument("--d", type=int)
    sub.add_argument("--k1", type=float)
    sub.add_argument("--k2", type=float)
    sub.add_argument("--l0", type=float)
    sub.add_argument("--theta", type=float)
    sub.add_argument("--drift")
    sub.add_argument("--kappa", type=float)
    sub.add_argument("--r0", type=float)
    sub.add_argument("--x0")
    sub.add_argument("--y0")
    sub.add_argument("--grid-step", type=float, dest="grid_step")
    sub.add_argument("--dt-max", type=float, dest="dt_max")
    sub.add_argument("--eps-delta", type=float, dest="eps_delta")
    sub.add_argument("--eps-couple", type=float, dest="eps_couple")
    sub.add_argument("--delta-floor", type=float, dest="delta_floor")
    sub.add_argument("--compensate-small", action="store_const", const=True,
                     dest="compensate_small")
    sub.add_argument("--force-synchronous", action="store_const", const=True,
                     dest="force_synchronous")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="stablecouple",
        description="coupled simulation and certified contraction rates for "
                    "stable-noise SDEs")
    subs = parser.add_subparsers(dest="command", required=True)
    for name in ("certify", "lyapunov", "simulate", "wp", "example"):
        sub = subs.add_parser(name)
        _add_common(sub)
        if name == "wp":
            sub.add_argument("--positions", help="positions CSV from simulate")
            sub.add_argument("--cert", help="certificate record from certify")
    args = parser.parse_args(argv)

    config_keys = {f.name for f in dataclasses.fields(ExperimentConfig)}
    overrides = {k: v for k, v in vars(args).items() if k in config_keys}
    try:
        cfg = build_config(args.config, overrides)
    except (ValueError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    try:
        if args.command == "certify":
            return cmd_certify(cfg)
        if args.command == "lyapunov":
            return cmd_lyapunov(cfg)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "wp":
            return cmd_wp(cfg, positions=args.positions, cert_path=args.cert)
        if args.command == "example":
            return cmd_example(cfg)
    except GateError as exc:
        print(f"gate failure: small-alpha margin = {exc.margin:.12g} <= 0",
              file=sys.stderr)
        return EXIT_GATE
    except CertificateError as exc:
        print(f"certificate failure: {exc}", file=sys.stderr)
        return EXIT_CERT
    except (EventBudgetError, DriftBlowupError, OverflowError) as exc:
        print(f"runtime guard: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
