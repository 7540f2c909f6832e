"""Coupled simulation and certified contraction rates for SDEs driven by
isotropic alpha-stable noise.

The package has six parts:

- ``stable_noise``: constants, samplers and the large/small jump decomposition
  of isotropic alpha-stable noise.
- ``drift_models``: drift fields and an empirical verifier of the two-regime
  dissipativity condition.
- ``lyapunov``: radial Lyapunov functions for the coupled distance process,
  quadrature of the coupled generator, and certified contraction rates.
- ``coupling_engine``: event-driven simulation of the reflection/synchronous
  coupling.
- ``wasserstein_metrics``: empirical Wasserstein distances and rate fitting.
- ``cli``: command-line orchestration of certificates, sweeps and ensembles.
"""

from .stable_noise import (
    StableSpec,
    JumpDecomposition,
    isotropic_stable,
    levy_constant,
    sphere_surface,
    decompose,
    sample_large_jump,
    sample_increment,
)
from .drift_models import (
    DriftCondition,
    DriftField,
    linear_drift,
    power_potential_drift,
    monomial_drift,
    drift_from_label,
    verify_dissipativity,
    check_small_alpha_gate,
)
from .lyapunov import (
    Regime,
    RadialLyapunov,
    GateError,
    CertificateError,
    QuadratureConfig,
    build_lyapunov,
    jump_term,
    distance_generator_bound,
    small_distance_rate,
    default_radial_grid,
    rate_sweep,
    tail_envelope_positivity,
    contraction_certificate,
    ContractionCertificate,
)
from .coupling_engine import (
    CoupledState,
    CoupledPath,
    PathEnsemble,
    SchemeConfig,
    reflect,
    coupled_jump,
    step_drift,
    simulate_coupled_path,
    simulate_coupled_ensemble,
    simulate_marginal_ensemble,
    hitting_time_bound,
    lyapunov_decay_series,
)
from .wasserstein_metrics import (
    EmpiricalMeasure,
    coupling_wp_upper,
    exact_empirical_wp,
    contraction_rate_fit,
    energy_distance,
    energy_distance_test,
    upper_series_from_paths_csv,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
