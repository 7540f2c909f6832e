import numpy as np
import pytest

from stablecouple import (
    DriftCondition,
    build_lyapunov,
    isotropic_stable,
)
from stablecouple.streams import derive_stream


@pytest.fixture(scope="session")
def high_alpha_model():
    """Default high-alpha model: d=1, alpha=1.5, K1=K2=1, L0=1, theta=2."""
    spec = isotropic_stable(1, 1.5)
    cond = DriftCondition(k1=1.0, k2=1.0, l0=1.0, theta=2.0)
    return spec, cond, build_lyapunov(spec, cond)


@pytest.fixture(scope="session")
def low_alpha_model():
    """Gate-passing low-alpha model: d=1, alpha=1, K1=0.05, L0=1."""
    spec = isotropic_stable(1, 1.0)
    cond = DriftCondition(k1=0.05, k2=1.0, l0=1.0, theta=2.0)
    return spec, cond, build_lyapunov(spec, cond)


@pytest.fixture()
def rng():
    return derive_stream(20250810, 0)
