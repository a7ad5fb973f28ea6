import numpy as np
import pytest

from spivqr.panel import DgpSpec, build_design, simulate
from spivqr.spatial import build_rook_weights


@pytest.fixture(scope="session")
def rook5():
    return build_rook_weights(5, 5)


@pytest.fixture(scope="session")
def rook7():
    return build_rook_weights(7, 7)


@pytest.fixture(scope="session")
def small_design(rook5):
    """One simulated 25x4 panel with the default fitted-spatial-lag design."""
    spec = DgpSpec(rho0=0.2, lambda0=0.5, beta0=[1.0], n=25, t=4, seed=42)
    data, _ = simulate(spec, rook5, rook5)
    from spivqr.panel import InstrumentRule

    return build_design(data, rook5, rook5, InstrumentRule.FITTED_SPATIAL_LAG)


def rng(seed=0):
    return np.random.default_rng(seed)
