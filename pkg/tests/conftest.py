import numpy as np
import pytest

from flowstab.geometry import build_domain, build_cutoff
from flowstab.control_basis import build_xi
from flowstab.field_ops import LerayProjector, stokes_eigenbasis
from flowstab.flow_models import ReferenceTrajectory, assemble_reduced
from flowstab.riccati import build_extended, solve_dre


@pytest.fixture(scope="session")
def grid16():
    return build_domain(1.0, 1.0, 16, 16)


@pytest.fixture(scope="session")
def grid24():
    return build_domain(1.0, 1.0, 24, 24)


@pytest.fixture(scope="session")
def patch16(grid16):
    return build_cutoff(grid16, "bottom", a_c=0.30, b_c=0.60, a_O=0.20, b_O=0.70)


@pytest.fixture(scope="session")
def patch24(grid24):
    return build_cutoff(grid24, "bottom", a_c=0.30, b_c=0.60, a_O=0.20, b_O=0.70)


@pytest.fixture(scope="session")
def basis16(grid16, patch16):
    return build_xi(3, patch16, grid16)


@pytest.fixture(scope="session")
def leray16(grid16):
    return LerayProjector(grid16)


@pytest.fixture(scope="session")
def stokes24(grid24):
    return stokes_eigenbasis(8, grid24, nu=0.05)


@pytest.fixture(scope="session")
def ref_zero16(grid16):
    return ReferenceTrajectory(grid16, "zero")


@pytest.fixture(scope="session")
def stokes16(grid16):
    return stokes_eigenbasis(6, grid16, nu=0.05)


@pytest.fixture(scope="session")
def model16(grid16, patch16, stokes16, ref_zero16):
    basis = build_xi(3, patch16, grid16)
    return assemble_reduced(ref_zero16, stokes16, basis, [0.0], nu=0.05)


@pytest.fixture(scope="session")
def gain16(model16):
    sys = build_extended(model16, lam=1.0)
    return solve_dre(sys, T=12.0, dt_R=0.012)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
