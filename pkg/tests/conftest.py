import numpy as np
import pytest

from circuit import CircuitGeometry
from spectral import DispersionModel, build_grid, build_jsa, main_lobe_half_width, pump_from_wavelength

DEVICE_L_PDC = 1.035e-2
DEVICE_X = 3810e-6
DEVICE_Y = 5810e-6
DEVICE_L = 10000e-6
DEVICE_L_PC1 = 7620e-6


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def disp():
    return DispersionModel()


@pytest.fixture(scope="session")
def pump():
    return pump_from_wavelength(775e-9)


@pytest.fixture(scope="session")
def mm_geometry():
    """Millimetre-scale circuit; optical phases stay small enough for 1e-10 comparisons."""
    return CircuitGeometry(l_pdc=1e-3, x=0.5e-3, y=0.5e-3, l=1e-3, delta_l=0.0, l_pc1=0.0, phi1=0.0)


@pytest.fixture(scope="session")
def device_geometry():
    return CircuitGeometry(l_pdc=DEVICE_L_PDC, x=DEVICE_X, y=DEVICE_Y, l=DEVICE_L, delta_l=0.0,
                           l_pc1=DEVICE_L_PC1, phi1=0.0)


def lobe_grid(disp, pump, l_pdc, n_points, lobes=3.0):
    return build_grid(0.5 * pump.omega_p, lobes * main_lobe_half_width(disp, l_pdc), n_points)


def narrowband_jsa(disp, pump, l_pdc, n_points):
    grid = lobe_grid(disp, pump, l_pdc, n_points)
    return build_jsa(grid, grid, pump, disp, l_pdc)
