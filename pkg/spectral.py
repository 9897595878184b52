"""
Type-II degenerate PDC source: frequency grids, the joint spectral amplitude
and its Schmidt decomposition.

All frequencies are angular (rad/s), all lengths in metres.
"""
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT
from scipy.linalg import svdvals

from errors import InvalidArgumentError, InvalidStateError

logger = logging.getLogger(__name__)

# Plausible LiNbO3-like birefringent indices near 1550 nm; configuration, not material data.
DEFAULT_N_H = 2.15
DEFAULT_N_V = 2.21
DEFAULT_PUMP_WAVELENGTH = 775e-9


def _read_only(array):
    array = np.array(array)
    array.flags.writeable = False
    return array


@dataclass(frozen=True)
class FrequencyGrid:
    """Uniform grid of angular frequencies with trapezoid quadrature weights."""

    center: float
    half_span: float
    n_points: int
    quadrature: str = "trapezoid"

    def __post_init__(self):
        if int(self.n_points) != self.n_points or self.n_points < 2:
            raise InvalidArgumentError(f"n_points must be an integer >= 2, got {self.n_points}")
        object.__setattr__(self, "n_points", int(self.n_points))
        if not np.isfinite(self.half_span) or self.half_span <= 0:
            raise InvalidArgumentError(f"half_span must be positive, got {self.half_span}")
        if not np.isfinite(self.center):
            raise InvalidArgumentError(f"center must be finite, got {self.center}")
        if self.quadrature != "trapezoid":
            raise InvalidArgumentError(f"unsupported quadrature {self.quadrature!r}")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_span / (self.n_points - 1)

    @cached_property
    def offsets(self):
        # (k - (n-1)/2) is exact, so the offsets are exactly antisymmetric
        steps = np.arange(self.n_points) - (self.n_points - 1) / 2.0
        return _read_only(steps * self.spacing)

    @cached_property
    def nodes(self):
        return _read_only(self.center + self.offsets)

    @cached_property
    def weights(self):
        weights = np.full(self.n_points, self.spacing)
        weights[0] = weights[-1] = 0.5 * self.spacing
        return _read_only(weights)

    def descriptor(self) -> dict:
        return {
            "center": self.center,
            "half_span": self.half_span,
            "n_points": self.n_points,
            "spacing": self.spacing,
            "quadrature": self.quadrature,
        }


def build_grid(center: float, half_span: float, n_points: int) -> FrequencyGrid:
    return FrequencyGrid(float(center), float(half_span), n_points)


@dataclass(frozen=True)
class DispersionModel:
    """Constant refractive indices for H and V light, evaluated at the degenerate frequency."""

    n_H: float = DEFAULT_N_H
    n_V: float = DEFAULT_N_V

    def __post_init__(self):
        for name in ("n_H", "n_V"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 1.0:
                raise InvalidArgumentError(f"{name}: refractive index must exceed 1, got {value}")

    @property
    def v_H(self) -> float:
        return SPEED_OF_LIGHT / self.n_H

    @property
    def v_V(self) -> float:
        return SPEED_OF_LIGHT / self.n_V

    @property
    def inverse_velocity_mismatch(self) -> float:
        """1/v_H - 1/v_V in s/m."""
        return 1.0 / self.v_H - 1.0 / self.v_V

    @property
    def velocity_ratio(self) -> float:
        """v_V/v_H, the factor that turns lengths into delay-compensating length differences."""
        return self.v_V / self.v_H

    def index(self, polarization: str) -> float:
        return self.n_H if polarization == "H" else self.n_V


@dataclass(frozen=True)
class PumpSpec:
    omega_p: float
    bandwidth: float = 0.0
    monochromatic: bool = True

    def __post_init__(self):
        if not np.isfinite(self.omega_p) or self.omega_p <= 0:
            raise InvalidArgumentError(f"omega_p must be positive, got {self.omega_p}")
        if not np.isfinite(self.bandwidth) or self.bandwidth < 0:
            raise InvalidArgumentError(f"bandwidth must be non-negative, got {self.bandwidth}")

    @property
    def narrowband(self) -> bool:
        # a zero-bandwidth Gaussian is the narrowband limit as well
        return self.monochromatic or self.bandwidth == 0.0

    @property
    def wavelength(self) -> float:
        return 2.0 * np.pi * SPEED_OF_LIGHT / self.omega_p

    def descriptor(self) -> dict:
        return {
            "omega_p": self.omega_p,
            "wavelength": self.wavelength,
            "bandwidth": self.bandwidth,
            "monochromatic": self.narrowband,
        }


def pump_from_wavelength(wavelength: float, bandwidth: float = 0.0, monochromatic: bool = True) -> PumpSpec:
    if not wavelength > 0:
        raise InvalidArgumentError(f"pump wavelength must be positive, got {wavelength}")
    return PumpSpec(2.0 * np.pi * SPEED_OF_LIGHT / wavelength, bandwidth, monochromatic)


@dataclass(frozen=True, eq=False)
class JointSpectralAmplitude:
    grid_s: FrequencyGrid
    grid_i: FrequencyGrid
    values: np.ndarray
    metadata: Mapping = field(default_factory=dict)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=complex)
        expected = (self.grid_s.n_points, self.grid_i.n_points)
        if values.shape != expected:
            raise InvalidArgumentError(f"JSA shape {values.shape} does not match grids {expected}")
        object.__setattr__(self, "values", _read_only(values))

    @property
    def quadrature_weights(self):
        return np.outer(self.grid_s.weights, self.grid_i.weights)

    def weighted_matrix(self):
        """sqrt(w_s) F sqrt(w_i); its Frobenius norm is the quadrature L2 norm of F."""
        return np.sqrt(self.grid_s.weights)[:, None] * self.values * np.sqrt(self.grid_i.weights)[None, :]

    def norm(self) -> float:
        return float(np.linalg.norm(self.weighted_matrix()))


def normalize_jsa(grid_s, grid_i, values, metadata=None) -> JointSpectralAmplitude:
    values = np.asarray(values, dtype=complex)
    if not np.all(np.isfinite(values)):
        raise InvalidArgumentError("JSA values must be finite")
    unnormalized = JointSpectralAmplitude(grid_s, grid_i, values)
    norm = unnormalized.norm()
    if norm == 0.0:
        raise InvalidArgumentError("JSA vanishes on the grid")
    return JointSpectralAmplitude(grid_s, grid_i, values / norm, dict(metadata or {}))


def phase_mismatch(omega_s, omega_i, disp: DispersionModel, pump: PumpSpec):
    """
    Linearized type-II mismatch with the constant part at degeneracy removed by poling:
    dk = (w_s - w_p/2)/v_H + (w_i - w_p/2)/v_V, in rad/m. Broadcasts over arrays.
    """
    omega_s = np.asarray(omega_s, dtype=float)
    omega_i = np.asarray(omega_i, dtype=float)
    if np.any(omega_s <= 0) or np.any(omega_i <= 0):
        raise InvalidArgumentError("signal and idler frequencies must be positive")
    half = 0.5 * pump.omega_p
    return (omega_s - half) / disp.v_H + (omega_i - half) / disp.v_V


def main_lobe_half_width(disp: DispersionModel, l_pdc: float) -> float:
    """Detuning of the first phase-matching zero along the anti-diagonal."""
    mismatch = abs(disp.inverse_velocity_mismatch)
    if mismatch == 0.0:
        return np.inf
    return 2.0 * np.pi / (l_pdc * mismatch)


def build_jsa(grid_s: FrequencyGrid, grid_i: FrequencyGrid, pump: PumpSpec,
              disp: DispersionModel, l_pdc: float) -> JointSpectralAmplitude:
    """
    Two-photon amplitude of the PDC section, normalized on the quadrature grid.

    The pump envelope is Gaussian in the sum-frequency detuning, or a one-cell
    anti-diagonal mask in the narrowband limit. Phase matching contributes
    sinc(dk L/2) exp(i dk L/2), which places the effective emission point at the
    centre of the section.
    """
    if not np.isfinite(l_pdc) or l_pdc <= 0:
        raise InvalidArgumentError(f"L_PDC must be positive, got {l_pdc}")
    half = 0.5 * pump.omega_p
    for name, grid in (("signal", grid_s), ("idler", grid_i)):
        if grid.nodes[0] > half or grid.nodes[-1] < half:
            raise InvalidArgumentError(f"{name} grid does not contain the degenerate frequency {half:.6e}")

    omega_s, omega_i = np.meshgrid(grid_s.nodes, grid_i.nodes, indexing="ij")
    delta_k = phase_mismatch(omega_s, omega_i, disp, pump)
    detuning = omega_s + omega_i - pump.omega_p

    if pump.narrowband:
        cell = 0.5 * min(grid_s.spacing, grid_i.spacing)
        envelope = (np.abs(detuning) < cell).astype(float)
    else:
        envelope = np.exp(-detuning ** 2 / (4.0 * pump.bandwidth ** 2))

    # np.sinc is the normalized sinc, sin(pi x)/(pi x)
    phase_matching = np.sinc(delta_k * l_pdc / (2.0 * np.pi)) * np.exp(0.5j * delta_k * l_pdc)

    warnings = []
    lobe = main_lobe_half_width(disp, l_pdc)
    span = min(grid_s.half_span, grid_i.half_span)
    if span < lobe:
        message = (f"grid half-span {span:.4e} rad/s is narrower than the main "
                   f"phase-matching lobe {lobe:.4e} rad/s")
        logger.warning(message)
        warnings.append(message)

    metadata = {
        "pump": "narrowband" if pump.narrowband else "gaussian",
        "l_pdc": l_pdc,
        "main_lobe_half_width": lobe,
        "warnings": tuple(warnings),
    }
    return normalize_jsa(grid_s, grid_i, envelope * phase_matching, metadata)


@dataclass(frozen=True, eq=False)
class SchmidtSpectrum:
    coefficients: np.ndarray
    schmidt_number: float


def schmidt_decompose(jsa: JointSpectralAmplitude) -> SchmidtSpectrum:
    """Frequency-domain Schmidt coefficients from the SVD of the weighted JSA."""
    matrix = jsa.weighted_matrix()
    if not np.all(np.isfinite(matrix)):
        raise InvalidStateError("JSA contains non-finite entries")
    singular_values = svdvals(matrix)
    total = np.sqrt(np.sum(singular_values ** 2))
    if total == 0.0:
        raise InvalidStateError("JSA vanishes, no Schmidt decomposition")
    coefficients = singular_values / total
    probabilities = coefficients ** 2
    return SchmidtSpectrum(_read_only(coefficients), float(1.0 / np.sum(probabilities ** 2)))
