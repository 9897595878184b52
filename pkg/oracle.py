"""
Closed-form expressions for the VV part of the state in front of the final BS,
the spatially reduced density matrix and the positions of dips, peak and fringes.

The propagation engine in circuit.py never uses these; tests compare the two.
"""
from dataclasses import dataclass

import numpy as np

from circuit import mode_index
from errors import InvalidArgumentError
from spectral import DispersionModel, FrequencyGrid, JointSpectralAmplitude, PumpSpec

PHOTONS = ("signal", "idler")


def _pdc_phase(omega_s, omega_i, geom, disp):
    # common factor exp(i(w_s/v_H + w_i/v_V) x) picked up before PC1
    return (omega_s / disp.v_H + omega_i / disp.v_V) * geom.x


def psi1_amplitude(omega_s, omega_i, geom, disp: DispersionModel, amplitude=1.0):
    """
    Cross-channel amplitudes in front of the BS.

    Returns the (2V, 1V) block, proportional to sin^2(phi1), and the (1V, 2V)
    block, proportional to cos^2(phi1). amplitude is F(omega_s, omega_i).
    """
    omega_s = np.asarray(omega_s, dtype=float)
    omega_i = np.asarray(omega_i, dtype=float)
    long_arm = geom.l + geom.delta_l + geom.y
    short_arm = geom.l + geom.y
    common = _pdc_phase(omega_s, omega_i, geom, disp)

    # chi(a, b) = exp(i[(l + dl + y) a / v_V + (l + y) b / v_H])
    chi_si = long_arm * omega_s / disp.v_V + short_arm * omega_i / disp.v_H
    chi_is = long_arm * omega_i / disp.v_V + short_arm * omega_s / disp.v_H

    sin_sq = np.sin(geom.phi1) ** 2
    cos_sq = np.cos(geom.phi1) ** 2
    block_2v1v = 1j * amplitude * sin_sq * np.exp(1j * (common + chi_si))
    block_1v2v = -1j * amplitude * cos_sq * np.exp(1j * (common + chi_is))
    return block_2v1v, block_1v2v


def psi2_amplitude(omega_s, omega_i, geom, disp: DispersionModel, amplitude=1.0):
    """Same-channel amplitudes: the (1V, 1V) and (2V, 2V) blocks, both proportional to sin(phi1)cos(phi1)."""
    omega_s = np.asarray(omega_s, dtype=float)
    omega_i = np.asarray(omega_i, dtype=float)
    common = _pdc_phase(omega_s, omega_i, geom, disp)
    total = omega_s + omega_i
    short_arm = geom.l + geom.y

    phase_1 = short_arm * total / disp.v_H
    phase_2 = short_arm * total / disp.v_V + total * geom.delta_l / disp.v_V

    weight = -amplitude * np.sin(geom.phi1) * np.cos(geom.phi1)
    block_1v1v = weight * np.exp(1j * (common + phase_1))
    block_2v2v = weight * np.exp(1j * (common + phase_2))
    return block_1v1v, block_2v2v


@dataclass(frozen=True, eq=False)
class BeforeBsAmplitudes:
    grid_s: FrequencyGrid
    grid_i: FrequencyGrid
    psi1_2v1v: np.ndarray
    psi1_1v2v: np.ndarray
    psi2_1v1v: np.ndarray
    psi2_2v2v: np.ndarray

    def blocks(self, part: str = "total") -> dict:
        """Amplitude blocks keyed by (mode_s index, mode_i index)."""
        psi1 = {
            (mode_index(2, "V"), mode_index(1, "V")): self.psi1_2v1v,
            (mode_index(1, "V"), mode_index(2, "V")): self.psi1_1v2v,
        }
        psi2 = {
            (mode_index(1, "V"), mode_index(1, "V")): self.psi2_1v1v,
            (mode_index(2, "V"), mode_index(2, "V")): self.psi2_2v2v,
        }
        if part == "psi1":
            return psi1
        if part == "psi2":
            return psi2
        if part == "total":
            return {**psi1, **psi2}
        raise InvalidArgumentError(f"part must be psi1, psi2 or total, got {part!r}")

    def peak_modulus(self) -> float:
        return max(float(np.max(np.abs(block))) for block in self.blocks().values())


def before_bs_amplitudes(jsa: JointSpectralAmplitude, geom, disp: DispersionModel) -> BeforeBsAmplitudes:
    omega_s, omega_i = np.meshgrid(jsa.grid_s.nodes, jsa.grid_i.nodes, indexing="ij")
    psi1 = psi1_amplitude(omega_s, omega_i, geom, disp, jsa.values)
    psi2 = psi2_amplitude(omega_s, omega_i, geom, disp, jsa.values)
    return BeforeBsAmplitudes(jsa.grid_s, jsa.grid_i, *psi1, *psi2)


@dataclass(frozen=True, eq=False)
class ReducedDensityMatrix:
    """One photon's state over (channel 1, channel 2), traced over frequency and the partner photon."""

    matrix: np.ndarray

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=complex)
        if matrix.shape != (2, 2):
            raise InvalidArgumentError(f"reduced density matrix must be 2x2, got {matrix.shape}")
        matrix.flags.writeable = False
        object.__setattr__(self, "matrix", matrix)

    @property
    def off_diagonal(self) -> complex:
        return complex(self.matrix[0, 1])

    def trace(self) -> float:
        return float(np.real(np.trace(self.matrix)))

    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))

    def eigenvalues(self):
        return np.linalg.eigvalsh(self.matrix)


def reduced_density_matrix(phi1: float, geom, disp: DispersionModel, jsa: JointSpectralAmplitude,
                           photon: str = "signal") -> ReducedDensityMatrix:
    """
    Diagonal (sin^2 phi1, cos^2 phi1); off-diagonal the |F|^2-weighted integral of
    (i/4) sin(4 phi1) exp(i w (delta_l/v_V - (l + y)(1/v_H - 1/v_V))), where w is
    the frequency of the chosen photon.
    """
    if photon not in PHOTONS:
        raise InvalidArgumentError(f"photon must be one of {PHOTONS}, got {photon!r}")
    omega_s, omega_i = np.meshgrid(jsa.grid_s.nodes, jsa.grid_i.nodes, indexing="ij")
    omega = omega_s if photon == "signal" else omega_i

    delay = geom.delta_l / disp.v_V - (geom.l + geom.y) * disp.inverse_velocity_mismatch
    density = jsa.quadrature_weights * np.abs(jsa.values) ** 2
    coherence = 0.25j * np.sin(4.0 * phi1) * np.sum(density * np.exp(1j * omega * delay))

    sin_sq = np.sin(phi1) ** 2
    cos_sq = np.cos(phi1) ** 2
    return ReducedDensityMatrix(np.array([[sin_sq, coherence], [np.conj(coherence), cos_sq]]))


def schmidt_number_spatial(phi1: float) -> float:
    """1/(cos^4 + sin^4 + sin^2(4 phi1)/8), written through cos(4 phi1)."""
    u = np.cos(4.0 * phi1)
    return float(1.0 / (0.75 + 0.25 * u + 0.125 * (1.0 - u * u)))


def schmidt_number_general(phi1: float, geom, disp: DispersionModel, jsa: JointSpectralAmplitude,
                           photon: str = "signal") -> float:
    return 1.0 / reduced_density_matrix(phi1, geom, disp, jsa, photon).purity()


def fringe_period(geom, disp: DispersionModel, pump: PumpSpec) -> float:
    """Spacing in delta_l of the fast fringes, 2 pi v_V / w_p. Independent of the geometry."""
    return 2.0 * np.pi * disp.v_V / pump.omega_p


def dip_positions(geom, disp: DispersionModel):
    """(phi1 = 0 dip, phi1 = pi/2 dip), symmetric about delay_compensation."""
    ratio = disp.velocity_ratio - 1.0
    offset = geom.x + 0.5 * geom.l_pdc
    return ratio * (geom.l + geom.y + offset), ratio * (geom.l + geom.y - offset)


def delay_compensation(geom, disp: DispersionModel) -> float:
    return (disp.velocity_ratio - 1.0) * (geom.l + geom.y)


def dip_half_width(geom, disp: DispersionModel) -> float:
    return abs(disp.velocity_ratio - 1.0) * 0.5 * geom.l_pdc
