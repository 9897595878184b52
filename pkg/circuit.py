"""
Transfer-matrix model of the integrated circuit: PDC output -> PC1 -> PBS ->
delay arms -> PC2 -> balanced BS.

Every element is a 4x4 matrix on the modes [1H, 1V, 2H, 2V]; free propagation
makes it frequency dependent, so a TransferOperator maps an array of angular
frequencies to a stack of matrices of shape (n, 4, 4).
"""
import logging
from collections import namedtuple
from dataclasses import dataclass, replace

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT

from errors import InvalidArgumentError
from spectral import DispersionModel, FrequencyGrid, JointSpectralAmplitude

logger = logging.getLogger(__name__)

N_MODES = 4
POLARIZATIONS = ("H", "V")


class ModeLabel(namedtuple("ModeLabel", "channel polarization")):
    __slots__ = ()

    def __str__(self):
        return f"{self.channel}{self.polarization}"


MODE_ORDER = tuple(ModeLabel(channel, polarization) for channel in (1, 2) for polarization in POLARIZATIONS)


def mode_index(channel, polarization):
    if channel not in (1, 2):
        raise InvalidArgumentError(f"channel must be 1 or 2, got {channel!r}")
    if polarization not in POLARIZATIONS:
        raise InvalidArgumentError(f"polarization must be H or V, got {polarization!r}")
    return 2 * (channel - 1) + POLARIZATIONS.index(polarization)


@dataclass(frozen=True)
class CircuitGeometry:
    """
    Lengths in metres, angles in radians.

    x runs from the PDC output facet to the centre of PC1 and y from there to
    the PBS, so both include half of the converter length. l is the channel-1
    path from PBS to BS; channel 2 is longer by delta_l.
    """

    l_pdc: float
    x: float
    y: float
    l: float
    delta_l: float = 0.0
    l_pc1: float = 0.0
    phi1: float = 0.0
    phi2: float = np.pi / 2

    def __post_init__(self):
        for name in ("l_pdc", "x", "y", "l", "delta_l", "l_pc1", "phi1", "phi2"):
            if not np.isfinite(getattr(self, name)):
                raise InvalidArgumentError(f"{name} must be finite")
        for name in ("l_pdc", "x", "y", "l", "l_pc1"):
            if getattr(self, name) < 0:
                raise InvalidArgumentError(f"{name} must be non-negative, got {getattr(self, name)}")
        if self.delta_l < 0 and abs(self.delta_l) >= self.l:
            raise InvalidArgumentError(
                f"delta_l={self.delta_l} would make channel 2 shorter than zero (l={self.l})")
        half_converter = 0.5 * self.l_pc1
        if self.x < half_converter or self.y < half_converter:
            raise InvalidArgumentError("x and y are measured to the converter centre and must each be >= L_PC1/2")

    @property
    def channel2_length(self) -> float:
        return self.l + self.delta_l

    def with_delta_l(self, delta_l: float) -> "CircuitGeometry":
        return replace(self, delta_l=float(delta_l))

    def descriptor(self) -> dict:
        return {
            "l_pdc": self.l_pdc,
            "x": self.x,
            "y": self.y,
            "l": self.l,
            "delta_l": self.delta_l,
            "l_pc1": self.l_pc1,
            "phi1": self.phi1,
            "phi2": self.phi2,
        }


class TransferOperator:
    """Frequency-dependent 4x4 operator; evaluate() takes an array of angular frequencies."""

    def __init__(self, evaluate, name="operator", grid=None):
        self._evaluate = evaluate
        self.name = name
        self.grid = grid
        self._cache = {}

    def __repr__(self):
        return f"TransferOperator({self.name})"

    @classmethod
    def from_matrix(cls, matrix, name: str = "constant") -> "TransferOperator":
        matrix = np.array(matrix, dtype=complex)
        if matrix.shape != (N_MODES, N_MODES):
            raise InvalidArgumentError(f"expected a {N_MODES}x{N_MODES} matrix, got shape {matrix.shape}")
        matrix.flags.writeable = False

        def evaluate(omega):
            omega = np.asarray(omega, dtype=float)
            return np.broadcast_to(matrix, omega.shape + matrix.shape)

        return cls(evaluate, name)

    @classmethod
    def from_table(cls, grid: FrequencyGrid, table, name: str = "table") -> "TransferOperator":
        table = np.array(table, dtype=complex)
        if table.shape != (grid.n_points, N_MODES, N_MODES):
            raise InvalidArgumentError(
                f"table shape {table.shape} does not match ({grid.n_points}, {N_MODES}, {N_MODES})")
        table.flags.writeable = False

        def evaluate(omega):
            omega = np.asarray(omega, dtype=float)
            if omega.shape != grid.nodes.shape or not np.array_equal(omega, grid.nodes):
                raise InvalidArgumentError(f"{name} is tabulated on a different frequency grid")
            return table

        return cls(evaluate, name, grid)

    def evaluate(self, omega):
        return self._evaluate(omega)

    def on_grid(self, grid: FrequencyGrid):
        if self.grid is not None and grid != self.grid:
            raise InvalidArgumentError(f"{self.name} is tabulated on a different frequency grid")
        if grid not in self._cache:
            matrices = np.array(self.evaluate(grid.nodes), dtype=complex)
            matrices.flags.writeable = False
            self._cache[grid] = matrices
        return self._cache[grid]

    def __matmul__(self, other: "TransferOperator") -> "TransferOperator":
        if not isinstance(other, TransferOperator):
            return NotImplemented
        if self.grid is not None and other.grid is not None and self.grid != other.grid:
            raise InvalidArgumentError("cannot compose operators tabulated on different grids")

        def evaluate(omega):
            return np.matmul(self.evaluate(omega), other.evaluate(omega))

        return TransferOperator(evaluate, f"{self.name}*{other.name}", self.grid or other.grid)


def unitarity_defect(matrices) -> float:
    """max |U^H U - I| over a stack of matrices."""
    matrices = np.asarray(matrices)
    gram = np.matmul(np.conj(np.swapaxes(matrices, -1, -2)), matrices)
    return float(np.max(np.abs(gram - np.eye(matrices.shape[-1]))))


def pc_matrix(phi: float, channel: int):
    """Polarization rotation by phi acting on (H, V) of one channel."""
    h = mode_index(channel, "H")
    v = mode_index(channel, "V")
    cos, sin = np.cos(phi), np.sin(phi)
    matrix = np.eye(N_MODES, dtype=complex)
    matrix[h, h] = cos
    matrix[h, v] = -sin
    matrix[v, h] = sin
    matrix[v, v] = cos
    return matrix


def pbs_matrix():
    # H is transmitted, V changes channel and picks up -i
    matrix = np.zeros((N_MODES, N_MODES), dtype=complex)
    for channel in (1, 2):
        other = 3 - channel
        matrix[mode_index(channel, "H"), mode_index(channel, "H")] = 1.0
        matrix[mode_index(other, "V"), mode_index(channel, "V")] = -1j
    return matrix


def bs_matrix():
    """Balanced, polarization-preserving beam splitter with the symmetric (1, i; i, 1)/sqrt2 convention."""
    matrix = np.zeros((N_MODES, N_MODES), dtype=complex)
    for polarization in POLARIZATIONS:
        one = mode_index(1, polarization)
        two = mode_index(2, polarization)
        matrix[one, one] = matrix[two, two] = 1.0 / np.sqrt(2.0)
        matrix[one, two] = matrix[two, one] = 1j / np.sqrt(2.0)
    return matrix


def fp_phases(len_ch1: float, len_ch2: float, disp: DispersionModel, omega):
    """Diagonal of the free-propagation matrix, shape omega.shape + (4,)."""
    if len_ch1 < 0 or len_ch2 < 0:
        raise InvalidArgumentError(f"propagation lengths must be non-negative, got ({len_ch1}, {len_ch2})")
    omega = np.asarray(omega, dtype=float)
    optical_paths = np.array([
        disp.index(mode.polarization) * (len_ch1 if mode.channel == 1 else len_ch2)
        for mode in MODE_ORDER
    ])
    return np.exp(1j * omega[..., None] * optical_paths / SPEED_OF_LIGHT)


def fp_matrix(len_ch1: float, len_ch2: float, disp: DispersionModel, omega):
    phases = fp_phases(len_ch1, len_ch2, disp, omega)
    return phases[..., :, None] * np.eye(N_MODES)


def free_propagation(len_ch1: float, len_ch2: float, disp: DispersionModel, name: str = "FP") -> TransferOperator:
    if len_ch1 < 0 or len_ch2 < 0:
        raise InvalidArgumentError(f"propagation lengths must be non-negative, got ({len_ch1}, {len_ch2})")
    return TransferOperator(lambda omega: fp_matrix(len_ch1, len_ch2, disp, omega), name)


def compose_before_bs(geom: CircuitGeometry, disp: DispersionModel) -> TransferOperator:
    """
    FP3 PC2 FP2 PBS FP1 PC1 FP0.

    Converters are thin elements at their centres. PC2 sits in channel 1
    directly in front of the BS, so FP2 carries the whole (l, l + delta_l)
    and FP3 is empty.
    """
    fp0 = free_propagation(geom.x, geom.x, disp, "FP0")
    pc1 = TransferOperator.from_matrix(pc_matrix(geom.phi1, 1), "PC1")
    fp1 = free_propagation(geom.y, geom.y, disp, "FP1")
    pbs = TransferOperator.from_matrix(pbs_matrix(), "PBS")
    fp2 = free_propagation(geom.l, geom.channel2_length, disp, "FP2")
    pc2 = TransferOperator.from_matrix(pc_matrix(geom.phi2, 1), "PC2")
    fp3 = free_propagation(0.0, 0.0, disp, "FP3")
    return fp3 @ pc2 @ fp2 @ pbs @ fp1 @ pc1 @ fp0


def compose_full(geom: CircuitGeometry, disp: DispersionModel) -> TransferOperator:
    return TransferOperator.from_matrix(bs_matrix(), "BS") @ compose_before_bs(geom, disp)


@dataclass(frozen=True, eq=False)
class BiphotonState:
    """Amplitude tensor A[mode_s, mode_i, omega_s, omega_i] of a photon pair."""

    amplitudes: np.ndarray
    grid_s: FrequencyGrid
    grid_i: FrequencyGrid

    def __post_init__(self):
        amplitudes = np.asarray(self.amplitudes, dtype=complex)
        expected = (N_MODES, N_MODES, self.grid_s.n_points, self.grid_i.n_points)
        if amplitudes.shape != expected:
            raise InvalidArgumentError(f"amplitude tensor shape {amplitudes.shape} does not match {expected}")
        amplitudes.flags.writeable = False
        object.__setattr__(self, "amplitudes", amplitudes)

    def occupied_blocks(self):
        return [(m, n) for m in range(N_MODES) for n in range(N_MODES) if np.any(self.amplitudes[m, n])]

    def scaled(self, factor: complex) -> "BiphotonState":
        return BiphotonState(self.amplitudes * factor, self.grid_s, self.grid_i)


def init_state(jsa: JointSpectralAmplitude) -> BiphotonState:
    """Signal in 1H and idler in 1V, weighted by the JSA."""
    amplitudes = np.zeros((N_MODES, N_MODES, jsa.grid_s.n_points, jsa.grid_i.n_points), dtype=complex)
    amplitudes[mode_index(1, "H"), mode_index(1, "V")] = jsa.values
    return BiphotonState(amplitudes, jsa.grid_s, jsa.grid_i)


def propagate(state: BiphotonState, op: TransferOperator) -> BiphotonState:
    """A'[M, N](a, b) = sum_mn U[M, m](a) U[N, n](b) A[m, n](a, b), skipping empty blocks."""
    u_s = op.on_grid(state.grid_s)
    u_i = op.on_grid(state.grid_i)
    blocks = state.occupied_blocks()
    logger.debug("propagating %d occupied blocks through %s", len(blocks), op.name)
    out = np.zeros_like(state.amplitudes)
    for m, n in blocks:
        out += np.einsum("aM,bN,ab->MNab", u_s[:, :, m], u_i[:, :, n], state.amplitudes[m, n])
    return BiphotonState(out, state.grid_s, state.grid_i)


COMPONENT_PARTS = {"psi1": "psi1", "psi1_only": "psi1", "psi2": "psi2", "psi2_only": "psi2"}


def component_name(part: str) -> str:
    try:
        return COMPONENT_PARTS[part]
    except KeyError:
        raise InvalidArgumentError(f"part must be one of {sorted(COMPONENT_PARTS)}, got {part!r}")


def project_channels(state: BiphotonState, part: str) -> BiphotonState:
    """Keep the cross-channel blocks (psi1) or the same-channel blocks (psi2)."""
    keep_cross = component_name(part) == "psi1"
    mask = np.array([[(a.channel != b.channel) == keep_cross for b in MODE_ORDER] for a in MODE_ORDER])
    return BiphotonState(state.amplitudes * mask[:, :, None, None], state.grid_s, state.grid_i)
