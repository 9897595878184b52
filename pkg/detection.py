"""
Polarization-resolved detection behind the balanced beam splitter and delay scans.

Channel 1 and channel 2 each end in a detector; a coincidence is one photon in
each channel. The amplitude tensor is symmetrized over the two photon orderings
before any probability is taken.
"""
import logging
from dataclasses import astuple, dataclass, field, fields
from typing import Mapping, Optional, Sequence

import numpy as np

from circuit import (BiphotonState, CircuitGeometry, TransferOperator, bs_matrix, component_name,
                     compose_before_bs, compose_full, init_state, mode_index, project_channels, propagate)
from errors import InvalidArgumentError, ScanError
from spectral import DispersionModel, FrequencyGrid, JointSpectralAmplitude, PumpSpec, build_jsa

logger = logging.getLogger(__name__)

NORM_TOLERANCE = 1e-8
CSV_HEADER = ("delta_l_um", "p_vv", "p_hh", "p_hv", "p_vh", "p_bunch_1", "p_bunch_2")


@dataclass(frozen=True)
class CoincidenceRecord:
    p_vv: float
    p_hh: float
    p_hv: float
    p_vh: float
    p_bunch_1: float
    p_bunch_2: float

    @property
    def coincidences(self) -> float:
        return self.p_vv + self.p_hh + self.p_hv + self.p_vh

    @property
    def total(self) -> float:
        return self.coincidences + self.p_bunch_1 + self.p_bunch_2

    def as_row(self) -> tuple:
        return astuple(self)


RECORD_FIELDS = tuple(f.name for f in fields(CoincidenceRecord))


def _symmetrized(state: BiphotonState):
    # S[M, N](a, b) = A[M, N](a, b) + A[N, M](b, a)
    if state.grid_s != state.grid_i:
        raise InvalidArgumentError("detection needs identical signal and idler grids to exchange the photons")
    return state.amplitudes + state.amplitudes.transpose(1, 0, 3, 2)


def _weights(state: BiphotonState):
    return np.outer(state.grid_s.weights, state.grid_i.weights)


def _power(symmetrized, weights, mode_a: int, mode_b: int) -> float:
    return float(np.sum(weights * np.abs(symmetrized[mode_a, mode_b]) ** 2))


def _check_norm(total: float):
    if abs(total - 1.0) > NORM_TOLERANCE:
        logger.warning("state norm is %.12g, probabilities are not normalized", total)


def coincidence_probability(state: BiphotonState, pol_b: str, pol_c: str) -> float:
    """Probability of one photon with pol_b at detector 1 and one with pol_c at detector 2."""
    symmetrized = _symmetrized(state)
    weights = _weights(state)
    _check_norm(_total(symmetrized, weights))
    return _power(symmetrized, weights, mode_index(1, pol_b), mode_index(2, pol_c))


def _bunching(symmetrized, weights, channel: int) -> float:
    h = mode_index(channel, "H")
    v = mode_index(channel, "V")
    # same-mode pairs are counted twice by the symmetrization
    return (_power(symmetrized, weights, h, v)
            + 0.5 * _power(symmetrized, weights, h, h)
            + 0.5 * _power(symmetrized, weights, v, v))


def bunching_probability(state: BiphotonState, channel: int) -> float:
    """Probability that both photons leave through the given channel, any polarizations."""
    if channel not in (1, 2):
        raise InvalidArgumentError(f"channel must be 1 or 2, got {channel!r}")
    return _bunching(_symmetrized(state), _weights(state), channel)


def _total(symmetrized, weights) -> float:
    return 0.5 * float(np.sum(weights[None, None] * np.abs(symmetrized) ** 2))


def total_probability(state: BiphotonState) -> float:
    return _total(_symmetrized(state), _weights(state))


def coincidence_record(state: BiphotonState) -> CoincidenceRecord:
    symmetrized = _symmetrized(state)
    weights = _weights(state)

    def pair(pol_b, pol_c):
        return _power(symmetrized, weights, mode_index(1, pol_b), mode_index(2, pol_c))

    return CoincidenceRecord(
        p_vv=pair("V", "V"),
        p_hh=pair("H", "H"),
        p_hv=pair("H", "V"),
        p_vh=pair("V", "H"),
        p_bunch_1=_bunching(symmetrized, weights, 1),
        p_bunch_2=_bunching(symmetrized, weights, 2),
    )


@dataclass(frozen=True, eq=False)
class ScanResult:
    """
    One coincidence record per delta_l (metres). delta_l_um is the abscissa
    written to CSV; it defaults to delta_l_values * 1e6, and callers that built
    their axis in micrometres pass it in so the written values stay on that axis.
    """

    delta_l_values: np.ndarray
    records: Sequence[CoincidenceRecord]
    metadata: Mapping = field(default_factory=dict)
    delta_l_um: Optional[np.ndarray] = None

    def __post_init__(self):
        values = np.array(self.delta_l_values, dtype=float)
        if values.ndim != 1 or len(values) != len(self.records):
            raise InvalidArgumentError("delta_l_values and records must be 1-D and of equal length")
        if len(values) > 1 and not np.all(np.diff(values) > 0):
            raise InvalidArgumentError("delta_l_values must be strictly increasing")
        if self.delta_l_um is None:
            micrometres = values * 1e6
        else:
            micrometres = np.array(self.delta_l_um, dtype=float)
            if micrometres.shape != values.shape or not np.allclose(micrometres * 1e-6, values, rtol=1e-12, atol=0):
                raise InvalidArgumentError("delta_l_um does not describe the same axis as delta_l_values")
        values.flags.writeable = False
        micrometres.flags.writeable = False
        object.__setattr__(self, "delta_l_values", values)
        object.__setattr__(self, "delta_l_um", micrometres)
        object.__setattr__(self, "records", tuple(self.records))

    def column(self, name: str):
        if name == "delta_l":
            return self.delta_l_values.copy()
        if name == "delta_l_um":
            return self.delta_l_um.copy()
        if name not in RECORD_FIELDS:
            raise InvalidArgumentError(f"unknown column {name!r}")
        return np.array([getattr(record, name) for record in self.records])

    def rows(self):
        """Rows for CSV_HEADER with every value written to 17 significant digits."""
        for delta_l_um, record in zip(self.delta_l_um, self.records):
            yield [format(delta_l_um, ".17g")] + [format(value, ".17g") for value in record.as_row()]


def _validated_range(delta_l_range):
    values = np.asarray(delta_l_range, dtype=float)
    if values.ndim != 1 or values.size == 0:
        raise InvalidArgumentError("delta_l range must be a non-empty 1-D sequence")
    if not np.all(np.isfinite(values)):
        raise InvalidArgumentError("delta_l range contains non-finite values")
    if np.any(np.diff(values) <= 0):
        raise InvalidArgumentError("delta_l range must be strictly increasing")
    return values


def _scan(geom_template: CircuitGeometry, disp: DispersionModel, pump: PumpSpec, grid: FrequencyGrid,
          delta_l_range, part: Optional[str], jsa: Optional[JointSpectralAmplitude]) -> ScanResult:
    values = _validated_range(delta_l_range)
    if jsa is None:
        jsa = build_jsa(grid, grid, pump, disp, geom_template.l_pdc)
    elif jsa.grid_s != grid or jsa.grid_i != grid:
        raise InvalidArgumentError("the supplied JSA was built on a different grid")
    initial = init_state(jsa)
    splitter = TransferOperator.from_matrix(bs_matrix(), "BS")
    label = "total" if part is None else component_name(part)

    records = []
    warnings = []
    for index, delta_l in enumerate(values):
        try:
            geom = geom_template.with_delta_l(delta_l)
        except InvalidArgumentError as exc:
            raise ScanError(index, delta_l, str(exc)) from exc

        if part is None:
            output = propagate(initial, compose_full(geom, disp))
        else:
            before = propagate(initial, compose_before_bs(geom, disp))
            output = propagate(project_channels(before, part), splitter)
        record = coincidence_record(output)

        if part is None and abs(record.total - 1.0) > NORM_TOLERANCE:
            message = f"scan point {index}: probabilities sum to {record.total:.12g}"
            logger.warning(message)
            warnings.append(message)
        logger.debug("%s scan point %d/%d: delta_l=%.6g um p_vv=%.6f",
                     label, index + 1, len(values), delta_l * 1e6, record.p_vv)
        records.append(record)

    metadata = {
        "part": label,
        "geometry": geom_template.descriptor(),
        "dispersion": {"n_H": disp.n_H, "n_V": disp.n_V},
        "pump": pump.descriptor(),
        "grid": grid.descriptor(),
        "jsa_warnings": tuple(jsa.metadata.get("warnings", ())),
        "warnings": tuple(warnings),
    }
    return ScanResult(values, records, metadata)


def scan_delay(geom_template: CircuitGeometry, disp: DispersionModel, pump: PumpSpec, grid: FrequencyGrid,
               delta_l_range, jsa: Optional[JointSpectralAmplitude] = None) -> ScanResult:
    """Coincidence record of the full circuit for every delta_l (metres) in the range."""
    return _scan(geom_template, disp, pump, grid, delta_l_range, None, jsa)


def scan_component(geom_template: CircuitGeometry, disp: DispersionModel, pump: PumpSpec, grid: FrequencyGrid,
                   delta_l_range, part: str, jsa: Optional[JointSpectralAmplitude] = None) -> ScanResult:
    """
    As scan_delay, but only the cross-channel (psi1) or same-channel (psi2)
    part of the state in front of the BS reaches the detectors.
    """
    component_name(part)
    return _scan(geom_template, disp, pump, grid, delta_l_range, part, jsa)
