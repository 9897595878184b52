import numpy as np
import pytest
from scipy.constants import c
from scipy.stats import unitary_group

from circuit import (MODE_ORDER, BiphotonState, CircuitGeometry, TransferOperator, bs_matrix, compose_before_bs,
                     compose_full, fp_matrix, init_state, mode_index, pbs_matrix, pc_matrix, project_channels,
                     propagate, unitarity_defect)
from conftest import lobe_grid, narrowband_jsa
from detection import total_probability
from errors import InvalidArgumentError
from spectral import DispersionModel, build_grid, normalize_jsa

H1, V1, H2, V2 = (mode_index(1, "H"), mode_index(1, "V"), mode_index(2, "H"), mode_index(2, "V"))


def basis(mode):
    vector = np.zeros(4, dtype=complex)
    vector[mode] = 1.0
    return vector


def test_mode_ordering():
    assert [str(mode) for mode in MODE_ORDER] == ["1H", "1V", "2H", "2V"]
    assert (H1, V1, H2, V2) == (0, 1, 2, 3)
    with pytest.raises(InvalidArgumentError):
        mode_index(3, "H")
    with pytest.raises(InvalidArgumentError):
        mode_index(1, "D")


def test_converter_off_is_identity():
    np.testing.assert_array_equal(pc_matrix(0.0, 1), np.eye(4))


def test_full_conversion_swaps_polarizations_in_one_channel():
    matrix = pc_matrix(np.pi / 2, 1)
    assert abs((matrix @ basis(H1))[V1]) == pytest.approx(1.0)
    assert abs((matrix @ basis(V1))[H1]) == pytest.approx(1.0)
    np.testing.assert_array_equal(matrix[2:, 2:], np.eye(2))


def test_half_conversion_makes_equal_superpositions():
    block = pc_matrix(np.pi / 4, 2)[2:, 2:]
    np.testing.assert_allclose(np.abs(block), np.full((2, 2), 1 / np.sqrt(2)), atol=1e-15)


def test_pbs_keeps_h_and_routes_v():
    matrix = pbs_matrix()
    assert abs((matrix @ basis(H1))[H1]) == 1.0
    assert abs((matrix @ basis(V1))[V2]) == 1.0
    assert abs((matrix @ basis(V2))[V1]) == 1.0
    assert unitarity_defect(matrix) < 1e-15


def test_bs_splits_single_photons_evenly():
    matrix = bs_matrix()
    output = matrix @ basis(V1)
    np.testing.assert_allclose(np.abs(output[[V1, V2]]) ** 2, [0.5, 0.5], atol=1e-15)
    assert unitarity_defect(matrix) < 1e-15


def test_free_propagation_phases(disp):
    omega = 1.2e15
    np.testing.assert_array_equal(fp_matrix(0.0, 0.0, disp, omega), np.eye(4))

    same = DispersionModel(2.2, 2.2)
    matrix = fp_matrix(1e-3, 1e-3, same, omega)
    np.testing.assert_allclose(matrix, np.exp(1j * omega * 2.2 * 1e-3 / c) * np.eye(4), atol=1e-10)

    matrix = fp_matrix(1e-3, 2e-3, disp, omega)
    difference = np.angle(matrix[H1, H1] / matrix[V1, V1])
    expected = np.angle(np.exp(1j * omega * 1e-3 * (disp.n_H - disp.n_V) / c))
    assert difference == pytest.approx(expected, abs=1e-9)


def test_geometry_invariants():
    with pytest.raises(InvalidArgumentError):
        CircuitGeometry(l_pdc=1e-3, x=-1e-3, y=1e-3, l=1e-3)
    with pytest.raises(InvalidArgumentError, match="shorter than zero"):
        CircuitGeometry(l_pdc=1e-3, x=1e-3, y=1e-3, l=1e-3, delta_l=-1e-3)
    with pytest.raises(InvalidArgumentError, match="L_PC1/2"):
        CircuitGeometry(l_pdc=1e-3, x=1e-3, y=1e-3, l=1e-3, l_pc1=4e-3)
    geometry = CircuitGeometry(l_pdc=1e-3, x=1e-3, y=1e-3, l=1e-3, delta_l=-0.5e-3)
    assert geometry.channel2_length == pytest.approx(0.5e-3)
    assert geometry.with_delta_l(2e-3).delta_l == 2e-3
    assert geometry.delta_l == -0.5e-3


def test_collapsed_circuit_is_bs_times_pbs(disp, pump):
    geometry = CircuitGeometry(l_pdc=1e-3, x=0.0, y=0.0, l=0.0, phi1=0.0, phi2=0.0)
    grid = lobe_grid(disp, pump, 1e-3, 8)
    np.testing.assert_allclose(compose_full(geometry, disp).on_grid(grid),
                               np.broadcast_to(bs_matrix() @ pbs_matrix(), (8, 4, 4)), atol=1e-15)


def test_before_bs_is_full_circuit_without_the_splitter(disp, pump, mm_geometry):
    grid = lobe_grid(disp, pump, 1e-3, 16)
    geometry = mm_geometry.with_delta_l(0.3e-3)
    full = compose_full(geometry, disp).on_grid(grid)
    before = compose_before_bs(geometry, disp).on_grid(grid)
    np.testing.assert_allclose(np.linalg.inv(bs_matrix()) @ full, before, atol=1e-12)


@pytest.mark.parametrize("phi1, occupied", [(0.0, (V1, V2)), (np.pi / 2, (V2, V1))])
def test_converter_angle_decides_which_photon_changes_channel(disp, pump, mm_geometry, phi1, occupied):
    jsa = narrowband_jsa(disp, pump, mm_geometry.l_pdc, 16)
    geometry = CircuitGeometry(**{**mm_geometry.descriptor(), "phi1": phi1})
    state = propagate(init_state(jsa), compose_before_bs(geometry, disp))
    powers = np.sum(np.abs(state.amplitudes) ** 2, axis=(2, 3))
    assert powers[occupied] == pytest.approx(powers.sum(), rel=1e-12)


def test_random_circuits_are_unitary_and_keep_the_norm(disp, pump, rng):
    jsa = narrowband_jsa(disp, pump, 1e-2, 16)
    initial = init_state(jsa)
    for _ in range(50):
        l = rng.uniform(1e-3, 2e-2)
        l_pc1 = rng.uniform(0.0, 1e-2)
        geometry = CircuitGeometry(
            l_pdc=1e-2,
            x=rng.uniform(l_pc1 / 2, 5e-2),
            y=rng.uniform(l_pc1 / 2, 2e-2),
            l=l,
            delta_l=rng.uniform(-0.9 * l, l),
            l_pc1=l_pc1,
            phi1=rng.uniform(-np.pi, np.pi),
            phi2=rng.uniform(-np.pi, np.pi),
        )
        operator = compose_full(geometry, disp)
        assert unitarity_defect(operator.on_grid(jsa.grid_s)) < 1e-12
        assert total_probability(propagate(initial, operator)) == pytest.approx(1.0, abs=1e-10)


def test_init_state_places_the_pair_in_1h_1v(disp, pump):
    jsa = narrowband_jsa(disp, pump, 1e-2, 16)
    state = init_state(jsa)
    np.testing.assert_array_equal(state.amplitudes[H1, V1], jsa.values)
    assert not np.any(state.amplitudes[V1, H1])
    assert state.occupied_blocks() == [(H1, V1)]
    assert total_probability(state) == pytest.approx(1.0, abs=1e-12)


def random_table(grid, rng):
    return np.stack([unitary_group.rvs(4, random_state=rng) for _ in range(grid.n_points)])


def random_state(grid, rng):
    amplitudes = rng.normal(size=(4, 4, grid.n_points, grid.n_points)) \
        + 1j * rng.normal(size=(4, 4, grid.n_points, grid.n_points))
    state = BiphotonState(amplitudes, grid, grid)
    return state.scaled(1.0 / np.sqrt(total_probability(state)))


def test_identity_operator_leaves_the_state_alone(rng):
    grid = build_grid(1.2e15, 1e12, 6)
    state = random_state(grid, rng)
    output = propagate(state, TransferOperator.from_matrix(np.eye(4)))
    np.testing.assert_allclose(output.amplitudes, state.amplitudes, atol=1e-15)


def test_propagation_composes_like_the_operators(rng):
    grid = build_grid(1.2e15, 1e12, 6)
    state = random_state(grid, rng)
    first = TransferOperator.from_table(grid, random_table(grid, rng))
    second = TransferOperator.from_table(grid, random_table(grid, rng))
    stepwise = propagate(propagate(state, first), second)
    combined = propagate(state, second @ first)
    np.testing.assert_allclose(stepwise.amplitudes, combined.amplitudes, atol=1e-12)
    assert total_probability(stepwise) == pytest.approx(1.0, abs=1e-12)


def test_tabulated_operator_refuses_other_grids(rng):
    grid = build_grid(1.2e15, 1e12, 6)
    other = build_grid(1.2e15, 2e12, 6)
    operator = TransferOperator.from_table(grid, random_table(grid, rng))
    with pytest.raises(InvalidArgumentError):
        operator.on_grid(other)
    with pytest.raises(InvalidArgumentError):
        operator.evaluate(other.nodes)
    with pytest.raises(InvalidArgumentError):
        TransferOperator.from_table(grid, np.zeros((5, 4, 4)))


def test_operator_evaluation_is_cached_per_grid(disp, mm_geometry):
    grid = build_grid(1.2e15, 1e12, 6)
    operator = compose_full(mm_geometry, disp)
    assert operator.on_grid(grid) is operator.on_grid(grid)
    np.testing.assert_array_equal(operator.on_grid(grid), operator.evaluate(grid.nodes))


def test_state_and_operator_grids_must_agree(rng):
    grid = build_grid(1.2e15, 1e12, 6)
    other = build_grid(1.2e15, 2e12, 6)
    operator = TransferOperator.from_table(other, random_table(other, rng))
    with pytest.raises(InvalidArgumentError):
        propagate(random_state(grid, rng), operator)


def test_project_channels_splits_cross_and_same_channel_blocks(rng):
    grid = build_grid(1.2e15, 1e12, 4)
    state = random_state(grid, rng)
    cross = project_channels(state, "psi1")
    same = project_channels(state, "psi2_only")
    np.testing.assert_array_equal(cross.amplitudes + same.amplitudes, state.amplitudes)
    assert not np.any(cross.amplitudes[V1, V1])
    assert not np.any(same.amplitudes[V1, V2])
    with pytest.raises(InvalidArgumentError):
        project_channels(state, "psi3")


def test_state_shape_is_checked():
    grid = build_grid(1.2e15, 1e12, 4)
    with pytest.raises(InvalidArgumentError):
        BiphotonState(np.zeros((4, 4, 4, 5)), grid, grid)


def test_normalized_random_jsa_survives_the_full_circuit(disp, pump, mm_geometry, rng):
    grid = lobe_grid(disp, pump, mm_geometry.l_pdc, 12)
    values = rng.normal(size=(12, 12)) + 1j * rng.normal(size=(12, 12))
    state = propagate(init_state(normalize_jsa(grid, grid, values)), compose_full(mm_geometry, disp))
    assert total_probability(state) == pytest.approx(1.0, abs=1e-12)
