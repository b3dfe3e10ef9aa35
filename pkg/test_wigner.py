"""
Tests for multi-mode Wigner slices
"""
import numpy as np
import pytest
from numpy.testing import assert_allclose

from conftest import random_density
from modules.errors import DimensionError, ParameterError, PhysicalityError
from modules.fock import FockSpace, coherent_state, displacement, fock_state, tensor_state
from modules.model import KerrArrayParams, Truncations, momentum_space
from modules.states import multimode_cat, parity_ops
from modules.wigner import (Axis, SliceSpec, default_extent, displaced_parity, mode_rotation_note,
                            momentum_displacements, wigner_cat_analytic, wigner_line, wigner_plane,
                            wigner_point)

PEAK = (2 / np.pi) ** 3
TWO_PI = 2 * np.pi


@pytest.fixture(scope="module")
def cat_space():
    return momentum_space(KerrArrayParams(N=3, G=1.0, U=1.0), Truncations(40, 2))


@pytest.fixture(scope="module")
def cats(cat_space):
    zeta = 1j * np.sqrt(3)
    return {parity: multimode_cat(zeta, cat_space, TWO_PI, parity) for parity in (1, -1)}


def test_vacuum_value():
    space = FockSpace((6, 6, 6), (TWO_PI / 3, 2 * TWO_PI / 3, TWO_PI))
    psi = tensor_state([fock_state(0, 6)] * 3)
    assert wigner_point(psi, np.zeros(3), space) == pytest.approx(PEAK)


def test_origin_value_is_scaled_parity(rng):
    space = FockSpace((3, 4), (np.pi, TWO_PI))
    rho = random_density(rng, 12)
    parity = parity_ops(space).total.toarray()
    expected = (2 / np.pi) ** 2 * np.trace(rho @ parity).real
    assert wigner_point(rho, np.zeros(2), space) == pytest.approx(expected, abs=1e-12)


def test_displaced_parity_matches_matrix_exponential():
    beta, M = 0.3 - 0.2j, 40
    exact = displaced_parity(beta, M)
    reference = displacement(2 * beta, M).toarray() @ np.diag((-1.0) ** np.arange(M))
    assert_allclose(exact[:12, :12], reference[:12, :12], atol=1e-10)


def test_displaced_parity_is_hermitian_involution():
    op = displaced_parity(0.4 + 0.1j, 60)
    assert_allclose(op[:20, :20], op.conj().T[:20, :20], atol=1e-12)
    assert_allclose((op @ op)[:20, :20], np.eye(20), atol=1e-8)


def test_momentum_displacements_of_uniform_point(cat_space):
    betas = momentum_displacements(np.full(3, 1j), cat_space)
    assert_allclose(betas, [0, 0, 1j * np.sqrt(3)], atol=1e-12)
    with pytest.raises(DimensionError):
        momentum_displacements(np.zeros(2), cat_space)


@pytest.mark.parametrize("parity", [1, -1])
def test_cat_origin_sign(cats, parity):
    cat = cats[parity]
    assert wigner_cat_analytic(cat, np.zeros(3)) == pytest.approx(parity * PEAK, rel=1e-8)
    assert wigner_point(cat, np.zeros(3)) == pytest.approx(parity * PEAK, rel=1e-8)


def test_cat_lobes_sit_at_local_amplitudes(cats):
    spec = SliceSpec(3, ("p:1,2,3",))
    lobe = np.sqrt(2.0)
    for parity in (1, -1):
        values = [wigner_cat_analytic(cats[parity], spec.alphas([p])) for p in (lobe, -lobe)]
        assert_allclose(values, 0.5 * PEAK, rtol=1e-2)
    slice_ = wigner_line(cats[1], spec, resolution=41, extent=4.0)
    assert slice_.method == "analytic"
    assert_allclose(slice_.values, slice_.values[::-1], atol=1e-12)


@pytest.mark.filterwarnings("ignore::modules.errors.TruncationWarning")
def test_analytic_and_numeric_planes_agree(cats, cat_space):
    spec = SliceSpec(3, ("x:1,2,3", "p:1,2,3"))
    for parity in (1, -1):
        analytic = wigner_plane(cats[parity], spec, resolution=21, extent=2.5)
        numeric = wigner_plane(cats[parity].vector, spec, resolution=21, extent=2.5,
                               space=cat_space, method="numeric")
        assert analytic.method == "analytic" and numeric.method == "numeric"
        assert_allclose(numeric.values, analytic.values, atol=1e-8)


def test_fringes_distinguish_cats_from_coherent_states(cats, cat_space):
    spec = SliceSpec(3, ("x:1,2,3",))
    plus = wigner_line(cats[1], spec, resolution=81, extent=3.0).values
    minus = wigner_line(cats[-1], spec, resolution=81, extent=3.0).values
    assert plus.min() < -1e-3
    assert minus.min() < -1e-3
    assert np.argmax(plus) == np.argmin(minus)

    coherent = tensor_state([fock_state(0, 2), fock_state(0, 2),
                             coherent_state(1j * np.sqrt(3), 40).vector])
    line = wigner_line(coherent, spec, resolution=81, extent=3.0, space=cat_space, method="numeric")
    assert line.values.min() > -1e-10


def test_single_site_normalization():
    cat = multimode_cat(1.0, FockSpace.single(30, TWO_PI), TWO_PI, 1)
    spec = SliceSpec(1, ("x:1", "p:1"))
    plane = wigner_plane(cat, spec, resolution=121, extent=6.0)
    step = plane.grids[0][1] - plane.grids[0][0]
    assert plane.values.sum() * step ** 2 / 2 == pytest.approx(1.0, abs=1e-3)


def test_density_matrix_and_vector_agree(cats, cat_space):
    vector = cats[-1].vector
    rho = np.outer(vector, vector.conj())
    alphas = np.array([0.3, -0.2j, 0.5 + 0.5j])
    assert wigner_point(rho, alphas, cat_space) == pytest.approx(
        wigner_point(vector, alphas, cat_space), abs=1e-12)


def test_non_hermitian_input_rejected():
    space = FockSpace.single(4, TWO_PI)
    coherence = np.outer(fock_state(0, 4), fock_state(1, 4))
    with pytest.raises(PhysicalityError):
        wigner_point(coherence, np.array([0.3 + 0.1j]), space)


def test_bare_array_needs_space():
    with pytest.raises(DimensionError):
        wigner_point(fock_state(0, 4), np.zeros(1))


def test_rotation_notes():
    aligned = mode_rotation_note(TWO_PI, 3)
    assert aligned.identity
    shifted = mode_rotation_note(TWO_PI / 3, 3)
    assert not shifted.identity
    assert_allclose(np.exp(1j * np.array(shifted.angles)),
                    np.exp(1j * TWO_PI / 3 * np.arange(1, 4)), atol=1e-12)


def test_rotated_frame_maps_back_to_aligned_amplitudes():
    note = mode_rotation_note(TWO_PI / 3, 3)
    spec = SliceSpec(3, ("p:1,2,3",), rotation=note.angles)
    alphas = spec.alphas([np.sqrt(2.0)])
    assert_allclose(alphas, 1j * np.exp(-1j * np.array(note.angles)))


def test_axis_parsing():
    axis = Axis.parse("p:1,2")
    assert axis == Axis("p", (1, 2))
    assert axis.label == "p_1_2"
    with pytest.raises(ParameterError):
        Axis.parse("q:1")
    with pytest.raises(ParameterError):
        Axis.parse("p1")


def test_slice_validation():
    with pytest.raises(ParameterError):
        SliceSpec(3, ("x:1", "x:1,2"))
    with pytest.raises(ParameterError):
        SliceSpec(3, ("x:4",))
    with pytest.raises(ParameterError):
        SliceSpec(3, ("x:1", "p:1", "x:2"))
    with pytest.raises(ParameterError):
        SliceSpec(3, ("x:1",), rotation=(0.0,))
    with pytest.raises(ParameterError):
        wigner_line(fock_state(0, 2), SliceSpec(1, ("x:1", "p:1")), space=FockSpace.single(2))


def test_pinned_coordinates_enter_amplitudes():
    spec = SliceSpec(2, ("x:1",), pinned={("p", 2): 1.0})
    assert_allclose(spec.alphas([2.0]), [2 / np.sqrt(2), 1j / np.sqrt(2)])


def test_analytic_method_needs_cat():
    space = FockSpace.single(4, TWO_PI)
    with pytest.raises(ParameterError):
        wigner_line(fock_state(0, 4), SliceSpec(1, ("x:1",)), space=space, method="analytic")


def test_slice_rows_and_extent(cats):
    assert default_extent(cats[1]) == pytest.approx(2 * np.sqrt(2) + 3.0)
    slice_ = wigner_line(cats[1], SliceSpec(3, ("p:1,2,3",)), resolution=5)
    rows = slice_.rows()
    assert len(rows) == 5
    assert set(rows[0]) == {"p_1_2_3", "W"}
