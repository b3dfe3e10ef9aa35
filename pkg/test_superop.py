"""
Tests for Liouvillian assembly: oracle equivalences and Lindblad-form properties
"""
import numpy as np
import pytest
from numpy.testing import assert_allclose

from conftest import random_density, random_matrix
from modules.errors import DimensionError, ParameterError
from modules.fock import annihilation, fock_state
from modules.states import dfs_operators, parity_ops
from modules.superop import (COLUMN_STACKING, adjoint_for, adjoint_liouvillian, apply, devectorize,
                             liouvillian, liouvillian_for, trace_preservation_defect, vectorize)


def _random_instance(rng, dim=6, n_jumps=2):
    X = random_matrix(rng, dim)
    H = 0.5 * (X + X.conj().T)
    jumps = [(random_matrix(rng, dim), float(rate)) for rate in rng.uniform(0.2, 2.0, n_jumps)]
    return H, jumps


def _lindblad_direct(H, jumps, rho):
    out = -1j * (H @ rho - rho @ H)
    for L, rate in jumps:
        LdL = L.conj().T @ L
        out += rate * (L @ rho @ L.conj().T - 0.5 * (LdL @ rho + rho @ LdL))
    return out


def _adjoint_direct(H, jumps, J):
    out = 1j * (H @ J - J @ H)
    for L, rate in jumps:
        LdL = L.conj().T @ L
        out += rate * (L.conj().T @ J @ L - 0.5 * (LdL @ J + J @ LdL))
    return out


def test_vectorize_roundtrip_and_stride(rng):
    rho = random_matrix(rng, 5)
    assert_allclose(devectorize(vectorize(rho)), rho)
    diagonal = np.diag([1.0, 2.0, 3.0, 4.0])
    vec = vectorize(diagonal)
    assert_allclose(vec[::5], [1, 2, 3, 4])
    assert np.count_nonzero(vec) == 4


def test_vectorization_identity(rng):
    A, rho, B = (random_matrix(rng, 4) for _ in range(3))
    assert_allclose(vectorize(A @ rho @ B), np.kron(B.T, A) @ vectorize(rho), atol=1e-12)


def test_devectorize_needs_square_length():
    with pytest.raises(DimensionError):
        devectorize(np.zeros(7))


def test_amplitude_damping_generator():
    L = liouvillian(None, [(annihilation(2), 1.0)])
    excited = np.outer(fock_state(1, 2), fock_state(1, 2))
    result = devectorize(L.matrix @ vectorize(excited))
    assert_allclose(result, np.diag([1.0, -1.0]), atol=1e-15)
    assert L.convention == COLUMN_STACKING


def test_materialized_matches_operator_arithmetic(rng):
    H, jumps = _random_instance(rng)
    L = liouvillian(H, jumps)
    rho = random_density(rng, 6)
    expected = _lindblad_direct(H, jumps, rho)
    assert_allclose(devectorize(L.matrix @ vectorize(rho)), expected, atol=1e-12)


def test_matrix_free_matches_materialized(rng):
    H, jumps = _random_instance(rng)
    L = liouvillian(H, jumps)
    rho = random_density(rng, 6)
    assert_allclose(apply(L, rho), devectorize(L.matrix @ vectorize(rho)), atol=1e-12)
    assert_allclose(L.matvec(vectorize(rho)), L.matrix @ vectorize(rho), atol=1e-12)

    L_adj = adjoint_liouvillian(H, jumps)
    J = random_matrix(rng, 6)
    assert_allclose(apply(L_adj, J), devectorize(L_adj.matrix @ vectorize(J)), atol=1e-12)
    assert_allclose(apply(L_adj, J), _adjoint_direct(H, jumps, J), atol=1e-12)


def test_linearity(rng):
    H, jumps = _random_instance(rng)
    L = liouvillian(H, jumps, materialize=False)
    rho1, rho2 = random_density(rng, 6), random_density(rng, 6)
    combined = apply(L, 0.3 * rho1 + (0.7 - 0.2j) * rho2)
    assert_allclose(combined, 0.3 * apply(L, rho1) + (0.7 - 0.2j) * apply(L, rho2), atol=1e-12)


def test_adjoint_duality(rng):
    H, jumps = _random_instance(rng)
    L = liouvillian(H, jumps)
    L_adj = adjoint_liouvillian(H, jumps)
    rho, J = random_density(rng, 6), random_matrix(rng, 6)
    lhs = np.trace(J.conj().T @ apply(L, rho))
    rhs = np.trace(apply(L_adj, J).conj().T @ rho)
    assert abs(lhs - rhs) < 1e-10


def test_trace_preservation_and_unitality(rng):
    H, jumps = _random_instance(rng)
    L = liouvillian(H, jumps)
    assert trace_preservation_defect(L) < 1e-10 * L.norm()
    assert trace_preservation_defect(liouvillian(H, jumps, materialize=False)) < 1e-10 * L.norm()
    assert_allclose(apply(adjoint_liouvillian(H, jumps), np.eye(6)), 0, atol=1e-12)


def test_spectrum_left_half_plane_and_conjugate_pairs(rng):
    H, jumps = _random_instance(rng, dim=4)
    L = liouvillian(H, jumps)
    w = np.linalg.eigvals(L.toarray())
    assert w.real.max() <= 1e-8 * L.norm()
    for value in w:
        assert np.min(np.abs(w - np.conj(value))) < 1e-8


def test_negative_rate_and_mismatch_rejected(rng):
    H, _ = _random_instance(rng, dim=3)
    with pytest.raises(ParameterError):
        liouvillian(H, [(np.eye(3), -1.0)])
    with pytest.raises(DimensionError):
        liouvillian(H, [(np.eye(4), 1.0)])
    with pytest.raises(DimensionError):
        apply(liouvillian(H, []), np.eye(4))


def test_full_kerr_model_is_trace_preserving(kerr_model):
    L = liouvillian_for(kerr_model)
    assert trace_preservation_defect(L) < 1e-10 * L.norm()


def test_dfs_element_is_stationary(twophoton_zeno):
    L = liouvillian_for(twophoton_zeno, materialize=False)
    for xi in dfs_operators(twophoton_zeno.zeta, twophoton_zeno.space, 0).values():
        assert np.linalg.norm(apply(L, xi)) < 1e-8


def test_nonlocal_loss_breaks_total_parity(kerr_model):
    L_adj = adjoint_for(kerr_model, materialize=False)
    parity = parity_ops(kerr_model.space, kerr_model.phi_index).total.toarray()
    image = apply(L_adj, parity)
    assert np.linalg.norm(image) > 1e-3
    assert abs(image[0, 0]) < 1e-12
