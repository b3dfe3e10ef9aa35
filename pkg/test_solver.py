"""
Tests for steady-state kernels, conserved quantities, gaps and time evolution
"""
import numpy as np
import pytest
from numpy.testing import assert_allclose

from modules.errors import ParameterError
from modules.fock import annihilation
from modules.model import KerrArrayParams, Truncations, build_model, effective_zeno_kerr, zeno_rate
from modules.states import dfs_operators, hs_distance, initial_state, model_cat, parity_ops
from modules.superop import adjoint_for, devectorize, liouvillian, liouvillian_for, vectorize
from modules.solver import (KernelSolver, SteadyStateSolver, _propagate_expm, conserved_defect,
                            conserved_quantities, dissipative_gap, evolve, first_excited_energy,
                            gap_estimates, get_solver, log_time_grid, loglog_slope, observables_for,
                            solve_steady, steady_kernel)


@pytest.fixture(scope="module")
def small_kerr():
    """Two sites, |zeta|^2 = 1, three levels per decaying mode: dense eigensolvers apply"""
    return build_model(KerrArrayParams(N=2, G=0.5, U=1.0, gamma=10.0), Truncations(14, 3))


def test_amplitude_damping_kernel():
    L = liouvillian(None, [(annihilation(3), 1.0)])
    kernel = steady_kernel(L)
    assert kernel.dim == 1
    (rho,) = kernel.steady_states()
    assert_allclose(rho, np.diag([1.0, 0.0, 0.0]), atol=1e-10)


def test_lossless_array_kernel_is_cat_manifold(small_kerr):
    L = liouvillian_for(small_kerr)
    reference = list(dfs_operators(small_kerr.zeta, small_kerr.space, small_kerr.phi_index).values())
    kernel = steady_kernel(L, reference=reference)
    assert kernel.dim == 4
    assert kernel.projection_residual(reference) < 1e-4
    for m in kernel.matrices:
        assert_allclose(m, m.conj().T, atol=1e-12)


def test_conserved_quantities_biorthogonal(small_kerr):
    L = liouvillian_for(small_kerr)
    solver = KernelSolver(L)
    reference = dfs_operators(small_kerr.zeta, small_kerr.space, small_kerr.phi_index)
    kernel = steady_kernel(L, reference=list(reference.values()), solver=solver)
    basis = kernel.align(list(reference.values()))
    conserved = conserved_quantities(adjoint_for(small_kerr, materialize=False), basis,
                                     tuple(reference), solver=solver)
    assert conserved.biorthogonality_defect() < 1e-8
    assert conserved.labels == ("++", "--", "+-", "-+")


def test_steady_state_from_vacuum(small_kerr):
    result = solve_steady(small_kerr)
    assert result.kernel_dim == 4
    c = result.coefficients
    assert c.c_pp + c.c_mm == pytest.approx(1.0, abs=1e-6)
    assert c.c_mm > -1e-8
    assert c.c_pp > 0.5
    assert 0.5 <= result.purity <= 1.0 + 1e-9
    assert result.rho.check()["valid"]


def test_cat_input_is_already_steady(small_kerr):
    result = solve_steady(small_kerr, initial_state(small_kerr, "cat+"))
    assert result.coefficients.c_pp == pytest.approx(1.0, abs=1e-6)
    assert abs(result.coefficients.c_pm) < 1e-6
    assert result.purity == pytest.approx(1.0, abs=1e-5)


def test_intrinsic_loss_leaves_single_steady_state():
    model = build_model(KerrArrayParams(N=2, G=0.5, U=1.0, gamma=10.0, kappa=1e-2),
                        Truncations(14, 3))
    result = solve_steady(model)
    assert result.kernel_dim == 1
    assert result.projection_residual is None
    assert np.trace(result.rho.matrix).real == pytest.approx(1.0)


@pytest.mark.parametrize("fixture", ["twophoton_zeno", "kerr_zeno"])
def test_zeno_models_conserve_parity(fixture, request):
    model = request.getfixturevalue(fixture)
    parity = parity_ops(model.space, 0).total
    L_adj = adjoint_for(model, materialize=False)
    assert conserved_defect(L_adj, parity) < 1e-8
    result = solve_steady(model)
    assert result.coefficients.c_pp == pytest.approx(1.0, abs=1e-6)
    assert result.coefficients.c_mm == pytest.approx(0.0, abs=1e-6)


def test_twophoton_zeno_gap_near_twice_drive(twophoton_zeno):
    estimates = gap_estimates(twophoton_zeno)
    assert set(estimates) == {"zeno_estimate"}
    assert estimates["zeno_estimate"] == pytest.approx(2.0)
    spectrum = dissipative_gap(liouvillian_for(twophoton_zeno), expected_kernel_dim=4,
                               estimates=estimates)
    assert spectrum.kernel_dim == 4
    # N = 3 sits about 10% above the 2G estimate
    assert spectrum.dissipative_gap == pytest.approx(estimates["zeno_estimate"], rel=0.15)
    assert spectrum.dissipative_gap > estimates["zeno_estimate"]
    assert spectrum.max_real < 1e-8 * spectrum.scale


def test_kerr_gap_estimates(kerr_zeno):
    estimates = gap_estimates(kerr_zeno)
    rate = 8 / 2700
    assert estimates["zeno_estimate"] == pytest.approx(2 * rate * 3.0)
    assert estimates["epsilon_1"] > 0


def test_first_excited_energy_skips_doublet():
    assert first_excited_energy(np.diag([0.0, 0.0, 5.0, 7.0])) == 5.0


def test_evolution_keeps_cat_stationary(twophoton_zeno):
    L = liouvillian_for(twophoton_zeno)
    rho0 = initial_state(twophoton_zeno, "cat+")
    times = [0.1, 1.0, 10.0]
    trajectory = evolve(L, rho0, times, observables_for(twophoton_zeno))
    assert_allclose(trajectory.c_pp, 1.0, atol=1e-6)
    assert_allclose(trajectory.trace, 1.0, atol=1e-8)
    for v in _propagate_expm(L, vectorize(rho0), np.asarray(times)):
        assert hs_distance(devectorize(v), rho0) < 1e-8


def test_evolution_methods_agree(twophoton_zeno):
    rho0 = initial_state(twophoton_zeno, "vacuum")
    observables = observables_for(twophoton_zeno)
    times = [0.1, 1.0, 5.0]
    by_eig = evolve(liouvillian_for(twophoton_zeno), rho0, times, observables, method="eig")
    by_expm = evolve(liouvillian_for(twophoton_zeno), rho0, times, observables, method="expm")
    by_rk45 = evolve(liouvillian_for(twophoton_zeno, materialize=False), rho0, times, observables)

    assert by_rk45.method == "rk45"
    assert_allclose(by_eig.c_pp, by_expm.c_pp, atol=1e-8)
    assert_allclose(by_eig.c_pp, by_rk45.c_pp, atol=1e-5)
    assert_allclose(by_eig.parity, 1.0, atol=1e-8)
    assert by_eig.c_pp[-1] > by_eig.c_pp[0]


def test_full_kerr_array_tracks_zeno_trajectory():
    params = KerrArrayParams(N=2, G=0.5, U=1.0, gamma=100.0)
    full = build_model(params, Truncations(14, 3))
    zeno = effective_zeno_kerr(params, M_phi=14)
    times = np.array([1.0, 5.0, 20.0]) / zeno_rate(params)

    by_full = evolve(liouvillian_for(full), initial_state(full), times, observables_for(full))
    by_zeno = evolve(liouvillian_for(zeno), initial_state(zeno), times, observables_for(zeno))
    assert_allclose(by_full.c_pp, by_zeno.c_pp, atol=0.05)
    assert_allclose(by_full.c_mm, by_zeno.c_mm, atol=0.05)
    assert by_zeno.c_pp[-1] > by_zeno.c_pp[0]


def test_trajectory_records(twophoton_zeno):
    trajectory = evolve(liouvillian_for(twophoton_zeno), initial_state(twophoton_zeno, "vacuum"),
                        [0.5, 2.0], observables_for(twophoton_zeno))
    rows = trajectory.records()
    assert [row["t"] for row in rows] == [0.5, 2.0]
    assert set(rows[0]) == {"t", "c_pp", "c_mm", "purity", "parity", "trace", "n_0"}
    assert trajectory.peak()[0] in (0.5, 2.0)


def test_evolution_rejects_bad_input(twophoton_zeno):
    L = liouvillian_for(twophoton_zeno)
    rho0 = initial_state(twophoton_zeno)
    observables = observables_for(twophoton_zeno)
    with pytest.raises(ParameterError):
        evolve(L, rho0, [1.0, 0.5], observables)
    with pytest.raises(ParameterError):
        evolve(L, rho0, [-1.0, 1.0], observables)
    with pytest.raises(ParameterError):
        evolve(L, rho0, [1.0], observables, method="euler")


def test_log_time_grid():
    times = log_time_grid(0.1, 1e5, 200)
    assert times.size == 1201
    assert times[0] == pytest.approx(0.1)
    assert times[-1] == pytest.approx(1e5)
    assert_allclose(np.diff(np.log10(times)), 1 / 200)


def test_loglog_slope():
    x = np.logspace(0, 2, 20)
    assert loglog_slope(x, 3.0 * x ** -2) == pytest.approx(-2.0)


def test_cat_vectors_match_observables(twophoton_zeno):
    observables = observables_for(twophoton_zeno)
    assert_allclose(observables.plus, model_cat(twophoton_zeno, 1))
    assert len(observables.numbers) == 1


def test_get_solver_is_singleton():
    assert get_solver() is get_solver()
    assert isinstance(get_solver(), SteadyStateSolver)


def test_solver_engine_reuses_factorization(small_kerr, twophoton_zeno):
    engine = SteadyStateSolver(cache_size=1)
    first = engine.kernel_solver(small_kerr)
    assert engine.kernel_solver(small_kerr) is first
    assert len(engine) == 1

    steady = engine.steady(small_kerr)
    assert steady.coefficients.c_pp == pytest.approx(solve_steady(small_kerr).coefficients.c_pp, abs=1e-8)
    spectrum = engine.gap(small_kerr, expected_kernel_dim=4)
    direct = dissipative_gap(liouvillian_for(small_kerr), expected_kernel_dim=4)
    assert spectrum.dissipative_gap == pytest.approx(direct.dissipative_gap, rel=1e-8)
    assert set(spectrum.estimates) == {"zeno_estimate", "exact_relation", "epsilon_1"}

    engine.kernel_solver(twophoton_zeno)
    assert len(engine) == 1
    assert engine.kernel_solver(small_kerr) is not first
    engine.clear()
    assert len(engine) == 0
