"""
Liouvillian Solver
Steady-state kernels, conserved quantities, dissipative gaps and time
propagation of the array and Zeno models
"""
from collections import OrderedDict
from dataclasses import dataclass, field
import logging
import threading
import time
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp

from config import settings
from modules.errors import (ConvergenceError, DimensionError, IntegrationError,
                            ParameterError, PhysicalityError, ZenoAssumptionError)
from modules.fock import CompositeOperator, DensityMatrix, FockSpace, annihilation, embed, partial_trace
from modules.model import KerrArrayParams, zeno_rate
from modules.states import (DFS_LABELS, DFSCoefficients, coefficients_from_state, dfs_operators,
                            hs_distance, initial_state, lift_mode_state, model_cat, parity_ops,
                            purity)
from modules.superop import Superoperator, adjoint_for, devectorize, liouvillian_for, vectorize

logger = logging.getLogger(__name__)


@dataclass
class SpectrumResult:
    eigenvalues: np.ndarray
    kernel_dim: int
    dissipative_gap: float
    kernel_tol: float
    scale: float
    max_real: float
    ambiguous: bool = False
    candidate_gaps: tuple = ()
    estimates: dict = field(default_factory=dict)


@dataclass
class KernelBasis:
    """
    Null space of a Liouvillian.

    `matrices` is a Frobenius-orthonormal Hermitian basis; `vectors` holds
    the orthonormalized eigenvectors it was built from.
    """
    matrices: list
    vectors: np.ndarray
    eigenvalues: np.ndarray
    kernel_tol: float
    scale: float

    @property
    def dim(self) -> int:
        return len(self.matrices)

    def _stacked(self) -> np.ndarray:
        return np.column_stack([vectorize(m) for m in self.matrices])

    def align(self, reference) -> list:
        """Orthogonal projection of each reference operator onto the kernel"""
        basis = self._stacked()
        return [devectorize(basis @ (basis.conj().T @ vectorize(ref))) for ref in reference]

    def projection_residual(self, reference) -> float:
        """Largest Frobenius residual of a kernel basis element outside span(reference)"""
        ref_basis, _ = np.linalg.qr(np.column_stack([vectorize(r) for r in reference]))
        residual = 0.0
        for m in self.matrices:
            v = vectorize(m)
            residual = max(residual, float(np.linalg.norm(v - ref_basis @ (ref_basis.conj().T @ v))))
        return residual

    def steady_states(self) -> list:
        """
        Physical states spanning the kernel.

        Each Hermitian basis element is split into its positive and negative
        parts; trace-normalized parts are kept while they add a new direction.
        """
        if self.dim == 1:
            m = self.matrices[0]
            return [m / np.trace(m)]

        states, stacked = [], []
        for m in self.matrices:
            w, v = np.linalg.eigh(0.5 * (m + m.conj().T))
            for part in (np.clip(w, 0, None), np.clip(-w, 0, None)):
                if part.sum() < 1e-8:
                    continue
                candidate = (v * part) @ v.conj().T
                candidate = candidate / np.trace(candidate)
                trial = stacked + [vectorize(candidate)]
                if np.linalg.matrix_rank(np.column_stack(trial), tol=1e-6) == len(trial):
                    states.append(candidate)
                    stacked = trial
                if len(states) == self.dim:
                    return states
        return states


@dataclass
class ConservedQuantities:
    """Bi-orthogonal pairs Tr[J_mu^dag xi_beta] = delta"""
    operators: list
    dfs: list
    labels: tuple
    space: FockSpace

    def coefficients(self, rho_in) -> np.ndarray:
        rho_in = np.asarray(rho_in)
        return np.array([np.vdot(J, rho_in) for J in self.operators])

    def biorthogonality_defect(self) -> float:
        gram = np.array([[np.vdot(J, xi) for xi in self.dfs] for J in self.operators])
        return float(np.max(np.abs(gram - np.eye(len(self.dfs)))))


@dataclass
class SteadyStateResult:
    rho: DensityMatrix
    coefficients: DFSCoefficients
    purity: float
    kernel_dim: int
    projection_residual: Optional[float] = None


@dataclass
class Observables:
    """Quantities recorded along a trajectory"""
    plus: np.ndarray
    minus: Optional[np.ndarray]
    parity: np.ndarray
    numbers: list


@dataclass
class Trajectory:
    times: np.ndarray
    c_pp: np.ndarray
    c_mm: np.ndarray
    purity: np.ndarray
    parity: np.ndarray
    trace: np.ndarray
    photon_numbers: np.ndarray
    method: str

    def peak(self) -> tuple:
        """(time, value) of the largest c_++"""
        i = int(np.argmax(self.c_pp))
        return float(self.times[i]), float(self.c_pp[i])

    def records(self) -> list:
        rows = []
        for i, t in enumerate(self.times):
            row = {
                "t": float(t),
                "c_pp": float(self.c_pp[i]),
                "c_mm": float(self.c_mm[i]),
                "purity": float(self.purity[i]),
                "parity": float(self.parity[i]),
                "trace": float(self.trace[i])
            }
            for mode, n in enumerate(self.photon_numbers[i]):
                row[f"n_{mode}"] = float(n)
            rows.append(row)
        return rows


class KernelSolver:
    """
    Eigenpairs of a Liouvillian near zero, for L and for its adjoint.

    Dense eigendecomposition for small Liouville spaces; otherwise one sparse
    LU factorization of L - sigma I drives shift-invert Arnoldi for both L
    and L^dag (through the conjugate-transpose solve).
    """

    def __init__(self, L: Superoperator, kernel_tol: float = None):
        self.L = L
        self.matrix = L.require_matrix()
        self.n = self.matrix.shape[0]
        self.kernel_tol = kernel_tol or settings.KERNEL_TOL_REL
        self.dense = self.n <= settings.DENSE_LIOUVILLE_MAX
        self._v0 = np.ones(self.n, dtype=complex) / np.sqrt(self.n)
        self._dense_right = None
        self._dense_left = None
        self._lu = None
        self._sparse = {}

        if self.dense:
            w, vr = scipy.linalg.eig(self.matrix.toarray())
            self._dense_right = (w, vr)
            self.scale = float(np.max(np.abs(w.real)))
        else:
            self.scale = spectral_scale(L)
            self.sigma = settings.SHIFT_SIGMA_REL * self.scale
            start = time.perf_counter()
            shifted = (self.matrix - self.sigma * sp.identity(self.n, format="csr")).tocsc()
            self._lu = spla.splu(shifted)
            logger.info(f"Shift-invert factorization: n={self.n}, {time.perf_counter() - start:.1f}s")

    @property
    def absolute_tol(self) -> float:
        return self.kernel_tol * self.scale

    def _inverse(self, adjoint: bool) -> spla.LinearOperator:
        trans = "H" if adjoint else "N"
        return spla.LinearOperator((self.n, self.n), dtype=complex,
                                   matvec=lambda x: self._lu.solve(np.asarray(x, dtype=complex), trans=trans))

    def eigenpairs(self, k: int = None, adjoint: bool = False) -> tuple:
        """Eigenvalues (and eigenvectors) of L or L^dag closest to zero"""
        if self.dense:
            if adjoint:
                if self._dense_left is None:
                    w, vl = scipy.linalg.eig(self.matrix.toarray(), left=True, right=False)
                    self._dense_left = (np.conj(w), vl)
                return self._dense_left
            return self._dense_right

        k = min(k or settings.SHIFT_INVERT_K, self.n - 2)
        if (k, adjoint) in self._sparse:
            return self._sparse[(k, adjoint)]
        target = self.matrix.conj().T.tocsr() if adjoint else self.matrix
        try:
            w, v = spla.eigs(target, k=k, sigma=self.sigma, OPinv=self._inverse(adjoint),
                             v0=self._v0, which="LM")
        except spla.ArpackNoConvergence as exc:
            raise ConvergenceError(
                f"Shift-invert Arnoldi did not converge for k={k}",
                {"converged": len(exc.eigenvalues), "sigma": self.sigma, "n": self.n}
            ) from exc
        self._sparse[(k, adjoint)] = (w, v)
        return w, v


def spectral_scale(L: Superoperator) -> float:
    """Largest |Re lambda|; sparse estimate falls back to the diagonal decay rates"""
    matrix = L.require_matrix()
    n = matrix.shape[0]
    if n <= settings.DENSE_LIOUVILLE_MAX:
        return float(np.max(np.abs(scipy.linalg.eigvals(matrix.toarray()).real)))
    try:
        w = spla.eigs(matrix, k=1, which="SR", tol=settings.SCALE_EIGS_TOL,
                      maxiter=settings.SCALE_EIGS_MAXITER,
                      v0=np.ones(n, dtype=complex) / np.sqrt(n), return_eigenvectors=False)
        return float(np.max(np.abs(w.real)))
    except (spla.ArpackNoConvergence, spla.ArpackError) as exc:
        estimate = float(np.max(np.abs(matrix.diagonal().real)))
        logger.warning(f"Spectral scale from diagonal decay rates ({exc.__class__.__name__}): {estimate:.3e}")
        return estimate


def _kernel_count(magnitudes: np.ndarray, tol_abs: float, scale: float,
                  expected_dim: int = None) -> tuple:
    """
    Number of kernel eigenvalues among sorted magnitudes.

    Returns:
        (count, order, ambiguous) where order sorts the magnitudes
    """
    order = np.argsort(magnitudes)
    ranked = magnitudes[order]
    count = int(np.sum(ranked < tol_abs))

    if expected_dim and count < expected_dim <= len(ranked):
        edge = ranked[expected_dim - 1]
        following = ranked[expected_dim] if expected_dim < len(ranked) else np.inf
        if edge < settings.KERNEL_EXTEND_REL * scale and following > settings.KERNEL_SEPARATION * edge:
            logger.warning(
                f"Kernel extended from {count} to {expected_dim}: truncation lifts "
                f"eigenvalues to {edge:.2e} (tol {tol_abs:.2e}), next {following:.2e}"
            )
            count = expected_dim

    outside = ranked[count:]
    ambiguous = bool(np.any(outside < settings.KERNEL_WARN_FACTOR * tol_abs))
    return count, order, ambiguous


def _hermitian_basis(vectors: np.ndarray, dim: int) -> list:
    """Frobenius-orthonormal Hermitian matrices spanning the same kernel"""
    parts = []
    for v in vectors.T:
        X = devectorize(v)
        parts.append(0.5 * (X + X.conj().T))
        parts.append(-0.5j * (X - X.conj().T))
    real_rows = np.array([np.concatenate([vectorize(p).real, vectorize(p).imag]) for p in parts])
    _, _, vt = np.linalg.svd(real_rows, full_matrices=False)
    half = vt.shape[1] // 2
    basis = []
    for row in vt[:dim]:
        m = devectorize(row[:half] + 1j * row[half:])
        basis.append(0.5 * (m + m.conj().T))
    return basis


def steady_kernel(L: Superoperator, kernel_tol: float = None, reference=None,
                  expected_dim: int = None, solver: KernelSolver = None,
                  n_eigs: int = None) -> KernelBasis:
    """
    Basis of the null space of L.

    Args:
        L: materialized Liouvillian
        kernel_tol: relative tolerance (times the largest |Re lambda|)
        reference: analytic DFS operators; their count is the expected kernel dimension
        expected_dim: kernel dimension known from symmetry
        solver: shared KernelSolver
        n_eigs: number of eigenpairs for the sparse path

    Returns:
        KernelBasis
    """
    solver = solver or KernelSolver(L, kernel_tol)
    if expected_dim is None and reference is not None:
        expected_dim = len(reference)

    w, v = solver.eigenpairs(n_eigs)
    count, order, ambiguous = _kernel_count(np.abs(w), solver.absolute_tol, solver.scale, expected_dim)
    if count == 0:
        raise ConvergenceError(
            "No eigenvalue below the kernel tolerance",
            {"smallest": float(np.min(np.abs(w))), "tol": solver.absolute_tol}
        )
    if ambiguous:
        logger.warning("Eigenvalue within the kernel warning band; kernel boundary is ambiguous")

    selected = order[:count]
    q, _ = np.linalg.qr(v[:, selected])
    residuals = [float(np.linalg.norm(solver.matrix @ q[:, i])) for i in range(count)]
    logger.info(f"✓ Kernel dimension {count} (max residual {max(residuals):.2e})")
    return KernelBasis(_hermitian_basis(q, count), q, w[selected], solver.absolute_tol, solver.scale)


def conserved_quantities(L_adj: Superoperator, dfs_basis, labels: tuple = None,
                         solver: KernelSolver = None, kernel_tol: float = None,
                         space: FockSpace = None) -> ConservedQuantities:
    """
    Conserved quantities bi-orthogonal to the steady-state basis.

    Args:
        L_adj: adjoint Liouvillian (used when no shared solver is given)
        dfs_basis: list or dict of steady-state basis operators xi_mu
        labels: names of the xi_mu

    Returns:
        ConservedQuantities with Tr[J_mu^dag xi_beta] = delta_{mu beta}
    """
    if isinstance(dfs_basis, dict):
        labels = tuple(dfs_basis)
        dfs_basis = list(dfs_basis.values())
    dfs_basis = [np.asarray(xi) for xi in dfs_basis]
    labels = labels or tuple(str(i) for i in range(len(dfs_basis)))

    if solver is None:
        solver = KernelSolver(L_adj, kernel_tol)
        w, v = solver.eigenpairs()
    else:
        w, v = solver.eigenpairs(adjoint=True)

    count, order, _ = _kernel_count(np.abs(w), solver.absolute_tol, solver.scale, len(dfs_basis))
    if count != len(dfs_basis):
        raise DimensionError(
            f"Adjoint kernel has dimension {count} but the steady-state basis has "
            f"{len(dfs_basis)} elements (steady states outside the basis or truncation failure)"
        )

    left, _ = np.linalg.qr(v[:, order[:count]])
    xi = np.column_stack([vectorize(m) for m in dfs_basis])
    gram = left.conj().T @ xi
    combination = np.linalg.inv(gram).conj().T
    operators = [devectorize(col) for col in (left @ combination).T]

    dim = dfs_basis[0].shape[0]
    result = ConservedQuantities(operators, dfs_basis, labels, space or FockSpace.single(dim))
    logger.info(f"✓ Conserved quantities: {count}, bi-orthogonality defect "
                f"{result.biorthogonality_defect():.2e}")
    return result


def _repair_positivity(rho: np.ndarray) -> tuple:
    """Clip small negative eigenvalues left by near-kernel operators"""
    w, v = np.linalg.eigh(rho)
    if w.min() >= -settings.POSITIVITY_TOL:
        return rho, 0.0
    clipped = np.clip(w, 0, None)
    repaired = (v * clipped) @ v.conj().T
    return repaired / np.trace(repaired).real, float(-w.min())


def steady_for_initial(rho_in, conserved: ConservedQuantities, plus: np.ndarray = None,
                       minus: np.ndarray = None) -> tuple:
    """
    Steady state reached from rho_in.

    Returns:
        (DensityMatrix, DFSCoefficients) with rho_ss = sum_mu c_mu xi_mu
    """
    rho_in = rho_in.matrix if isinstance(rho_in, DensityMatrix) else np.asarray(rho_in)
    c = conserved.coefficients(rho_in)
    rho = sum(cm * xi for cm, xi in zip(c, conserved.dfs))

    defect = float(np.max(np.abs(rho - rho.conj().T)))
    if defect > settings.HERMITIAN_DEFECT_MAX:
        raise PhysicalityError(f"Steady state not Hermitian (defect {defect:.2e}): kernel mis-identified",
                               {"hermiticity_defect": defect})
    rho = 0.5 * (rho + rho.conj().T)

    rho, repaired = _repair_positivity(rho)
    if repaired > settings.HERMITIAN_DEFECT_MAX:
        raise PhysicalityError(f"Steady state has eigenvalue {-repaired:.2e}: truncation too small",
                               {"min_eigenvalue": -repaired})
    if repaired:
        logger.warning(f"Clipped negative eigenvalue {-repaired:.2e} from the steady state")

    state = DensityMatrix(conserved.space, rho).validate()

    if conserved.labels == DFS_LABELS:
        values = dict(zip(conserved.labels, c))
        coefficients = DFSCoefficients(
            c_pp=float(values["++"].real), c_mm=float(values["--"].real),
            c_pm=complex(values["+-"]), provenance="conserved-quantities",
            extra={"positivity_repair": repaired}
        )
    elif plus is not None and minus is not None:
        coefficients = coefficients_from_state(rho, plus, minus, provenance="kernel-projection")
    else:
        coefficients = DFSCoefficients(float("nan"), float("nan"), complex("nan"), "unavailable")
    return state, coefficients


def solve_steady(model, rho_in=None, kernel_tol: float = None,
                 solver: KernelSolver = None) -> SteadyStateResult:
    """
    Steady state of a model reached from rho_in (vacuum by default).

    Without intrinsic loss the kernel is aligned to the analytic cat
    operators and the coefficients come from conserved quantities; with
    loss the kernel is one-dimensional. `solver` must wrap the model's
    own Liouvillian.
    """
    solver = solver or KernelSolver(liouvillian_for(model), kernel_tol)
    L = solver.L
    rho_in = initial_state(model, "vacuum") if rho_in is None else rho_in
    plus = model_cat(model, 1)
    minus = model_cat(model, -1) if abs(model.zeta) > 0 else None

    lossless = model.params.kappa == 0 and minus is not None
    reference = list(dfs_operators(model.zeta, model.space, model.phi_index).values()) if lossless else None
    kernel = steady_kernel(L, reference=reference, expected_dim=None if lossless else 1, solver=solver)

    residual = None
    if reference is not None and kernel.dim == len(reference):
        basis, labels = kernel.align(reference), DFS_LABELS
        residual = kernel.projection_residual(reference)
    elif kernel.dim == 1:
        basis, labels = kernel.steady_states(), ("ss",)
    else:
        raise DimensionError(f"Kernel of dimension {kernel.dim} does not match the cat manifold")

    conserved = conserved_quantities(adjoint_for(model, materialize=False), basis, labels,
                                     solver=solver, space=model.space)
    state, coefficients = steady_for_initial(rho_in, conserved, plus, minus)
    return SteadyStateResult(state, coefficients, purity(state), kernel.dim, residual)


def first_excited_energy(hamiltonian) -> float:
    """Third-lowest eigenvalue, skipping the degenerate cat doublet"""
    matrix = hamiltonian.toarray() if isinstance(hamiltonian, CompositeOperator) else np.asarray(hamiltonian)
    energies = np.linalg.eigvalsh(0.5 * (matrix + matrix.conj().T))
    return float(energies[2])


def gap_estimates(model) -> dict:
    """
    Closed-form companions of the numerical gap.

    Kerr models: 2 Gamma |zeta|^2, approached from below as G/U grows, and
    (Gamma/2)(N/U) eps_1, which holds at any drive.
    Two-photon models: 2 eta |zeta|^2 / N = 2G, a large-amplitude estimate
    only; no closed form tracks the gap at small |zeta|.
    """
    params = model.params
    if not isinstance(params, KerrArrayParams):
        return {"zeno_estimate": 2.0 * params.eta * abs(model.zeta) ** 2 / params.N}

    try:
        rate = zeno_rate(params)
    except ZenoAssumptionError:
        return {}
    M = model.space.truncations[model.phi_index]
    b = annihilation(M).toarray()
    pair = b @ b - model.zeta ** 2 * np.eye(M)
    epsilon_1 = params.U / params.N * first_excited_energy(pair.conj().T @ pair)
    return {
        "zeno_estimate": 2.0 * rate * abs(model.zeta) ** 2,
        "exact_relation": 0.5 * rate * params.N / params.U * epsilon_1,
        "epsilon_1": epsilon_1
    }


def dissipative_gap(L: Superoperator, kernel_tol: float = None, expected_kernel_dim: int = None,
                    n_eigs: int = None, estimates: dict = None,
                    solver: KernelSolver = None) -> SpectrumResult:
    """
    Smallest nonzero |Re lambda| of the Liouvillian spectrum.

    Dense eigenvalues when the Liouville space is small; otherwise the
    eigenvalues closest to zero from shift-invert Arnoldi. A shared solver
    reuses its eigendecomposition or factorization.
    """
    if solver is not None:
        kernel_tol = kernel_tol or solver.kernel_tol
        w, _ = solver.eigenpairs(n_eigs or 3 * settings.SHIFT_INVERT_K)
        scale = solver.scale
    elif L.require_matrix().shape[0] <= settings.DENSE_LIOUVILLE_MAX:
        kernel_tol = kernel_tol or settings.KERNEL_TOL_REL
        w = scipy.linalg.eigvals(L.require_matrix().toarray())
        scale = float(np.max(np.abs(w.real)))
    else:
        kernel_tol = kernel_tol or settings.KERNEL_TOL_REL
        solver = KernelSolver(L, kernel_tol)
        w, _ = solver.eigenpairs(n_eigs or 3 * settings.SHIFT_INVERT_K)
        scale = solver.scale

    tol_abs = kernel_tol * scale
    magnitudes = np.abs(w.real)
    count, order, ambiguous = _kernel_count(magnitudes, tol_abs, scale, expected_kernel_dim)
    if count == 0 or count == len(w):
        raise ConvergenceError("Cannot separate kernel from the rest of the spectrum",
                               {"kernel_dim": count, "n_eigenvalues": len(w), "tol": tol_abs})

    outside = magnitudes[order[count:]]
    gap = float(outside[0])
    candidates = ()
    if ambiguous:
        clear = outside[outside >= settings.KERNEL_WARN_FACTOR * tol_abs]
        candidates = (gap, float(clear[0]) if clear.size else gap)
        logger.warning(f"Ambiguous kernel boundary: candidate gaps {candidates[0]:.4e}, {candidates[1]:.4e}")

    max_real = float(np.max(w.real))
    if max_real > 1e-8 * scale:
        logger.warning(f"Eigenvalue with positive real part {max_real:.2e}")

    logger.info(f"✓ Dissipative gap {gap:.6e} (kernel {count}, scale {scale:.3e})")
    return SpectrumResult(w[order], count, gap, tol_abs, scale, max_real,
                          ambiguous, candidates, estimates or {})


def conserved_defect(L_adj: Superoperator, op) -> float:
    """Frobenius norm of L^dag(op)"""
    matrix = op.toarray() if isinstance(op, CompositeOperator) else np.asarray(op)
    return float(np.linalg.norm(L_adj.apply(matrix)))


def zeno_steady_distance(full_model, zeno_model, rho_in=None, full: SteadyStateResult = None) -> dict:
    """
    HS distance between the full steady state and rho_d x rho_phi,ss.

    The Zeno model starts from the reduced state of rho_in on mode phi;
    `full` skips the full-model solve when its steady state is known.
    """
    if zeno_model.space.truncations[0] != full_model.space.truncations[full_model.phi_index]:
        raise DimensionError("Zeno model truncation must equal the full-model M_phi")
    rho_in = initial_state(full_model, "vacuum") if rho_in is None else np.asarray(rho_in)
    if full is None:
        full = solve_steady(full_model, rho_in)
    reduced = partial_trace(rho_in, full_model.space, full_model.phi_index)
    zeno = solve_steady(zeno_model, reduced)
    lifted = lift_mode_state(zeno.rho.matrix, full_model.space, full_model.phi_index)
    return {
        "distance": hs_distance(full.rho, lifted),
        "full": full,
        "zeno": zeno
    }


def loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(np.asarray(x)), np.log(np.asarray(y)), 1)[0])


def log_time_grid(start: float = None, stop: float = None, per_decade: int = None) -> np.ndarray:
    start = start or settings.TIME_GRID_START
    stop = stop or settings.TIME_GRID_STOP
    per_decade = per_decade or settings.TIME_POINTS_PER_DECADE
    decades = np.log10(stop) - np.log10(start)
    return np.logspace(np.log10(start), np.log10(stop), int(round(decades * per_decade)) + 1)


def observables_for(model) -> Observables:
    parity = parity_ops(model.space, model.phi_index).total.matrix.diagonal().real
    numbers = [
        embed(CompositeOperator(FockSpace.single(m), sp.diags(np.arange(m, dtype=float))), i, model.space)
        .matrix.diagonal().real
        for i, m in enumerate(model.space.truncations)
    ]
    minus = model_cat(model, -1) if abs(model.zeta) > 0 else None
    return Observables(model_cat(model, 1), minus, parity, numbers)


def _record(rho: np.ndarray, observables: Observables) -> tuple:
    diag = np.real(np.diag(rho))
    c_pp = float(np.real(np.vdot(observables.plus, rho @ observables.plus)))
    c_mm = 0.0
    if observables.minus is not None:
        c_mm = float(np.real(np.vdot(observables.minus, rho @ observables.minus)))
    return (c_pp, c_mm, purity(rho), float(observables.parity @ diag),
            float(np.real(np.trace(rho))), [float(n @ diag) for n in observables.numbers])


def _select_method(L: Superoperator, method: str) -> str:
    if method != "auto":
        return method
    if not L.is_materialized:
        return "rk45"
    return "eig" if L.liouville_dim <= settings.DENSE_LIOUVILLE_MAX else "expm"


def _propagate_eig(L: Superoperator, v0: np.ndarray, times: np.ndarray):
    w, V = scipy.linalg.eig(L.toarray())
    condition = np.linalg.cond(V)
    if condition > settings.EIG_CONDITION_MAX:
        logger.warning(f"Eigenvector condition number {condition:.2e}; switching to stepwise expm")
        return None
    c = np.linalg.solve(V, v0)
    for t in times:
        yield V @ (c * np.exp(w * t))


def _propagate_expm(L: Superoperator, v0: np.ndarray, times: np.ndarray):
    matrix = L.require_matrix()
    dense = matrix.shape[0] <= settings.DENSE_LIOUVILLE_MAX
    dense_matrix = matrix.toarray() if dense else None
    v, previous = v0, 0.0
    for t in times:
        dt = t - previous
        if dt > 0:
            v = scipy.linalg.expm(dense_matrix * dt) @ v if dense else spla.expm_multiply(matrix * dt, v)
        previous = t
        yield v


def _propagate_rk45(L: Superoperator, v0: np.ndarray, times: np.ndarray):
    solution = solve_ivp(lambda t, y: L.matvec(y), (0.0, float(times[-1])), v0,
                         method="RK45", t_eval=times, rtol=settings.RK_RTOL, atol=settings.RK_ATOL)
    if not solution.success:
        raise IntegrationError(f"Adaptive integration failed: {solution.message}",
                               {"t_reached": float(solution.t[-1]) if solution.t.size else 0.0})
    for column in solution.y.T:
        yield column


def evolve(L: Superoperator, rho0, times, observables: Observables,
           method: str = "auto") -> Trajectory:
    """
    Propagate rho0 from t = 0 and record observables on the time grid.

    Args:
        L: Liouvillian (materialized or matrix-free)
        rho0: initial density matrix
        times: increasing, non-negative sample times
        observables: Observables from observables_for(model)
        method: 'auto', 'eig', 'expm' or 'rk45'

    Returns:
        Trajectory
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0 or times[0] < 0 or np.any(np.diff(times) <= 0):
        raise ParameterError("Time grid must be a non-empty increasing sequence of times >= 0")

    rho0 = rho0.matrix if isinstance(rho0, DensityMatrix) else np.asarray(rho0, dtype=complex)
    DensityMatrix(FockSpace.single(L.dim), rho0).validate()

    method = _select_method(L, method)
    if method not in ("eig", "expm", "rk45"):
        raise ParameterError(f"Unknown evolution method '{method}'")
    start = time.perf_counter()
    v0 = vectorize(rho0)

    propagator = None
    if method == "eig":
        propagator = _propagate_eig(L, v0, times)
        first = next(propagator, None)
        if first is None:
            method = "expm"
        else:
            propagator = _chain(first, propagator)
    if method == "expm":
        propagator = _propagate_expm(L, v0, times)
    elif method == "rk45":
        propagator = _propagate_rk45(L, v0, times)

    records = []
    for t, v in zip(times, propagator):
        record = _record(devectorize(v), observables)
        if abs(record[4] - 1.0) > settings.TRACE_DRIFT_TOL:
            raise IntegrationError(f"Trace drifted to {record[4]:.8f} at t={t:.4g}",
                                   {"time": float(t), "trace": record[4], "method": method})
        records.append(record)

    logger.info(f"✓ Evolved {len(times)} points with {method} in {time.perf_counter() - start:.1f}s")
    c_pp, c_mm, purities, parities, traces, numbers = zip(*records)
    return Trajectory(times, np.array(c_pp), np.array(c_mm), np.array(purities),
                      np.array(parities), np.array(traces), np.array(numbers), method)


def _chain(first, rest):
    yield first
    yield from rest


class SteadyStateSolver:
    """
    Model-level solver engine.

    Keeps the Liouvillian and its KernelSolver per (model kind, parameters,
    truncations, kernel tolerance), so a steady state, its conserved
    quantities and the gap of the same model share one eigendecomposition
    or LU factorization.
    """

    def __init__(self, cache_size: int = None):
        self.cache_size = cache_size or settings.SOLVER_CACHE_SIZE
        self._cache = OrderedDict()
        self._lock = threading.Lock()
        logger.info(f"Steady-state solver initialized (cache {self.cache_size})")

    @staticmethod
    def _key(model, kernel_tol) -> tuple:
        return (model.kind, model.params, model.space.truncations,
                kernel_tol or settings.KERNEL_TOL_REL)

    def kernel_solver(self, model, kernel_tol: float = None) -> KernelSolver:
        """Cached KernelSolver of the model's materialized Liouvillian"""
        key = self._key(model, kernel_tol)
        with self._lock:
            if key in self._cache:
                self._cache.move_to_end(key)
                return self._cache[key]

        solver = KernelSolver(liouvillian_for(model), kernel_tol)
        with self._lock:
            self._cache[key] = solver
            while len(self._cache) > self.cache_size:
                self._cache.popitem(last=False)
        return solver

    def steady(self, model, rho_in=None, kernel_tol: float = None) -> SteadyStateResult:
        return solve_steady(model, rho_in, kernel_tol, solver=self.kernel_solver(model, kernel_tol))

    def gap(self, model, expected_kernel_dim: int = None, n_eigs: int = None,
            kernel_tol: float = None) -> SpectrumResult:
        solver = self.kernel_solver(model, kernel_tol)
        return dissipative_gap(solver.L, kernel_tol, expected_kernel_dim, n_eigs,
                               gap_estimates(model), solver=solver)

    def trajectory(self, model, times, initial: str = "vacuum", method: str = "auto") -> Trajectory:
        if method == "rk45":
            L = liouvillian_for(model, materialize=False)
        else:
            L = self.kernel_solver(model).L
        return evolve(L, initial_state(model, initial), times, observables_for(model), method)

    def clear(self):
        with self._lock:
            self._cache.clear()

    def __len__(self) -> int:
        return len(self._cache)


# Singleton instance
_solver_instance = None

def get_solver():
    """Get or create steady-state solver singleton"""
    global _solver_instance
    if _solver_instance is None:
        _solver_instance = SteadyStateSolver()
    return _solver_instance
