"""
Cat-State Toolkit
Analytic cat manifolds, dark-state verification, fidelity, purity, parity,
Hilbert-Schmidt distance and the noise-bias figure of merit
"""
from dataclasses import dataclass, field
import logging
from typing import Optional

import numpy as np
import scipy.sparse as sp

from config import settings
from modules.errors import DegenerateManifoldError, DimensionError, ParameterError, PhysicalityError
from modules.fock import CompositeOperator, DensityMatrix, FockSpace, annihilation, coherent_state, fock_state, tensor_state
from modules.model import KERR_ARRAY, KERR_ZENO

logger = logging.getLogger(__name__)

DFS_LABELS = ("++", "--", "+-", "-+")

# channels whose operators annihilate the cat manifold
DARK_CHANNEL_KINDS = ("nonlocal", "two-photon", "zeno")


@dataclass(frozen=True, eq=False)
class CatManifold:
    zeta: complex
    M: int
    plus_cat: np.ndarray
    norm_plus: float
    leakage: float
    _minus_cat: Optional[np.ndarray] = None
    _norm_minus: Optional[float] = None

    @property
    def minus_cat(self) -> np.ndarray:
        if self._minus_cat is None:
            raise DegenerateManifoldError("|C-> does not exist at zeta = 0 (N_- diverges)")
        return self._minus_cat

    @property
    def norm_minus(self) -> float:
        if self._norm_minus is None:
            raise DegenerateManifoldError("N_- diverges at zeta = 0")
        return self._norm_minus

    def cat(self, parity: int) -> np.ndarray:
        if parity not in (1, -1):
            raise ParameterError(f"Parity must be +1 or -1, got {parity}")
        return self.plus_cat if parity == 1 else self.minus_cat

    def gram(self) -> np.ndarray:
        basis = np.column_stack([self.plus_cat, self.minus_cat])
        return basis.conj().T @ basis


@dataclass(frozen=True, eq=False)
class MultimodeCat:
    """Cat state carried by the normal mode phi, vacuum elsewhere"""
    vector: np.ndarray
    zeta: complex
    parity: int
    space: FockSpace
    phi_index: int
    local_amplitudes: np.ndarray

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.vector, dtype=dtype)


@dataclass(frozen=True)
class DarkStateReport:
    jump_residual: float
    hamiltonian_residual: float
    energy: complex
    tolerance: float
    is_dark: bool


@dataclass(frozen=True)
class ParityOperators:
    total: CompositeOperator
    mode: CompositeOperator


@dataclass
class DFSCoefficients:
    c_pp: float
    c_mm: float
    c_pm: complex
    provenance: str = "conserved-quantities"
    extra: dict = field(default_factory=dict)

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.c_pp, self.c_pm], [np.conj(self.c_pm), self.c_mm]])

    def validate(self, trace_tol: float = 1e-6) -> "DFSCoefficients":
        """Check unit trace and positivity of the 2x2 coefficient matrix"""
        trace_error = abs(self.c_pp + self.c_mm - 1.0)
        min_eig = float(np.min(np.linalg.eigvalsh(self.matrix)))
        if trace_error > trace_tol or min_eig < -settings.POSITIVITY_TOL:
            raise PhysicalityError(
                f"DFS coefficients not physical: trace error {trace_error:.2e}, "
                f"min eigenvalue {min_eig:.2e}",
                {"trace_error": trace_error, "min_eigenvalue": min_eig}
            )
        return self


def cat_manifold(zeta: complex, M: int) -> CatManifold:
    """
    Even and odd cat states N_+-(|zeta> +- |-zeta>) on one truncated mode.

    The truncated states keep only even or odd Fock levels, so they are
    orthogonal exactly; N_+- are the analytic normalizations.
    """
    coherent = coherent_state(zeta, M)
    levels = np.arange(M)
    even = np.where(levels % 2 == 0, coherent.vector, 0.0)
    odd = np.where(levels % 2 == 1, coherent.vector, 0.0)
    overlap = np.exp(-2.0 * abs(zeta) ** 2)

    plus = even / np.linalg.norm(even)
    norm_plus = float((2.0 * (1.0 + overlap)) ** -0.5)
    if abs(zeta) == 0.0:
        return CatManifold(zeta, M, plus, norm_plus, coherent.leakage)

    minus = odd / np.linalg.norm(odd)
    norm_minus = float((2.0 * (1.0 - overlap)) ** -0.5)
    return CatManifold(zeta, M, plus, norm_plus, coherent.leakage, minus, norm_minus)


def logical_states(manifold: CatManifold) -> tuple:
    """|0_L>, |1_L> = (|C+> +- |C->)/sqrt(2)"""
    plus, minus = manifold.plus_cat, manifold.minus_cat
    return (plus + minus) / np.sqrt(2.0), (plus - minus) / np.sqrt(2.0)


def coherent_overlap(zeta: complex) -> float:
    """|<zeta|-zeta>| for untruncated coherent states"""
    return float(np.exp(-2.0 * abs(zeta) ** 2))


def local_amplitudes(zeta: complex, N: int, phi: float) -> np.ndarray:
    """Per-site coherent amplitudes zeta_j = zeta/sqrt(N) exp(-ij phi), j = 1..N"""
    sites = np.arange(1, N + 1)
    return zeta / np.sqrt(N) * np.exp(-1j * sites * phi)


def multimode_cat(zeta: complex, space: FockSpace, phi: float, parity: int = 1) -> MultimodeCat:
    """
    Multi-mode cat: vacuum on every k != phi, |C+-> on mode phi.

    Args:
        zeta: normal-mode amplitude
        space: momentum-basis FockSpace
        phi: label of the cat-bearing mode
        parity: +1 or -1
    """
    phi_index = space.index_of(phi)
    manifold = cat_manifold(zeta, space.truncations[phi_index])
    vectors = [
        manifold.cat(parity) if i == phi_index else fock_state(0, m)
        for i, m in enumerate(space.truncations)
    ]
    return MultimodeCat(tensor_state(vectors), zeta, parity, space, phi_index,
                        local_amplitudes(zeta, space.n_modes, phi))


def model_cat(model, parity: int = 1) -> np.ndarray:
    """Cat state matching a ModelInstance (array or Zeno)"""
    return multimode_cat(model.zeta, model.space,
                         model.space.mode_labels[model.phi_index], parity).vector


def lift_mode_state(rho_phi, space: FockSpace, phi_index: int) -> np.ndarray:
    """rho_d x rho_phi with every decaying mode in vacuum"""
    rho_phi = np.asarray(rho_phi, dtype=complex)
    if rho_phi.shape != (space.truncations[phi_index],) * 2:
        raise DimensionError(
            f"Mode state of shape {rho_phi.shape} for truncation {space.truncations[phi_index]}"
        )
    full = np.ones((1, 1), dtype=complex)
    for i, m in enumerate(space.truncations):
        factor = rho_phi if i == phi_index else np.outer(fock_state(0, m), fock_state(0, m))
        full = np.kron(full, factor)
    return full


def dfs_operators(zeta: complex, space: FockSpace, phi_index: int) -> dict:
    """xi_ab = |C_a><C_b| for a, b in {+, -}, embedded in the full space"""
    phi = space.mode_labels[phi_index]
    cats = {
        "+": multimode_cat(zeta, space, phi, 1).vector,
        "-": multimode_cat(zeta, space, phi, -1).vector
    }
    return {label: np.outer(cats[label[0]], cats[label[1]].conj()) for label in DFS_LABELS}


def truncation_floor(zeta: complex, M: int) -> float:
    """Residual ||(b^2 - zeta^2)|C+->|| left by cutting the cat at M levels"""
    manifold = cat_manifold(zeta, M)
    b = annihilation(M).matrix
    pair = b @ b - zeta ** 2 * sp.identity(M, format="csr")
    vectors = [manifold.plus_cat] if abs(zeta) == 0 else [manifold.plus_cat, manifold.minus_cat]
    return max(float(np.linalg.norm(pair @ v)) for v in vectors)


def _operator_scale(model) -> float:
    params = model.params
    if model.kind == KERR_ARRAY:
        return params.G + 2.0 * params.U
    if model.kind == KERR_ZENO:
        return params.U / params.N * (1.0 + abs(model.zeta) ** 2)
    return 1.0


def verify_dark_state(model, psi, tol: float = None) -> DarkStateReport:
    """
    Check the two dark-state conditions.

    Args:
        model: ModelInstance
        psi: normalized state vector on model.space
        tol: threshold; default 1e-6 widened by the cat truncation floor

    Returns:
        DarkStateReport with the largest jump residual over the dissipative
        channels and ||H psi - eps psi|| with eps = G zeta^2 for the Kerr array
    """
    psi = np.asarray(psi, dtype=complex)
    if psi.shape != (model.space.total_dim,):
        raise DimensionError(f"State of length {psi.size} for dimension {model.space.total_dim}")

    dark_channels = [c for c in model.jumps if c.kind in DARK_CHANNEL_KINDS]
    jump_residual = max(
        (float(np.linalg.norm(c.operator @ psi)) for c in dark_channels), default=0.0
    )

    energy = model.params.G * model.zeta ** 2 if model.kind == KERR_ARRAY else 0.0
    hamiltonian_residual = float(np.linalg.norm(model.hamiltonian @ psi - energy * psi))

    if tol is None:
        floor = truncation_floor(model.zeta, model.space.truncations[model.phi_index])
        tol = settings.DARK_STATE_TOL + settings.DARK_FLOOR_FACTOR * _operator_scale(model) * floor

    is_dark = jump_residual < tol and hamiltonian_residual < tol
    logger.debug(
        f"Dark-state check: jump {jump_residual:.2e}, hamiltonian {hamiltonian_residual:.2e}, "
        f"tol {tol:.2e}"
    )
    return DarkStateReport(jump_residual, hamiltonian_residual, complex(energy), tol, is_dark)


def _matrix(rho) -> np.ndarray:
    return rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)


def fidelity(rho, psi) -> float:
    """<psi|rho|psi>"""
    psi = np.asarray(psi, dtype=complex)
    return float(np.real(np.vdot(psi, _matrix(rho) @ psi)))


def purity(rho) -> float:
    rho = _matrix(rho)
    return float(np.real(np.vdot(rho.conj().T, rho)))


def hs_distance(A, B) -> float:
    """Tr[(A - B)^dag (A - B)], the squared Frobenius norm"""
    diff = _matrix(A) - _matrix(B)
    return float(np.real(np.vdot(diff, diff)))


def parity_ops(space: FockSpace, phi_index: int = 0) -> ParityOperators:
    """Total photon-number parity and the parity of mode phi"""
    signs = np.ones(1)
    for m in space.truncations:
        signs = np.kron(signs, (-1.0) ** np.arange(m))
    m_phi = space.truncations[phi_index]
    mode_space = FockSpace.single(m_phi, space.mode_labels[phi_index])
    return ParityOperators(
        CompositeOperator(space, sp.diags(signs, format="csr")),
        CompositeOperator(mode_space, sp.diags((-1.0) ** np.arange(m_phi), format="csr"))
    )


def coefficients_from_state(rho, plus: np.ndarray, minus: np.ndarray,
                            provenance: str = "projection") -> DFSCoefficients:
    """Project a state onto the cat basis"""
    rho = _matrix(rho)
    return DFSCoefficients(
        c_pp=float(np.real(np.vdot(plus, rho @ plus))),
        c_mm=float(np.real(np.vdot(minus, rho @ minus))),
        c_pm=complex(np.vdot(plus, rho @ minus)),
        provenance=provenance
    )


def noise_bias(local_amplitude_sq: float, N: int) -> float:
    """exp(-2N |zeta_loc|^2) / (N |zeta_loc|^2)"""
    if local_amplitude_sq <= 0:
        raise ParameterError("Noise bias needs a nonzero local amplitude")
    return float(np.exp(-2.0 * N * local_amplitude_sq) / (N * local_amplitude_sq))


def initial_state(model, name: str = "vacuum") -> np.ndarray:
    """
    Named initial density matrix on the model space.

    Args:
        model: ModelInstance
        name: 'vacuum', 'cat+' or 'cat-'
    """
    if name == "vacuum":
        psi = np.zeros(model.space.total_dim, dtype=complex)
        psi[0] = 1.0
    elif name in ("cat+", "cat-"):
        psi = model_cat(model, 1 if name == "cat+" else -1)
    else:
        raise ParameterError(f"Unknown initial state '{name}'")
    return np.outer(psi, psi.conj())
