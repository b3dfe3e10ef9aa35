"""
Truncated Fock-space algebra
Ladder operators, tensor-product embedding, coherent states, displacements
and density-matrix validity checks
"""
from dataclasses import dataclass
from functools import reduce
import logging
import warnings

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.special import gammainc

from config import settings
from modules.errors import DimensionError, PhysicalityError, TruncationWarning

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FockSpace:
    """
    Product of truncated bosonic modes.

    The first mode is the most significant Kronecker index.
    """
    truncations: tuple
    mode_labels: tuple

    def __post_init__(self):
        truncations = tuple(int(m) for m in self.truncations)
        labels = tuple(float(k) for k in self.mode_labels)
        object.__setattr__(self, "truncations", truncations)
        object.__setattr__(self, "mode_labels", labels)

        if not truncations:
            raise DimensionError("FockSpace needs at least one mode")
        if any(m < 2 for m in truncations):
            raise DimensionError(f"Every truncation must be >= 2, got {truncations}")
        if len(labels) != len(truncations):
            raise DimensionError(
                f"{len(labels)} mode labels for {len(truncations)} truncations"
            )
        if len(set(labels)) != len(labels):
            raise DimensionError(f"Duplicate mode labels: {labels}")

    @classmethod
    def single(cls, M: int, label: float = 0.0) -> "FockSpace":
        return cls((M,), (label,))

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.truncations))

    @property
    def n_modes(self) -> int:
        return len(self.truncations)

    def index_of(self, label: float, tol: float = 1e-9) -> int:
        """Position of the mode carrying `label`"""
        for index, value in enumerate(self.mode_labels):
            if abs(value - label) < tol:
                return index
        raise DimensionError(f"No mode labelled {label} in {self.mode_labels}")


@dataclass(frozen=True, eq=False)
class CompositeOperator:
    """Sparse operator acting on a FockSpace"""
    space: FockSpace
    matrix: sp.csr_matrix

    # numpy scalars defer to __rmul__
    __array_ufunc__ = None

    def __post_init__(self):
        matrix = sp.csr_matrix(self.matrix, dtype=complex)
        dim = self.space.total_dim
        if matrix.shape != (dim, dim):
            raise DimensionError(
                f"Operator shape {matrix.shape} does not match space dimension {dim}"
            )
        object.__setattr__(self, "matrix", matrix)

    @classmethod
    def identity(cls, space: FockSpace) -> "CompositeOperator":
        return cls(space, sp.identity(space.total_dim, dtype=complex, format="csr"))

    @classmethod
    def zero(cls, space: FockSpace) -> "CompositeOperator":
        return cls(space, sp.csr_matrix((space.total_dim, space.total_dim), dtype=complex))

    def dag(self) -> "CompositeOperator":
        return CompositeOperator(self.space, self.matrix.conj().T)

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def hermiticity_defect(self) -> float:
        diff = self.matrix - self.matrix.conj().T
        return float(abs(diff).max()) if diff.nnz else 0.0

    def expect(self, psi: np.ndarray) -> complex:
        psi = np.asarray(psi)
        return complex(np.vdot(psi, self.matrix @ psi))

    def _check_same_space(self, other: "CompositeOperator"):
        if other.space.truncations != self.space.truncations:
            raise DimensionError(
                f"Operators live on different spaces: {self.space.truncations} vs "
                f"{other.space.truncations}"
            )

    def __matmul__(self, other):
        if isinstance(other, CompositeOperator):
            self._check_same_space(other)
            return CompositeOperator(self.space, self.matrix @ other.matrix)
        return self.matrix @ np.asarray(other)

    def __add__(self, other):
        if isinstance(other, CompositeOperator):
            self._check_same_space(other)
            return CompositeOperator(self.space, self.matrix + other.matrix)
        # scalar shift means scalar * identity
        return CompositeOperator(
            self.space, self.matrix + other * sp.identity(self.space.total_dim, format="csr")
        )

    def __radd__(self, other):
        return self.__add__(other)

    def __sub__(self, other):
        return self + (-1.0) * other

    def __rsub__(self, other):
        return (-1.0) * self + other

    def __mul__(self, scalar):
        return CompositeOperator(self.space, self.matrix * scalar)

    def __rmul__(self, scalar):
        return self.__mul__(scalar)

    def __neg__(self):
        return self * -1.0


@dataclass(frozen=True, eq=False)
class Ket:
    """Truncated state vector with its leakage diagnostic"""
    vector: np.ndarray
    leakage: float = 0.0

    @property
    def truncation_warning(self) -> bool:
        return self.leakage > settings.LEAKAGE_WARN

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.vector, dtype=dtype)

    def __len__(self):
        return len(self.vector)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    space: FockSpace
    matrix: np.ndarray

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=complex)
        dim = self.space.total_dim
        if matrix.shape != (dim, dim):
            raise DimensionError(
                f"Density matrix shape {matrix.shape} does not match dimension {dim}"
            )
        object.__setattr__(self, "matrix", matrix)

    @classmethod
    def from_ket(cls, psi, space: FockSpace) -> "DensityMatrix":
        psi = np.asarray(psi, dtype=complex)
        return cls(space, np.outer(psi, psi.conj()))

    def check(self) -> dict:
        """
        Evaluate the three validity conditions.

        Returns:
            dict with hermiticity_defect, trace_error, min_eigenvalue and valid
        """
        rho = self.matrix
        hermiticity = float(np.max(np.abs(rho - rho.conj().T)))
        trace_error = float(abs(np.trace(rho) - 1.0))
        min_eig = float(np.min(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))))
        return {
            "hermiticity_defect": hermiticity,
            "trace_error": trace_error,
            "min_eigenvalue": min_eig,
            "valid": (
                hermiticity <= settings.HERMITICITY_TOL
                and trace_error <= settings.TRACE_TOL
                and min_eig >= -settings.POSITIVITY_TOL
            )
        }

    def validate(self) -> "DensityMatrix":
        report = self.check()
        if not report["valid"]:
            raise PhysicalityError(f"Matrix is not a valid density matrix: {report}", report)
        return self


def _as_matrix(op) -> sp.csr_matrix:
    if isinstance(op, CompositeOperator):
        return op.matrix
    return sp.csr_matrix(op, dtype=complex)


def _check_dimension(M: int):
    if int(M) < 2:
        raise DimensionError(f"Truncation must be >= 2, got {M}")


def annihilation(M: int) -> CompositeOperator:
    """Single-mode lowering operator with <n-1|a|n> = sqrt(n)"""
    _check_dimension(M)
    diag = np.sqrt(np.arange(1, M, dtype=float))
    return CompositeOperator(FockSpace.single(M), sp.diags(diag, offsets=1, format="csr"))


def creation(M: int) -> CompositeOperator:
    return annihilation(M).dag()


def number(M: int) -> CompositeOperator:
    _check_dimension(M)
    return CompositeOperator(
        FockSpace.single(M), sp.diags(np.arange(M, dtype=float), format="csr")
    )


def identity(M: int) -> CompositeOperator:
    _check_dimension(M)
    return CompositeOperator.identity(FockSpace.single(M))


def embed(op, mode_index: int, space: FockSpace) -> CompositeOperator:
    """
    Place a single-mode operator on one mode of a product space.

    Args:
        op: single-mode CompositeOperator or square matrix
        mode_index: position of the target mode in space
        space: the product space

    Returns:
        I x ... x op x ... x I as a CompositeOperator
    """
    if not 0 <= mode_index < space.n_modes:
        raise DimensionError(f"Mode index {mode_index} out of range for {space.n_modes} modes")
    matrix = _as_matrix(op)
    target = space.truncations[mode_index]
    if matrix.shape != (target, target):
        raise DimensionError(
            f"Operator of shape {matrix.shape} cannot act on mode {mode_index} "
            f"with truncation {target}"
        )

    left = int(np.prod(space.truncations[:mode_index]))
    right = int(np.prod(space.truncations[mode_index + 1:]))
    full = sp.kron(
        sp.kron(sp.identity(left, format="csr"), matrix, format="csr"),
        sp.identity(right, format="csr"),
        format="csr"
    )
    return CompositeOperator(space, full)


def fock_state(n: int, M: int) -> np.ndarray:
    _check_dimension(M)
    if not 0 <= n < M:
        raise DimensionError(f"Fock level {n} outside truncation {M}")
    psi = np.zeros(M, dtype=complex)
    psi[n] = 1.0
    return psi


def vacuum(space: FockSpace) -> np.ndarray:
    psi = np.zeros(space.total_dim, dtype=complex)
    psi[0] = 1.0
    return psi


def tensor_state(vectors) -> np.ndarray:
    """Kronecker product of per-mode vectors in mode order"""
    return reduce(np.kron, [np.asarray(v, dtype=complex) for v in vectors])


def coherent_leakage(zeta: complex, M: int) -> float:
    """Poisson weight 1 - sum_{n<M} |c_n|^2 lost to the truncation"""
    return float(gammainc(M, abs(zeta) ** 2))


def coherent_state(zeta: complex, M: int) -> Ket:
    """
    Truncated coherent state, renormalized after truncation.

    Args:
        zeta: complex amplitude
        M: number of retained Fock levels

    Returns:
        Ket with the normalized vector and the truncation leakage
    """
    _check_dimension(M)
    coefficients = np.empty(M, dtype=complex)
    coefficients[0] = np.exp(-0.5 * abs(zeta) ** 2)
    for n in range(1, M):
        coefficients[n] = coefficients[n - 1] * zeta / np.sqrt(n)

    leakage = coherent_leakage(zeta, M)
    ket = Ket(coefficients / np.linalg.norm(coefficients), leakage)
    if ket.truncation_warning:
        message = f"Coherent amplitude {zeta:.4g} leaks {leakage:.3e} beyond M={M}"
        logger.warning(message)
        warnings.warn(message, TruncationWarning, stacklevel=2)
    return ket


def unitarity_defect(op) -> float:
    matrix = _as_matrix(op).toarray()
    return float(np.max(np.abs(matrix.conj().T @ matrix - np.eye(matrix.shape[0]))))


def displacement(zeta: complex, M: int) -> CompositeOperator:
    """exp(zeta a^dag - zeta^* a) on the truncated space"""
    a = annihilation(M).toarray()
    generator = zeta * a.conj().T - np.conj(zeta) * a
    op = CompositeOperator(FockSpace.single(M), scipy.linalg.expm(generator))
    logger.debug(f"Displacement {zeta:.4g} on M={M}: unitarity defect {unitarity_defect(op):.2e}")
    return op


def partial_trace(rho, space: FockSpace, keep: int) -> np.ndarray:
    """Reduced density matrix of mode `keep`"""
    rho = np.asarray(rho.matrix if isinstance(rho, DensityMatrix) else rho)
    dims = space.truncations
    left = int(np.prod(dims[:keep]))
    right = int(np.prod(dims[keep + 1:]))
    m = dims[keep]
    tensor = rho.reshape(left, m, right, left, m, right)
    return np.einsum("aibajb->ij", tensor)
