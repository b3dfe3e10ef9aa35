"""
Liouvillian Assembly
Lindblad generators and their adjoints on column-stacked density matrices,
materialized as sparse matrices or applied matrix-free
"""
from dataclasses import dataclass
import logging
import math
import time
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from modules.errors import DimensionError, ParameterError
from modules.fock import CompositeOperator, DensityMatrix

logger = logging.getLogger(__name__)

COLUMN_STACKING = "column-stacking"


@dataclass(frozen=True, eq=False)
class Superoperator:
    """
    Lindblad generator (or its adjoint) acting on vec(rho).

    `collapse` holds the rate-folded jump operators sqrt(gamma_i) L_i; the
    matrix-free path uses them together with `hamiltonian`.
    """
    dim: int
    hamiltonian: sp.csr_matrix
    collapse: tuple
    matrix: Optional[sp.csr_matrix] = None
    adjoint: bool = False
    convention: str = COLUMN_STACKING

    @property
    def liouville_dim(self) -> int:
        return self.dim * self.dim

    @property
    def is_materialized(self) -> bool:
        return self.matrix is not None

    def require_matrix(self) -> sp.csr_matrix:
        if self.matrix is None:
            raise DimensionError("Superoperator was built matrix-free; materialize it first")
        return self.matrix

    def toarray(self) -> np.ndarray:
        return self.require_matrix().toarray()

    def _effective_hamiltonian(self) -> sp.csr_matrix:
        decay = sp.csr_matrix((self.dim, self.dim), dtype=complex)
        for c in self.collapse:
            decay = decay + c.conj().T @ c
        return self.hamiltonian - 0.5j * decay

    def apply(self, rho) -> np.ndarray:
        """Matrix-free action on a D x D matrix"""
        rho = np.asarray(rho, dtype=complex)
        h_eff = self._effective_hamiltonian()
        if self.adjoint:
            out = 1j * (h_eff.conj().T @ rho - rho @ h_eff)
            for c in self.collapse:
                out = out + c.conj().T @ (rho @ c)
        else:
            out = -1j * (h_eff @ rho - rho @ h_eff.conj().T)
            for c in self.collapse:
                out = out + c @ (rho @ c.conj().T)
        return np.asarray(out)

    def matvec(self, vec) -> np.ndarray:
        return vectorize(self.apply(devectorize(vec)))

    def norm(self) -> float:
        """1-norm of the materialized matrix, or a bound from the operator norms"""
        if self.matrix is not None:
            return float(spla.norm(self.matrix, 1))
        bound = 2.0 * spla.norm(self.hamiltonian, 1)
        for c in self.collapse:
            bound += 2.0 * spla.norm(c, 1) ** 2
        return float(bound)


def vectorize(rho) -> np.ndarray:
    """Column-stacking vec(rho)"""
    if isinstance(rho, DensityMatrix):
        rho = rho.matrix
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise DimensionError(f"Expected a square matrix, got shape {rho.shape}")
    return rho.reshape(-1, order="F")


def devectorize(vec) -> np.ndarray:
    vec = np.asarray(vec)
    dim = math.isqrt(vec.size)
    if dim * dim != vec.size:
        raise DimensionError(f"Vector length {vec.size} is not a perfect square")
    return vec.reshape((dim, dim), order="F")


def spre(op: sp.spmatrix) -> sp.csr_matrix:
    """vec(A rho) = (I x A) vec(rho)"""
    return sp.kron(sp.identity(op.shape[0], format="csr"), op, format="csr")


def spost(op: sp.spmatrix) -> sp.csr_matrix:
    """vec(rho B) = (B^T x I) vec(rho)"""
    return sp.kron(op.T, sp.identity(op.shape[0], format="csr"), format="csr")


def _as_sparse(op) -> sp.csr_matrix:
    if isinstance(op, CompositeOperator):
        return op.matrix
    return sp.csr_matrix(op, dtype=complex)


def _collect(hamiltonian, jumps):
    """Normalize inputs into (D, H, folded collapse operators)"""
    jumps = [tuple(channel) for channel in jumps]
    if hamiltonian is None:
        if not jumps:
            raise DimensionError("Need a Hamiltonian or at least one jump operator")
        dim = _as_sparse(jumps[0][0]).shape[0]
        H = sp.csr_matrix((dim, dim), dtype=complex)
    else:
        H = _as_sparse(hamiltonian)
        dim = H.shape[0]

    collapse = []
    for op, rate in jumps:
        L = _as_sparse(op)
        if L.shape != (dim, dim):
            raise DimensionError(f"Jump operator of shape {L.shape} on a {dim}-dimensional space")
        if rate < 0:
            raise ParameterError(f"Negative jump rate {rate}")
        if rate == 0:
            continue
        collapse.append(np.sqrt(rate) * L)
    return dim, H, tuple(collapse)


def liouvillian(hamiltonian, jumps, materialize: bool = True) -> Superoperator:
    """
    Lindblad generator rho -> -i[H, rho] + sum_i gamma_i D[L_i] rho.

    Args:
        hamiltonian: CompositeOperator, sparse/dense matrix or None
        jumps: iterable of (operator, rate) pairs or JumpChannel objects
        materialize: also build the D^2 x D^2 sparse matrix

    Returns:
        Superoperator in the column-stacking convention
    """
    dim, H, collapse = _collect(hamiltonian, jumps)
    matrix = None
    if materialize:
        start = time.perf_counter()
        matrix = -1j * (spre(H) - spost(H))
        for c in collapse:
            decay = c.conj().T @ c
            matrix = matrix + sp.kron(c.conj(), c) - 0.5 * spre(decay) - 0.5 * spost(decay)
        matrix = sp.csr_matrix(matrix)
        logger.info(
            f"Liouvillian assembled: D={dim}, nnz={matrix.nnz}, "
            f"{time.perf_counter() - start:.2f}s"
        )
    return Superoperator(dim, H, collapse, matrix, adjoint=False)


def adjoint_liouvillian(hamiltonian, jumps, materialize: bool = True) -> Superoperator:
    """Heisenberg-picture generator J -> i[H, J] + sum_i gamma_i (L^dag J L - {L^dag L, J}/2)"""
    dim, H, collapse = _collect(hamiltonian, jumps)
    matrix = None
    if materialize:
        matrix = 1j * (spre(H) - spost(H))
        for c in collapse:
            decay = c.conj().T @ c
            matrix = matrix + sp.kron(c.T, c.conj().T) - 0.5 * spre(decay) - 0.5 * spost(decay)
        matrix = sp.csr_matrix(matrix)
    return Superoperator(dim, H, collapse, matrix, adjoint=True)


def apply(L: Superoperator, rho) -> np.ndarray:
    """Matrix-free action; accepts a matrix or a vectorized matrix"""
    rho = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)
    if rho.ndim == 1:
        return L.matvec(rho)
    if rho.shape != (L.dim, L.dim):
        raise DimensionError(f"Matrix of shape {rho.shape} for a {L.dim}-dimensional space")
    return L.apply(rho)


def liouvillian_for(model, materialize: bool = True) -> Superoperator:
    return liouvillian(model.hamiltonian, model.jumps, materialize)


def adjoint_for(model, materialize: bool = True) -> Superoperator:
    return adjoint_liouvillian(model.hamiltonian, model.jumps, materialize)


def trace_preservation_defect(L: Superoperator) -> float:
    """max |vec(I)^dag L|, zero for a trace-preserving generator"""
    identity = vectorize(np.eye(L.dim, dtype=complex))
    if L.is_materialized:
        row = L.matrix.conj().T @ identity
    else:
        dual = Superoperator(L.dim, L.hamiltonian, L.collapse, adjoint=not L.adjoint)
        row = dual.matvec(identity)
    return float(np.max(np.abs(row)))
