"""
Array Model Builder
Builds the Kerr-array and two-photon-array models and their single-mode
Zeno reductions directly in the normal-mode (plane-wave) basis
"""
from dataclasses import dataclass
from functools import reduce
import logging
from typing import Optional, Union

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, ConfigDict, Field, field_validator

from config import settings
from modules.errors import DimensionError, ParameterError, ZenoAssumptionError
from modules.fock import CompositeOperator, FockSpace, annihilation, embed

logger = logging.getLogger(__name__)

KERR_ARRAY = "kerr-array"
TWOPHOTON_ARRAY = "twophoton-array"
KERR_ZENO = "kerr-zeno"
TWOPHOTON_ZENO = "twophoton-zeno"
MODEL_KINDS = (KERR_ARRAY, TWOPHOTON_ARRAY, KERR_ZENO, TWOPHOTON_ZENO)

TWO_PI = 2.0 * np.pi
MIN_DECAYING_LEVELS = 3


def quasi_momenta(N: int) -> np.ndarray:
    """Lattice momenta 2*pi*m/N for m = 1..N"""
    return TWO_PI * np.arange(1, N + 1) / N


def lattice_index(phi: float, N: int) -> int:
    """
    Position (0-based) of phi on the momentum lattice.

    Raises:
        ParameterError if phi is not congruent to a lattice momentum
    """
    m = int(round(phi * N / TWO_PI))
    if abs(phi - TWO_PI * m / N) > settings.LATTICE_TOL * max(1.0, abs(phi)):
        raise ParameterError(f"phi={phi} is not a lattice momentum 2*pi*j/{N}")
    return (m - 1) % N


class _ArrayParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    N: int = Field(ge=1)
    G: float = Field(gt=0)
    phi: float = TWO_PI
    gamma: float = Field(default=0.0, ge=0)
    kappa: float = Field(default=0.0, ge=0)

    @field_validator("phi")
    @classmethod
    def snap_phi(cls, value: float, info):
        N = info.data.get("N")
        if N is None:
            return value
        # theta is pinned to 2*phi, so phi is stored as its exact lattice label
        return float(quasi_momenta(N)[lattice_index(value, N)])

    @property
    def theta(self) -> float:
        return (2.0 * self.phi) % TWO_PI

    @property
    def momenta(self) -> np.ndarray:
        return quasi_momenta(self.N)

    @property
    def phi_index(self) -> int:
        return lattice_index(self.phi, self.N)

    def gamma_rates(self) -> np.ndarray:
        return np.array([gamma_k(self.gamma, k, self.phi) for k in self.momenta])


class KerrArrayParams(_ArrayParams):
    U: float = Field(default=1.0, gt=0)

    @property
    def rate_unit(self) -> float:
        return self.U

    @property
    def local_amplitude_sq(self) -> float:
        return self.G / self.U


class TwoPhotonArrayParams(_ArrayParams):
    eta: float = Field(default=1.0, gt=0)

    @property
    def rate_unit(self) -> float:
        return self.eta

    @property
    def local_amplitude_sq(self) -> float:
        return self.G / self.eta


ArrayParams = Union[KerrArrayParams, TwoPhotonArrayParams]


@dataclass(frozen=True)
class Truncations:
    """Retained Fock levels for the cat-bearing mode and for every decaying mode"""
    m_phi: int
    m_decaying: int = settings.DEFAULT_M_DECAYING

    def per_mode(self, N: int, phi_index: int) -> tuple:
        return tuple(self.m_phi if i == phi_index else self.m_decaying for i in range(N))


@dataclass(frozen=True, eq=False)
class JumpChannel:
    operator: CompositeOperator
    rate: float
    label: str
    kind: str

    def __iter__(self):
        yield self.operator
        yield self.rate


@dataclass(frozen=True, eq=False)
class ModelInstance:
    kind: str
    params: BaseModel
    space: FockSpace
    hamiltonian: CompositeOperator
    jumps: tuple
    phi_index: int
    zeta: complex

    @property
    def rate_unit(self) -> float:
        return self.params.rate_unit

    @property
    def is_zeno(self) -> bool:
        return self.kind in (KERR_ZENO, TWOPHOTON_ZENO)

    def channels(self, kind: str) -> list:
        return [channel for channel in self.jumps if channel.kind == kind]


def gamma_k(gamma: float, k: float, phi: float) -> float:
    """Non-local decay rate 2*gamma*(1 - cos(k - phi)) of normal mode k"""
    if gamma < 0:
        raise ParameterError(f"gamma must be >= 0, got {gamma}")
    return 2.0 * gamma * (1.0 - np.cos(k - phi))


def cat_amplitude(params: ArrayParams) -> complex:
    """
    Normal-mode cat amplitude.

    Returns:
        i*sqrt(N G/U) for the Kerr array, sqrt(-i N G/eta) (principal root)
        for the two-photon array
    """
    if isinstance(params, KerrArrayParams):
        return 1j * np.sqrt(params.N * params.G / params.U)
    return complex(np.sqrt(complex(-1j * params.N * params.G / params.eta)))


def default_truncations(params: ArrayParams) -> Truncations:
    """Truncation table keyed by drive strength, fallback for other drives"""
    ratio = params.local_amplitude_sq
    for drive in sorted(settings.M_PHI_BY_DRIVE):
        if ratio <= drive + 1e-12:
            return Truncations(settings.M_PHI_BY_DRIVE[drive])
    return Truncations(settings.M_PHI_FALLBACK)


def momentum_space(params: ArrayParams, truncations=None) -> FockSpace:
    if truncations is None:
        truncations = default_truncations(params)
    if isinstance(truncations, Truncations):
        dims = truncations.per_mode(params.N, params.phi_index)
    else:
        dims = tuple(truncations)
    if len(dims) != params.N:
        raise DimensionError(f"{len(dims)} truncations given for N={params.N} normal modes")
    return FockSpace(dims, tuple(params.momenta))


def normal_modes(space: FockSpace) -> list:
    """Embedded b_k for every mode of the space"""
    return [embed(annihilation(m), i, space) for i, m in enumerate(space.truncations)]


def _pair_operators(modes: list) -> list:
    """P_q = sum over k1 + k2 = q (mod 2pi) of b_k1 b_k2, indexed by q = 2*pi*q/N"""
    N = len(modes)
    space = modes[0].space
    pairs = [CompositeOperator.zero(space) for _ in range(N)]
    for i1, b1 in enumerate(modes):
        for i2, b2 in enumerate(modes):
            q = (i1 + i2 + 2) % N
            pairs[q] = pairs[q] + b1 @ b2
    return pairs


def build_kerr_hamiltonian(params: KerrArrayParams, truncations=None) -> CompositeOperator:
    """
    Kerr-array Hamiltonian in the normal-mode basis.

    Args:
        params: KerrArrayParams
        truncations: Truncations, explicit per-mode tuple, or None for defaults

    Returns:
        (U/N) sum_q P_q^dag P_q + G P_theta^dag + h.c.
    """
    space = momentum_space(params, truncations)
    pairs = _pair_operators(normal_modes(space))

    interaction = CompositeOperator.zero(space)
    for pair in pairs:
        interaction = interaction + pair.dag() @ pair
    interaction = interaction * (params.U / params.N)

    theta_index = (2 * (params.phi_index + 1)) % params.N
    drive = pairs[theta_index].dag() * params.G
    hamiltonian = interaction + drive + drive.dag()

    logger.info(f"Kerr Hamiltonian built: dim={space.total_dim}, nnz={hamiltonian.matrix.nnz}")
    return hamiltonian


def local_mode(space: FockSpace, j: int) -> CompositeOperator:
    """Site operator a_j = (1/sqrt N) sum_k exp(-ijk) b_k"""
    N = space.n_modes
    a_j = CompositeOperator.zero(space)
    for k, b in zip(space.mode_labels, normal_modes(space)):
        a_j = a_j + b * (np.exp(-1j * j * k) / np.sqrt(N))
    return a_j


def _drop_zero_rates(channels: list) -> list:
    if not channels:
        return channels
    max_rate = max(channel.rate for channel in channels)
    kept = [c for c in channels if c.rate > settings.ZERO_RATE_REL * max_rate]
    dropped = len(channels) - len(kept)
    if dropped:
        logger.debug(f"Dropped {dropped} zero-rate channel(s)")
    return kept


def build_jumps(params: ArrayParams, truncations=None) -> list:
    """
    Jump channels of an array model.

    Returns:
        list of JumpChannel: non-local b_k at gamma_k (k != phi), intrinsic
        loss b_k at kappa, and for the two-photon model the site operators
        Z_j = a_j^2 - exp(-2ij phi) zeta^2 / N at rate 2 eta
    """
    space = momentum_space(params, truncations)
    modes = normal_modes(space)
    N = params.N
    channels = []

    for i, (k, b) in enumerate(zip(params.momenta, modes)):
        if i == params.phi_index:
            continue
        channels.append(JumpChannel(b, gamma_k(params.gamma, k, params.phi),
                                    f"nonlocal[m={i + 1}]", "nonlocal"))

    if params.kappa > 0:
        for i, b in enumerate(modes):
            channels.append(JumpChannel(b, params.kappa, f"loss[m={i + 1}]", "loss"))

    if isinstance(params, TwoPhotonArrayParams):
        zeta = cat_amplitude(params)
        for j in range(1, N + 1):
            a_j = local_mode(space, j)
            target = np.exp(-2j * j * params.phi) * zeta ** 2 / N
            channels.append(JumpChannel(a_j @ a_j - target, 2.0 * params.eta,
                                        f"two-photon[j={j}]", "two-photon"))

    return _drop_zero_rates(channels)


def build_model(params: ArrayParams, truncations=None) -> ModelInstance:
    """Assemble the full array model as a ModelInstance"""
    space = momentum_space(params, truncations)
    decaying = [m for i, m in enumerate(space.truncations) if i != params.phi_index]
    if decaying and min(decaying) < MIN_DECAYING_LEVELS:
        raise DimensionError(
            f"Decaying modes need at least {MIN_DECAYING_LEVELS} levels, got {min(decaying)}: "
            f"b_k^2 vanishes below that and the virtual pair channel is lost"
        )
    if isinstance(params, KerrArrayParams):
        kind = KERR_ARRAY
        hamiltonian = build_kerr_hamiltonian(params, space.truncations)
    else:
        kind = TWOPHOTON_ARRAY
        hamiltonian = CompositeOperator.zero(space)

    jumps = tuple(build_jumps(params, space.truncations))
    logger.info(f"✓ {kind} model: N={params.N}, dims={space.truncations}, {len(jumps)} channels")
    return ModelInstance(kind, params, space, hamiltonian, jumps,
                         params.phi_index, cat_amplitude(params))


def zeno_rate(params: KerrArrayParams) -> float:
    """Gamma = 4 (U^2/N^2) sum_{k != phi} 1/gamma_k"""
    if params.gamma <= 0:
        raise ZenoAssumptionError(
            "Zeno reduction assumes strong non-local dissipation; gamma must be > 0"
        )
    if params.N < 2:
        raise ZenoAssumptionError("Zeno reduction needs at least one decaying normal mode")
    rates = np.delete(params.gamma_rates(), params.phi_index)
    return 4.0 * params.U ** 2 / params.N ** 2 * float(np.sum(1.0 / rates))


def _zeno_space(params: ArrayParams, M_phi: Optional[int]) -> FockSpace:
    return FockSpace.single(M_phi or settings.M_ZENO, params.phi)


def _loss_channels(params: ArrayParams, b: CompositeOperator, include_loss: bool) -> list:
    if include_loss and params.kappa > 0:
        return [JumpChannel(b, params.kappa, "loss[phi]", "loss")]
    return []


def effective_zeno_kerr(params: KerrArrayParams, M_phi: int = None,
                        include_loss: bool = True) -> ModelInstance:
    """
    Single-mode Zeno model of the Kerr array.

    H_phi = (U/N)(b^dag2 - zeta^*2)(b^2 - zeta^2), jump b^2 - zeta^2 at rate Gamma,
    plus kappa D[b_phi] when intrinsic loss is present.
    """
    rate = zeno_rate(params)
    space = _zeno_space(params, M_phi)
    zeta = cat_amplitude(params)
    b = CompositeOperator(space, annihilation(space.truncations[0]).matrix)
    pair_jump = b @ b - zeta ** 2

    hamiltonian = (pair_jump.dag() @ pair_jump) * (params.U / params.N)
    jumps = [JumpChannel(pair_jump, rate, "zeno-pair", "zeno")]
    jumps += _loss_channels(params, b, include_loss)

    logger.info(f"✓ Kerr Zeno model: M={space.truncations[0]}, Gamma={rate:.4e}")
    return ModelInstance(KERR_ZENO, params, space, hamiltonian, tuple(jumps), 0, zeta)


def effective_zeno_twophoton(params: TwoPhotonArrayParams, M_phi: int = None,
                             include_loss: bool = True) -> ModelInstance:
    """Single-mode Zeno model of the two-photon array: jump b^2 - zeta^2 at rate 2 eta/N"""
    space = _zeno_space(params, M_phi)
    zeta = cat_amplitude(params)
    b = CompositeOperator(space, annihilation(space.truncations[0]).matrix)
    jumps = [JumpChannel(b @ b - zeta ** 2, 2.0 * params.eta / params.N, "zeno-pair", "zeno")]
    jumps += _loss_channels(params, b, include_loss)

    logger.info(f"✓ Two-photon Zeno model: M={space.truncations[0]}")
    return ModelInstance(TWOPHOTON_ZENO, params, space, CompositeOperator.zero(space),
                         tuple(jumps), 0, zeta)


def build_instance(kind: str, params: ArrayParams, truncations=None) -> ModelInstance:
    """Dispatch on the model selector used by run configurations"""
    if kind in (KERR_ARRAY, TWOPHOTON_ARRAY):
        return build_model(params, truncations)
    m_phi = truncations.m_phi if isinstance(truncations, Truncations) else truncations
    if kind == KERR_ZENO:
        return effective_zeno_kerr(params, m_phi)
    if kind == TWOPHOTON_ZENO:
        return effective_zeno_twophoton(params, m_phi)
    raise ParameterError(f"Unknown model kind '{kind}'")


def total_momentum_phase(space: FockSpace) -> CompositeOperator:
    """Translation operator exp(i sum_k k n_k), diagonal in the Fock basis"""
    phases = reduce(
        lambda acc, mode: np.add.outer(acc, mode).ravel(),
        [k * np.arange(m) for k, m in zip(space.mode_labels, space.truncations)]
    )
    return CompositeOperator(space, sp.diags(np.exp(1j * np.asarray(phases)), format="csr"))


def decoherence_rate(params: ArrayParams) -> float:
    """Single-photon-loss flip rate |zeta|^2 kappa inside the cat manifold"""
    return abs(cat_amplitude(params)) ** 2 * params.kappa
