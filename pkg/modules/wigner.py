"""
Multi-Mode Wigner Slices
Displaced-parity evaluation of the joint Wigner function on lines and
planes of local-site phase space, with an analytic path for pure cats
"""
from dataclasses import dataclass, field
import logging
import warnings

import numpy as np
from scipy.special import eval_genlaguerre, gammainc, gammaln

from config import settings
from modules.errors import DimensionError, ParameterError, PhysicalityError, TruncationWarning
from modules.fock import DensityMatrix, FockSpace
from modules.states import MultimodeCat

logger = logging.getLogger(__name__)

QUADRATURES = ("x", "p")


@dataclass(frozen=True)
class Axis:
    """One varying coordinate shared by one or more sites (1-based)"""
    quadrature: str
    sites: tuple

    def __post_init__(self):
        if self.quadrature not in QUADRATURES:
            raise ParameterError(f"Quadrature must be 'x' or 'p', got '{self.quadrature}'")
        if not self.sites:
            raise ParameterError("Axis needs at least one site")
        object.__setattr__(self, "sites", tuple(int(s) for s in self.sites))

    @classmethod
    def parse(cls, text: str) -> "Axis":
        """'p:1,2,3' -> Axis('p', (1, 2, 3))"""
        try:
            quadrature, sites = text.split(":")
            return cls(quadrature.strip(), tuple(int(s) for s in sites.split(",")))
        except ValueError as exc:
            raise ParameterError(f"Cannot parse axis '{text}' (expected e.g. 'x:1' or 'p:1,2')") from exc

    @property
    def label(self) -> str:
        return f"{self.quadrature}_" + "_".join(str(s) for s in self.sites)


@dataclass(frozen=True)
class SliceSpec:
    """
    Which quadratures vary and where the others are pinned.

    pinned maps (quadrature, site) to a value; unpinned coordinates are 0.
    rotation holds per-site frame angles (see mode_rotation_note).
    """
    n_sites: int
    axes: tuple
    pinned: dict = field(default_factory=dict)
    rotation: tuple = ()

    def __post_init__(self):
        axes = tuple(Axis.parse(a) if isinstance(a, str) else a for a in self.axes)
        object.__setattr__(self, "axes", axes)
        if not 1 <= len(axes) <= 2:
            raise ParameterError(f"Slices vary 1 or 2 axes, got {len(axes)}")
        used = [(a.quadrature, s) for a in axes for s in a.sites]
        if len(set(used)) != len(used):
            raise ParameterError("Axes share a coordinate")
        for _, site in used + list(self.pinned):
            if not 1 <= site <= self.n_sites:
                raise ParameterError(f"Site {site} outside 1..{self.n_sites}")
        if self.rotation and len(self.rotation) != self.n_sites:
            raise ParameterError("Rotation needs one angle per site")

    def alphas(self, values) -> np.ndarray:
        """Local complex amplitudes alpha_j = (x_j + i p_j)/sqrt(2) for axis values"""
        coords = {"x": np.zeros(self.n_sites), "p": np.zeros(self.n_sites)}
        for (quadrature, site), value in self.pinned.items():
            coords[quadrature][site - 1] = value
        for axis, value in zip(self.axes, values):
            for site in axis.sites:
                coords[axis.quadrature][site - 1] = value
        alphas = (coords["x"] + 1j * coords["p"]) / np.sqrt(2.0)
        if self.rotation:
            alphas = alphas * np.exp(-1j * np.asarray(self.rotation))
        return alphas


@dataclass
class PhaseSpaceSlice:
    spec: SliceSpec
    grids: tuple
    values: np.ndarray
    method: str

    def rows(self) -> list:
        labels = [axis.label for axis in self.spec.axes]
        mesh = np.meshgrid(*self.grids, indexing="ij")
        rows = []
        for index in np.ndindex(self.values.shape):
            row = {label: float(m[index]) for label, m in zip(labels, mesh)}
            row["W"] = float(self.values[index])
            rows.append(row)
        return rows


@dataclass(frozen=True)
class RotationNote:
    angles: tuple
    identity: bool
    note: str


def mode_rotation_note(phi: float, N: int = 1) -> RotationNote:
    """
    Per-site frame rotation j*phi that aligns the local coherent amplitudes.

    Returns:
        RotationNote with angles for j = 1..N (mod 2pi)
    """
    angles = tuple(float((j * phi) % (2.0 * np.pi)) for j in range(1, N + 1))
    identity = all(min(a, 2.0 * np.pi - a) < 1e-12 for a in angles)
    note = ("local frames coincide" if identity else
            "slices use per-site rotated quadratures: site j rotated by j*phi")
    return RotationNote(angles, identity, note)


def displaced_parity(beta: complex, M: int) -> np.ndarray:
    """
    D(beta) P D(beta)^dag = D(2 beta) P on the first M Fock levels.

    Matrix elements come from the Laguerre form of <m|D(alpha)|n>, exact
    for any truncation.
    """
    alpha = 2.0 * beta
    x = abs(alpha) ** 2
    m, n = np.meshgrid(np.arange(M), np.arange(M), indexing="ij")
    low, high = np.minimum(m, n), np.maximum(m, n)
    shift = high - low
    log_ratio = 0.5 * (gammaln(low + 1) - gammaln(high + 1))
    base = np.where(m >= n, alpha, -np.conj(alpha))
    element = (np.exp(log_ratio - 0.5 * x) * base ** shift
               * eval_genlaguerre(low, shift, x))
    return element * ((-1.0) ** np.arange(M))[None, :]


def momentum_displacements(alphas: np.ndarray, space: FockSpace) -> np.ndarray:
    """beta_k = (1/sqrt N) sum_j alpha_j exp(ijk) for the modes of the space"""
    N = len(alphas)
    if N != space.n_modes:
        raise DimensionError(f"{N} site amplitudes for {space.n_modes} modes")
    sites = np.arange(1, N + 1)
    return np.array([np.sum(alphas * np.exp(1j * sites * k)) / np.sqrt(N)
                     for k in space.mode_labels])


def _apply_on_axis(op: np.ndarray, tensor: np.ndarray, axis: int) -> np.ndarray:
    return np.moveaxis(np.tensordot(op, tensor, axes=(1, axis)), 0, axis)


def _resolve(state, space):
    if isinstance(state, MultimodeCat):
        return np.asarray(state.vector), state.space
    if isinstance(state, DensityMatrix):
        return state.matrix, state.space
    if space is None:
        raise DimensionError("A FockSpace is needed for a bare vector or matrix")
    return np.asarray(state, dtype=complex), space


def _leakage(betas: np.ndarray, space: FockSpace) -> float:
    return max(gammainc(m, abs(b) ** 2) for b, m in zip(betas, space.truncations))


def wigner_point(state, alphas, space: FockSpace = None) -> float:
    """
    W(alpha) = (2/pi)^N Tr[rho D(alpha) P D(alpha)^dag].

    Args:
        state: MultimodeCat, DensityMatrix, state vector or density matrix
        alphas: complex local-site amplitude per site
        space: momentum-basis FockSpace for bare arrays

    Returns:
        real Wigner value
    """
    value, leakage = _wigner_numeric(state, np.asarray(alphas, dtype=complex), space)
    if leakage > settings.LEAKAGE_WARN:
        message = f"Sampled displacement leaks {leakage:.2e} beyond the truncation"
        logger.warning(message)
        warnings.warn(message, TruncationWarning, stacklevel=2)
    return value


def _wigner_numeric(state, alphas: np.ndarray, space: FockSpace = None) -> tuple:
    data, space = _resolve(state, space)
    dims = space.truncations
    betas = momentum_displacements(alphas, space)
    operators = [displaced_parity(b, m) for b, m in zip(betas, dims)]

    if data.ndim == 1:
        tensor = data.reshape(dims)
        applied = tensor
        for axis, op in enumerate(operators):
            applied = _apply_on_axis(op, applied, axis)
        trace = np.vdot(tensor, applied)
    else:
        tensor = data.reshape(dims + dims)
        for axis, op in enumerate(operators):
            tensor = _apply_on_axis(op, tensor, axis)
        trace = np.trace(tensor.reshape(space.total_dim, space.total_dim))

    value = (2.0 / np.pi) ** len(dims) * trace
    if abs(value.imag) > settings.WIGNER_REAL_TOL * max(1.0, abs(value.real)):
        raise PhysicalityError(f"Wigner value has imaginary part {value.imag:.2e}; state not Hermitian")
    return float(value.real), _leakage(betas, space)


def _coherent_cross(A: np.ndarray, B: np.ndarray, gamma: np.ndarray) -> complex:
    """Wigner function of |A><B| for product coherent states"""
    exponent = (np.conj(gamma) * A - gamma * np.conj(A) - 0.5 * np.abs(B) ** 2
                - 0.5 * np.abs(2 * gamma - A) ** 2 + np.conj(B) * (2 * gamma - A))
    return (2.0 / np.pi) ** len(A) * np.exp(np.sum(exponent))


def wigner_cat_analytic(cat: MultimodeCat, alphas) -> float:
    """Gaussian lobes plus interference terms of N^2 (|Z> + s|-Z>)(<Z| + s<-Z|)"""
    Z = cat.local_amplitudes
    gamma = np.asarray(alphas, dtype=complex)
    s = cat.parity
    norm_sq = 1.0 / (2.0 * (1.0 + s * np.exp(-2.0 * np.sum(np.abs(Z) ** 2))))
    total = (_coherent_cross(Z, Z, gamma) + _coherent_cross(-Z, -Z, gamma)
             + s * _coherent_cross(Z, -Z, gamma) + s * _coherent_cross(-Z, Z, gamma))
    return float(np.real(norm_sq * total))


def default_extent(state, space: FockSpace = None) -> float:
    """Half-width 2 sqrt(2) max|zeta_j| + margin of the default grid"""
    if isinstance(state, MultimodeCat):
        largest = float(np.max(np.abs(state.local_amplitudes)))
    else:
        largest = 0.0
    return 2.0 * np.sqrt(2.0) * largest + settings.WIGNER_MARGIN


def _sample(state, spec: SliceSpec, grids: tuple, space, method: str) -> PhaseSpaceSlice:
    if method not in ("auto", "numeric", "analytic"):
        raise ParameterError(f"Unknown Wigner method '{method}'")
    analytic = isinstance(state, MultimodeCat) and method in ("auto", "analytic")
    if method == "analytic" and not analytic:
        raise ParameterError("The analytic path needs a MultimodeCat")

    shape = tuple(len(g) for g in grids)
    values = np.empty(shape)
    worst_leakage = 0.0
    for index in np.ndindex(shape):
        alphas = spec.alphas([g[i] for g, i in zip(grids, index)])
        if analytic:
            values[index] = wigner_cat_analytic(state, alphas)
        else:
            values[index], leakage = _wigner_numeric(state, alphas, space)
            worst_leakage = max(worst_leakage, leakage)

    if worst_leakage > settings.LEAKAGE_WARN:
        message = f"Slice samples displacements leaking up to {worst_leakage:.2e} beyond the truncation"
        logger.warning(message)
        warnings.warn(message, TruncationWarning, stacklevel=3)
    return PhaseSpaceSlice(spec, grids, values, "analytic" if analytic else "numeric")


def _grid(state, space, resolution: int, extent: float) -> np.ndarray:
    resolution = resolution or settings.WIGNER_POINTS
    extent = extent or default_extent(state, space)
    return np.linspace(-extent, extent, resolution)


def wigner_line(state, spec: SliceSpec, resolution: int = None, extent: float = None,
                space: FockSpace = None, method: str = "auto") -> PhaseSpaceSlice:
    """Wigner function along one axis of the slice specification"""
    if len(spec.axes) != 1:
        raise ParameterError("wigner_line needs exactly one varying axis")
    return _sample(state, spec, (_grid(state, space, resolution, extent),), space, method)


def wigner_plane(state, spec: SliceSpec, resolution: int = None, extent: float = None,
                 space: FockSpace = None, method: str = "auto") -> PhaseSpaceSlice:
    """Wigner function on the plane spanned by two axes"""
    if len(spec.axes) != 2:
        raise ParameterError("wigner_plane needs exactly two varying axes")
    grid = _grid(state, space, resolution, extent)
    return _sample(state, spec, (grid, grid), space, method)
