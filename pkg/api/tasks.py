"""
Task Handlers
One handler per CLI task, registered on a TaskRouter the way the web routes
were grouped. A handler computes the output rows of a single sweep point.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from models.run_config import RunConfig, SweepPoint
from modules.errors import ParameterError
from modules.model import KERR_ZENO, TWOPHOTON_ZENO, build_instance
from modules.solver import (conserved_defect, conserved_quantities, evolve, get_solver,
                            log_time_grid, loglog_slope, observables_for, steady_kernel,
                            zeno_steady_distance)
from modules.states import DFS_LABELS, dfs_operators, initial_state, multimode_cat, parity_ops
from modules.superop import adjoint_for, liouvillian_for
from modules.wigner import Axis, SliceSpec, mode_rotation_note, wigner_line, wigner_plane

logger = logging.getLogger(__name__)


@dataclass
class TaskResult:
    rows: list
    summary: dict = field(default_factory=dict)


class TaskRouter:
    """Maps task names to per-point handlers and optional summary hooks"""

    def __init__(self):
        self.handlers = {}
        self.summaries = {}

    def task(self, name: str):
        def register(handler):
            self.handlers[name] = handler
            return handler
        return register

    def summary(self, name: str):
        def register(hook):
            self.summaries[name] = hook
            return hook
        return register

    def handler(self, name: str):
        if name not in self.handlers:
            raise ParameterError(f"Unknown task '{name}'")
        return self.handlers[name]

    def summarize(self, name: str, config: RunConfig, rows: list) -> dict:
        hook = self.summaries.get(name)
        return hook(config, rows) if hook else {}


router = TaskRouter()


def parameter_columns(config: RunConfig, point: SweepPoint, model) -> dict:
    """Every swept and fixed parameter, rates in units of U or eta"""
    params = model.params
    unit, name = config.model.unit, config.model.unit_name
    columns = {
        "model": model.kind,
        "N": params.N,
        f"G_over_{name}": params.G / unit,
        f"gamma_over_{name}": params.gamma / unit,
        f"kappa_over_{name}": params.kappa / unit,
        "phi": params.phi,
        "truncations": "x".join(str(m) for m in model.space.truncations)
    }
    for key, value in point.values.items():
        columns.setdefault(key, value)
    return columns


def _kernel_tol(config: RunConfig):
    return config.tolerance.kernel_tol


@router.task("steady")
def steady_task(config: RunConfig, point: SweepPoint) -> list:
    """Steady state from the configured initial state: DFS coefficients and purity"""
    model = config.build(point)
    result = get_solver().steady(model, initial_state(model, config.steady.initial), _kernel_tol(config))
    c = result.coefficients
    row = parameter_columns(config, point, model)
    row.update({
        "c_pp": c.c_pp,
        "c_mm": c.c_mm,
        "abs_c_pm": abs(c.c_pm),
        "purity": result.purity,
        "kernel_dim": result.kernel_dim,
        "projection_residual": np.nan if result.projection_residual is None else result.projection_residual
    })
    logger.info(f"✓ steady point {point.values}: c_++={c.c_pp:.6f}")
    return [row]


@router.task("gap")
def gap_task(config: RunConfig, point: SweepPoint) -> list:
    """Dissipative gap with its closed-form companions"""
    model = config.build(point)
    unit, name = config.model.unit, config.model.unit_name
    expected = config.gap.expected_kernel_dim or (4 if model.params.kappa == 0 else 1)
    spectrum = get_solver().gap(model, expected, config.gap.n_eigs, _kernel_tol(config))
    estimates = spectrum.estimates

    row = parameter_columns(config, point, model)
    row.update({
        f"gap_over_{name}": spectrum.dissipative_gap / unit,
        "kernel_dim": spectrum.kernel_dim,
        "ambiguous": int(spectrum.ambiguous),
        f"zeno_estimate_over_{name}": estimates.get("zeno_estimate", np.nan) / unit,
        f"exact_relation_over_{name}": estimates.get("exact_relation", np.nan) / unit,
        f"scale_over_{name}": spectrum.scale / unit
    })
    return [row]


@router.task("evolve")
def evolve_task(config: RunConfig, point: SweepPoint) -> list:
    """Trajectory of cat populations, purity, parity and photon numbers"""
    section = config.evolve
    model = config.build(point)
    unit, name = config.model.unit, config.model.unit_name
    times = log_time_grid(section.start, section.stop, section.per_decade) / unit
    L = liouvillian_for(model, materialize=section.method != "rk45")
    trajectory = evolve(L, initial_state(model, section.initial), times,
                        observables_for(model), section.method)

    base = parameter_columns(config, point, model)
    rows = []
    for record in trajectory.records():
        row = dict(base)
        row[f"t_times_{name}"] = record.pop("t") * unit
        row.update(record)
        row["method"] = trajectory.method
        rows.append(row)
    peak_time, peak = trajectory.peak()
    logger.info(f"✓ evolve point {point.values}: peak c_++={peak:.4f} at t={peak_time * unit:.3e}/{name}")
    return rows


def _slice_spec(config: RunConfig, model) -> SliceSpec:
    section = config.wigner
    pinned = {}
    for key, value in section.pinned.items():
        axis = Axis.parse(key)
        for site in axis.sites:
            pinned[(axis.quadrature, site)] = value
    rotation = ()
    if section.rotated:
        rotation = mode_rotation_note(model.params.phi, model.space.n_modes).angles
    return SliceSpec(model.space.n_modes, tuple(section.axes), pinned, rotation)


def _wigner_state(config: RunConfig, model):
    name = config.wigner.state
    if name in ("cat+", "cat-"):
        phi = model.space.mode_labels[model.phi_index]
        return multimode_cat(model.zeta, model.space, phi, 1 if name == "cat+" else -1)
    if name == "steady":
        return get_solver().steady(model, initial_state(model, config.steady.initial), _kernel_tol(config)).rho
    return initial_state(model, "vacuum")


@router.task("wigner")
def wigner_task(config: RunConfig, point: SweepPoint) -> list:
    """Line or plane slice of the joint Wigner function"""
    section = config.wigner
    model = config.build(point)
    spec = _slice_spec(config, model)
    sampler = wigner_line if len(spec.axes) == 1 else wigner_plane
    phase_slice = sampler(_wigner_state(config, model), spec, section.resolution, section.extent,
                          space=model.space, method=section.method)

    base = parameter_columns(config, point, model)
    base["state"] = section.state
    return [{**base, **row} for row in phase_slice.rows()]


@router.task("conserved")
def conserved_task(config: RunConfig, point: SweepPoint) -> list:
    """Conserved quantities of the cat manifold and the parity defect"""
    model = config.build(point)
    solver = get_solver().kernel_solver(model, _kernel_tol(config))
    L = solver.L
    reference = list(dfs_operators(model.zeta, model.space, model.phi_index).values())
    kernel = steady_kernel(L, reference=reference, solver=solver)
    L_adj = adjoint_for(model, materialize=False)
    conserved = conserved_quantities(L_adj, kernel.align(reference), DFS_LABELS,
                                     solver=solver, space=model.space)

    coefficients = conserved.coefficients(initial_state(model, config.steady.initial))
    parity = parity_ops(model.space, model.phi_index).total
    base = parameter_columns(config, point, model)
    base.update({
        "kernel_dim": kernel.dim,
        "projection_residual": kernel.projection_residual(reference),
        "biorthogonality_defect": conserved.biorthogonality_defect(),
        "parity_defect_over_scale": conserved_defect(L_adj, parity) / solver.scale
    })
    return [
        {**base, "label": label, "c_re": float(c.real), "c_im": float(c.imag)}
        for label, c in zip(conserved.labels, coefficients)
    ]


@router.task("zeno-compare")
def zeno_compare_task(config: RunConfig, point: SweepPoint) -> list:
    """HS distance between the full steady state and rho_d x rho_phi,ss"""
    full = config.build(point)
    zeno_kind = KERR_ZENO if config.model.is_kerr else TWOPHOTON_ZENO
    zeno = build_instance(zeno_kind, full.params, full.space.truncations[full.phi_index])
    comparison = zeno_steady_distance(full, zeno, initial_state(full, config.steady.initial))

    row = parameter_columns(config, point, full)
    row.update({
        "hs_distance": comparison["distance"],
        "c_pp_full": comparison["full"].coefficients.c_pp,
        "c_pp_zeno": comparison["zeno"].coefficients.c_pp
    })
    return [row]


@router.summary("zeno-compare")
def zeno_compare_summary(config: RunConfig, rows: list) -> dict:
    """Log-log slope of the distance over the top decade of gamma"""
    column = f"gamma_over_{config.model.unit_name}"
    gammas = np.array([row[column] for row in rows])
    distances = np.array([row["hs_distance"] for row in rows])
    top = (gammas >= gammas.max() / 10.0) & (distances > 0)
    if np.unique(gammas[top]).size < 2:
        return {}
    slope = loglog_slope(gammas[top], distances[top])
    logger.info(f"✓ Zeno convergence slope {slope:.3f}")
    return {"loglog_slope": slope, "fit_points": int(top.sum())}
