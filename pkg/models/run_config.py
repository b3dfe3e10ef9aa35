"""
Run configuration schema and the flat key-value config parser

Grammar (one entry per line):
    # comment
    task = steady
    model.kind = kerr-array
    model.N = 3
    sweep.gamma_over_U = [10, 50, 100, 400]

Keys are dotted paths into the nested schema. Values are Python literals
(numbers, strings, lists, dicts, True/False/None); anything that is not a
literal is taken as a bare string.
"""
import ast
from itertools import product
import logging
import os
from typing import Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from config import settings
from modules.errors import ConfigError
from modules.model import (KERR_ARRAY, KERR_ZENO, MIN_DECAYING_LEVELS, TWOPHOTON_ARRAY,
                           TWOPHOTON_ZENO, KerrArrayParams, Truncations, TwoPhotonArrayParams,
                           build_instance, default_truncations)

logger = logging.getLogger(__name__)

TASKS = ("steady", "gap", "evolve", "wigner", "conserved", "zeno-compare")
SWEEPABLE_RATES = ("gamma", "kappa", "G")


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ModelSection(_Section):
    kind: Literal[KERR_ARRAY, TWOPHOTON_ARRAY, KERR_ZENO, TWOPHOTON_ZENO] = KERR_ARRAY
    N: int = Field(default=3, ge=1)
    G: float = Field(default=1.0, gt=0)
    U: float = Field(default=1.0, gt=0)
    eta: float = Field(default=1.0, gt=0)
    phi: float = 2.0 * np.pi
    gamma: float = Field(default=0.0, ge=0)
    kappa: float = Field(default=0.0, ge=0)

    @property
    def is_kerr(self) -> bool:
        return self.kind in (KERR_ARRAY, KERR_ZENO)

    @property
    def unit_name(self) -> str:
        return "U" if self.is_kerr else "eta"

    @property
    def unit(self) -> float:
        return self.U if self.is_kerr else self.eta


class TruncationSection(_Section):
    m_phi: Optional[int] = Field(default=None, ge=2)
    m_decaying: int = Field(default=settings.DEFAULT_M_DECAYING, ge=MIN_DECAYING_LEVELS)


class SteadySection(_Section):
    initial: Literal["vacuum", "cat+", "cat-"] = "vacuum"


class EvolveSection(_Section):
    stop: float = Field(gt=0)
    start: float = Field(default=settings.TIME_GRID_START, gt=0)
    per_decade: int = Field(default=settings.TIME_POINTS_PER_DECADE, ge=1)
    method: Literal["auto", "eig", "expm", "rk45"] = "auto"
    initial: Literal["vacuum", "cat+", "cat-"] = "vacuum"

    @model_validator(mode="after")
    def check_window(self):
        if self.stop <= self.start:
            raise ValueError(f"evolve.stop ({self.stop}) must exceed evolve.start ({self.start})")
        return self


class GapSection(_Section):
    n_eigs: Optional[int] = Field(default=None, ge=4)
    expected_kernel_dim: Optional[int] = Field(default=None, ge=1)


class WignerSection(_Section):
    axes: List[str]
    state: Literal["cat+", "cat-", "vacuum", "steady"] = "cat+"
    pinned: Dict[str, float] = Field(default_factory=dict)
    resolution: int = Field(default=settings.WIGNER_POINTS, ge=2)
    extent: Optional[float] = Field(default=None, gt=0)
    rotated: bool = False
    method: Literal["auto", "numeric", "analytic"] = "auto"

    @field_validator("axes")
    @classmethod
    def check_axes(cls, value: list):
        if not 1 <= len(value) <= 2:
            raise ValueError("wigner.axes lists 1 or 2 axes such as 'x:1' or 'p:1,2'")
        return value


class OutputSection(_Section):
    path: Optional[str] = None
    format: Literal["csv", "json"] = "csv"


class ToleranceSection(_Section):
    kernel_tol: Optional[float] = Field(default=None, gt=0)


class SweepPoint(BaseModel):
    """One point of the sweep: raw swept values and the parameters they resolve to"""
    values: Dict[str, float]
    params: dict


class RunConfig(_Section):
    task: Literal[TASKS]
    model: ModelSection = ModelSection()
    truncation: TruncationSection = TruncationSection()
    sweep: Dict[str, List[float]] = Field(default_factory=dict)
    steady: SteadySection = SteadySection()
    evolve: Optional[EvolveSection] = None
    gap: GapSection = GapSection()
    wigner: Optional[WignerSection] = None
    output: OutputSection = OutputSection()
    tolerance: ToleranceSection = ToleranceSection()
    jobs: int = Field(default=settings.DEFAULT_JOBS, ge=1)

    @model_validator(mode="after")
    def check_task_requirements(self):
        if self.task == "evolve" and self.evolve is None:
            raise ValueError("task 'evolve' needs a time grid (evolve.stop)")
        if self.task == "wigner" and self.wigner is None:
            raise ValueError("task 'wigner' needs wigner.axes")
        if self.task == "zeno-compare" and self.model.kind not in (KERR_ARRAY, TWOPHOTON_ARRAY):
            raise ValueError("task 'zeno-compare' compares an array model with its Zeno model")
        swept_kappa = self.sweep.get(f"kappa_over_{self.model.unit_name}", [])
        if self.task == "conserved" and (self.model.kappa > 0 or any(k > 0 for k in swept_kappa)):
            raise ValueError("task 'conserved' needs kappa = 0: intrinsic loss leaves a single steady state")
        return self

    @model_validator(mode="after")
    def check_sweep(self):
        for key, values in self.sweep.items():
            if not values:
                raise ValueError(f"sweep.{key} is empty")
            self._sweep_target(key)
        for point in self.sweep_points():
            self.params(point)
        return self

    def _sweep_target(self, key: str) -> tuple:
        """sweep key -> (parameter name, multiplier)"""
        if key == "N":
            return "N", None
        for rate in SWEEPABLE_RATES:
            if key == f"{rate}_over_{self.model.unit_name}":
                return rate, self.model.unit
        raise ValueError(
            f"sweep.{key} is not a sweepable parameter; use N or "
            f"<gamma|kappa|G>_over_{self.model.unit_name} for model '{self.model.kind}'"
        )

    def sweep_points(self) -> list:
        """Cartesian product of the sweep axes in the order they were given"""
        keys = list(self.sweep)
        points = []
        for combination in product(*(self.sweep[k] for k in keys)):
            params = {}
            for key, value in zip(keys, combination):
                name, unit = self._sweep_target(key)
                params[name] = int(value) if unit is None else value * unit
            points.append(SweepPoint(values=dict(zip(keys, combination)), params=params))
        return points

    def params(self, point: SweepPoint = None):
        """Physical parameters at a sweep point"""
        fields = self.model.model_dump()
        fields.update(point.params if point else {})
        kind = fields.pop("kind")
        if kind in (KERR_ARRAY, KERR_ZENO):
            fields.pop("eta")
            params = KerrArrayParams(**fields)
        else:
            fields.pop("U")
            params = TwoPhotonArrayParams(**fields)
        needs_zeno = kind == KERR_ZENO or (self.task == "zeno-compare" and kind == KERR_ARRAY)
        if needs_zeno and (params.gamma <= 0 or params.N < 2):
            raise ValueError("the Kerr Zeno model needs gamma > 0 and N >= 2")
        return params

    def truncations(self) -> Optional[Truncations]:
        if self.truncation.m_phi is None:
            return None
        return Truncations(self.truncation.m_phi, self.truncation.m_decaying)

    def build(self, point: SweepPoint = None, kind: str = None):
        """ModelInstance at a sweep point (optionally of another model kind)"""
        kind = kind or self.model.kind
        params = self.params(point)
        if kind in (KERR_ZENO, TWOPHOTON_ZENO):
            return build_instance(kind, params, self.truncation.m_phi)
        truncations = self.truncations()
        if truncations is None and self.truncation.m_decaying != settings.DEFAULT_M_DECAYING:
            truncations = Truncations(default_truncations(params).m_phi, self.truncation.m_decaying)
        return build_instance(kind, params, truncations)

    def output_path(self) -> str:
        return self.output.path or os.path.join(settings.OUTPUT_DIR, f"{self.task}.{self.output.format}")


def _literal(text: str):
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def parse_flat(text: str) -> dict:
    """
    Parse flat dotted key-value text into a nested dict.

    Raises:
        ConfigError on malformed lines, duplicate keys or key clashes
    """
    nested, seen = {}, set()
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"Line {number}: expected 'key = value'", {f"line {number}": raw})
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"Line {number}: empty key", {f"line {number}": raw})
        if key in seen:
            raise ConfigError(f"Line {number}: duplicate key '{key}'", {key: "duplicate"})
        seen.add(key)

        node = nested
        *sections, leaf = key.split(".")
        for section in sections:
            node = node.setdefault(section, {})
            if not isinstance(node, dict):
                raise ConfigError(f"Line {number}: '{section}' is both a value and a section", {key: "clash"})
        if isinstance(node.get(leaf), dict):
            raise ConfigError(f"Line {number}: '{key}' is both a value and a section", {key: "clash"})
        node[leaf] = _literal(value)
    return nested


def dump_flat(config: RunConfig) -> list:
    """Resolved config as flat 'key = literal' lines that parse back to the same config"""
    lines = []
    for key, value in config.model_dump(exclude_none=True).items():
        if isinstance(value, dict):
            lines.extend(f"{key}.{name} = {item!r}" for name, item in value.items())
        else:
            lines.append(f"{key} = {value!r}")
    return lines


def validate_config(data: dict, overrides: dict = None) -> RunConfig:
    """
    Validate a nested dict, converting pydantic errors into ConfigError.

    Args:
        data: nested mapping from parse_flat
        overrides: dotted keys set from the command line
    """
    data = {key: dict(value) if isinstance(value, dict) else value for key, value in data.items()}
    for key, value in (overrides or {}).items():
        node = data
        *sections, leaf = key.split(".")
        for section in sections:
            node = node.setdefault(section, {})
        node[leaf] = value

    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        fields = {".".join(str(part) for part in error["loc"]) or "config": error["msg"]
                  for error in exc.errors()}
        message = "; ".join(f"{field}: {msg}" for field, msg in fields.items())
        logger.error(f"Invalid run configuration: {message}")
        raise ConfigError(f"Invalid run configuration: {message}", fields) from exc


def load_config(path: str, overrides: dict = None) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as handle:
            text = handle.read()
    except OSError as exc:
        raise ConfigError(f"Cannot read config '{path}': {exc}", {"config": str(exc)}) from exc
    return validate_config(parse_flat(text), overrides)
