"""
Result Writers
CSV and JSON tables with a metadata header, plus the diagnostics file
written when a run fails numerically
"""
import json
import logging
from pathlib import Path

import numpy as np
import pandas as pd

from config import settings
from models.run_config import RunConfig, dump_flat

logger = logging.getLogger(__name__)

TOLERANCE_KEYS = (
    "HERMITICITY_TOL", "TRACE_TOL", "POSITIVITY_TOL", "LEAKAGE_WARN", "DARK_STATE_TOL",
    "KERNEL_TOL_REL", "KERNEL_EXTEND_REL", "DENSE_LIOUVILLE_MAX", "EIG_CONDITION_MAX",
    "RK_RTOL", "RK_ATOL", "TRACE_DRIFT_TOL"
)


def _jsonable(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (complex, np.complexfloating)):
        return {"re": float(value.real), "im": float(value.imag)}
    if isinstance(value, np.ndarray):
        return value.tolist()
    return str(value)


def metadata(config: RunConfig, summary: dict = None) -> dict:
    """Resolved config, tolerances and library version"""
    return {
        "library": settings.APP_NAME,
        "version": settings.VERSION,
        "config": dump_flat(config),
        "tolerances": {key: getattr(settings, key) for key in TOLERANCE_KEYS},
        "summary": summary or {}
    }


def _header_lines(meta: dict) -> list:
    lines = [f"# {meta['library']} {meta['version']}"]
    lines += [f"# config: {line}" for line in meta["config"]]
    lines += [f"# tolerance: {key} = {value!r}" for key, value in meta["tolerances"].items()]
    lines += [f"# summary: {key} = {value!r}" for key, value in meta["summary"].items()]
    return lines


def write_csv(path: str, rows: list, meta: dict) -> Path:
    """Metadata as '#' comment lines, then the table in full-precision scientific notation"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(rows)
    with path.open("w", encoding="utf-8", newline="") as handle:
        handle.write("\n".join(_header_lines(meta)) + "\n")
        frame.to_csv(handle, index=False, float_format=f"%{settings.FLOAT_FORMAT}",
                     na_rep="nan", lineterminator="\n")
    logger.info(f"✓ Wrote {len(rows)} rows to {path}")
    return path


def write_json(path: str, rows: list, meta: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        json.dump({"metadata": meta, "rows": rows}, handle, indent=2, default=_jsonable)
        handle.write("\n")
    logger.info(f"✓ Wrote {len(rows)} rows to {path}")
    return path


def write_table(config: RunConfig, path: str, rows: list, summary: dict = None) -> Path:
    meta = metadata(config, summary)
    if config.output.format == "json":
        return write_json(path, rows, meta)
    return write_csv(path, rows, meta)


def diagnostics_path(output_path: str) -> Path:
    path = Path(output_path)
    return path.with_name(path.stem + ".diagnostics.json")


def write_diagnostics(output_path: str, error: Exception, config: RunConfig = None) -> Path:
    """Error class, message and the numerical diagnostics attached to the exception"""
    details = {}
    for attribute in ("diagnostics", "report", "fields"):
        details.update(getattr(error, attribute, None) or {})
    payload = {
        "error": error.__class__.__name__,
        "message": str(error),
        "diagnostics": details,
        "config": dump_flat(config) if config is not None else None
    }
    path = diagnostics_path(output_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2, default=_jsonable)
        handle.write("\n")
    logger.error(f"Diagnostics written to {path}")
    return path
