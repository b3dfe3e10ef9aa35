"""
Run configuration models package
"""
from .run_config import RunConfig, SweepPoint, dump_flat, load_config, parse_flat, validate_config

__all__ = ["RunConfig", "SweepPoint", "dump_flat", "load_config", "parse_flat", "validate_config"]
