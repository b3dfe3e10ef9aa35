"""
Batch front end: task handlers, result writers and the CLI
"""
from .cli import main, run

__all__ = ["main", "run"]
