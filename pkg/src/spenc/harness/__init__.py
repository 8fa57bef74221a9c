"""Verification harness: experiment runners, config, CSV output, CLI."""

from .config import COMMANDS, ExperimentConfig, UsageError, build_config, parse_config_file
from .csvio import read_matrix, read_table, write_matrix, write_table

__all__ = [
    "COMMANDS",
    "ExperimentConfig",
    "UsageError",
    "build_config",
    "parse_config_file",
    "read_matrix",
    "read_table",
    "write_matrix",
    "write_table",
]
