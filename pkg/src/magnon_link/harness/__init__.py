"""Configuration, experiment orchestration and diagnostics behind the ``magnon-link`` CLI."""

from .config import ConfigError, RunConfig, parse_config
from .runner import run_check, run_single, run_sweep

__all__ = ["ConfigError", "RunConfig", "parse_config", "run_check", "run_single", "run_sweep"]
