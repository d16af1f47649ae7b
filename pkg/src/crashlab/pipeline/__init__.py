"""End-to-end run orchestration: config, stages, report and CLI."""

from .config import DEFAULTS, RunConfig
from .stages import STAGES, run_pipeline, run_stage, write_manifest

__all__ = ["DEFAULTS", "RunConfig", "STAGES", "run_pipeline", "run_stage", "write_manifest"]
