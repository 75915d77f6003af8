"""Command pipeline: run manifests, reports and the run orchestrator."""

__version__ = "0.3.0"
