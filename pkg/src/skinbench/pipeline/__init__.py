"""Batch orchestration: manifests, the run loop, reports, and fixtures."""

from skinbench.pipeline.config import RunConfig
from skinbench.pipeline.manifest import Manifest, ManifestRow, load_manifest
from skinbench.pipeline.runner import RunLedger, run

__all__ = [
    "Manifest",
    "ManifestRow",
    "RunConfig",
    "RunLedger",
    "load_manifest",
    "run",
]
