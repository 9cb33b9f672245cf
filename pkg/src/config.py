"""Process-level defaults loaded from environment variables.

Pipeline settings (corpus sizes, model shapes, schedules) live in the INI
pipeline config parsed by src/state/settings.py. This module only holds the
knobs that belong to the process running the pipeline.
It imports NOTHING from src/ — only stdlib os.
"""

import os

# --- Logging ---
LOG_LEVEL: str = os.environ.get("HYBRIDLAB_LOG_LEVEL", "INFO")
LOG_FORMAT: str = os.environ.get("HYBRIDLAB_LOG_FORMAT", "%(asctime)s %(name)s %(levelname)s %(message)s")

# --- Workspace ---
WORK_DIR: str = os.environ.get("HYBRIDLAB_WORK_DIR", "work")
JOBS: int = int(os.environ.get("HYBRIDLAB_JOBS", "1"))

# --- Numerics ---
# float64 keeps gradient checks meaningful; float32 is allowed for training speed.
DTYPE: str = os.environ.get("HYBRIDLAB_DTYPE", "float64")

# --- Reproducibility ---
# When set, report timestamps are derived from it and elapsed-time columns read 0.0,
# so two full runs produce byte-identical reports.
SOURCE_DATE_EPOCH: str = os.environ.get("SOURCE_DATE_EPOCH", "")

# --- Experiments ---
RUN_EXPERIMENTS: bool = os.environ.get("HYBRIDLAB_RUN_EXPERIMENTS", "0").lower() in {"1", "true", "yes"}
