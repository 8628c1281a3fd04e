"""
MarginLab - Semi-supervised pseudo-labeling lab (MarginMatch and baselines)
"""

__version__ = "1.0.0"

from .errors import MarginLabError, ConfigurationError, LedgerError, TrainingAborted
from .types import Split, Method, Measure, Combine, BatchPlan, MaskDecision, EpochMetrics
from .config import TrainConfig, RunSpec, load_run_spec
