"""mistakelab: stepwise CoT trace generation, mistake location, backtracking
correction, annotation tooling, and scoring."""

__version__ = "0.1.0"

from .model import (  # noqa: F401
    NO_MISTAKE,
    CorrectnessLabels,
    MistakeLocation,
    TaskKind,
    Trace,
    dataset_stats,
    load_dataset,
    sample_split,
    save_dataset,
)
