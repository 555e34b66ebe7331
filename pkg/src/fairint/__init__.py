"""Fair tabular classification by detecting and repairing biased feature interactions."""

from .data import (
    Dataset,
    FeatureColumn,
    load_csv,
    load_schema,
    save_csv,
    save_schema,
    split,
    synth_generate,
)
from .errors import (
    ConfigError,
    DataError,
    FairIntError,
    MetricError,
    TrainingError,
    UsageError,
)
from .metrics import FairnessReport, auc_roc, delta_dp, delta_eo, evaluate
from .model import FairIntModel, ModelConfig, VanillaModel, load_model, save_model
from .probe import sensitive_probe
from .training import TrainConfig, evaluate_model, sweep, train

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "FeatureColumn",
    "load_csv",
    "load_schema",
    "save_csv",
    "save_schema",
    "split",
    "synth_generate",
    "ConfigError",
    "DataError",
    "FairIntError",
    "MetricError",
    "TrainingError",
    "UsageError",
    "FairnessReport",
    "auc_roc",
    "delta_dp",
    "delta_eo",
    "evaluate",
    "FairIntModel",
    "ModelConfig",
    "VanillaModel",
    "load_model",
    "save_model",
    "sensitive_probe",
    "TrainConfig",
    "evaluate_model",
    "sweep",
    "train",
    "__version__",
]
