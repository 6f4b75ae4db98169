"""Progressive fine-tuning harness for staged preprocessing runs."""

from .evaluate import bleu, evaluate, exact_match
from .manifests import StageSpec, load_manifests, read_stage_records, read_test_records
from .model import ModelConfig, TinyByteLM, build_model, load_model, save_model
from .training import TrainingConfig, TrainResult, run_progressive

__version__ = "0.1.0"

__all__ = [
    "ModelConfig",
    "StageSpec",
    "TinyByteLM",
    "TrainResult",
    "TrainingConfig",
    "bleu",
    "build_model",
    "evaluate",
    "exact_match",
    "load_manifests",
    "load_model",
    "read_stage_records",
    "read_test_records",
    "run_progressive",
    "save_model",
]
