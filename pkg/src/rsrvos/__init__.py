"""Online referring video object segmentation for small targets in
remote-sensing sequences: motion-consistency calibration of the initial mask,
a decoupled attention memory, evaluation metrics and benchmark tooling."""
from .config import AppConfig, load_config
from .memory import MemoryBank, MemoryConfig
from .metrics import EvalReport, evaluate
from .pipeline import PipelineConfig, SequenceRecord, segment_sequence
from .synth import SynthConfig, generate, scenario_suite
from .tmcc import CalibrationConfig, calibrate

__version__ = "0.1.0"

__all__ = [
    "AppConfig",
    "CalibrationConfig",
    "EvalReport",
    "MemoryBank",
    "MemoryConfig",
    "PipelineConfig",
    "SequenceRecord",
    "SynthConfig",
    "calibrate",
    "evaluate",
    "generate",
    "load_config",
    "scenario_suite",
    "segment_sequence",
]
