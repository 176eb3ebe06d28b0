"""zoomground - GUI grounding with instruction refinement and conditional zoom-in."""

__version__ = "0.1.0"

from .action_grammar import FormatError, GroundingAction, parse_grounding_output, serialize
from .backends import BackendConfig, HTTPChatBackend, MockBackend, create_backend
from .dataset import Sample, augment_geometry, augment_instruction, load_dataset
from .evaluation import AblationArm, EvalReport, GroundingEvaluator, emit_report, evaluate, run_ablation
from .geometry import ImageSize, PixelBox, PixelPoint
from .pipeline import GroundingPipeline, GroundingResult, PipelineConfig, ground
from .reward import RewardWeights, compute_reward
from .zoom import ZoomConfig, ZoomMode

__all__ = [
    "AblationArm",
    "BackendConfig",
    "EvalReport",
    "FormatError",
    "GroundingAction",
    "GroundingEvaluator",
    "GroundingPipeline",
    "GroundingResult",
    "HTTPChatBackend",
    "ImageSize",
    "MockBackend",
    "PipelineConfig",
    "PixelBox",
    "PixelPoint",
    "RewardWeights",
    "Sample",
    "ZoomConfig",
    "ZoomMode",
    "augment_geometry",
    "augment_instruction",
    "compute_reward",
    "create_backend",
    "emit_report",
    "evaluate",
    "ground",
    "load_dataset",
    "parse_grounding_output",
    "run_ablation",
    "serialize",
]
