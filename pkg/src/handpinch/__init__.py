"""Pinch-capability evaluation of five-finger hand designs from their kinematic chains."""

__version__ = "0.1.0"

from .hand_model import FINGERS, NON_THUMB, CaseId, HandModel, build_case
from .workspace import SampleSet, enumerate_samples, grid
from .align_detector import AlignmentTolerance, DetectionSets, detect_alignment, detect_alignment_no_thumb
from .lateral_detector import SpanGrid, detect_lateral
from .tip_detector import detect_tip
from .pair_index import PairStrategy
from .reporting import DetectionReport, SweepResult, summarize, sweep

__all__ = [
    "FINGERS", "NON_THUMB", "CaseId", "HandModel", "build_case", "SampleSet",
    "enumerate_samples", "grid", "AlignmentTolerance", "DetectionSets", "detect_alignment",
    "detect_alignment_no_thumb", "SpanGrid", "detect_lateral", "detect_tip", "PairStrategy",
    "DetectionReport", "SweepResult", "summarize", "sweep",
]
