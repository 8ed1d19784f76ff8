"""Camera-style depth noise synthesis and depth/trajectory evaluation."""

__version__ = "0.1.0"

from .core import DepthMap, ImageRGB, Intrinsics, ScalarField, derive_rng, load_depth, save_depth
from .gfilter import GuidedFilterParams, RescaleAugmentParams, guided_filter
from .metrics import MetricReport, depth_metrics
from .noise import HoleProbField, NoisePipelineConfig, synthesize

__all__ = [
    "DepthMap", "ImageRGB", "Intrinsics", "ScalarField", "derive_rng", "load_depth", "save_depth",
    "GuidedFilterParams", "RescaleAugmentParams", "guided_filter",
    "MetricReport", "depth_metrics", "HoleProbField", "NoisePipelineConfig", "synthesize",
]
