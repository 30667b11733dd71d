"""Extraction of polygons, polylines and line segments from rasters as point sequences.

The library covers the vector data model, canonical resampling, synthetic
scenes and their IO, a deterministic feature stub, the structured-query
encoder and interactive decoder (forward pass), shape-constraint matching
and losses, and the evaluation metrics.
"""
from .geometry import (
    BUILDING,
    CENTER_LINE,
    CLASS_TABLE,
    ROAD_BOUNDARY,
    Config,
    PredictedVector,
    Scene,
    StructureKind,
    VectorInstance,
    validate_instance,
)

__version__ = "0.1.0"

__all__ = [
    "BUILDING", "CENTER_LINE", "CLASS_TABLE", "ROAD_BOUNDARY", "Config", "PredictedVector",
    "Scene", "StructureKind", "VectorInstance", "validate_instance",
]
