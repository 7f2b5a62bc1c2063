from .hallway import (
    HallwayLayout,
    LayoutInvalid,
    build_layout,
    long_hallway_model,
    model_from_layout,
    modified_start_model,
    validate_layout,
)
from .tiger import TigerParams, tiger_model

__all__ = [
    "HallwayLayout",
    "LayoutInvalid",
    "TigerParams",
    "build_layout",
    "long_hallway_model",
    "model_from_layout",
    "modified_start_model",
    "tiger_model",
    "validate_layout",
]
