"""Dump layer activations of a frozen torch model to dataset files."""

from .extract import (
    ExtractError,
    ExtractionSpec,
    InferenceFailure,
    LayerNotFound,
    ModelLoadFailure,
    ShapeMismatch,
    extract,
    list_layers,
    load_model,
)

__version__ = "0.1.0"

__all__ = [
    "ExtractError",
    "ExtractionSpec",
    "InferenceFailure",
    "LayerNotFound",
    "ModelLoadFailure",
    "ShapeMismatch",
    "extract",
    "list_layers",
    "load_model",
]
