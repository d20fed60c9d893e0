from .capture import CaptureConfig, capture, capture_model, list_images
from .errors import (
    EmptyDataDirectory,
    ExportError,
    ModelNotFound,
    ShapeDrift,
)
from .formats import write_descriptor, write_dump

__version__ = "0.1.0"

__all__ = [
    "CaptureConfig",
    "EmptyDataDirectory",
    "ExportError",
    "ModelNotFound",
    "ShapeDrift",
    "capture",
    "capture_model",
    "list_images",
    "write_descriptor",
    "write_dump",
]
