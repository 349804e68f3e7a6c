"""Multi-view 2D mask fusion into 3D instance segments."""
from .config import PipelineConfig
from .kernels import BACKEND
from .pipeline import PipelineResult, StageError, run
from .scene import (RLE, CameraIntrinsics, CameraPose, Frame, Mask2D, PointCloud, SceneBundle, ValidationError,
                    validate_scene)

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "RLE", "CameraIntrinsics", "CameraPose", "Frame", "Mask2D", "PipelineConfig", "PipelineResult",
    "PointCloud", "SceneBundle", "StageError", "ValidationError", "run", "validate_scene",
]
