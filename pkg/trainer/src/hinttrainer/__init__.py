"""hinttrainer: adapter training and serving for hintpipe datasets."""

from .loss import smoothed_ce_loss
from .model import ModelSpec, attach_adapters, backbone_hash, build_backbone
from .train import AdapterConfig, PurityGateError, StudentArtifact, train
from .serve import serve_student

__all__ = [
    "smoothed_ce_loss",
    "ModelSpec",
    "build_backbone",
    "attach_adapters",
    "backbone_hash",
    "AdapterConfig",
    "StudentArtifact",
    "PurityGateError",
    "train",
    "serve_student",
]

__version__ = "0.1.0"
