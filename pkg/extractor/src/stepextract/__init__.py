"""Export frozen vision-transformer features for video clips.

The package decodes clips (video files or frame directories), samples T
frames uniformly, runs them through a frozen ViT backbone, and writes one
binary feature container per clip plus a dataset manifest and a sidecar
metadata file describing the exact preprocessing. The backbone is never
trained here; it ships with deterministic seeded weights for pipeline
testing and loads user-provided state dicts for real extractions.
"""

from .backbone import BACKBONES, build_backbone
from .extract import ExtractReport, ExtractSpec, extract
from .sampling import sample_indices

__all__ = [
    "BACKBONES",
    "ExtractReport",
    "ExtractSpec",
    "build_backbone",
    "extract",
    "sample_indices",
]
