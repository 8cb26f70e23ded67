"""Uniform temporal sampling.

Frame i of T comes from source index floor((i + 0.5) * N / T): the center
of the i-th of T equal spans. No jitter on purpose; probing experiments
need the same frames on every run. Clips shorter than T repeat frames.
"""

import math

from .errors import SpecError


def sample_indices(num_source_frames: int, num_samples: int) -> list[int]:
    if num_samples < 1:
        raise SpecError(f"need at least 1 frame, got {num_samples}")
    if num_source_frames < 1:
        raise SpecError(f"need a non-empty clip, got {num_source_frames} frames")
    n, t = num_source_frames, num_samples
    return [min(math.floor((i + 0.5) * n / t), n - 1) for i in range(t)]
