from dataclasses import dataclass
from typing import List

import numpy as np

from ..models.data_models import VideoSample
from ..utils.config import TrainConfig
from ..utils.errors import ConfigError


@dataclass
class FrameSelection:
    indices: List[int]
    dense: List[bool]

    def __len__(self) -> int:
        return len(self.indices)


def uniform_indices(length: int, count: int) -> List[int]:
    """Rounded linspace over [0, length - 1] including both ends; everything when length <= count"""
    if length <= 0 or count <= 0:
        return []
    if length <= count:
        return list(range(length))
    return [int(i) for i in np.round(np.linspace(0, length - 1, count))]


def select_frames(num_frames: int, count: int, dense_count: int) -> FrameSelection:
    """Uniform indices; the first `dense_count` of them are the dense frames"""
    indices = uniform_indices(num_frames, count)
    return FrameSelection(indices=indices, dense=[k < dense_count for k in range(len(indices))])


def sample_frames(sample: VideoSample, cfg: TrainConfig, mode: str = "train") -> FrameSelection:
    """Frame indices and dense flags; 10/4 for training and 32/4 for inference by default"""
    if mode == "train":
        return select_frames(sample.num_frames, cfg.frames_train, cfg.dense_train)
    if mode == "infer":
        return select_frames(sample.num_frames, cfg.frames_infer, cfg.dense_infer)
    raise ConfigError(f"Unknown sampling mode {mode}")
