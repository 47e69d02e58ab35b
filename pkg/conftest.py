"""
Shared fixtures: a small configuration that keeps every model fast on CPU,
and a tiny synthetic dataset built from it.
"""

import copy
import sys
from pathlib import Path

import pytest

# Add src directory to path
sys.path.insert(0, str(Path(__file__).parent / "src"))

from src.core_lm.tokenizer import WordTokenizer
from src.synth_service.dataset_synthesizer import DatasetSynthesizer
from src.utils.config import ConfigManager

SMALL_CONFIG = {
    "logging": {"level": "WARNING", "file": None},
    "synth": {
        "height": 32, "width": 32,
        "min_duration": 2.0, "max_duration": 2.0,
        "fps_min": 3, "fps_max": 3,
        "min_sprites": 2, "max_sprites": 3,
        "sprite_size_min": 3, "sprite_size_max": 5,
        "expression_budget": 8,
        "payload_seconds": 0.5,
    },
    "encoder": {"height": 32, "width": 32, "d": 32, "n_heads": 4, "n_layers": 1},
    "lm": {"d": 32, "n_heads": 4, "n_layers": 1, "max_new_tokens": 8},
    "mask_head": {"channels": 32, "n_heads": 4, "ffn_dim": 64},
    "assembly": {"layout": "AVI_CONCAT"},
    "train": {"steps": 2, "batch_size": 2, "frames_infer": 8, "log_every": 1, "align_pairs": 4},
}


@pytest.fixture
def config_dict():
    return copy.deepcopy(SMALL_CONFIG)


@pytest.fixture
def config(config_dict):
    return ConfigManager.from_dict(config_dict)


@pytest.fixture
def tokenizer():
    return WordTokenizer()


@pytest.fixture
def synthesizer(config, tokenizer):
    return DatasetSynthesizer(config.synth, tokenizer)


@pytest.fixture
def tiny_manifest(synthesizer):
    """Two random scenes with in-memory media"""
    return synthesizer.synthesize(2, seed=0, split="train")
