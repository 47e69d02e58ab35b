import logging
from typing import List, Optional, Tuple

import numpy as np
from tqdm import tqdm

from ..core_lm.tokenizer import WordTokenizer
from ..models.data_models import Manifest, VideoSample
from ..models.scene_models import SceneSpec
from ..utils.config import SynthConfig
from ..utils.errors import DataError
from .expression_builder import ExpressionBuilder
from .scene_generator import SceneGenerator
from .speech_codec import ToneCodec

SPLITS = ("train", "test")


def derive_seed(seed: int, index: int) -> int:
    """Independent per-sample seed; sample k is the same whatever num_samples is"""
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


class DatasetSynthesizer:
    """Builds whole synthetic manifests: scenes, ground truth and expressions"""

    def __init__(self, config: SynthConfig, tokenizer: Optional[WordTokenizer] = None):
        self.config = config
        self.tokenizer = tokenizer or WordTokenizer()
        self.codec = ToneCodec(self.tokenizer, sample_rate=config.sample_rate,
                               symbol_samples=config.speech_symbol_samples)
        self.scene_generator = SceneGenerator(config)
        self.expression_builder = ExpressionBuilder(config, self.scene_generator, self.codec)
        self.logger = logging.getLogger(__name__)

    def synthesize_sample(self, index: int, seed: int, preset: Optional[str] = None,
                          prefix: str = "s") -> Tuple[VideoSample, SceneSpec]:
        sample_seed = derive_seed(seed, index)
        spec = self.scene_generator.random_scene_spec(f"{prefix}{index:05d}", sample_seed, preset)
        sample = self.scene_generator.generate_scene(spec)
        sample.expressions = self.expression_builder.derive_expressions(
            sample, spec, self.config.expression_budget, np.random.default_rng(sample_seed + 1))
        return sample, spec

    def synthesize(self, num_samples: int, seed: int, split: str = "train",
                   preset: Optional[str] = None) -> Manifest:
        """Generate num_samples scenes; deterministic in (seed, config)"""
        if split not in SPLITS:
            raise DataError(f"Unknown split {split}")
        if num_samples < 1:
            raise DataError("num_samples must be at least 1")

        preset = preset or self.config.preset
        samples = []
        for index in tqdm(range(num_samples), desc=f"Synthesizing {split}", disable=num_samples < 8):
            sample, _ = self.synthesize_sample(index, seed, preset)
            samples.append(sample)

        manifest = Manifest(samples=samples, split=split)
        n_expr = sum(len(s.expressions) for s in samples)
        self.logger.info(f"Synthesized {num_samples} {preset} samples with {n_expr} expressions (seed {seed})")
        return manifest

    def alignment_pairs(self, num_pairs: int, seed: int) -> List[Tuple[np.ndarray, str]]:
        """Tone-code speech and its transcript, for the audio-text alignment stage"""
        rng = np.random.default_rng(seed)
        pairs: List[Tuple[np.ndarray, str]] = []
        index = 0
        while len(pairs) < num_pairs:
            spec = self.scene_generator.random_scene_spec(f"align{index:05d}", derive_seed(seed, index), "random")
            texts = self.expression_builder.referring_texts(spec)
            text = texts[int(rng.integers(len(texts)))]
            pairs.append((self.codec.synth_speech(text), text))
            index += 1
        return pairs
