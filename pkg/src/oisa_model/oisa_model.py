import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import torch
import torch.nn as nn

from ..core_lm.core_lm import CoreLM, Generation, LMOutput, SegQuery, answer_text
from ..core_lm.tokenizer import WordTokenizer
from ..encoders.encoders import OmniEncoders, TokenBlock
from ..manifest_store.manifest_store import pcm_to_float
from ..mask_head.mask_head import FeaturePyramid, MaskDecoder
from ..models.data_models import Expression, VideoSample
from ..sequence_assembly.sequence_assembly import AssembledPrompt, PromptAssembler
from ..utils.config import Config, ConfigManager
from ..utils.errors import CheckpointVersionError, CompositionError
from ..utils.reproducibility import seeded_init

CHECKPOINT_FORMAT_VERSION = 1
# config sections that determine parameter shapes
ARCHITECTURE_SECTIONS = ("encoder", "lm", "mask_head")


@dataclass
class ContentEncoding:
    """Encoded sampled frames of one video; reused across its expressions"""
    vision: List[TokenBlock]
    audio: TokenBlock
    content: AssembledPrompt
    pyramids: List[FeaturePyramid]
    frame_indices: List[int]


@dataclass
class ExpressionOutput:
    lm: LMOutput
    prompt: AssembledPrompt
    seg_queries: List[SegQuery] = field(default_factory=list)


def frame_tensor(frame: np.ndarray, like: torch.Tensor) -> torch.Tensor:
    """(H, W, 3) uint8 frame -> (3, H, W) in [0, 1] with the dtype and device of `like`"""
    return torch.from_numpy(np.ascontiguousarray(frame)).permute(2, 0, 1).to(like) / 255.0


class OISAModel(nn.Module):
    """Encoders, prompt assembler, causal LM and mask decoder behind one interface"""

    def __init__(self, config: Config, tokenizer: Optional[WordTokenizer] = None):
        super().__init__()
        self.config = config
        self.tokenizer = tokenizer or WordTokenizer()
        self.logger = logging.getLogger(__name__)
        with seeded_init(config.encoder.init_seed):
            self.encoders = OmniEncoders(config.encoder)
        with seeded_init(config.lm.init_seed):
            self.lm = CoreLM(config.lm, self.tokenizer)
            self.assembler = PromptAssembler(config.assembly, config.lm.d, config.lm.n_heads,
                                             self.tokenizer, self.lm.embed_ids)
            self.mask_decoder = MaskDecoder(config.mask_head, config.encoder.d, config.lm.query_dim)

    @property
    def layout(self) -> str:
        return self.config.assembly.layout

    def answer_ids(self, expression: Expression) -> List[int]:
        return self.tokenizer.encode(answer_text(expression)) + [self.tokenizer.eos_id]

    def encode_content(self, sample: VideoSample, frame_indices: List[int],
                       dense: Optional[List[bool]] = None, layout: Optional[str] = None) -> ContentEncoding:
        """Encode the sampled frames and the full audio track of a sample"""
        if not frame_indices:
            raise CompositionError(f"{sample.sample_id}: no frames sampled")
        try:
            frames = [sample.media[sample.frames[i]] for i in frame_indices]
            audio = sample.media[sample.audio]
        except KeyError as e:
            raise CompositionError(f"{sample.sample_id}: media {e} not loaded") from e

        vision = self.encoders.encode_frames(frames)
        for block, index in zip(vision, frame_indices):
            block.frame_index = index
        audio_block = self.encoders.encode_audio(pcm_to_float(audio))
        content = self.assembler.interleave_av(vision, audio_block, layout or self.layout, dense)
        size = (sample.height, sample.width)
        pyramids = [self.mask_decoder.build_pyramid(block.tokens, size, frame_tensor(frame, block.tokens))
                    for block, frame in zip(vision, frames)]
        return ContentEncoding(vision=vision, audio=audio_block, content=content, pyramids=pyramids,
                               frame_indices=list(frame_indices))

    def build_prompt(self, sample: VideoSample, expression: Expression, encoding: ContentEncoding,
                     with_answer: bool = False) -> AssembledPrompt:
        segment = self.assembler.compose_expression(expression, sample.media, self.encoders)
        answer = self.answer_ids(expression) if with_answer else None
        return self.assembler.build_prompt(encoding.content, segment, answer, context=self.config.lm.context)

    def forward_expression(self, sample: VideoSample, expression: Expression,
                           encoding: ContentEncoding) -> ExpressionOutput:
        """Gold-answer pass; SegQueries come from the [SEG] positions of the gold answer"""
        prompt = self.build_prompt(sample, expression, encoding, with_answer=True)
        out = self.lm.lm_forward(prompt)
        queries = self.lm.seg_queries(out.hidden, prompt.token_ids, start=prompt.answer_start)
        return ExpressionOutput(lm=out, prompt=prompt, seg_queries=queries)

    def segment(self, queries: List[SegQuery], encoding: ContentEncoding, regime: str) -> List[List[torch.Tensor]]:
        """Mask logits per query per sampled frame"""
        return [self.mask_decoder.segment_sequence(q, encoding.pyramids, regime) for q in queries]

    @torch.no_grad()
    def predict(self, sample: VideoSample, expression: Expression, encoding: ContentEncoding,
                regime: str) -> Tuple[Generation, List[np.ndarray]]:
        """Generate the answer and union the masks of every emitted [SEG] on each sampled frame"""
        prompt = self.build_prompt(sample, expression, encoding)
        generation = self.lm.generate(prompt)
        union = [np.zeros((sample.height, sample.width), dtype=np.uint8) for _ in encoding.frame_indices]
        for per_frame in self.segment(generation.seg_queries, encoding, regime):
            for k, logits in enumerate(per_frame):
                union[k] |= self.mask_decoder.binarize(logits).cpu().numpy().astype(np.uint8)
        return generation, union

    # ---- parameter groups ----

    def audio_projection_parameters(self) -> Dict[str, nn.Parameter]:
        return {f"encoders.audio.projection.{n}": p for n, p in self.encoders.audio.projection.named_parameters()}


def save_checkpoint(model: OISAModel, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save({
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config": model.config.to_dict(),
        "state_dict": model.state_dict(),
        "vocabulary": model.tokenizer.id_to_token,
    }, path)
    logging.getLogger(__name__).info(f"Saved checkpoint to {path}")
    return path


def load_checkpoint(path: Path, config: Optional[Config] = None) -> OISAModel:
    """Rebuild a model from a checkpoint; `config` overrides non-architecture settings"""
    path = Path(path)
    if not path.exists():
        raise CheckpointVersionError(f"checkpoint not found: {path}")
    payload = torch.load(path, map_location="cpu", weights_only=False)
    version = payload.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointVersionError(f"{path}: checkpoint format {version}, expected {CHECKPOINT_FORMAT_VERSION}")

    stored = ConfigManager.from_dict(payload["config"])
    if config is not None:
        for section in ARCHITECTURE_SECTIONS:
            if getattr(config, section) != getattr(stored, section):
                raise CheckpointVersionError(f"{path}: '{section}' config differs from the checkpoint's")
        stored = config

    model = OISAModel(stored, WordTokenizer(payload["vocabulary"]))
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model
