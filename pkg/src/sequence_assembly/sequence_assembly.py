"""
Multimodal prompt assembly: audio-visual content layouts, omnimodal
expression composition and the final instruction template.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from ..core_lm.tokenizer import WordTokenizer
from ..encoders.encoders import OmniEncoders, TokenBlock
from ..manifest_store.manifest_store import pcm_to_float
from ..models.data_models import Expression
from ..models.vocabulary import SOUND, IMAGE
from ..utils.config import AssemblyConfig
from ..utils.errors import CompositionError, ContextOverflowError

LAYOUTS = ("AVI", "AVI_CONCAT", "CONCAT", "WEIGHTED_SUM", "ATTENTION")
TAGS = ("vision", "audio", "text", "image_payload", "sound_payload", "speech_payload", "special")
TAG_IDS: Dict[str, int] = {tag: i for i, tag in enumerate(TAGS)}
EMBEDDED = -1  # token_ids entry for positions carrying encoder tokens


def clip_lengths(L_A: int, N: int) -> List[int]:
    """Split L_A audio tokens into N contiguous clips; the last L_A mod N clips get one extra"""
    base, remainder = divmod(L_A, N)
    return [base] * (N - remainder) + [base + 1] * remainder


def content_tag_pattern(vision_lengths: Sequence[int], L_A: int, layout: str,
                        separator: bool = False) -> List[str]:
    """Closed-form segment map of the content region for a layout"""
    N = len(vision_lengths)
    head = ["special"] if separator else []
    tags: List[str] = []
    if layout in ("AVI", "AVI_CONCAT"):
        for L_v, L_a in zip(vision_lengths, clip_lengths(L_A, N)):
            tags += head + ["vision"] * L_v + ["audio"] * L_a
        if layout == "AVI_CONCAT":
            tags += ["audio"] * L_A
    elif layout == "CONCAT":
        for L_v in vision_lengths:
            tags += head + ["vision"] * L_v
        tags += ["audio"] * L_A
    elif layout in ("WEIGHTED_SUM", "ATTENTION"):
        for L_v in vision_lengths:
            tags += head + ["vision"] * L_v
    else:
        raise CompositionError(f"Unknown layout {layout}")
    return tags


@dataclass
class AssembledPrompt:
    """An L x d token matrix with per-position modality tags"""
    tokens: torch.Tensor
    segment_map: List[str]
    layout: str
    N: int
    L_a: int
    L_A: int = 0
    frame_index: List[Optional[int]] = field(default_factory=list)
    token_ids: List[int] = field(default_factory=list)
    answer_start: Optional[int] = None

    def __len__(self) -> int:
        return int(self.tokens.shape[0])

    def tag_ids(self) -> torch.Tensor:
        return torch.tensor([TAG_IDS[t] for t in self.segment_map], dtype=torch.long, device=self.tokens.device)

    def dump(self) -> str:
        """One line per token: index, tag, frame index"""
        lines = []
        for i, (tag, frame) in enumerate(zip(self.segment_map, self.frame_index)):
            lines.append(f"{i}\t{tag}\t{'' if frame is None else frame}")
        return "\n".join(lines) + "\n"


@dataclass
class ExpressionSegment:
    tokens: torch.Tensor
    segment_map: List[str]
    token_ids: List[int]

    def __len__(self) -> int:
        return int(self.tokens.shape[0])


def _cat(parts: List[torch.Tensor], like: torch.Tensor) -> torch.Tensor:
    parts = [p for p in parts if p.shape[0] > 0]
    if not parts:
        return like.new_zeros((0, like.shape[-1]))
    return torch.cat(parts, dim=0)


class PromptAssembler(nn.Module):
    """
    Builds prompts of the form [BOS] system content expression answer.

    Text positions are embedded with the language model's token table (passed
    in as `embed_ids`), so every prompt is a plain L x d matrix. The module owns
    the parameters of the WEIGHTED_SUM and ATTENTION fusion baselines.
    """

    def __init__(self, cfg: AssemblyConfig, d: int, n_heads: int, tokenizer: WordTokenizer,
                 embed_ids: Callable[[List[int]], torch.Tensor]):
        super().__init__()
        self.cfg = cfg
        self.tokenizer = tokenizer
        self.embed_ids = embed_ids
        self.mix_logit = nn.Parameter(torch.zeros(()))
        self.cross_attn = nn.MultiheadAttention(d, n_heads, dropout=0.0, batch_first=True)
        self.cross_norm = nn.LayerNorm(d)
        self.logger = logging.getLogger(__name__)

    # ---- content ----

    def pool_sparse(self, block: TokenBlock) -> TokenBlock:
        """Average-pool a frame's token grid so it keeps L_v / sparse_pool tokens"""
        factor = math.isqrt(self.cfg.sparse_pool)
        if factor <= 1:
            return block
        L, d = block.tokens.shape
        grid = math.isqrt(L)
        if grid * grid != L or grid % factor:
            raise CompositionError(f"cannot pool a {L}-token frame by {self.cfg.sparse_pool}")
        maps = block.tokens.t().reshape(1, d, grid, grid)
        pooled = F.avg_pool2d(maps, factor).flatten(2).squeeze(0).t()
        return replace(block, tokens=pooled)

    def interleave_av(self, V: List[TokenBlock], A: TokenBlock, layout: Optional[str] = None,
                      dense: Optional[List[bool]] = None) -> AssembledPrompt:
        """Lay out N vision blocks and one audio block as content tokens"""
        layout = layout or self.cfg.layout
        N = len(V)
        if N < 1:
            raise CompositionError("no frames to assemble")
        if layout not in LAYOUTS:
            raise CompositionError(f"Unknown layout {layout}")
        if dense is not None:
            V = [block if is_dense else self.pool_sparse(block) for block, is_dense in zip(V, dense)]

        audio = A.tokens
        L_A = audio.shape[0]
        if layout in ("AVI", "AVI_CONCAT") and L_A < N:
            raise CompositionError(f"audio shorter than one token per frame (L_A={L_A}, N={N})")

        if layout == "WEIGHTED_SUM":
            V = self._weighted_sum(V, audio)
        elif layout == "ATTENTION":
            V = self._attend(V, audio)

        separator = self.embed_ids([self.tokenizer.frame_id]) if self.cfg.frame_separator else None
        parts: List[torch.Tensor] = []
        frames: List[Optional[int]] = []
        ids: List[int] = []

        def emit_frame(block: TokenBlock):
            if separator is not None:
                parts.append(separator)
                frames.append(block.frame_index)
                ids.append(self.tokenizer.frame_id)
            parts.append(block.tokens)
            frames.extend([block.frame_index] * len(block))
            ids.extend([EMBEDDED] * len(block))

        def emit_audio(tokens: torch.Tensor, frame: Optional[int]):
            parts.append(tokens)
            frames.extend([frame] * tokens.shape[0])
            ids.extend([EMBEDDED] * tokens.shape[0])

        lengths = clip_lengths(L_A, N)
        L_a = L_A // N
        if layout in ("AVI", "AVI_CONCAT"):
            start = 0
            for i, block in enumerate(V):
                emit_frame(block)
                emit_audio(audio[start:start + lengths[i]], block.frame_index)
                start += lengths[i]
            if layout == "AVI_CONCAT":
                emit_audio(audio, None)
        else:
            for block in V:
                emit_frame(block)
            if layout == "CONCAT":
                emit_audio(audio, None)

        tags = content_tag_pattern([len(b) for b in V], L_A, layout, separator=separator is not None)
        return AssembledPrompt(tokens=_cat(parts, V[0].tokens), segment_map=tags, layout=layout, N=N,
                               L_a=L_a, L_A=L_A, frame_index=frames, token_ids=ids)

    def _weighted_sum(self, V: List[TokenBlock], audio: torch.Tensor) -> List[TokenBlock]:
        """Pad audio (repeating its last token) to the vision length and mix with a learned weight"""
        total = sum(len(b) for b in V)
        if audio.shape[0] == 0:
            padded = V[0].tokens.new_zeros((total, V[0].tokens.shape[1]))
        elif audio.shape[0] >= total:
            padded = audio[:total]
        else:
            padded = torch.cat([audio, audio[-1:].expand(total - audio.shape[0], -1)], dim=0)
        weight = torch.sigmoid(self.mix_logit)
        fused, start = [], 0
        for block in V:
            chunk = padded[start:start + len(block)]
            fused.append(replace(block, tokens=(1 - weight) * block.tokens + weight * chunk))
            start += len(block)
        return fused

    def _attend(self, V: List[TokenBlock], audio: torch.Tensor) -> List[TokenBlock]:
        """
        Cross-attention fusion: vision tokens are the queries, the audio tokens
        the keys and values. Residual plus LayerNorm; lengths are unchanged.
        """
        if audio.shape[0] == 0:
            return V
        vision = torch.cat([b.tokens for b in V], dim=0).unsqueeze(0)
        attended, _ = self.cross_attn(query=vision, key=audio.unsqueeze(0), value=audio.unsqueeze(0))
        fused = self.cross_norm(vision + attended).squeeze(0)
        out, start = [], 0
        for block in V:
            out.append(replace(block, tokens=fused[start:start + len(block)]))
            start += len(block)
        return out

    # ---- expression ----

    def compose_expression(self, expr: Expression, media: Dict[str, np.ndarray],
                           encoders: OmniEncoders) -> ExpressionSegment:
        """Tokenize the expression and splice encoded payloads in at their placeholders"""
        parts: List[torch.Tensor] = []
        tags: List[str] = []
        ids: List[int] = []

        def payload(ref: Optional[str], kind: str) -> TokenBlock:
            if ref is None:
                raise CompositionError(f"{expr.expression_id}: placeholder for {kind} but no {kind} payload")
            if ref not in media:
                raise CompositionError(f"{expr.expression_id}: {kind} payload {ref} is not loaded")
            if kind == "image":
                return encoders.encode_image_payload(media[ref])
            block = encoders.encode_audio(pcm_to_float(media[ref]), modality=f"{kind}_payload")
            if block.empty:
                raise CompositionError(f"{expr.expression_id}: {kind} payload is empty")
            return block

        def emit(block: TokenBlock):
            parts.append(block.tokens)
            tags.extend([block.modality] * len(block))
            ids.extend([EMBEDDED] * len(block))

        used = set()
        if expr.speech_payload is not None:
            emit(payload(expr.speech_payload, "speech"))
        elif expr.text.strip():
            words = self.tokenizer.split(expr.text)
            for word in words:
                if word == SOUND:
                    emit(payload(expr.sound_payload, "sound"))
                    used.add("sound")
                elif word == IMAGE:
                    emit(payload(expr.image_payload, "image"))
                    used.add("image")
                else:
                    token_id = self.tokenizer.encode(word)[0]
                    parts.append(self.embed_ids([token_id]))
                    tags.append("text")
                    ids.append(token_id)
        else:
            raise CompositionError(f"{expr.expression_id}: expression carries neither text nor speech")

        # payloads without a placeholder (always the case for speech forms) follow the words
        if expr.sound_payload is not None and "sound" not in used:
            emit(payload(expr.sound_payload, "sound"))
        if expr.image_payload is not None and "image" not in used:
            emit(payload(expr.image_payload, "image"))

        like = self.embed_ids([self.tokenizer.bos_id])
        return ExpressionSegment(tokens=_cat(parts, like), segment_map=tags, token_ids=ids)

    # ---- template ----

    def build_prompt(self, content: AssembledPrompt, segment: ExpressionSegment,
                     answer_ids: Optional[List[int]] = None, context: Optional[int] = None) -> AssembledPrompt:
        """[BOS] system content expression [answer]; content and expression swap when content_first is off"""
        if len(segment) == 0:
            raise CompositionError("empty expression: forms require text or speech")

        system_ids = [self.tokenizer.bos_id] + self.tokenizer.encode(self.cfg.system_prompt)
        system = self.embed_ids(system_ids)
        head_tags = ["special"] + ["text"] * (len(system_ids) - 1)

        blocks = [
            (content.tokens, content.segment_map, content.frame_index, content.token_ids),
            (segment.tokens, segment.segment_map, [None] * len(segment), segment.token_ids),
        ]
        if not self.cfg.content_first:
            blocks.reverse()

        parts = [system] + [b[0] for b in blocks]
        tags = head_tags + blocks[0][1] + blocks[1][1]
        frames = [None] * len(system_ids) + blocks[0][2] + blocks[1][2]
        ids = system_ids + blocks[0][3] + blocks[1][3]
        prompt = AssembledPrompt(tokens=_cat(parts, system), segment_map=tags, layout=content.layout,
                                 N=content.N, L_a=content.L_a, L_A=content.L_A, frame_index=frames,
                                 token_ids=ids)

        lengths = {"system": len(system_ids), "content": len(content), "expression": len(segment),
                   "answer": len(answer_ids or [])}
        if context is not None and sum(lengths.values()) > context:
            raise ContextOverflowError(
                f"prompt of {sum(lengths.values())} tokens exceeds context {context}: {lengths}", lengths)

        if answer_ids:
            prompt = self.extend(prompt, answer_ids)
            prompt.answer_start = len(prompt) - len(answer_ids)
        return prompt

    def extend(self, prompt: AssembledPrompt, ids: List[int]) -> AssembledPrompt:
        """Append text tokens (answer region or generated tokens)"""
        tokens = torch.cat([prompt.tokens, self.embed_ids(ids)], dim=0)
        return replace(prompt, tokens=tokens,
                       segment_map=prompt.segment_map + ["text"] * len(ids),
                       frame_index=prompt.frame_index + [None] * len(ids),
                       token_ids=prompt.token_ids + list(ids))
