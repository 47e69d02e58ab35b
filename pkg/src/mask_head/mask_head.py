"""
Query-based mask decoder. An injector-free adapter turns a frame's vision
tokens into a three-level pyramid, a pixel decoder fuses it into stride-4
mask features, and cross-attention blocks refine a single object query.
A convolutional stem over the RGB frame adds full-resolution detail.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..core_lm.core_lm import SegQuery
from ..utils.config import MaskHeadConfig
from ..utils.errors import ConfigError, DataError

STRIDES = (8, 16, 32)
REGIMES = ("QP", "OTSA")


@dataclass
class FeaturePyramid:
    """One frame's multi-scale features (C, h, w) and its stride-4 mask features"""
    scales: Dict[int, torch.Tensor]
    mask_features: torch.Tensor
    frame_size: Tuple[int, int]
    # (C, H, W) upsampled mask features plus pixel-stem detail, when the frame image is given
    pixel_features: Optional[torch.Tensor] = None


@dataclass
class TrackState:
    query: torch.Tensor
    frame_cursor: int = 0
    mask_logits_history: List[torch.Tensor] = field(default_factory=list)


class PyramidAdapter(nn.Module):
    """Strided convolutions over the token grid; the vision tokens are only read"""

    def __init__(self, d: int, channels: int):
        super().__init__()
        self.to_s8 = nn.Conv2d(d, channels, kernel_size=1)
        self.to_s16 = nn.Conv2d(d, channels, kernel_size=2, stride=2)
        self.to_s32 = nn.Conv2d(d, channels, kernel_size=4, stride=4)

    def forward(self, grid: torch.Tensor) -> Dict[int, torch.Tensor]:
        return {8: self.to_s8(grid), 16: self.to_s16(grid), 32: self.to_s32(grid)}


class PixelStem(nn.Module):
    """Two 3x3 convolutions over the (3, H, W) frame in [0, 1]"""

    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = nn.Conv2d(3, channels, kernel_size=3, padding=1)
        self.conv2 = nn.Conv2d(channels, channels, kernel_size=3, padding=1)

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        return self.conv2(F.relu(self.conv1(image.unsqueeze(0)))).squeeze(0)


class PixelDecoder(nn.Module):
    """Top-down FPN fusion followed by a transposed conv to stride 4"""

    def __init__(self, channels: int):
        super().__init__()
        self.lateral = nn.ModuleDict({str(s): nn.Conv2d(channels, channels, kernel_size=1) for s in STRIDES})
        self.output = nn.ModuleDict({str(s): nn.Conv2d(channels, channels, kernel_size=1) for s in STRIDES})
        self.upsample = nn.ConvTranspose2d(channels, channels, kernel_size=2, stride=2)

    def forward(self, scales: Dict[int, torch.Tensor]) -> Tuple[Dict[int, torch.Tensor], torch.Tensor]:
        refined: Dict[int, torch.Tensor] = {}
        top = None
        for stride in reversed(STRIDES):
            x = self.lateral[str(stride)](scales[stride])
            if top is not None:
                x = x + F.interpolate(top, size=x.shape[-2:], mode="nearest")
            top = x
            refined[stride] = self.output[str(stride)](x)
        mask_features = self.upsample(refined[8])
        return refined, mask_features


class CrossAttentionLayer(nn.Module):

    def __init__(self, d_model: int, nhead: int):
        super().__init__()
        self.multihead_attn = nn.MultiheadAttention(d_model, nhead, dropout=0.0, batch_first=True)
        self.norm = nn.LayerNorm(d_model)

    def forward(self, tgt: torch.Tensor, memory: torch.Tensor, pos: Optional[torch.Tensor] = None) -> torch.Tensor:
        key = memory if pos is None else memory + pos
        tgt2 = self.multihead_attn(query=tgt, key=key, value=memory, need_weights=False)[0]
        return self.norm(tgt + tgt2)


class FFNLayer(nn.Module):

    def __init__(self, d_model: int, dim_feedforward: int):
        super().__init__()
        self.linear1 = nn.Linear(d_model, dim_feedforward)
        self.linear2 = nn.Linear(dim_feedforward, d_model)
        self.norm = nn.LayerNorm(d_model)

    def forward(self, tgt: torch.Tensor) -> torch.Tensor:
        return self.norm(tgt + self.linear2(F.relu(self.linear1(tgt))))


class DecoderBlock(nn.Module):
    """Cross-attention then FFN; a single query has nothing to self-attend to"""

    def __init__(self, channels: int, n_heads: int, ffn_dim: int):
        super().__init__()
        self.cross_attention = CrossAttentionLayer(channels, n_heads)
        self.ffn = FFNLayer(channels, ffn_dim)

    def forward(self, query: torch.Tensor, memory: torch.Tensor, pos: torch.Tensor) -> torch.Tensor:
        return self.ffn(self.cross_attention(query, memory, pos))


def _sine_position(h: int, w: int, channels: int, like: torch.Tensor) -> torch.Tensor:
    """(h*w, channels) fixed 2-D sine embedding"""
    quarter = channels // 4
    freq = 1.0 / (10000 ** (torch.arange(quarter, dtype=like.dtype, device=like.device) / max(quarter, 1)))
    ys = torch.arange(h, dtype=like.dtype, device=like.device)[:, None].expand(h, w).reshape(-1, 1) * freq
    xs = torch.arange(w, dtype=like.dtype, device=like.device)[None, :].expand(h, w).reshape(-1, 1) * freq
    pos = torch.cat([ys.sin(), ys.cos(), xs.sin(), xs.cos()], dim=1)
    return F.pad(pos, (0, channels - pos.shape[1]))


class MaskDecoder(nn.Module):
    """Per-frame mask prediction from a SegQuery, with query propagation or one-token-seg-all"""

    def __init__(self, cfg: MaskHeadConfig, d: int, query_dim: int):
        super().__init__()
        if cfg.self_attention:
            raise ConfigError("mask decoder blocks must not carry self-attention")
        self.cfg = cfg
        C = cfg.channels
        self.adapter = PyramidAdapter(d, C)
        self.pixel_decoder = PixelDecoder(C)
        self.pixel_stem = PixelStem(C) if cfg.pixel_stem else None
        self.level_embed = nn.Embedding(len(STRIDES), C)
        self.query_init = nn.Linear(query_dim, C)
        self.blocks = nn.ModuleList([DecoderBlock(C, cfg.n_heads, cfg.ffn_dim) for _ in range(cfg.n_blocks)])
        self.mask_embed = nn.Linear(C, C)
        self.logger = logging.getLogger(__name__)

    def build_pyramid(self, tokens: torch.Tensor, frame_size: Optional[Tuple[int, int]] = None,
                      image: Optional[torch.Tensor] = None) -> FeaturePyramid:
        """(L_v, d) vision tokens of one frame -> three scales and stride-4 mask features; `image` is (3, H, W)"""
        L, d = tokens.shape
        grid = math.isqrt(L)
        if grid * grid != L:
            raise DataError(f"{L} vision tokens do not form a square grid")
        if grid % 4:
            raise DataError(f"token grid {grid}x{grid} too small for a stride-32 level")
        grid_map = tokens.t().reshape(1, d, grid, grid)
        scales, mask_features = self.pixel_decoder(self.adapter(grid_map))
        size = tuple(frame_size or (grid * 8, grid * 8))
        pixel_features = None
        if image is not None and self.pixel_stem is not None:
            if tuple(image.shape) != (3,) + size:
                raise DataError(f"frame image of shape {tuple(image.shape)} does not match frame size {size}")
            upsampled = F.interpolate(mask_features, size=size, mode="bilinear", align_corners=False)
            pixel_features = upsampled.squeeze(0) + self.pixel_stem(image)
        return FeaturePyramid(scales={s: x.squeeze(0) for s, x in scales.items()},
                              mask_features=mask_features.squeeze(0), frame_size=size,
                              pixel_features=pixel_features)

    def init_state(self, seg_query: SegQuery) -> TrackState:
        return TrackState(query=self.query_init(seg_query.embedding))

    def decode_frame(self, state: TrackState, pyramid: FeaturePyramid) -> Tuple[torch.Tensor, TrackState]:
        """Refine the query against one frame; logits at full frame resolution plus the advanced state"""
        query = state.query.reshape(1, 1, -1)
        for i, block in enumerate(self.blocks):
            stride = STRIDES[i % len(STRIDES)]
            feat = pyramid.scales[stride]
            C, h, w = feat.shape
            memory = feat.flatten(1).t().unsqueeze(0)
            pos = (_sine_position(h, w, C, feat) + self.level_embed.weight[i % len(STRIDES)]).unsqueeze(0)
            query = block(query, memory, pos)
        refined = query.reshape(-1)

        embedding = self.mask_embed(refined)
        if pyramid.pixel_features is not None:
            logits = torch.einsum("c,chw->hw", embedding, pyramid.pixel_features)
        else:
            low_res = torch.einsum("c,chw->hw", embedding, pyramid.mask_features)
            logits = F.interpolate(low_res[None, None], size=pyramid.frame_size, mode="bilinear",
                                   align_corners=False)[0, 0]
        new_state = TrackState(query=refined, frame_cursor=state.frame_cursor + 1,
                               mask_logits_history=state.mask_logits_history + [logits])
        return logits, new_state

    def segment_sequence(self, seg_query: SegQuery, pyramids: List[FeaturePyramid],
                         regime: str = "QP") -> List[torch.Tensor]:
        """Mask logits for every frame; QP threads the query through frames, OTSA restarts it each frame"""
        if regime not in REGIMES:
            raise ConfigError(f"Unknown regime {regime}")
        logits: List[torch.Tensor] = []
        state = self.init_state(seg_query)
        for pyramid in pyramids:
            if regime == "OTSA":
                state = self.init_state(seg_query)
            frame_logits, state = self.decode_frame(state, pyramid)
            logits.append(frame_logits)
        return logits

    def binarize(self, logits: torch.Tensor) -> torch.Tensor:
        return logits > self.cfg.threshold
