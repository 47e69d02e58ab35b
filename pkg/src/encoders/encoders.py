import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Union

import numpy as np
import torch
import torch.nn as nn

from ..manifest_store.manifest_store import pcm_to_float
from ..utils.config import EncoderConfig
from ..utils.errors import DataError

MODALITIES = ("vision", "audio", "image_payload", "sound_payload", "speech_payload", "text")

ArrayLike = Union[np.ndarray, torch.Tensor]


@dataclass
class TokenBlock:
    """L x d tokens of one modality; `empty` marks a deliberately zero-length block"""
    tokens: torch.Tensor
    modality: str
    frame_index: Optional[int] = None
    empty: bool = False

    def __len__(self) -> int:
        return int(self.tokens.shape[0])


def transformer_stack(d: int, n_heads: int, n_layers: int) -> nn.TransformerEncoder:
    layer = nn.TransformerEncoderLayer(d_model=d, nhead=n_heads, dim_feedforward=2 * d, dropout=0.0,
                                       activation="gelu", batch_first=True, norm_first=True)
    return nn.TransformerEncoder(layer, num_layers=n_layers, enable_nested_tensor=False)


class VisionEncoder(nn.Module):
    """Patch embedding plus a small transformer, applied to each frame on its own"""

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.cfg = cfg
        self.patch_embed = nn.Conv2d(3, cfg.d, kernel_size=cfg.patch, stride=cfg.patch)
        self.pos_embed = nn.Parameter(torch.zeros(1, cfg.L_v, cfg.d))
        nn.init.normal_(self.pos_embed, std=0.02)
        self.transformer = transformer_stack(cfg.d, cfg.n_heads, cfg.n_layers)
        self.norm = nn.LayerNorm(cfg.d)

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        """(N, 3, H, W) in [0, 1] -> (N, L_v, d)"""
        x = self.patch_embed(images - 0.5)
        x = x.flatten(2).transpose(1, 2) + self.pos_embed
        return self.norm(self.transformer(x))


class AudioEncoder(nn.Module):
    """
    Windowed log-magnitude spectrum, linear embedding and a small transformer,
    followed by the projection MLP that the alignment stage trains on its own.
    """

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.cfg = cfg
        n_bins = cfg.audio_window // 2 + 1
        self.embed = nn.Linear(n_bins, cfg.d)
        self.transformer = transformer_stack(cfg.d, cfg.n_heads, cfg.n_layers)
        self.norm = nn.LayerNorm(cfg.d)
        self.projection = nn.Sequential(nn.Linear(cfg.d, cfg.d), nn.GELU(), nn.Linear(cfg.d, cfg.d))

    def frontend(self, wave: torch.Tensor) -> torch.Tensor:
        """(samples,) -> (L_A, n_bins); one spectrum per non-overlapping window"""
        window = self.cfg.audio_window
        n_tokens = wave.shape[0] // window
        frames = wave[: n_tokens * window].reshape(n_tokens, window)
        spectrum = torch.fft.rfft(frames, dim=-1)
        magnitude = torch.sqrt(spectrum.real ** 2 + spectrum.imag ** 2 + 1e-12)
        return torch.log1p(magnitude)

    def backbone(self, wave: torch.Tensor) -> torch.Tensor:
        """Everything before the projection MLP"""
        x = self.embed(self.frontend(wave)).unsqueeze(0)
        return self.norm(self.transformer(x)).squeeze(0)

    def forward(self, wave: torch.Tensor) -> torch.Tensor:
        return self.projection(self.backbone(wave))


class OmniEncoders(nn.Module):
    """Frame, audio and image-payload encoders sharing one token width"""

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.cfg = cfg
        self.vision = VisionEncoder(cfg)
        self.audio = AudioEncoder(cfg)
        self.logger = logging.getLogger(__name__)

    @property
    def _param(self) -> torch.Tensor:
        return self.vision.patch_embed.weight

    def images_to_tensor(self, images: Sequence[ArrayLike]) -> torch.Tensor:
        """Stack HxWx3 uint8 (or float CHW tensors) into (N, 3, H, W) on the encoder's device/dtype"""
        out = []
        for index, image in enumerate(images):
            if isinstance(image, torch.Tensor) and image.dim() == 3 and image.shape[0] == 3:
                tensor = image
            else:
                array = np.asarray(image)
                if array.ndim != 3 or array.shape[2] != 3:
                    raise DataError(f"frame {index}: expected HxWx3 image, got shape {array.shape}")
                tensor = torch.from_numpy(array.astype(np.float64) / 255.0).permute(2, 0, 1)
            if tuple(tensor.shape[1:]) != (self.cfg.height, self.cfg.width):
                raise DataError(f"frame {index}: resolution {tuple(tensor.shape[1:])} does not match "
                                f"encoder resolution {(self.cfg.height, self.cfg.width)}")
            out.append(tensor)
        return torch.stack(out).to(device=self._param.device, dtype=self._param.dtype)

    def encode_frames(self, frames: Sequence[ArrayLike]) -> List[TokenBlock]:
        """One vision TokenBlock of L_v tokens per frame, frame_index = position in `frames`"""
        if len(frames) == 0:
            return []
        tokens = self.vision(self.images_to_tensor(frames))
        return [TokenBlock(tokens=tokens[i], modality="vision", frame_index=i) for i in range(len(frames))]

    def encode_image_payload(self, image: ArrayLike) -> TokenBlock:
        tokens = self.vision(self.images_to_tensor([image]))[0]
        return TokenBlock(tokens=tokens, modality="image_payload")

    def encode_audio(self, wave: ArrayLike, modality: str = "audio") -> TokenBlock:
        """L_A = floor(len / audio_window) tokens; an empty waveform gives an empty block"""
        if isinstance(wave, np.ndarray) and wave.dtype == np.int16:
            wave = pcm_to_float(wave)
        wave = torch.as_tensor(np.asarray(wave) if not isinstance(wave, torch.Tensor) else wave)
        wave = wave.to(device=self._param.device, dtype=self._param.dtype).reshape(-1)
        if wave.numel() == 0:
            return TokenBlock(tokens=wave.new_zeros((0, self.cfg.d)), modality=modality, empty=True)
        if wave.numel() < self.cfg.audio_window:
            raise DataError(f"waveform of {wave.numel()} samples is shorter than one audio window "
                            f"({self.cfg.audio_window})")
        return TokenBlock(tokens=self.audio(wave), modality=modality)
