import logging
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import torch
from tqdm import tqdm

from ..manifest_store.rle_codec import decode_rle
from ..models.data_models import Expression, Manifest, VideoSample
from ..oisa_model.oisa_model import OISAModel
from ..sequence_assembly.sequence_assembly import AssembledPrompt, EMBEDDED
from ..utils.config import Config
from ..utils.errors import ConfigError, NumericError
from .frame_sampler import FrameSelection, sample_frames
from .losses import bce_mask_loss, dice_loss


@dataclass
class LossBreakdown:
    """Weighted loss components of one optimization step; total is their sum"""
    text_ce: float
    dice: float
    bce: float
    total: float
    step: int = 0
    regime: str = ""


@dataclass
class TrainItem:
    sample: VideoSample
    expression: Expression
    frames: FrameSelection


def target_masks(sample: VideoSample, object_id: str, frame_indices: Sequence[int]) -> np.ndarray:
    """(N, H, W) ground truth of one object on the given frames; absent entries are empty"""
    track = sample.get_object(object_id)
    out = np.zeros((len(frame_indices), sample.height, sample.width), dtype=np.uint8)
    if track is None:
        return out
    for k, index in enumerate(frame_indices):
        mask = track.masks.get(index)
        if mask is not None:
            out[k] = decode_rle(mask, sample.sample_id)
    return out


class Trainer:
    """Two-stage optimisation: audio-text alignment, then instruct segmentation tuning"""

    def __init__(self, model: OISAModel, config: Config):
        self.model = model
        self.config = config
        self.logger = logging.getLogger(__name__)
        self.optimizer: Optional[torch.optim.Optimizer] = None
        self.step_count = 0

    # ---- stage 1 ----

    def align_audio_stage(self, pairs: List[Tuple[np.ndarray, str]], steps: Optional[int] = None) -> List[float]:
        """Train only the audio projection MLP on (speech waveform, transcript) pairs"""
        if not pairs:
            raise ConfigError("alignment stage needs at least one (waveform, transcript) pair")
        steps = steps if steps is not None else self.config.train.steps
        model = self.model
        trainable = set(model.audio_projection_parameters())
        for name, param in model.named_parameters():
            param.requires_grad_(name in trainable)
        optimizer = torch.optim.AdamW([p for n, p in model.named_parameters() if n in trainable],
                                      lr=self.config.train.lr, weight_decay=0.0)
        model.train()

        losses: List[float] = []
        batch_size = max(1, min(self.config.train.batch_size, len(pairs)))
        try:
            for step in tqdm(range(steps), desc="Align", disable=steps < 20):
                start = (step * batch_size) % len(pairs)
                batch = [pairs[(start + k) % len(pairs)] for k in range(batch_size)]
                loss = torch.stack([self._caption_loss(wave, text) for wave, text in batch]).mean()
                if not torch.isfinite(loss):
                    raise NumericError(f"non-finite alignment loss at step {step}", f"align-{step}")
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                losses.append(float(loss))
                if step % self.config.train.log_every == 0:
                    self.logger.info(f"align step {step}: ce={losses[-1]:.4f}")
        finally:
            for param in model.parameters():
                param.requires_grad_(True)
        return losses

    def _caption_loss(self, wave: np.ndarray, transcript: str) -> torch.Tensor:
        model, tokenizer = self.model, self.model.tokenizer
        speech = model.encoders.encode_audio(wave, modality="speech_payload")
        bos = model.lm.embed_ids([tokenizer.bos_id])
        prompt = AssembledPrompt(
            tokens=torch.cat([bos, speech.tokens], dim=0),
            segment_map=["special"] + ["speech_payload"] * len(speech),
            layout="AVI", N=0, L_a=0,
            frame_index=[None] * (1 + len(speech)),
            token_ids=[tokenizer.bos_id] + [EMBEDDED] * len(speech),
        )
        targets = tokenizer.encode(transcript) + [tokenizer.eos_id]
        return model.lm.lm_forward(prompt, targets=targets).loss

    # ---- stage 2 ----

    def make_items(self, manifest: Manifest) -> List[TrainItem]:
        items = []
        for sample in manifest.samples:
            frames = sample_frames(sample, self.config.train, "train")
            items.extend(TrainItem(sample, expression, frames) for expression in sample.expressions)
        return items

    def item_losses(self, item: TrainItem, regime: str) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Unweighted (text CE, dice, bce) of one expression; mask terms are exactly 0 without targets"""
        model = self.model
        encoding = model.encode_content(item.sample, item.frames.indices, item.frames.dense)
        out = model.forward_expression(item.sample, item.expression, encoding)
        zero = out.lm.loss.new_zeros(())
        if not item.expression.target_ids:
            return out.lm.loss, zero, zero

        dice_terms, bce_terms = [], []
        all_logits = model.segment(out.seg_queries, encoding, regime)
        for object_id, per_frame in zip(item.expression.target_ids, all_logits):
            logits = torch.stack(per_frame)
            gt = torch.from_numpy(target_masks(item.sample, object_id, encoding.frame_indices)).to(logits.device)
            dice_terms.append(dice_loss(logits, gt, self.config.train.dice_eps))
            bce_terms.append(bce_mask_loss(logits, gt))
        return out.lm.loss, torch.stack(dice_terms).mean(), torch.stack(bce_terms).mean()

    def compute_losses(self, batch: List[TrainItem], regime: str) -> Tuple[torch.Tensor, LossBreakdown]:
        cfg = self.config.train
        text, dice, bce = [], [], []
        for item in batch:
            ce_i, dice_i, bce_i = self.item_losses(item, regime)
            text.append(ce_i)
            dice.append(dice_i)
            bce.append(bce_i)
        text_w = cfg.lambda_text * torch.stack(text).mean()
        dice_w = cfg.lambda_dice * torch.stack(dice).mean()
        bce_w = cfg.lambda_bce * torch.stack(bce).mean()
        total = text_w + dice_w + bce_w
        breakdown = LossBreakdown(text_ce=text_w.detach().item(), dice=dice_w.detach().item(),
                                  bce=bce_w.detach().item(), total=total.detach().item(),
                                  step=self.step_count, regime=regime)
        return total, breakdown

    def make_optimizer(self) -> torch.optim.Optimizer:
        """AdamW with the mask decoder in its own group at lr * mask_lr_scale"""
        cfg = self.config.train
        decoder = list(self.model.mask_decoder.parameters())
        in_decoder = {id(p) for p in decoder}
        rest = [p for p in self.model.parameters() if id(p) not in in_decoder]
        return torch.optim.AdamW([{"params": rest}, {"params": decoder, "lr": cfg.lr * cfg.mask_lr_scale}],
                                 lr=cfg.lr, weight_decay=cfg.weight_decay)

    def regime_for_step(self, step: int) -> str:
        regime = self.config.train.regime
        if regime == "joint":
            return "QP" if step % 2 == 0 else "OTSA"
        return regime

    def train_step(self, batch: List[TrainItem], regime: Optional[str] = None,
                   batch_id: Optional[str] = None) -> LossBreakdown:
        """One optimizer step over a batch; a non-finite loss aborts with the batch id"""
        regime = regime or self.regime_for_step(self.step_count)
        batch_id = batch_id or f"step-{self.step_count}"
        if self.optimizer is None:
            self.optimizer = self.make_optimizer()
        self.model.train()
        total, breakdown = self.compute_losses(batch, regime)
        if not torch.isfinite(total):
            raise NumericError(f"non-finite loss in batch {batch_id}: {breakdown}", batch_id)

        self.optimizer.zero_grad()
        total.backward()
        if self.config.train.grad_clip > 0:
            torch.nn.utils.clip_grad_norm_(self.model.parameters(), self.config.train.grad_clip)
        self.optimizer.step()
        self.step_count += 1
        return breakdown

    def fit(self, manifest: Manifest, steps: Optional[int] = None, seed: int = 0) -> List[LossBreakdown]:
        """Tune-stage loop over random batches of (sample, expression) items"""
        steps = steps if steps is not None else self.config.train.steps
        items = self.make_items(manifest)
        if not items:
            raise ConfigError("training manifest has no expressions")
        rng = np.random.default_rng(seed)
        batch_size = min(self.config.train.batch_size, len(items))

        history: List[LossBreakdown] = []
        for step in tqdm(range(steps), desc="Tune", disable=steps < 20):
            chosen = rng.choice(len(items), size=batch_size, replace=False)
            batch_id = ",".join(items[i].expression.expression_id for i in chosen)
            breakdown = self.train_step([items[i] for i in chosen], batch_id=batch_id)
            history.append(breakdown)
            if step % self.config.train.log_every == 0 or step == steps - 1:
                self.logger.info(f"step {breakdown.step} [{breakdown.regime}] total={breakdown.total:.4f} "
                                 f"ce={breakdown.text_ce:.4f} dice={breakdown.dice:.4f} bce={breakdown.bce:.4f}")
        return history


def write_loss_curve(history: List[LossBreakdown], path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = ["step", "regime", "text_ce", "dice", "bce", "total"]
    pd.DataFrame([asdict(b) for b in history], columns=columns).to_csv(path, index=False)
    return path
