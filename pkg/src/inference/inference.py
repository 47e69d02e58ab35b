import json
import logging
import time
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
from tqdm import tqdm

from ..evaluation.evaluator import RUN_FILE, write_prediction
from ..evaluation.report_builder import TIMING_FILE
from ..manifest_store.manifest_store import ManifestStore
from ..mask_head.mask_head import REGIMES
from ..models.data_models import Manifest, VideoSample
from ..oisa_model.oisa_model import OISAModel
from ..sequence_assembly.sequence_assembly import LAYOUTS
from ..training.frame_sampler import sample_frames
from ..utils.config import Config
from ..utils.errors import ConfigError
from ..utils.reproducibility import seed_everything


def nearest_sampled(num_frames: int, sampled: Sequence[int]) -> List[int]:
    """For every video frame, the position in `sampled` of the closest sampled frame; ties go to the earlier one"""
    if not sampled:
        return []
    sampled = np.asarray(sampled)
    out = []
    for t in range(num_frames):
        distance = np.abs(sampled - t)
        out.append(int(np.argmin(distance)))  # argmin keeps the first minimum
    return out


def fill_frames(masks: Sequence[np.ndarray], sampled: Sequence[int], num_frames: int) -> List[np.ndarray]:
    """Full-video masks from masks predicted on the sampled frames"""
    return [masks[k] for k in nearest_sampled(num_frames, sampled)]


class Predictor:
    """Runs a trained model over a manifest and writes a predictions directory"""

    def __init__(self, model: OISAModel, config: Config):
        self.model = model
        self.config = config
        self.logger = logging.getLogger(__name__)

    def _media(self, manifest: Manifest, sample: VideoSample) -> VideoSample:
        if not sample.media and manifest.root is not None:
            ManifestStore(manifest.root).load_media(sample)
        return sample

    def predict_sample(self, sample: VideoSample, out_dir: Path, regime: str,
                       layout: Optional[str] = None) -> int:
        """Predict every expression of one sample; returns the number of frames encoded"""
        selection = sample_frames(sample, self.config.train, "infer")
        encoding = self.model.encode_content(sample, selection.indices, selection.dense, layout)
        for expression in sample.expressions:
            generation, masks = self.model.predict(sample, expression, encoding, regime)
            if generation.truncated:
                self.logger.warning(f"{sample.sample_id}/{expression.expression_id}: answer truncated")
            write_prediction(out_dir, sample.sample_id, expression.expression_id,
                             fill_frames(masks, selection.indices, sample.num_frames),
                             answer=generation.text, explanation=generation.explanation)
        return len(selection)

    def predict_manifest(self, manifest: Manifest, out_dir: Path, regime: str = "QP",
                         layout: Optional[str] = None, seed: Optional[int] = None) -> Path:
        """Write `<sid>/<eid>/frame_%05d.rle`, answer.txt and explanation.txt for each expression"""
        if regime not in REGIMES:
            raise ConfigError(f"Unknown regime {regime}; expected one of {REGIMES}")
        layout = layout or self.model.layout
        if layout not in LAYOUTS:
            raise ConfigError(f"Unknown fusion layout {layout}")
        seed = self.config.runtime.seed if seed is None else seed
        seed_everything(seed)

        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        self.model.eval()

        frames = 0
        started = time.perf_counter()
        for sample in tqdm(manifest.samples, desc=f"Inference [{regime}]", disable=len(manifest.samples) < 4):
            frames += self.predict_sample(self._media(manifest, sample), out_dir, regime, layout)
        elapsed = time.perf_counter() - started

        run_info: Dict[str, object] = {"regime": regime, "fusion": layout, "seed": seed,
                                       "split": manifest.split,
                                       "expressions": sum(len(s.expressions) for s in manifest.samples)}
        with open(out_dir / RUN_FILE, "w") as f:
            json.dump(run_info, f, indent=1, sort_keys=True)
        timing = {"frames": frames, "seconds": elapsed, "fps": frames / elapsed if elapsed > 0 else 0.0}
        with open(out_dir / TIMING_FILE, "w") as f:
            json.dump(timing, f, indent=1, sort_keys=True)

        self.logger.info(f"Predicted {run_info['expressions']} expressions ({regime}, {layout}) "
                         f"at {timing['fps']:.1f} frames/s into {out_dir}")
        return out_dir
