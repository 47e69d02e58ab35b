import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..manifest_store.rle_codec import decode_rle, empty_mask, encode_rle, read_rle_file, write_rle_file
from ..models.data_models import ALL_FORMS, Expression, Manifest, VideoSample
from ..models.eval_models import EvalReport, ExpressionScore, SplitScore
from ..utils.config import EvalConfig
from ..utils.errors import DataError
from .meteor import meteor_score
from .metrics import boundary_tolerance, evaluate_expression

RUN_FILE = "run.json"
ANSWER_FILE = "answer.txt"
EXPLANATION_FILE = "explanation.txt"


def frame_file(index: int) -> str:
    return f"frame_{index:05d}.rle"


def write_prediction(pred_dir: Path, sample_id: str, expression_id: str, masks: Sequence[np.ndarray],
                     answer: str = "", explanation: Optional[str] = None) -> Path:
    """Write one expression's masks (one RLE file per frame), answer and explanation"""
    target = Path(pred_dir) / sample_id / expression_id
    target.mkdir(parents=True, exist_ok=True)
    for index, mask in enumerate(masks):
        grid = np.asarray(mask, dtype=np.uint8)
        rle = encode_rle(grid) if grid.any() else empty_mask(*grid.shape)
        write_rle_file(target / frame_file(index), rle)
    (target / ANSWER_FILE).write_text(answer + "\n")
    (target / EXPLANATION_FILE).write_text((explanation or "") + "\n")
    return target


def gt_union(sample: VideoSample, expression: Expression) -> List[np.ndarray]:
    """Per-frame union of the target objects' masks"""
    frames = [np.zeros((sample.height, sample.width), dtype=np.uint8) for _ in range(sample.num_frames)]
    for object_id in expression.target_ids:
        track = sample.get_object(object_id)
        if track is None:
            raise DataError(f"{expression.expression_id}: unknown target {object_id}")
        for index, mask in track.masks.items():
            if 0 <= index < sample.num_frames:
                frames[index] |= decode_rle(mask, sample.sample_id)
    return frames


def _mean(values: List[float]) -> float:
    return float(np.mean(values)) if values else 0.0


def _split(name: str, scores: List[ExpressionScore]) -> SplitScore:
    meteors = [s.meteor for s in scores if s.meteor is not None]
    return SplitScore(name=name, J=_mean([s.J for s in scores]), F=_mean([s.F for s in scores]),
                      JF=_mean([s.JF for s in scores]), count=len(scores),
                      meteor=_mean(meteors) if meteors else None)


class DatasetEvaluator:
    """Scores a predictions directory against a manifest, keyed by sample and expression id"""

    def __init__(self, config: EvalConfig):
        self.config = config
        self.logger = logging.getLogger(__name__)

    def _read_prediction(self, folder: Path, sample: VideoSample) -> Optional[List[np.ndarray]]:
        if not folder.is_dir():
            return None
        masks = []
        for index in range(sample.num_frames):
            path = folder / frame_file(index)
            if not path.exists():
                return None
            mask = read_rle_file(path)
            if (mask.height, mask.width) != (sample.height, sample.width):
                raise DataError(f"{path}: resolution {mask.height}x{mask.width} differs from the video's")
            masks.append(decode_rle(mask, sample.sample_id))
        return masks

    def score_expression(self, sample: VideoSample, expression: Expression, pred_dir: Path,
                         tolerance: Optional[float] = None) -> ExpressionScore:
        folder = Path(pred_dir) / sample.sample_id / expression.expression_id
        tolerance = tolerance if tolerance is not None else boundary_tolerance(sample.height, sample.width,
                                                                               self.config)
        base = dict(sample_id=sample.sample_id, expression_id=expression.expression_id,
                    form=expression.form.value, no_target=expression.is_no_target, tags=list(expression.tags))

        pred = self._read_prediction(folder, sample)
        if pred is None:
            self.logger.warning(f"missing prediction for {sample.sample_id}/{expression.expression_id}; scored 0")
            meteor = 0.0 if expression.explanation else None
            return ExpressionScore(J=0.0, F=0.0, JF=0.0, meteor=meteor, missing=True, **base)

        scores = evaluate_expression(pred, gt_union(sample, expression), tolerance, expression.is_no_target)
        JF = scores.J if expression.is_no_target else scores.JF

        meteor = None
        if expression.explanation:
            explanation_path = folder / EXPLANATION_FILE
            candidate = explanation_path.read_text().strip() if explanation_path.exists() else ""
            meteor = meteor_score(candidate, expression.explanation, self.config.meteor_alpha,
                                  self.config.meteor_beta, self.config.meteor_gamma)
        return ExpressionScore(J=scores.J, F=scores.F, JF=JF, meteor=meteor, **base)

    def evaluate_dataset(self, manifest: Manifest, pred_dir: Path,
                         tolerance: Optional[float] = None) -> EvalReport:
        """Per-expression scores, per-form splits, tag subsets and the mean over split means"""
        pred_dir = Path(pred_dir)
        scores = [self.score_expression(sample, expression, pred_dir, tolerance)
                  for sample, expression in manifest.iter_expressions()]
        scores.sort(key=lambda s: (s.sample_id, s.expression_id))

        splits: Dict[str, SplitScore] = {}
        for form in ALL_FORMS:
            members = [s for s in scores if s.form == form.value]
            if members:
                splits[form.value] = _split(form.value, members)

        split_list = list(splits.values())
        split_meteors = [s.meteor for s in split_list if s.meteor is not None]
        overall = SplitScore(name="All", J=_mean([s.J for s in split_list]), F=_mean([s.F for s in split_list]),
                             JF=_mean([s.JF for s in split_list]), count=len(scores),
                             meteor=_mean(split_meteors) if split_meteors else None)

        tags = sorted({tag for s in scores for tag in s.tags})
        subsets = {tag: _split(tag, [s for s in scores if tag in s.tags]) for tag in tags}

        run_info = {}
        run_file = pred_dir / RUN_FILE
        if run_file.exists():
            run_info = json.loads(run_file.read_text())

        missing = sum(s.missing for s in scores)
        if missing:
            self.logger.warning(f"{missing} of {len(scores)} expressions had no prediction")
        return EvalReport(expressions=scores, splits=splits, overall=overall, subsets=subsets,
                          missing=missing, run_info=run_info)
