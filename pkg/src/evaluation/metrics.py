"""Region similarity J, contour accuracy F and their per-expression combination."""
import math
from dataclasses import dataclass
from typing import List, Sequence

import cv2
import numpy as np

from ..utils.config import EvalConfig
from ..utils.errors import DataError

CROSS = cv2.getStructuringElement(cv2.MORPH_CROSS, (3, 3))


@dataclass
class FrameScores:
    J: float
    F: float

    @property
    def JF(self) -> float:
        return (self.J + self.F) / 2


def _check(pred: np.ndarray, gt: np.ndarray):
    if pred.shape != gt.shape:
        raise DataError(f"prediction {pred.shape} and ground truth {gt.shape} differ in resolution")


def region_j(pred: np.ndarray, gt: np.ndarray) -> float:
    """IoU; two empty masks score 1"""
    _check(pred, gt)
    pred, gt = pred.astype(bool), gt.astype(bool)
    union = np.logical_or(pred, gt).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(pred, gt).sum() / union)


def boundary_map(mask: np.ndarray) -> np.ndarray:
    """Foreground pixels with a 4-neighbour outside the mask (the image border counts as outside)"""
    mask = mask.astype(np.uint8)
    eroded = cv2.erode(mask, CROSS, borderType=cv2.BORDER_CONSTANT, borderValue=0)
    return (mask > 0) & (eroded == 0)


def disk(radius: float) -> np.ndarray:
    r = int(math.floor(radius))
    ys, xs = np.mgrid[-r:r + 1, -r:r + 1]
    return ((ys ** 2 + xs ** 2) <= radius ** 2).astype(np.uint8)


def _within(boundary: np.ndarray, other: np.ndarray, tolerance: float) -> np.ndarray:
    """Pixels of `boundary` lying within Euclidean distance `tolerance` of a pixel of `other`"""
    grown = cv2.dilate(other.astype(np.uint8), disk(tolerance), borderType=cv2.BORDER_CONSTANT, borderValue=0)
    return boundary & (grown > 0)


def boundary_f(pred: np.ndarray, gt: np.ndarray, tolerance: float) -> float:
    """Boundary F-measure with tolerance-dilated matching; empty-vs-empty is 1, empty-vs-nonempty 0"""
    _check(pred, gt)
    pred_b, gt_b = boundary_map(pred), boundary_map(gt)
    n_pred, n_gt = int(pred_b.sum()), int(gt_b.sum())
    if n_pred == 0 and n_gt == 0:
        return 1.0
    if n_pred == 0 or n_gt == 0:
        return 0.0
    precision = _within(pred_b, gt_b, tolerance).sum() / n_pred
    recall = _within(gt_b, pred_b, tolerance).sum() / n_gt
    if precision + recall == 0:
        return 0.0
    return float(2 * precision * recall / (precision + recall))


def boundary_tolerance(height: int, width: int, cfg: EvalConfig) -> float:
    """A fraction of the image diagonal, never below the floor"""
    return max(cfg.tolerance_floor, cfg.tolerance_frac * math.hypot(height, width))


def frame_scores(pred: np.ndarray, gt: np.ndarray, tolerance: float) -> FrameScores:
    return FrameScores(J=region_j(pred, gt), F=boundary_f(pred, gt, tolerance))


def evaluate_expression(pred: Sequence[np.ndarray], gt: Sequence[np.ndarray], tolerance: float,
                        no_target: bool = False) -> FrameScores:
    """
    Score one expression over all annotated frames.

    `gt` holds the per-frame union of the target masks. A no-target expression
    scores 1 only if every predicted frame is empty, else 0, for J, F and J&F alike.
    """
    if len(pred) != len(gt):
        raise DataError(f"{len(pred)} predicted frames for {len(gt)} annotated frames")
    if no_target:
        score = 1.0 if all(not np.any(p) for p in pred) else 0.0
        return FrameScores(J=score, F=score)
    if not gt:
        return FrameScores(J=1.0, F=1.0)
    per_frame: List[FrameScores] = [frame_scores(p, g, tolerance) for p, g in zip(pred, gt)]
    return FrameScores(J=float(np.mean([s.J for s in per_frame])), F=float(np.mean([s.F for s in per_frame])))
