from typing import Optional

import numpy as np

from ..models.data_models import BinaryMask
from ..utils.errors import MaskCodecError, SchemaError


def encode_rle(grid: np.ndarray) -> BinaryMask:
    """Encode a dense binary grid as canonical row-major runs starting with background"""
    grid = np.asarray(grid)
    if grid.ndim != 2:
        raise MaskCodecError(f"Expected a 2-D grid, got shape {grid.shape}")

    bad = np.argwhere((grid != 0) & (grid != 1))
    if len(bad):
        row, col = (int(v) for v in bad[0])
        raise MaskCodecError(f"Non-binary value {grid[row, col]!r} at cell ({row}, {col})", cell=(row, col))

    height, width = grid.shape
    flat = grid.astype(np.uint8).ravel()
    if flat.size == 0:
        return BinaryMask(height=height, width=width, runs=[])

    changes = np.flatnonzero(np.diff(flat)) + 1
    bounds = np.concatenate([[0], changes, [flat.size]])
    runs = np.diff(bounds).tolist()
    if flat[0] == 1:
        runs = [0] + runs
    return BinaryMask(height=height, width=width, runs=[int(r) for r in runs])


def decode_rle(mask: BinaryMask, sample_id: Optional[str] = None) -> np.ndarray:
    """Expand runs to a uint8 grid of shape (height, width)"""
    total = mask.height * mask.width
    runs = np.asarray(mask.runs, dtype=np.int64)
    if (runs < 0).any():
        raise SchemaError("negative run length in mask", sample_id=sample_id)
    if int(runs.sum()) != total:
        raise SchemaError(
            f"mask runs sum to {int(runs.sum())}, expected {mask.height}x{mask.width}={total}",
            sample_id=sample_id,
        )
    values = np.arange(len(runs)) % 2
    flat = np.repeat(values.astype(np.uint8), runs)
    return flat.reshape(mask.height, mask.width)


def empty_mask(height: int, width: int) -> BinaryMask:
    return BinaryMask(height=height, width=width, runs=[height * width])


def mask_area(mask: BinaryMask) -> int:
    return int(sum(mask.runs[1::2]))


def write_rle_file(path, mask: BinaryMask):
    """Prediction file: first line 'height width', second line the runs"""
    with open(path, "w") as f:
        f.write(f"{mask.height} {mask.width}\n")
        f.write(" ".join(str(r) for r in mask.runs) + "\n")


def read_rle_file(path) -> BinaryMask:
    with open(path, "r") as f:
        lines = f.read().splitlines()
    if not lines:
        raise SchemaError(f"empty mask file {path}")
    height, width = (int(v) for v in lines[0].split())
    runs = [int(v) for v in lines[1].split()] if len(lines) > 1 else []
    return BinaryMask(height=height, width=width, runs=runs)
