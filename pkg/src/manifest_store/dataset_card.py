from collections import Counter
from typing import Any, Dict, List

import numpy as np

from ..models.data_models import ALL_FORMS, Manifest
from .rle_codec import mask_area


def _summary(values: List[float]) -> Dict[str, float]:
    if not values:
        return {"mean": 0.0, "min": 0.0, "max": 0.0}
    return {"mean": float(np.mean(values)), "min": float(np.min(values)), "max": float(np.max(values))}


def dataset_stats(manifest: Manifest) -> Dict[str, Any]:
    """Dataset card figures: sizes, frame rates, expression lengths, object areas and the form distribution"""
    samples = manifest.samples
    expressions = [e for _, e in manifest.iter_expressions()]
    words = [len((e.transcript or e.text).split()) for e in expressions]
    targets = [len(e.target_ids) for e in expressions]
    forms = Counter(e.form.value for e in expressions)
    tags = Counter(tag for e in expressions for tag in e.tags)
    areas = [mask_area(m) for s in samples for o in s.objects for m in o.masks.values()]

    return {
        "split": manifest.split,
        "samples": len(samples),
        "expressions": len(expressions),
        "duration_seconds": float(sum(s.num_frames / s.fps for s in samples)),
        "fps": _summary([s.fps for s in samples]),
        "frames": _summary([s.num_frames for s in samples]),
        "words_per_expression": _summary(words),
        "objects_per_expression": _summary(targets),
        "object_area_pixels": _summary(areas),
        "explanations": sum(1 for e in expressions if e.explanation),
        "forms": {f.value: forms.get(f.value, 0) for f in ALL_FORMS},
        "tags": dict(sorted(tags.items())),
    }


def format_stats(stats: Dict[str, Any]) -> str:
    lines = [f"split: {stats['split']}",
             f"samples: {stats['samples']}",
             f"expressions: {stats['expressions']} ({stats['explanations']} with explanation)",
             f"total duration: {stats['duration_seconds']:.1f} s"]
    for key in ("fps", "frames", "words_per_expression", "objects_per_expression", "object_area_pixels"):
        s = stats[key]
        lines.append(f"{key}: mean {s['mean']:.2f}, min {s['min']:g}, max {s['max']:g}")
    lines.append("forms: " + ", ".join(f"{k}={v}" for k, v in stats["forms"].items()))
    if stats["tags"]:
        lines.append("tags: " + ", ".join(f"{k}={v}" for k, v in stats["tags"].items()))
    return "\n".join(lines)
