import json
import logging
from pathlib import Path
from typing import List, Optional, Dict, Set

import cv2
import numpy as np
from scipy.io import wavfile
from tqdm import tqdm

from ..models.data_models import (
    Manifest, VideoSample, Violation, FORM_TRUTH_TABLE, FPS_RANGE, SCHEMA_VERSION,
)
from ..utils.errors import DataError, SchemaError
from .rle_codec import decode_rle

MANIFEST_FILE = "manifest.json"


def frame_ref(sample_id: str, index: int) -> str:
    return f"{sample_id}/frames/{index:05d}.png"


def audio_ref(sample_id: str) -> str:
    return f"{sample_id}/audio/track.wav"


def payload_ref(sample_id: str, expression_id: str, kind: str) -> str:
    suffix = "png" if kind == "image" else "wav"
    return f"{sample_id}/payloads/{expression_id}_{kind}.{suffix}"


def write_frame(path: Path, rgb: np.ndarray):
    path.parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(path), cv2.cvtColor(rgb, cv2.COLOR_RGB2BGR)):
        raise DataError(f"Could not write frame {path}")


def read_frame(path: Path) -> np.ndarray:
    bgr = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if bgr is None:
        raise DataError(f"Could not read frame {path}")
    return cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB)


def write_audio(path: Path, pcm: np.ndarray, sample_rate: int):
    path.parent.mkdir(parents=True, exist_ok=True)
    wavfile.write(str(path), sample_rate, np.asarray(pcm, dtype=np.int16))


def read_audio(path: Path) -> np.ndarray:
    _, pcm = wavfile.read(str(path))
    if pcm.dtype != np.int16 or pcm.ndim != 1:
        raise DataError(f"{path}: expected mono 16-bit PCM, got {pcm.dtype} with shape {pcm.shape}")
    return pcm


def pcm_to_float(pcm: np.ndarray) -> np.ndarray:
    return np.asarray(pcm, dtype=np.float32) / 32768.0


def float_to_pcm(wave: np.ndarray) -> np.ndarray:
    return np.round(np.clip(wave, -1.0, 32767 / 32768) * 32768.0).astype(np.int16)


def sample_media_refs(sample: VideoSample) -> List[str]:
    refs = list(sample.frames) + [sample.audio]
    for expression in sample.expressions:
        for ref in (expression.speech_payload, expression.sound_payload, expression.image_payload):
            if ref is not None:
                refs.append(ref)
    return refs


class ManifestStore:
    """Reads and writes manifests with media stored as sibling files"""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.logger = logging.getLogger(__name__)

    @property
    def manifest_path(self) -> Path:
        return self.root / MANIFEST_FILE

    def save(self, manifest: Manifest) -> Path:
        """Write the manifest document and every in-memory media array"""
        try:
            self.root.mkdir(parents=True, exist_ok=True)
            for sample in tqdm(manifest.samples, desc="Writing samples", disable=len(manifest.samples) < 2):
                for ref, data in sorted(sample.media.items()):
                    target = self.root / ref
                    if ref.endswith(".png"):
                        write_frame(target, data)
                    else:
                        write_audio(target, data, sample.sample_rate)

            with open(self.manifest_path, "w") as f:
                json.dump(manifest.to_dict(), f, indent=1, sort_keys=True)

            manifest.root = self.root
            self.logger.info(f"Saved {len(manifest.samples)} samples to {self.manifest_path}")
            return self.manifest_path

        except Exception as e:
            self.logger.error(f"Error saving manifest to {self.root}: {e}")
            raise

    def load(self, load_media: bool = False) -> Manifest:
        if not self.manifest_path.exists():
            raise DataError(f"Manifest not found: {self.manifest_path}")
        try:
            with open(self.manifest_path, "r") as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise SchemaError(f"Manifest {self.manifest_path} is not valid JSON: {e}") from e

        manifest = Manifest.from_dict(data, root=self.root)
        if load_media:
            for sample in manifest.samples:
                self.load_media(sample)
        self.logger.info(f"Loaded {len(manifest.samples)} samples from {self.manifest_path}")
        return manifest

    def load_media(self, sample: VideoSample) -> VideoSample:
        """Decode every media file of a sample into sample.media"""
        for ref in sample_media_refs(sample):
            if ref in sample.media:
                continue
            path = self.root / ref
            sample.media[ref] = read_frame(path) if ref.endswith(".png") else read_audio(path)
        return sample


def _read_media(ref: str, sample: VideoSample, root: Optional[Path]) -> np.ndarray:
    if ref in sample.media:
        return sample.media[ref]
    if root is None:
        raise DataError(f"media {ref} is not in memory and the manifest has no root")
    path = Path(root) / ref
    if not path.exists():
        raise FileNotFoundError(str(path))
    return read_frame(path) if ref.endswith(".png") else read_audio(path)


def validate_manifest(manifest: Manifest) -> List[Violation]:
    """Check every schema invariant; returns an empty list iff the manifest is well formed"""
    violations: List[Violation] = []
    seen_ids: Set[str] = set()

    if manifest.schema_version != SCHEMA_VERSION:
        violations.append(Violation("*", "schema_version", "schema version mismatch",
                                    f"{manifest.schema_version} != {SCHEMA_VERSION}"))
    if manifest.split not in ("train", "test"):
        violations.append(Violation("*", "split", "unknown split", manifest.split))

    for sample in manifest.samples:
        sid = sample.sample_id
        if sid in seen_ids:
            violations.append(Violation(sid, "sample_id", "duplicate sample id"))
        seen_ids.add(sid)
        violations.extend(_validate_sample(sample, manifest.root))

    return violations


def _validate_sample(sample: VideoSample, root: Optional[Path]) -> List[Violation]:
    sid = sample.sample_id
    out: List[Violation] = []

    fps_ok = FPS_RANGE[0] <= sample.fps <= FPS_RANGE[1]
    if not fps_ok:
        out.append(Violation(sid, "fps", f"fps out of range [{FPS_RANGE[0]},{FPS_RANGE[1]}]", str(sample.fps)))

    # media
    readable: Dict[str, np.ndarray] = {}
    for ref in sample_media_refs(sample):
        if ref in readable:
            continue
        try:
            readable[ref] = _read_media(ref, sample, root)
        except FileNotFoundError:
            out.append(Violation(sid, ref, "unresolvable media"))
        except Exception as e:
            out.append(Violation(sid, ref, "unreadable media", str(e)))

    for index, ref in enumerate(sample.frames):
        frame = readable.get(ref)
        if frame is not None and tuple(frame.shape[:2]) != (sample.height, sample.width):
            out.append(Violation(sid, f"frames[{index}]", "frame resolution mismatch",
                                 f"{frame.shape[:2]} != {(sample.height, sample.width)}"))

    audio = readable.get(sample.audio)
    if audio is not None and fps_ok and sample.frames:
        expected = len(sample.frames) / sample.fps * sample.sample_rate
        if abs(len(audio) - expected) > 1:
            out.append(Violation(sid, "audio", "audio duration mismatch",
                                 f"{len(audio)} samples, expected {expected:.1f}"))

    # objects
    object_ids = set()
    for obj in sample.objects:
        if obj.object_id in object_ids:
            out.append(Violation(sid, f"objects.{obj.object_id}", "duplicate object id"))
        object_ids.add(obj.object_id)
        for frame_index, mask in obj.masks.items():
            path = f"objects.{obj.object_id}.masks[{frame_index}]"
            if not 0 <= frame_index < len(sample.frames):
                out.append(Violation(sid, path, "mask frame index out of range"))
            if (mask.height, mask.width) != (sample.height, sample.width):
                out.append(Violation(sid, path, "mask resolution mismatch"))
            try:
                decode_rle(mask, sample_id=sid)
            except SchemaError as e:
                out.append(Violation(sid, path, "mask run-sum mismatch", str(e)))

    # expressions
    expression_ids = set()
    for expression in sample.expressions:
        path = f"expressions.{expression.expression_id}"
        if expression.expression_id in expression_ids:
            out.append(Violation(sid, path, "duplicate expression id"))
        expression_ids.add(expression.expression_id)

        expected = FORM_TRUTH_TABLE[expression.form]
        if expression.payload_presence() != expected:
            out.append(Violation(sid, path, "payload/form mismatch",
                                 f"form {expression.form.value} expects {expected._asdict()}"))
        if expected.speech and expression.text:
            out.append(Violation(sid, f"{path}.text", "speech form carries text"))
        if not expected.speech and not expression.text.strip():
            out.append(Violation(sid, f"{path}.text", "text form has empty text"))

        unknown = sorted(set(expression.target_ids) - object_ids)
        if unknown:
            out.append(Violation(sid, f"{path}.target_ids", "unknown target object", ",".join(unknown)))

    return out
