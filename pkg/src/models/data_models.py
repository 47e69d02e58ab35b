from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import List, Dict, Any, Optional, NamedTuple

import numpy as np


SCHEMA_VERSION = "1.0"
FPS_RANGE = (3, 15)


class ExpressionForm(str, Enum):
    """The eight omnimodal expression forms"""
    I = "I"        # text
    II = "II"      # speech
    III = "III"    # text + sound
    IV = "IV"      # speech + sound
    V = "V"        # text + image
    VI = "VI"      # speech + image
    VII = "VII"    # text + sound + image
    VIII = "VIII"  # speech + sound + image


class FormPayloads(NamedTuple):
    speech: bool
    sound: bool
    image: bool


FORM_TRUTH_TABLE: Dict[ExpressionForm, FormPayloads] = {
    ExpressionForm.I: FormPayloads(speech=False, sound=False, image=False),
    ExpressionForm.II: FormPayloads(speech=True, sound=False, image=False),
    ExpressionForm.III: FormPayloads(speech=False, sound=True, image=False),
    ExpressionForm.IV: FormPayloads(speech=True, sound=True, image=False),
    ExpressionForm.V: FormPayloads(speech=False, sound=False, image=True),
    ExpressionForm.VI: FormPayloads(speech=True, sound=False, image=True),
    ExpressionForm.VII: FormPayloads(speech=False, sound=True, image=True),
    ExpressionForm.VIII: FormPayloads(speech=True, sound=True, image=True),
}

ALL_FORMS: List[ExpressionForm] = list(ExpressionForm)


@dataclass
class BinaryMask:
    """Run-length encoded binary mask, row-major, runs alternate background/foreground"""
    height: int
    width: int
    runs: List[int]

    def to_dict(self) -> Dict[str, Any]:
        return {"height": self.height, "width": self.width, "runs": list(self.runs)}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "BinaryMask":
        return cls(height=int(data["height"]), width=int(data["width"]), runs=[int(r) for r in data["runs"]])


@dataclass
class Expression:
    """A referring expression in one of the eight forms"""
    expression_id: str
    form: ExpressionForm
    text: str
    target_ids: List[str]
    speech_payload: Optional[str] = None
    sound_payload: Optional[str] = None
    image_payload: Optional[str] = None
    explanation: Optional[str] = None
    transcript: Optional[str] = None  # source text of speech forms
    tags: List[str] = field(default_factory=list)

    @property
    def is_no_target(self) -> bool:
        return len(self.target_ids) == 0

    def payload_presence(self) -> FormPayloads:
        return FormPayloads(
            speech=self.speech_payload is not None,
            sound=self.sound_payload is not None,
            image=self.image_payload is not None,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "expression_id": self.expression_id,
            "form": self.form.value,
            "text": self.text,
            "target_ids": sorted(self.target_ids),
            "speech_payload": self.speech_payload,
            "sound_payload": self.sound_payload,
            "image_payload": self.image_payload,
            "explanation": self.explanation,
            "transcript": self.transcript,
            "tags": list(self.tags),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Expression":
        return cls(
            expression_id=data["expression_id"],
            form=ExpressionForm(data["form"]),
            text=data.get("text", ""),
            target_ids=sorted(data.get("target_ids", [])),
            speech_payload=data.get("speech_payload"),
            sound_payload=data.get("sound_payload"),
            image_payload=data.get("image_payload"),
            explanation=data.get("explanation"),
            transcript=data.get("transcript"),
            tags=list(data.get("tags", [])),
        )


@dataclass
class ObjectTrack:
    """An object of a video with its per-frame masks; a missing frame means off-screen"""
    object_id: str
    masks: Dict[int, BinaryMask]
    attributes: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "object_id": self.object_id,
            "attributes": self.attributes,
            "masks": {str(k): m.to_dict() for k, m in sorted(self.masks.items())},
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ObjectTrack":
        return cls(
            object_id=data["object_id"],
            masks={int(k): BinaryMask.from_dict(m) for k, m in data.get("masks", {}).items()},
            attributes=dict(data.get("attributes", {})),
        )


@dataclass
class VideoSample:
    """A dataset record: frames, audio track, objects and expressions"""
    sample_id: str
    frames: List[str]
    fps: int
    audio: str
    sample_rate: int
    height: int
    width: int
    objects: List[ObjectTrack] = field(default_factory=list)
    expressions: List[Expression] = field(default_factory=list)
    metadata: Dict[str, Any] = field(default_factory=dict)
    # decoded media keyed by reference; not serialized
    media: Dict[str, np.ndarray] = field(default_factory=dict, repr=False, compare=False)

    @property
    def num_frames(self) -> int:
        return len(self.frames)

    @property
    def object_ids(self) -> List[str]:
        return [obj.object_id for obj in self.objects]

    def get_object(self, object_id: str) -> Optional[ObjectTrack]:
        for obj in self.objects:
            if obj.object_id == object_id:
                return obj
        return None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "sample_id": self.sample_id,
            "frames": list(self.frames),
            "fps": self.fps,
            "audio": self.audio,
            "sample_rate": self.sample_rate,
            "height": self.height,
            "width": self.width,
            "objects": [o.to_dict() for o in self.objects],
            "expressions": [e.to_dict() for e in self.expressions],
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "VideoSample":
        return cls(
            sample_id=data["sample_id"],
            frames=list(data["frames"]),
            fps=int(data["fps"]),
            audio=data["audio"],
            sample_rate=int(data["sample_rate"]),
            height=int(data["height"]),
            width=int(data["width"]),
            objects=[ObjectTrack.from_dict(o) for o in data.get("objects", [])],
            expressions=[Expression.from_dict(e) for e in data.get("expressions", [])],
            metadata=dict(data.get("metadata", {})),
        )


@dataclass
class Manifest:
    """A split of the dataset; media live as sibling files under root"""
    samples: List[VideoSample]
    split: str = "train"
    schema_version: str = SCHEMA_VERSION
    root: Optional[Path] = field(default=None, compare=False)

    def get_sample(self, sample_id: str) -> Optional[VideoSample]:
        for sample in self.samples:
            if sample.sample_id == sample_id:
                return sample
        return None

    def iter_expressions(self):
        for sample in self.samples:
            for expression in sample.expressions:
                yield sample, expression

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema_version": self.schema_version,
            "split": self.split,
            "samples": [s.to_dict() for s in self.samples],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any], root: Optional[Path] = None) -> "Manifest":
        return cls(
            samples=[VideoSample.from_dict(s) for s in data.get("samples", [])],
            split=data.get("split", "train"),
            schema_version=data.get("schema_version", SCHEMA_VERSION),
            root=root,
        )


@dataclass(frozen=True)
class Violation:
    """One schema rule broken by one record"""
    sample_id: str
    field_path: str
    rule: str
    detail: str = ""

    def __str__(self) -> str:
        suffix = f" ({self.detail})" if self.detail else ""
        return f"{self.sample_id}:{self.field_path}: {self.rule}{suffix}"
