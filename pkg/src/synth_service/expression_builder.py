import logging
from collections import Counter
from dataclasses import dataclass, field
from itertools import product
from typing import List, Optional, Tuple, Dict

import numpy as np

from ..models.data_models import Expression, ExpressionForm, VideoSample, ALL_FORMS, FORM_TRUTH_TABLE
from ..models.scene_models import SceneSpec, SpriteSpec, SoundSignature, COLORS, SHAPES, ENVELOPES
from ..models.vocabulary import (
    TEMPLATES, ENVELOPE_PHRASES, REASONING_PHRASES, SHAPE_PLURALS,
)
from ..manifest_store.manifest_store import payload_ref, float_to_pcm, pcm_to_float
from ..utils.config import SynthConfig
from ..utils.errors import DataError
from .scene_generator import SceneGenerator, CARRIERS_HZ
from .speech_codec import ToneCodec

MIN_BUDGET = len(ALL_FORMS)
PAYLOAD_SIZE = 8


def form_group(form: ExpressionForm) -> str:
    payloads = FORM_TRUTH_TABLE[form]
    if payloads.sound and payloads.image:
        return "both"
    if payloads.sound:
        return "sound"
    if payloads.image:
        return "image"
    return "text"


@dataclass
class Candidate:
    """A grounded expression before form-specific payload rendering"""
    template: str
    text: str
    targets: List[str]
    explanation: Optional[str] = None
    tags: List[str] = field(default_factory=list)
    sound: Optional[SoundSignature] = None
    image: Optional[Tuple[str, str, int]] = None  # shape, color, size
    preset: bool = False

    @property
    def kind(self) -> str:
        if not self.targets:
            return "none"
        return "single" if len(self.targets) == 1 else "multi"


def _look(sprite: SpriteSpec) -> Tuple[str, str]:
    return sprite.color, sprite.shape


def _sounding(sprites: List[SpriteSpec]) -> List[SpriteSpec]:
    return [s for s in sprites if s.sound.envelope != "silent" and s.sound.active_intervals]


class ExpressionBuilder:
    """Derives ground-truth expressions of all eight forms from a SceneSpec"""

    def __init__(self, config: SynthConfig, scene_generator: SceneGenerator, codec: ToneCodec):
        self.config = config
        self.scene_generator = scene_generator
        self.codec = codec
        self.logger = logging.getLogger(__name__)

    def derive_expressions(self, sample: VideoSample, spec: SceneSpec, budget: int,
                           rng: Optional[np.random.Generator] = None) -> List[Expression]:
        """Emit `budget` expressions covering every form; payload media are added to sample.media"""
        if budget < MIN_BUDGET:
            raise DataError(f"Expression budget {budget} cannot cover all {MIN_BUDGET} forms")
        rng = rng if rng is not None else np.random.default_rng(spec.seed + 7919)

        pools = {group: self._candidates(group, spec) for group in ("text", "sound", "image", "both")}
        forms = self._plan_forms(budget, rng)
        kinds = self._plan_kinds(forms, pools, rng)

        expressions = []
        for index, (form, kind) in enumerate(zip(forms, kinds)):
            candidate = self._pick(pools[form_group(form)], kind, rng)
            expressions.append(self._materialize(sample, index, form, candidate))

        self.logger.debug(f"Derived {len(expressions)} expressions for {sample.sample_id}")
        return expressions

    def referring_texts(self, spec: SceneSpec) -> List[str]:
        """Every text-form referring phrase the scene supports, in a stable order"""
        return [c.text for c in self._text_candidates(spec)]

    # ---- planning ----

    def _plan_forms(self, budget: int, rng: np.random.Generator) -> List[ExpressionForm]:
        weights = np.asarray(self.config.form_weights or [1.0] * len(ALL_FORMS), dtype=np.float64)
        if len(weights) != len(ALL_FORMS) or (weights < 0).any() or weights.sum() == 0:
            raise DataError("form_weights must give 8 non-negative weights")
        extra = rng.choice(len(ALL_FORMS), size=budget - MIN_BUDGET, p=weights / weights.sum())
        return list(ALL_FORMS) + [ALL_FORMS[i] for i in extra]

    def _plan_kinds(self, forms: List[ExpressionForm], pools: Dict[str, List[Candidate]],
                    rng: np.random.Generator) -> List[str]:
        no_target, multi = self.config.no_target_frac, self.config.multi_target_frac

        def available(form: ExpressionForm) -> List[str]:
            return [k for k in ("single", "multi", "none")
                    if any(c.kind == k and not c.preset for c in pools[form_group(form)])]

        kinds = []
        for form in forms:
            r = rng.random()
            wanted = "none" if r < no_target else "multi" if r < no_target + multi else "single"
            options = available(form)
            if not options:
                raise DataError("No expression candidate available for this scene")
            kinds.append(wanted if wanted in options else options[0])

        self._force_kind(kinds, forms, "none", available, rng, required=True)
        self._force_kind(kinds, forms, "multi", available, rng,
                         required=any("multi" in available(f) for f in forms))

        # scenes built for a benchmark get their benchmark expression on the first text slots
        if any(c.preset for c in pools["text"]):
            for i, form in enumerate(forms[:MIN_BUDGET]):
                if form_group(form) == "text" and kinds[i] == "single":
                    kinds[i] = "preset"
        return kinds

    @staticmethod
    def _force_kind(kinds: List[str], forms: List[ExpressionForm], kind: str, available,
                    rng: np.random.Generator, required: bool) -> None:
        """Turn one slot into `kind` without taking the last slot of another guaranteed kind"""
        if kind in kinds or not required:
            return
        slots = [i for i, form in enumerate(forms)
                 if kind in available(form) and (kinds[i] == "single" or kinds.count(kinds[i]) > 1)]
        if not slots:
            raise DataError(f"No slot can carry a {kind}-target expression")
        kinds[int(rng.choice(slots))] = kind

    @staticmethod
    def _pick(pool: List[Candidate], kind: str, rng: np.random.Generator) -> Candidate:
        if kind == "preset":
            options = [c for c in pool if c.preset]
        else:
            options = [c for c in pool if c.kind == kind and not c.preset]
        if not options:
            raise DataError(f"No {kind} expression candidate available for this scene")
        return options[int(rng.integers(len(options)))]

    # ---- rendering ----

    def _materialize(self, sample: VideoSample, index: int, form: ExpressionForm,
                     candidate: Candidate) -> Expression:
        sid = sample.sample_id
        eid = f"{sid}_e{index:02d}"
        payloads = FORM_TRUTH_TABLE[form]
        expression = Expression(
            expression_id=eid,
            form=form,
            text=candidate.text,
            target_ids=sorted(candidate.targets),
            explanation=candidate.explanation,
            tags=list(candidate.tags),
        )
        if not candidate.targets:
            expression.tags.append("no_target")
        elif len(candidate.targets) > 1:
            expression.tags.append("multi_target")

        if payloads.sound:
            ref = payload_ref(sid, eid, "sound")
            sample.media[ref] = self.scene_generator.render_sound_payload(candidate.sound)
            expression.sound_payload = ref
        if payloads.image:
            ref = payload_ref(sid, eid, "image")
            sample.media[ref] = self.scene_generator.render_image_payload(*candidate.image)
            expression.image_payload = ref
        if payloads.speech:
            ref = payload_ref(sid, eid, "speech")
            speech = float_to_pcm(self.codec.synth_speech(candidate.text))
            if self.codec.decode_speech(pcm_to_float(speech)) != self.codec.text_ids(candidate.text):
                raise DataError(f"{eid}: speech payload does not decode back to its transcript")
            sample.media[ref] = speech
            expression.speech_payload = ref
            expression.transcript = candidate.text
            expression.text = ""
        return expression

    # ---- candidates ----

    def _candidates(self, group: str, spec: SceneSpec) -> List[Candidate]:
        if group == "text":
            return self._text_candidates(spec)
        if group == "sound":
            return self._sound_candidates(spec)
        if group == "image":
            return self._image_candidates(spec)
        return self._sound_image_candidates(spec)

    def _text_candidates(self, spec: SceneSpec) -> List[Candidate]:
        sprites = spec.sprites
        colors = Counter(s.color for s in sprites)
        shapes = Counter(s.shape for s in sprites)
        envelopes = Counter(s.sound.envelope for s in sprites)
        out: List[Candidate] = []

        for color, shape in product(COLORS, SHAPES):
            targets = [s.sprite_id for s in sprites if _look(s) == (color, shape)]
            if len(targets) <= 1:
                out.append(Candidate("attribute", TEMPLATES["attribute"].format(color=color, shape=shape), targets))

        for color in COLORS:
            if colors[color] != 1:
                targets = [s.sprite_id for s in sprites if s.color == color]
                out.append(Candidate("color_all", TEMPLATES["color_all"].format(color=color), targets))

        for shape in SHAPES:
            if shapes[shape] != 1:
                targets = [s.sprite_id for s in sprites if s.shape == shape]
                out.append(Candidate("shape_all",
                                     TEMPLATES["shape_all"].format(shape_plural=SHAPE_PLURALS[shape]), targets))

        for envelope in ENVELOPES:
            targets = [s.sprite_id for s in sprites if s.sound.envelope == envelope]
            phrase = ENVELOPE_PHRASES[envelope]
            if envelopes[envelope] <= 1:
                out.append(Candidate("sound_content",
                                     TEMPLATES["sound_content"].format(envelope_phrase=phrase), targets))
                reason, explanation = REASONING_PHRASES[envelope]
                out.append(Candidate("reasoning", TEMPLATES["reasoning"].format(reason=reason), targets,
                                     explanation=explanation if targets else None, tags=["reasoning"]))
            else:
                out.append(Candidate("sound_content_all",
                                     TEMPLATES["sound_content_all"].format(envelope_phrase=phrase), targets))

        sounding = _sounding(sprites)
        if spec.preset == "crossing" and sounding:
            first = min(sounding, key=lambda s: min(a for a, _ in s.sound.active_intervals))
            out.append(Candidate("first_sounder", TEMPLATES["first_sounder"], [first.sprite_id],
                                 tags=["crossing"], preset=True))
        if spec.preset == "sync" and len(sounding) >= 2:
            ordered = sorted(sounding, key=lambda s: s.sound.carrier_hz)
            for pitch, sprite in (("higher", ordered[-1]), ("lower", ordered[0])):
                out.append(Candidate("pitch", TEMPLATES["pitch"].format(pitch=pitch), [sprite.sprite_id],
                                     tags=["sync_critical"], preset=True))
        return out

    def _sound_candidates(self, spec: SceneSpec) -> List[Candidate]:
        out = [Candidate("sound_payload", TEMPLATES["sound_payload"], [s.sprite_id], sound=s.sound)
               for s in _sounding(spec.sprites)]
        used = {s.sound.carrier_hz for s in spec.sprites}
        for carrier in CARRIERS_HZ:
            if carrier not in used:
                absent = SoundSignature(carrier_hz=carrier, envelope="steady", active_intervals=[])
                out.append(Candidate("sound_payload", TEMPLATES["sound_payload"], [], sound=absent))
                break
        return out

    def _image_candidates(self, spec: SceneSpec) -> List[Candidate]:
        sprites = spec.sprites
        out = []
        for color, shape in product(COLORS, SHAPES):
            targets = [s.sprite_id for s in sprites if _look(s) == (color, shape)]
            template = "image_payload_all" if len(targets) > 1 else "image_payload"
            size = next((s.size for s in sprites if _look(s) == (color, shape)), PAYLOAD_SIZE)
            out.append(Candidate(template, TEMPLATES[template], targets, image=(shape, color, size)))
        return out

    def _sound_image_candidates(self, spec: SceneSpec) -> List[Candidate]:
        sprites = spec.sprites
        out = []
        for s in _sounding(sprites):
            out.append(Candidate("sound_image_and", TEMPLATES["sound_image_and"], [s.sprite_id],
                                 sound=s.sound, image=(s.shape, s.color, s.size)))
            for t in sprites:
                if t.sprite_id == s.sprite_id:
                    continue
                look_matches = [x.sprite_id for x in sprites if _look(x) == _look(t)]
                both = [x for x in look_matches if x == s.sprite_id]
                out.append(Candidate("sound_image_and", TEMPLATES["sound_image_and"], both,
                                     sound=s.sound, image=(t.shape, t.color, t.size)))
                union = sorted(set(look_matches) | {s.sprite_id})
                out.append(Candidate("sound_image_or", TEMPLATES["sound_image_or"], union,
                                     sound=s.sound, image=(t.shape, t.color, t.size)))
        return out
