#!/usr/bin/env python3
"""
Tests for the synthetic scene generator, expression builder and tone-code speech
"""

import sys
from pathlib import Path

import numpy as np
import pytest

# Add src directory to path
sys.path.insert(0, str(Path(__file__).parent / "src"))

from src.manifest_store.dataset_card import dataset_stats, format_stats
from src.manifest_store.manifest_store import float_to_pcm, pcm_to_float, validate_manifest
from src.manifest_store.rle_codec import decode_rle
from src.models.data_models import ALL_FORMS, FORM_TRUTH_TABLE
from src.models.scene_models import BACKGROUND_RGB, COLORS, SceneSpec, SoundSignature, SpriteSpec
from src.synth_service.scene_generator import rasterize_sprite, shade
from src.utils.errors import DataError


def single_circle_spec() -> SceneSpec:
    sprite = SpriteSpec("obj0", "circle", "red", 4, [(0.0, 8.0, 16.0), (2.0, 24.0, 16.0)],
                        SoundSignature(440.0, "steady", [(0.5, 1.5)]))
    return SceneSpec("s_circle", 32, 32, duration=2.0, fps=5, sprites=[sprite], seed=3)


def two_sprite_spec(**looks) -> SceneSpec:
    a = looks.get("a", ("circle", "red", "pulsed"))
    b = looks.get("b", ("circle", "blue", "steady"))
    sprites = [
        SpriteSpec("obj0", a[0], a[1], 4, [(0.0, 8.0, 8.0), (2.0, 20.0, 8.0)],
                   SoundSignature(330.0, a[2], [(0.0, 2.0)])),
        SpriteSpec("obj1", b[0], b[1], 4, [(0.0, 20.0, 22.0), (2.0, 8.0, 22.0)],
                   SoundSignature(523.0, b[2], [(0.0, 2.0)])),
    ]
    return SceneSpec("s_pair", 32, 32, duration=2.0, fps=3, sprites=sprites, seed=5)


def centroid_x(sample, object_id: str, frame: int) -> float:
    grid = decode_rle(sample.get_object(object_id).masks[frame])
    return float(np.argwhere(grid)[:, 1].mean())


# ---- scenes ----

def test_single_circle_scene(synthesizer):
    spec = single_circle_spec()
    sample = synthesizer.scene_generator.generate_scene(spec)

    assert sample.num_frames == 10
    assert len(sample.objects) == 1
    assert sorted(sample.objects[0].masks) == list(range(10))
    assert all(decode_rle(m).any() for m in sample.objects[0].masks.values())

    audio = sample.media[sample.audio]
    assert len(audio) == 32000
    t = np.arange(len(audio)) / 16000
    active = (t >= 0.5) & (t < 1.5)
    assert not audio[~active].any()
    assert np.count_nonzero(audio[active]) > 0.9 * active.sum()


def test_scene_is_deterministic(synthesizer):
    generator = synthesizer.scene_generator
    first = generator.generate_scene(generator.random_scene_spec("s00000", 11))
    second = generator.generate_scene(generator.random_scene_spec("s00000", 11))
    assert first.to_dict() == second.to_dict()
    assert set(first.media) == set(second.media)
    for ref in first.media:
        assert np.array_equal(first.media[ref], second.media[ref])


def test_crossing_scene_swaps_order(synthesizer):
    generator = synthesizer.scene_generator
    sample = generator.generate_scene(generator.random_scene_spec("s00000", 4, "crossing"))
    last = sample.num_frames - 1
    start = centroid_x(sample, "obj0", 0) - centroid_x(sample, "obj1", 0)
    end = centroid_x(sample, "obj0", last) - centroid_x(sample, "obj1", last)
    assert start * end < 0


def centroid_y(sample, object_id: str, frame: int) -> float:
    grid = decode_rle(sample.get_object(object_id).masks[frame])
    return float(np.argwhere(grid)[:, 0].mean())


def test_crossing_target_is_not_given_away_by_position(synthesizer):
    generator = synthesizer.scene_generator
    target_above, target_ids = set(), set()
    for seed in range(24):
        sample = generator.generate_scene(generator.random_scene_spec(f"s{seed:05d}", seed, "crossing"))
        target = next(o for o in sample.objects if o.attributes["envelope"] != "silent")
        other = next(o for o in sample.objects if o.object_id != target.object_id)
        target_ids.add(target.object_id)
        target_above.add(centroid_y(sample, target.object_id, 0) < centroid_y(sample, other.object_id, 0))
        assert any((decode_rle(target.masks[k]) & decode_rle(other.masks[k])).any()
                   for k in range(sample.num_frames))
    assert target_above == {True, False}
    assert target_ids == {"obj0", "obj1"}


def test_sync_scene_alternates(synthesizer):
    generator = synthesizer.scene_generator
    spec = generator.random_scene_spec("s00000", 2, "sync")
    low, high = spec.sprites
    assert low.sound.carrier_hz < high.sound.carrier_hz
    assert (low.color, low.shape) == (high.color, high.shape)
    for t in np.linspace(0.05, spec.duration - 0.05, 12):
        assert low.sound.is_active(t) != high.sound.is_active(t)


def test_zero_area_sprite_rejected():
    with pytest.raises(DataError):
        rasterize_sprite("circle", 10, 10, 0, 32, 32)
    spec = single_circle_spec()
    spec.sprites[0].size = 0
    with pytest.raises(DataError):
        spec.validate()


def test_unknown_preset_rejected(synthesizer):
    with pytest.raises(DataError):
        synthesizer.scene_generator.random_scene_spec("s00000", 0, "swarm")


# ---- expressions ----

def test_budget_below_forms_rejected(synthesizer):
    spec = two_sprite_spec()
    sample = synthesizer.scene_generator.generate_scene(spec)
    with pytest.raises(DataError):
        synthesizer.expression_builder.derive_expressions(sample, spec, 7)


def test_expressions_cover_every_form(synthesizer):
    spec = two_sprite_spec()
    sample = synthesizer.scene_generator.generate_scene(spec)
    expressions = synthesizer.expression_builder.derive_expressions(sample, spec, 12)

    assert len(expressions) == 12
    assert {e.form for e in expressions} == set(ALL_FORMS)
    assert any(e.is_no_target for e in expressions)
    assert [e.expression_id for e in expressions] == [f"s_pair_e{i:02d}" for i in range(12)]
    for expression in expressions:
        assert expression.payload_presence() == FORM_TRUTH_TABLE[expression.form]
        assert set(expression.target_ids) <= {"obj0", "obj1"}
        if FORM_TRUTH_TABLE[expression.form].speech:
            assert expression.text == "" and expression.transcript
        for ref in (expression.speech_payload, expression.sound_payload, expression.image_payload):
            if ref is not None:
                assert ref in sample.media


@pytest.mark.parametrize("preset", ["random", "crossing", "sync"])
def test_every_sample_keeps_no_target_and_multi_target_guarantees(synthesizer, preset):
    manifest = synthesizer.synthesize(40, seed=1, preset=preset)
    for sample in manifest.samples:
        assert any(e.is_no_target for e in sample.expressions), sample.sample_id
        colors = [o.attributes["color"] for o in sample.objects]
        shapes = [o.attributes["shape"] for o in sample.objects]
        if len(set(colors)) < len(colors) or len(set(shapes)) < len(shapes):
            assert any(len(e.target_ids) > 1 for e in sample.expressions), sample.sample_id


def candidates_by_text(synthesizer, spec):
    return {c.text: c for c in synthesizer.expression_builder._candidates("text", spec)}


def test_sound_content_template_targets_pulsed_sprite(synthesizer):
    candidates = candidates_by_text(synthesizer, two_sprite_spec())
    assert candidates["the object sounding intermittently"].targets == ["obj0"]
    reasoning = candidates["which object is most likely raising an alarm ?"]
    assert reasoning.targets == ["obj0"]
    assert reasoning.explanation == "because its sound is pulsed"


def test_absent_shape_is_no_target(synthesizer):
    candidates = candidates_by_text(synthesizer, two_sprite_spec())
    assert candidates["the red triangle"].targets == []
    assert candidates["all triangles"].targets == []


def test_shared_color_is_multi_target(synthesizer):
    spec = two_sprite_spec(a=("circle", "red", "pulsed"), b=("square", "red", "steady"))
    candidates = candidates_by_text(synthesizer, spec)
    assert sorted(candidates["all red objects"].targets) == ["obj0", "obj1"]


def test_image_payload_is_a_sprite_crop(synthesizer):
    image = synthesizer.scene_generator.render_image_payload("square", "red", 3)
    assert image.shape == (32, 32, 3) and image.dtype == np.uint8
    # a 7x7 square plus one pixel of margin, scaled to the canvas
    covered = np.all(image == shade(COLORS["red"], True), axis=-1).mean()
    assert covered == pytest.approx(49 / 81, abs=0.08)
    assert np.array_equal(image[0, 0], BACKGROUND_RGB)
    assert np.array_equal(image[16, 16], shade(COLORS["red"], True))


def test_sound_payload_is_isolated_signature(synthesizer):
    spec = two_sprite_spec()
    sound_candidates = synthesizer.expression_builder._candidates("sound", spec)
    targeted = [c for c in sound_candidates if c.targets]
    assert sorted(c.targets[0] for c in targeted) == ["obj0", "obj1"]
    assert any(not c.targets for c in sound_candidates)

    payload = synthesizer.scene_generator.render_sound_payload(spec.sprites[1].sound)
    spectrum = np.abs(np.fft.rfft(pcm_to_float(payload)))
    peak_hz = np.argmax(spectrum) * synthesizer.config.sample_rate / len(payload)
    assert abs(peak_hz - 523.0) < 5


# ---- speech ----

def test_speech_is_deterministic_and_injective(synthesizer):
    codec = synthesizer.codec
    first = codec.synth_speech("the red circle")
    assert np.array_equal(first, codec.synth_speech("the red circle"))
    other = codec.synth_speech("the red square")
    assert first.shape != other.shape or not np.array_equal(first, other)


def test_empty_text_gives_empty_waveform(synthesizer):
    assert synthesizer.codec.synth_speech("").size == 0
    assert synthesizer.codec.decode_speech(np.zeros(0)) == []


def test_out_of_vocabulary_speech_rejected(synthesizer):
    codec = synthesizer.codec
    for text in ("the dog", "the cat", "the red zebra"):
        with pytest.raises(DataError):
            codec.synth_speech(text)
    assert codec.synth_speech("the red <SOUND>").size > 0


def test_speech_decoder_recovers_transcripts(synthesizer, tokenizer):
    codec = synthesizer.codec
    texts = synthesizer.expression_builder.referring_texts(two_sprite_spec())
    assert texts
    for text in texts:
        stored = pcm_to_float(float_to_pcm(codec.synth_speech(text)))
        assert codec.decode_speech(stored) == tokenizer.encode(text)


# ---- datasets ----

def test_synthesized_dataset(synthesizer):
    manifest = synthesizer.synthesize(3, seed=9, split="test", preset="crossing")
    assert manifest.split == "test"
    assert validate_manifest(manifest) == []
    for sample in manifest.samples:
        assert len(sample.expressions) == synthesizer.config.expression_budget
    assert any("crossing" in e.tags for _, e in manifest.iter_expressions())


def test_dataset_is_deterministic_per_index(synthesizer):
    small = synthesizer.synthesize(1, seed=5)
    large = synthesizer.synthesize(2, seed=5)
    assert small.samples[0].to_dict() == large.samples[0].to_dict()
    assert large.samples[0].to_dict() != large.samples[1].to_dict()


def test_bad_split_rejected(synthesizer):
    with pytest.raises(DataError):
        synthesizer.synthesize(1, seed=0, split="dev")


def test_alignment_pairs(synthesizer, tokenizer):
    pairs = synthesizer.alignment_pairs(5, seed=0)
    assert len(pairs) == 5
    for wave, text in pairs:
        assert synthesizer.codec.decode_speech(wave) == tokenizer.encode(text)


def test_dataset_stats(tiny_manifest):
    stats = dataset_stats(tiny_manifest)
    assert stats["samples"] == 2
    assert stats["expressions"] == 16
    assert stats["fps"]["mean"] == 3
    assert stats["frames"]["max"] == 6
    assert sum(stats["forms"].values()) == 16
    assert all(stats["forms"][f.value] >= 2 for f in ALL_FORMS)
    assert stats["tags"].get("no_target", 0) >= 2
    assert 0 < stats["object_area_pixels"]["min"] <= stats["object_area_pixels"]["max"] < 32 * 32
    assert "expressions: 16" in format_stats(stats)
    assert "object_area_pixels: mean" in format_stats(stats)
