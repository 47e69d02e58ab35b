#!/usr/bin/env python3
"""
Tests for the mask codec, manifest storage and schema validation
"""

import copy
import sys
from pathlib import Path

import numpy as np
import pytest

# Add src directory to path
sys.path.insert(0, str(Path(__file__).parent / "src"))

from src.manifest_store.manifest_store import (
    ManifestStore, validate_manifest, frame_ref, audio_ref, payload_ref, float_to_pcm, pcm_to_float,
)
from src.manifest_store.rle_codec import (
    decode_rle, empty_mask, encode_rle, mask_area, read_rle_file, write_rle_file,
)
from src.models.data_models import (
    ALL_FORMS, FORM_TRUTH_TABLE, BinaryMask, Expression, ExpressionForm, Manifest,
)
from src.utils.errors import DataError, MaskCodecError, SchemaError


# ---- RLE codec ----

def test_encode_trivial_grids():
    assert encode_rle(np.zeros((2, 2), dtype=np.uint8)).runs == [4]
    assert encode_rle(np.ones((2, 2), dtype=np.uint8)).runs == [0, 4]


def test_decode_trivial_grids():
    assert not decode_rle(BinaryMask(2, 2, [4])).any()
    assert decode_rle(BinaryMask(2, 2, [0, 4])).all()


def test_decode_row_major_order():
    grid = decode_rle(BinaryMask(2, 2, [1, 2, 1]))
    assert grid.tolist() == [[0, 1], [1, 0]]


def test_round_trip_random_grids():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        grid = (rng.random((16, 16)) < rng.random()).astype(np.uint8)
        mask = encode_rle(grid)
        assert sum(mask.runs) == 256
        assert all(r > 0 for r in mask.runs[1:])
        assert np.array_equal(decode_rle(mask), grid)


def test_non_binary_cell_rejected():
    grid = np.zeros((3, 4), dtype=np.uint8)
    grid[2, 1] = 2
    with pytest.raises(MaskCodecError) as info:
        encode_rle(grid)
    assert info.value.cell == (2, 1)


def test_run_sum_mismatch_names_sample():
    with pytest.raises(SchemaError) as info:
        decode_rle(BinaryMask(2, 2, [1, 2]), sample_id="s00003")
    assert info.value.sample_id == "s00003"
    assert "s00003" in str(info.value)


def test_mask_helpers(tmp_path):
    assert mask_area(empty_mask(4, 5)) == 0
    mask = encode_rle(np.eye(4, dtype=np.uint8))
    assert mask_area(mask) == 4

    write_rle_file(tmp_path / "frame_00000.rle", mask)
    assert read_rle_file(tmp_path / "frame_00000.rle") == mask


# ---- data types ----

def test_form_truth_table():
    assert len(ALL_FORMS) == 8
    assert FORM_TRUTH_TABLE[ExpressionForm.I] == (False, False, False)
    assert FORM_TRUTH_TABLE[ExpressionForm.IV] == (True, True, False)
    assert FORM_TRUTH_TABLE[ExpressionForm.VIII] == (True, True, True)
    assert sum(p.speech for p in FORM_TRUTH_TABLE.values()) == 4


def test_expression_dict_sorts_targets():
    expression = Expression("s_e00", ExpressionForm.I, "all red objects", ["obj2", "obj0"])
    data = expression.to_dict()
    assert data["target_ids"] == ["obj0", "obj2"]
    assert Expression.from_dict(data).target_ids == ["obj0", "obj2"]
    assert not expression.is_no_target


def test_pcm_conversion():
    wave = np.array([0.0, 0.5, -0.5, -1.0], dtype=np.float32)
    pcm = float_to_pcm(wave)
    assert pcm.dtype == np.int16
    assert np.allclose(pcm_to_float(pcm), wave, atol=1 / 32768)


def test_media_refs():
    assert frame_ref("s00001", 3) == "s00001/frames/00003.png"
    assert audio_ref("s00001") == "s00001/audio/track.wav"
    assert payload_ref("s00001", "s00001_e02", "image").endswith(".png")
    assert payload_ref("s00001", "s00001_e02", "sound").endswith(".wav")


# ---- validation ----

def test_synthetic_manifest_is_valid(tiny_manifest):
    assert validate_manifest(tiny_manifest) == []


def test_form_payload_mismatch(tiny_manifest):
    sample = tiny_manifest.samples[0]
    text_form = next(e for e in sample.expressions if e.form == ExpressionForm.I)
    donor = next(e for e in sample.expressions if e.sound_payload is not None)
    text_form.sound_payload = donor.sound_payload

    violations = validate_manifest(tiny_manifest)
    assert [v.rule for v in violations] == ["payload/form mismatch"]
    assert violations[0].sample_id == sample.sample_id


def test_fps_out_of_range(tiny_manifest):
    sample = tiny_manifest.samples[0]
    sample.fps = 30
    violations = validate_manifest(tiny_manifest)
    assert [v.rule for v in violations] == ["fps out of range [3,15]"]


def test_other_violations(tiny_manifest):
    first, second = tiny_manifest.samples
    second.sample_id = first.sample_id
    first.objects[0].masks[0] = BinaryMask(first.height, first.width, [5])
    first.expressions[0].target_ids = ["ghost"]
    rules = {v.rule for v in validate_manifest(tiny_manifest)}
    assert {"duplicate sample id", "mask run-sum mismatch", "unknown target object"} <= rules


def test_speech_text_rules(tiny_manifest):
    sample = tiny_manifest.samples[0]
    speech = next(e for e in sample.expressions if e.form == ExpressionForm.II)
    text = next(e for e in sample.expressions if e.form == ExpressionForm.I)
    speech.text = "the red circle"
    text.text = "  "
    rules = [v.rule for v in validate_manifest(tiny_manifest)]
    assert sorted(rules) == ["speech form carries text", "text form has empty text"]


def test_validation_is_pure(tiny_manifest):
    tiny_manifest.samples[0].fps = 2
    tiny_manifest.split = "dev"
    before = copy.deepcopy(tiny_manifest.to_dict())
    first = validate_manifest(tiny_manifest)
    second = validate_manifest(tiny_manifest)
    assert first == second
    assert tiny_manifest.to_dict() == before
    assert "unknown split" in {v.rule for v in first}


def test_unreadable_media_is_a_violation(tmp_path, tiny_manifest):
    ManifestStore(tmp_path).save(tiny_manifest)
    manifest = ManifestStore(tmp_path).load()
    (tmp_path / manifest.samples[0].frames[0]).unlink()
    violations = validate_manifest(manifest)
    assert [v.rule for v in violations] == ["unresolvable media"]


# ---- storage ----

def test_store_round_trip(tmp_path, tiny_manifest):
    store = ManifestStore(tmp_path / "data")
    store.save(tiny_manifest)
    loaded = store.load(load_media=True)

    assert loaded.to_dict() == tiny_manifest.to_dict()
    assert validate_manifest(loaded) == []
    for original, sample in zip(tiny_manifest.samples, loaded.samples):
        assert set(sample.media) == set(original.media)
        for ref, data in original.media.items():
            assert np.array_equal(sample.media[ref], data), ref


def test_store_missing_manifest(tmp_path):
    with pytest.raises(DataError):
        ManifestStore(tmp_path).load()


def test_store_invalid_json(tmp_path):
    (tmp_path / "manifest.json").write_text("{not json")
    with pytest.raises(SchemaError):
        ManifestStore(tmp_path).load()


def test_empty_manifest_is_valid():
    assert validate_manifest(Manifest(samples=[], split="test")) == []
