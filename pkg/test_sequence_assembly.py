#!/usr/bin/env python3
"""
Tests for audio-visual content layouts and prompt assembly
"""

import sys
from pathlib import Path

import numpy as np
import pytest
import torch
import torch.nn as nn

# Add src directory to path
sys.path.insert(0, str(Path(__file__).parent / "src"))

from src.encoders.encoders import OmniEncoders, TokenBlock
from src.models.data_models import Expression, ExpressionForm
from src.sequence_assembly.sequence_assembly import (
    EMBEDDED, ExpressionSegment, PromptAssembler, clip_lengths, content_tag_pattern,
)
from src.utils.config import AssemblyConfig, EncoderConfig
from src.utils.errors import CompositionError, ContextOverflowError

D = 32
SHORT = {"vision": "v", "audio": "a", "special": "s"}


def make_assembler(tokenizer, **overrides) -> PromptAssembler:
    torch.manual_seed(0)
    embedding = nn.Embedding(len(tokenizer), D)
    settings = dict(frame_separator=False, sparse_pool=4)
    settings.update(overrides)
    return PromptAssembler(AssemblyConfig(**settings), D, 4, tokenizer,
                           lambda ids: embedding(torch.as_tensor(ids, dtype=torch.long)))


def blocks(N: int, L_v: int, L_A: int):
    V = [TokenBlock(torch.randn(L_v, D), "vision", frame_index=i) for i in range(N)]
    return V, TokenBlock(torch.randn(L_A, D), "audio")


def short(tags) -> str:
    return " ".join(SHORT[t] for t in tags)


def expected_avi(N: int, L_v: int, L_A: int) -> list:
    """Frame i gets floor(L_A/N) audio tokens, plus one when it is among the last L_A mod N frames"""
    tags = []
    for i in range(N):
        extra = 1 if i >= N - L_A % N else 0
        tags += ["vision"] * L_v + ["audio"] * (L_A // N + extra)
    return tags


# ---- layouts ----

def test_avi_pattern(tokenizer):
    V, A = blocks(2, 3, 4)
    prompt = make_assembler(tokenizer).interleave_av(V, A, "AVI")
    assert short(prompt.segment_map) == "v v v a a v v v a a"
    assert prompt.L_a == 2 and prompt.N == 2 and prompt.L_A == 4


def test_avi_concat_appends_full_audio(tokenizer):
    V, A = blocks(2, 3, 4)
    prompt = make_assembler(tokenizer).interleave_av(V, A, "AVI_CONCAT")
    assert short(prompt.segment_map) == "v v v a a v v v a a a a a a"
    assert torch.equal(prompt.tokens[-4:], A.tokens)


def test_remainder_goes_to_last_frames(tokenizer):
    assert clip_lengths(7, 3) == [2, 2, 3]
    V, A = blocks(3, 2, 7)
    prompt = make_assembler(tokenizer).interleave_av(V, A, "AVI")
    assert prompt.L_a == 2
    assert prompt.segment_map.count("audio") == 7
    assert short(prompt.segment_map) == "v v a a v v a a v v a a a"


def test_interleaved_audio_keeps_order(tokenizer):
    V, A = blocks(3, 2, 8)
    prompt = make_assembler(tokenizer).interleave_av(V, A, "AVI")
    audio_rows = [i for i, t in enumerate(prompt.segment_map) if t == "audio"]
    assert torch.equal(prompt.tokens[audio_rows], A.tokens)
    vision_frames = [prompt.frame_index[i] for i, t in enumerate(prompt.segment_map) if t == "vision"]
    assert vision_frames == [0, 0, 1, 1, 2, 2]


def test_random_layouts_match_closed_form(tokenizer):
    rng = np.random.default_rng(0)
    assembler = make_assembler(tokenizer)
    for _ in range(200):
        N = int(rng.integers(1, 17))
        L_v = int(rng.integers(1, 6))
        L_A = int(rng.integers(N, 4 * N + 3))
        V, A = blocks(N, L_v, L_A)
        avi = expected_avi(N, L_v, L_A)

        prompt = assembler.interleave_av(V, A, "AVI")
        assert prompt.segment_map == avi
        assert content_tag_pattern([L_v] * N, L_A, "AVI") == avi

        prompt = assembler.interleave_av(V, A, "AVI_CONCAT")
        assert prompt.segment_map == avi + ["audio"] * L_A
        assert len(prompt) == N * L_v + 2 * L_A

        for layout in ("CONCAT", "WEIGHTED_SUM", "ATTENTION"):
            prompt = assembler.interleave_av(V, A, layout)
            assert len(prompt.segment_map) == len(prompt) == len(prompt.frame_index) == len(prompt.token_ids)


def test_concat_and_fusion_layouts(tokenizer):
    V, A = blocks(2, 3, 5)
    assembler = make_assembler(tokenizer)
    assert short(assembler.interleave_av(V, A, "CONCAT").segment_map) == "v v v v v v a a a a a"
    for layout in ("WEIGHTED_SUM", "ATTENTION"):
        prompt = assembler.interleave_av(V, A, layout)
        assert prompt.segment_map == ["vision"] * 6
        assert tuple(prompt.tokens.shape) == (6, D)


def test_attention_fusion_uses_vision_as_queries(tokenizer):
    V, A = blocks(2, 3, 5)
    assembler = make_assembler(tokenizer).eval()
    fused = assembler.interleave_av(V, A, "ATTENTION").tokens
    assert tuple(fused.shape) == (6, D)
    # audio only supplies keys and values, so its order does not matter
    reordered = TokenBlock(A.tokens.flip(0), "audio")
    assert torch.allclose(assembler.interleave_av(V, reordered, "ATTENTION").tokens, fused, atol=1e-5)
    other = TokenBlock(torch.randn(5, D), "audio")
    assert not torch.allclose(assembler.interleave_av(V, other, "ATTENTION").tokens, fused)


def test_fusion_layouts_allow_short_audio(tokenizer):
    V, A = blocks(4, 2, 2)
    prompt = make_assembler(tokenizer).interleave_av(V, A, "WEIGHTED_SUM")
    assert len(prompt) == 8


def test_audio_shorter_than_frames_rejected(tokenizer):
    V, A = blocks(4, 2, 3)
    for layout in ("AVI", "AVI_CONCAT"):
        with pytest.raises(CompositionError, match="audio shorter than one token per frame"):
            make_assembler(tokenizer).interleave_av(V, A, layout)


def test_unknown_layout_rejected(tokenizer):
    V, A = blocks(1, 2, 2)
    with pytest.raises(CompositionError):
        make_assembler(tokenizer).interleave_av(V, A, "INTERLEAVED")


def test_frame_separators(tokenizer):
    V, A = blocks(2, 3, 4)
    prompt = make_assembler(tokenizer, frame_separator=True).interleave_av(V, A, "AVI")
    assert short(prompt.segment_map) == "s v v v a a s v v v a a"
    assert prompt.token_ids[0] == tokenizer.frame_id
    assert prompt.token_ids[1] == EMBEDDED
    assert content_tag_pattern([3, 3], 4, "AVI", separator=True) == prompt.segment_map


def test_sparse_frames_are_pooled(tokenizer):
    V, A = blocks(3, 16, 6)
    prompt = make_assembler(tokenizer).interleave_av(V, A, "AVI", dense=[True, False, True])
    assert prompt.segment_map.count("vision") == 16 + 4 + 16
    assert content_tag_pattern([16, 4, 16], 6, "AVI") == prompt.segment_map


# ---- expressions ----

@pytest.fixture
def encoders():
    torch.manual_seed(1)
    return OmniEncoders(EncoderConfig(d=D, height=32, width=32, n_heads=4, n_layers=1)).eval()


@pytest.fixture
def media():
    rng = np.random.default_rng(0)
    return {
        "p/speech.wav": (rng.uniform(-0.3, 0.3, 4000) * 32768).astype(np.int16),
        "p/sound.wav": (rng.uniform(-0.3, 0.3, 8000) * 32768).astype(np.int16),
        "p/image.png": rng.integers(0, 256, (32, 32, 3), dtype=np.uint8),
    }


@torch.no_grad()
def test_text_form_is_pure_text(tokenizer, encoders, media):
    expression = Expression("e0", ExpressionForm.I, "the red circle", ["obj0"])
    segment = make_assembler(tokenizer).compose_expression(expression, media, encoders)
    assert segment.segment_map == ["text"] * 3
    assert segment.token_ids == tokenizer.encode("the red circle")


@torch.no_grad()
def test_sound_payload_spliced_at_placeholder(tokenizer, encoders, media):
    expression = Expression("e0", ExpressionForm.III, "the object making this sound : <SOUND>", ["obj0"],
                            sound_payload="p/sound.wav")
    segment = make_assembler(tokenizer).compose_expression(expression, media, encoders)
    assert segment.segment_map == ["text"] * 6 + ["sound_payload"] * 10
    assert segment.token_ids[6:] == [EMBEDDED] * 10


@torch.no_grad()
def test_speech_sound_image_form_has_no_text(tokenizer, encoders, media):
    expression = Expression("e0", ExpressionForm.VIII, "", ["obj0"], speech_payload="p/speech.wav",
                            sound_payload="p/sound.wav", image_payload="p/image.png",
                            transcript="the object that looks like <IMAGE> and makes this sound <SOUND>")
    segment = make_assembler(tokenizer).compose_expression(expression, media, encoders)
    assert "text" not in segment.segment_map
    assert segment.segment_map == ["speech_payload"] * 5 + ["sound_payload"] * 10 + ["image_payload"] * 16


def test_missing_payload_rejected(tokenizer, encoders, media):
    assembler = make_assembler(tokenizer)
    orphan = Expression("e0", ExpressionForm.III, "the object making this sound : <SOUND>", ["obj0"])
    with pytest.raises(CompositionError):
        assembler.compose_expression(orphan, media, encoders)
    unloaded = Expression("e1", ExpressionForm.V, "the object that looks like this : <IMAGE>", ["obj0"],
                          image_payload="p/missing.png")
    with pytest.raises(CompositionError):
        assembler.compose_expression(unloaded, media, encoders)


def test_empty_expression_rejected(tokenizer, encoders, media):
    assembler = make_assembler(tokenizer)
    with pytest.raises(CompositionError):
        assembler.compose_expression(Expression("e0", ExpressionForm.I, " ", []), media, encoders)

    V, A = blocks(1, 2, 2)
    content = assembler.interleave_av(V, A, "AVI")
    empty = ExpressionSegment(tokens=torch.zeros(0, D), segment_map=[], token_ids=[])
    with pytest.raises(CompositionError):
        assembler.build_prompt(content, empty)


# ---- template ----

def text_segment(assembler, tokenizer, text: str) -> ExpressionSegment:
    ids = tokenizer.encode(text)
    return ExpressionSegment(tokens=assembler.embed_ids(ids), segment_map=["text"] * len(ids), token_ids=ids)


@torch.no_grad()
def test_prompt_template(tokenizer):
    assembler = make_assembler(tokenizer)
    V, A = blocks(2, 3, 4)
    content = assembler.interleave_av(V, A, "AVI")
    segment = text_segment(assembler, tokenizer, "the red circle")
    answer = tokenizer.encode("it is [SEG] .") + [tokenizer.eos_id]
    prompt = assembler.build_prompt(content, segment, answer)

    system = [tokenizer.bos_id] + tokenizer.encode("segment the referred object .")
    assert prompt.token_ids[:len(system)] == system
    assert prompt.segment_map[0] == "special"
    assert prompt.segment_map[len(system):len(system) + len(content)] == content.segment_map
    assert prompt.token_ids[-len(answer):] == answer
    assert prompt.answer_start == len(prompt) - len(answer)
    assert len(prompt.segment_map) == len(prompt.frame_index) == len(prompt.token_ids) == len(prompt)


@torch.no_grad()
def test_expression_first_order(tokenizer):
    assembler = make_assembler(tokenizer, content_first=False)
    V, A = blocks(1, 2, 2)
    content = assembler.interleave_av(V, A, "AVI")
    prompt = assembler.build_prompt(content, text_segment(assembler, tokenizer, "the red circle"))
    assert prompt.segment_map[-4:] == ["vision", "vision", "audio", "audio"]


@torch.no_grad()
def test_prompt_is_deterministic(tokenizer):
    assembler = make_assembler(tokenizer, frame_separator=True)
    V, A = blocks(2, 4, 6)
    first = assembler.build_prompt(assembler.interleave_av(V, A), text_segment(assembler, tokenizer, "all circles"))
    second = assembler.build_prompt(assembler.interleave_av(V, A), text_segment(assembler, tokenizer, "all circles"))
    assert first.token_ids == second.token_ids
    assert torch.equal(first.tokens, second.tokens)
    assert first.dump() == second.dump()


@torch.no_grad()
def test_context_overflow_reports_lengths(tokenizer):
    assembler = make_assembler(tokenizer)
    V, A = blocks(4, 16, 40)
    content = assembler.interleave_av(V, A, "AVI_CONCAT")
    with pytest.raises(ContextOverflowError) as info:
        assembler.build_prompt(content, text_segment(assembler, tokenizer, "the red circle"), context=100)
    lengths = info.value.lengths
    assert lengths["content"] == 4 * 16 + 80
    assert lengths["expression"] == 3
    assert lengths["system"] == 6


@torch.no_grad()
def test_dump_lists_every_position(tokenizer):
    assembler = make_assembler(tokenizer, frame_separator=True)
    V, A = blocks(1, 2, 2)
    prompt = assembler.interleave_av(V, A, "AVI")
    assert prompt.dump().splitlines() == ["0\tspecial\t0", "1\tvision\t0", "2\tvision\t0",
                                          "3\taudio\t0", "4\taudio\t0"]
