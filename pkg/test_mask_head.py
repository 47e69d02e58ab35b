#!/usr/bin/env python3
"""
Tests for the feature pyramid, mask decoder and the QP / OTSA regimes
"""

import sys
from pathlib import Path

import numpy as np
import pytest
import torch
import torch.nn as nn

# Add src directory to path
sys.path.insert(0, str(Path(__file__).parent / "src"))

from src.core_lm.core_lm import SegQuery
from src.mask_head.mask_head import MaskDecoder
from src.utils.config import MaskHeadConfig
from src.utils.errors import ConfigError, DataError

D = 32


@pytest.fixture
def decoder():
    torch.manual_seed(0)
    return MaskDecoder(MaskHeadConfig(channels=32, n_heads=4, ffn_dim=64), d=D, query_dim=D).eval()


def frame_tokens(n: int, L: int = 16, seed: int = 0) -> list:
    generator = torch.Generator().manual_seed(seed)
    return [torch.randn(L, D, generator=generator) for _ in range(n)]


def query(seed: int = 0) -> SegQuery:
    return SegQuery(embedding=torch.randn(D, generator=torch.Generator().manual_seed(seed)), source_position=0)


@torch.no_grad()
def test_pyramid_shapes(decoder):
    pyramid = decoder.build_pyramid(frame_tokens(1, L=64)[0])
    assert {s: tuple(x.shape) for s, x in pyramid.scales.items()} == {8: (32, 8, 8), 16: (32, 4, 4), 32: (32, 2, 2)}
    assert tuple(pyramid.mask_features.shape) == (32, 16, 16)
    assert pyramid.frame_size == (64, 64)


@torch.no_grad()
def test_zero_tokens_give_adapter_biases(decoder):
    scales = decoder.adapter(torch.zeros(1, D, 8, 8))
    for stride, conv in ((8, decoder.adapter.to_s8), (16, decoder.adapter.to_s16), (32, decoder.adapter.to_s32)):
        expected = conv.bias[None, :, None, None].expand_as(scales[stride])
        assert torch.allclose(scales[stride], expected, atol=1e-7)


def test_token_grid_must_be_square(decoder):
    with pytest.raises(DataError):
        decoder.build_pyramid(torch.zeros(15, D))
    with pytest.raises(DataError):
        decoder.build_pyramid(torch.zeros(4, D))


def test_decoder_has_no_self_attention(decoder):
    names = [name for name, _ in decoder.named_parameters()]
    assert not any("self_attn" in name for name in names)
    attention = [m for m in decoder.modules() if isinstance(m, nn.MultiheadAttention)]
    assert len(attention) == len(decoder.blocks) == 3
    with pytest.raises(ConfigError):
        MaskDecoder(MaskHeadConfig(self_attention=True), d=D, query_dim=D)


@torch.no_grad()
def test_logits_at_frame_resolution(decoder):
    pyramid = decoder.build_pyramid(frame_tokens(1)[0], frame_size=(32, 32))
    logits, state = decoder.decode_frame(decoder.init_state(query()), pyramid)
    assert tuple(logits.shape) == (32, 32)
    assert state.frame_cursor == 1
    assert len(state.mask_logits_history) == 1
    assert decoder.binarize(logits).dtype == torch.bool


@torch.no_grad()
def test_pixel_stem_adds_local_detail(decoder):
    tokens = frame_tokens(1)[0]
    image = torch.zeros(3, 32, 32)
    pyramid = decoder.build_pyramid(tokens, (32, 32), image)
    assert tuple(pyramid.pixel_features.shape) == (32, 32, 32)
    logits, _ = decoder.decode_frame(decoder.init_state(query()), pyramid)
    assert tuple(logits.shape) == (32, 32)

    image[:, 10, 20] = 1.0
    changed, _ = decoder.decode_frame(decoder.init_state(query()), decoder.build_pyramid(tokens, (32, 32), image))
    rows, cols = torch.nonzero((changed - logits).abs() > 1e-6, as_tuple=True)
    assert len(rows) > 0
    # two 3x3 convolutions reach two pixels
    assert (rows - 10).abs().max() <= 2 and (cols - 20).abs().max() <= 2


def test_frame_image_must_match_frame_size(decoder):
    with pytest.raises(DataError):
        decoder.build_pyramid(frame_tokens(1)[0], (32, 32), torch.zeros(3, 16, 16))


@torch.no_grad()
def test_pixel_stem_can_be_disabled():
    decoder = MaskDecoder(MaskHeadConfig(channels=32, n_heads=4, ffn_dim=64, pixel_stem=False), d=D, query_dim=D)
    pyramid = decoder.build_pyramid(frame_tokens(1)[0], (32, 32), torch.zeros(3, 32, 32))
    assert pyramid.pixel_features is None
    assert not any(name.startswith("pixel_stem") for name, _ in decoder.named_parameters())


@torch.no_grad()
def test_single_frame_regimes_agree(decoder):
    pyramids = [decoder.build_pyramid(t, (32, 32)) for t in frame_tokens(1)]
    qp = decoder.segment_sequence(query(), pyramids, "QP")
    otsa = decoder.segment_sequence(query(), pyramids, "OTSA")
    assert torch.equal(qp[0], otsa[0])


@torch.no_grad()
def test_regimes_diverge_after_first_frame(decoder):
    pyramids = [decoder.build_pyramid(t, (32, 32)) for t in frame_tokens(3, seed=1)]
    qp = decoder.segment_sequence(query(), pyramids, "QP")
    otsa = decoder.segment_sequence(query(), pyramids, "OTSA")
    assert torch.equal(qp[0], otsa[0])
    assert not torch.allclose(qp[1], otsa[1])


@torch.no_grad()
def test_otsa_is_permutation_equivariant(decoder):
    pyramids = [decoder.build_pyramid(t, (32, 32)) for t in frame_tokens(5, seed=2)]
    order = [4, 2, 0, 3, 1]
    reference = decoder.segment_sequence(query(), pyramids, "OTSA")
    permuted = decoder.segment_sequence(query(), [pyramids[i] for i in order], "OTSA")
    for position, source in enumerate(order):
        assert torch.equal(permuted[position], reference[source])


@torch.no_grad()
def test_identical_frames_under_otsa(decoder):
    tokens = frame_tokens(1, seed=3)[0]
    pyramids = [decoder.build_pyramid(tokens, (32, 32)), decoder.build_pyramid(tokens.clone(), (32, 32))]
    first, second = decoder.segment_sequence(query(), pyramids, "OTSA")
    assert torch.equal(decoder.binarize(first), decoder.binarize(second))


@torch.no_grad()
def test_qp_is_causal(decoder):
    tokens = frame_tokens(6, seed=4)
    pyramids = [decoder.build_pyramid(t, (32, 32)) for t in tokens]
    reference = decoder.segment_sequence(query(), pyramids, "QP")
    for t in (0, 2, 4):
        altered = pyramids[:t + 1] + [decoder.build_pyramid(x, (32, 32)) for x in frame_tokens(5 - t, seed=9)]
        logits = decoder.segment_sequence(query(), altered, "QP")
        for k in range(t + 1):
            assert torch.equal(logits[k], reference[k])


def test_regime_edge_cases(decoder):
    assert decoder.segment_sequence(query(), [], "QP") == []
    with pytest.raises(ConfigError):
        decoder.segment_sequence(query(), [], "BOTH")


def test_mask_gradient_matches_finite_differences(decoder):
    decoder = decoder.double()
    tokens = [t.double() for t in frame_tokens(2, seed=5)]
    seg = SegQuery(embedding=query().embedding.double(), source_position=0)
    weights = torch.randn(2, 32, 32, dtype=torch.float64, generator=torch.Generator().manual_seed(6))
    param = decoder.mask_embed.weight

    def objective() -> torch.Tensor:
        pyramids = [decoder.build_pyramid(t, (32, 32)) for t in tokens]
        return (torch.stack(decoder.segment_sequence(seg, pyramids, "QP")) * weights).sum()

    decoder.zero_grad()
    objective().backward()
    analytic = param.grad.clone()

    rng = np.random.default_rng(7)
    eps = 1e-6
    for _ in range(10):
        index = tuple(int(rng.integers(s)) for s in param.shape)
        original = param.data[index].item()
        with torch.no_grad():
            param.data[index] = original + eps
            up = objective().item()
            param.data[index] = original - eps
            down = objective().item()
            param.data[index] = original
        numeric = (up - down) / (2 * eps)
        assert abs(numeric - analytic[index].item()) <= 1e-3 * max(1e-3, abs(numeric))
