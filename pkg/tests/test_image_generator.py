import math

import pytest
import torch
import torch.nn.functional as F

from kpgan.image_generator import (
    GeneratorVariant,
    ImageGenerator,
    PositionalStart,
    SpadeNormalization,
    blend_background,
    channel_width,
    level_resolutions,
)
from kpgan.keypoint_generator import EmbeddingSet, sample_latents
from kpgan.model import KeypointGanModel, ModelConfig
from kpgan.spatial_embedding import build_style_pyramid

from conftest import tiny_model_config


def test_variant_invariants():
    d = GeneratorVariant.default()
    assert (d.margin_px, d.base_tensor, d.background) == (0, "learned_const_4x4", "inline")
    t = GeneratorVariant.tuned()
    assert (t.margin_px, t.base_tensor, t.background) == (
        10,
        "positional_encoded_32x32",
        "separate_network_with_mask",
    )
    with pytest.raises(ValueError):
        GeneratorVariant.from_name("bogus")


def test_level_resolutions_doubling():
    assert level_resolutions(4, 64) == [4, 8, 16, 32, 64]
    with pytest.raises(ValueError):
        level_resolutions(4, 48)


def test_channel_width_schedule():
    assert channel_width(4, 512) == 512
    assert channel_width(64, 512) == 512
    assert channel_width(128, 512) == 256
    assert channel_width(256, 512) == 128
    assert channel_width(512, 512) == 64


def test_spade_identity_case():
    torch.manual_seed(0)
    sp = SpadeNormalization(3, 5)
    with torch.no_grad():
        sp.gamma.weight.zero_()
        sp.beta.weight.zero_()
        sp.gamma.bias.fill_(1.0)
        sp.beta.bias.zero_()
    feat = torch.randn(2, 3, 4, 4)
    style = torch.randn(2, 5, 4, 4)
    out = sp(feat, style)
    assert torch.allclose(out, sp.norm(feat), atol=0, rtol=0)


def test_spade_constant_style_gives_constant_denorm_maps():
    torch.manual_seed(1)
    sp = SpadeNormalization(2, 3)
    style = torch.ones(1, 3, 6, 6) * torch.randn(1, 3, 1, 1)
    gamma = sp.gamma(style)
    beta = sp.beta(style)
    # interior pixels see the same constant neighborhood
    for maps in (gamma, beta):
        inner = maps[:, :, 1:-1, 1:-1]
        assert torch.allclose(inner, inner[:, :, :1, :1].expand_as(inner), atol=1e-6)


def test_spade_matches_scalar_normalization_oracle():
    torch.manual_seed(2)
    sp = SpadeNormalization(1, 2).double().train()
    feat = torch.randn(1, 1, 2, 2, dtype=torch.float64)
    style = torch.randn(1, 2, 2, 2, dtype=torch.float64)
    out = sp(feat, style)
    mu = feat.mean()
    sigma = math.sqrt(float(((feat - mu) ** 2).mean()) + 1e-5)
    norm = (feat - mu) / sigma
    gamma = F.conv2d(style, sp.gamma.weight, sp.gamma.bias, padding=1)
    beta = F.conv2d(style, sp.beta.weight, sp.beta.bias, padding=1)
    assert (out - (gamma * norm + beta)).abs().max() < 1e-12


def test_spade_rejects_mismatched_spatial_dims():
    sp = SpadeNormalization(2, 3)
    with pytest.raises(ValueError):
        sp(torch.randn(1, 2, 4, 4), torch.randn(1, 3, 8, 8))


def _style_pyramid_for(model, coords, emb, resolution):
    return build_style_pyramid(
        model.style_resolutions(resolution),
        coords,
        None,
        emb,
        model.config.tau,
        margin=model.variant.margin_px,
        mode=model.config.mode,
    )


def test_generate_shapes_and_range():
    torch.manual_seed(0)
    cfg = ModelConfig(
        noise_dim=8, embed_dim=8, num_keypoints=2, tau=0.05,
        final_resolution=64, rgb_start_resolution=64, max_channels=8, units_per_level=1,
    )
    model = KeypointGanModel(cfg)
    sample = model.generate(sample_latents(2, 8, seed=0), 64)
    assert sample.image.shape == (2, 3, 64, 64)
    assert sample.image.abs().max() <= 1.0
    assert sample.heatmaps.shape == (2, 3, 64, 64)


def test_alpha_one_matches_stable_output():
    torch.manual_seed(1)
    model = KeypointGanModel(tiny_model_config()).eval()
    latents = sample_latents(1, 8, seed=3)
    with torch.no_grad():
        blended = model.generate(latents, 16, alpha=1.0).image
        stable = model.generate(latents, 16).image
    assert torch.equal(blended, stable)


def test_adapting_blend_mixes_previous_head():
    # walk the levels by hand to grab the pre-tanh RGB heads, then check
    # alpha * rgb_16 + (1 - alpha) * upsample(rgb_8)
    torch.manual_seed(2)
    model = KeypointGanModel(tiny_model_config()).eval()
    latents = sample_latents(1, 8, seed=4)
    gen = model.image_generator
    with torch.no_grad():
        coords, emb = model.keypoint_generator(latents)
        pyramid = _style_pyramid_for(model, coords, emb, 16)
        x = gen.start[None]
        rgb = {}
        for i, res in enumerate([4, 8, 16]):
            if i > 0:
                x = F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
            for unit in gen.levels[str(res)]:
                x = unit(x, pyramid[i])
            if str(res) in gen.to_rgb:
                rgb[res] = gen.to_rgb[str(res)](x)
        up = F.interpolate(rgb[8], scale_factor=2, mode="bilinear", align_corners=False)
        expected = torch.tanh(0.25 * rgb[16] + 0.75 * up)
        mid = gen(pyramid, 16, alpha=0.25)
    assert torch.allclose(mid, expected, atol=1e-6)


def test_eval_mode_rendering_is_bitwise_deterministic():
    torch.manual_seed(3)
    model = KeypointGanModel(tiny_model_config()).eval()
    latents = sample_latents(1, 8, seed=5)
    scene = model.scene_from_latents(latents)
    with torch.no_grad():
        a = model.render_scene(scene).image
        b = model.render_scene(scene).image
    assert torch.equal(a, b)


def test_stage_beyond_trained_resolution_errors():
    model = KeypointGanModel(tiny_model_config())
    latents = sample_latents(1, 8, seed=6)
    with pytest.raises(RuntimeError):
        model.generate(latents, 32)


def test_stage_below_rgb_start_errors():
    cfg = tiny_model_config(rgb_start_resolution=16)
    model = KeypointGanModel(cfg)
    coords, emb = model.keypoint_generator(sample_latents(1, 8, seed=7))
    pyramid = _style_pyramid_for(model, coords, emb, 8)
    with pytest.raises(RuntimeError):
        model.image_generator(pyramid, 8)


def test_style_level_count_mismatch_errors():
    model = KeypointGanModel(tiny_model_config())
    coords, emb = model.keypoint_generator(sample_latents(1, 8, seed=8))
    pyramid = _style_pyramid_for(model, coords, emb, 16)
    with pytest.raises(ValueError):
        model.image_generator(pyramid[:-1], 16)


# -- positional encoding ------------------------------------------------------


def test_positional_encoding_translation_invariance_is_exact():
    torch.manual_seed(4)
    start = PositionalStart(3, 8)
    coords = torch.rand(1, 3, 2) * 0.5
    base = start(coords, (8, 8))
    # shifting keypoints by an exact grid step shifts the map exactly
    delta = torch.tensor([2.0 / 8, 0.0])
    shifted = start(coords + delta, (8, 8))
    assert torch.allclose(shifted[..., :, 1:], base[..., :, :-1], atol=1e-6)


def test_positional_encoding_zero_linear_map():
    start = PositionalStart(2, 4)
    with torch.no_grad():
        start.linear.weight.zero_()
        start.linear.bias.zero_()
    out = start(torch.rand(1, 2, 2), (4, 4))
    assert torch.equal(out[:, :2], torch.zeros(1, 2, 4, 4))  # sin(0)
    assert torch.equal(out[:, 2:], torch.ones(1, 2, 4, 4))  # cos(0)


def test_positional_encoding_matches_scalar_oracle():
    torch.manual_seed(5)
    start = PositionalStart(2, 4).double()
    coords = torch.rand(1, 2, 2, dtype=torch.float64)
    out = start(coords, (2, 2))
    from kpgan.spatial_embedding import grid_coords

    grid = grid_coords((2, 2), dtype=torch.float64)
    w, b = start.linear.weight, start.linear.bias
    for yy in range(2):
        for xx in range(2):
            diffs = []
            for j in range(2):
                diffs.extend(
                    [grid[yy, xx, 0] - coords[0, j, 0], grid[yy, xx, 1] - coords[0, j, 1]]
                )
            diffs = torch.stack(diffs)
            proj = math.pi * (w @ diffs + b)
            expected = torch.cat([torch.sin(proj), torch.cos(proj)])
            assert torch.allclose(out[0, :, yy, xx], expected, atol=1e-12)


# -- background blending ------------------------------------------------------


def test_blend_endpoints_and_midpoint():
    torch.manual_seed(6)
    fg = torch.randn(1, 3, 4, 4)
    bg = torch.randn(1, 3, 4, 4)
    assert torch.equal(blend_background(fg, bg, torch.ones(1, 4, 4)), fg)
    assert torch.equal(blend_background(fg, bg, torch.zeros(1, 4, 4)), bg)
    mid = blend_background(fg, bg, torch.full((1, 4, 4), 0.5))
    for c in range(3):
        for yy in range(4):
            for xx in range(4):
                expected = 0.5 * fg[0, c, yy, xx].item() + 0.5 * bg[0, c, yy, xx].item()
                assert mid[0, c, yy, xx].item() == pytest.approx(expected, abs=1e-7)


def test_blend_rejects_out_of_range_mask():
    fg = torch.zeros(1, 3, 2, 2)
    with pytest.raises(ValueError):
        blend_background(fg, fg, torch.full((1, 2, 2), 1.5))
    with pytest.raises(ValueError):
        blend_background(fg, fg, torch.full((1, 2, 2), -0.1))


# -- tuned variant -------------------------------------------------------------


def _tuned_model(**overrides):
    cfg = ModelConfig(
        noise_dim=8, embed_dim=8, num_keypoints=3, tau=0.05, variant="tuned",
        final_resolution=64, max_channels=16, units_per_level=1, **overrides,
    )
    return KeypointGanModel(cfg)


def test_tuned_margin_equivariance_on_keypoint_branch():
    # one base-grid cell (2/32 normalized) is exactly 2 output pixels at 64;
    # foreground RGB and mask must shift with the keypoints on the interior
    torch.manual_seed(7)
    model = _tuned_model().eval()
    coords = torch.rand(1, 3, 2) * 0.6 - 0.3
    emb = EmbeddingSet(None, None, torch.randn(1, 8), torch.randn(1, 3, 8))
    pyr = lambda c: _style_pyramid_for(model, c, emb, 64)
    with torch.no_grad():
        base = model.image_generator(coords, pyr(coords), emb.w_bg)
        shifted = model.image_generator(
            coords + torch.tensor([2.0 / 32, 0.0]), pyr(coords + torch.tensor([2.0 / 32, 0.0])), emb.w_bg
        )
    for key in ("foreground_rgb", "mask"):
        a, b = base[key], shifted[key]
        if a.dim() == 3:
            a, b = a[:, None], b[:, None]
        err = (b[..., 12:52, 14:52] - a[..., 12:52, 12:50]).abs().max()
        assert err < 1e-3, f"{key} equivariance error {err}"


def test_tuned_output_bundle():
    torch.manual_seed(8)
    model = _tuned_model()
    sample = model.generate(sample_latents(2, 8, seed=9))
    assert sample.image.shape == (2, 3, 64, 64)
    assert sample.foreground_mask.shape == (2, 64, 64)
    assert sample.foreground_mask.min() >= 0.0
    assert sample.foreground_mask.max() <= 1.0
    with pytest.raises(RuntimeError):
        model.generate(sample_latents(1, 8, seed=10), 32)


def test_gradient_flows_from_image_to_keypoints():
    # finite-difference check on a 16x16 toy generator, float64; the seed
    # fixes a generic point where the +-1e-3 interval crosses no leaky-ReLU
    # kink (FD through a kink is meaningless)
    torch.manual_seed(0)
    cfg = tiny_model_config(num_keypoints=2, tau=0.1)
    model = KeypointGanModel(cfg).double().eval()
    emb = EmbeddingSet(
        None, None, torch.randn(1, 8, dtype=torch.float64), torch.randn(1, 2, 8, dtype=torch.float64)
    )
    probe = torch.randn(1, 3, 16, 16, dtype=torch.float64)

    def f(coords):
        pyramid = build_style_pyramid(
            model.style_resolutions(16), coords, None, emb, cfg.tau
        )
        return (model.image_generator(pyramid, 16) * probe).sum()

    coords = (torch.rand(1, 2, 2, dtype=torch.float64) * 0.5).requires_grad_(True)
    grad = torch.autograd.grad(f(coords), coords)[0]
    assert grad.abs().max() > 0
    step = 1e-3
    for j in range(2):
        for d in range(2):
            plus = coords.detach().clone()
            minus = coords.detach().clone()
            plus[0, j, d] += step
            minus[0, j, d] -= step
            fd = (f(plus) - f(minus)) / (2 * step)
            assert grad[0, j, d].item() == pytest.approx(fd.item(), rel=1e-2, abs=1e-8)
