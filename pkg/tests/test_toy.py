"""Toy generator: predictor locality, convergence, rendering, exports."""

import numpy as np
import pytest

from noiseloom import (
    BACKGROUND_TOKEN,
    ConfigError,
    Region,
    RegionMask,
    TokenSet,
    ToyEngine,
    ToyModelParams,
    box_smooth,
    build_projections,
    content_direction,
    generate,
    label_map_to_pgm,
    label_map_to_png,
    render_label_map,
    resample_region,
    sample_latent,
)
from noiseloom.samplers import default_schedule
from noiseloom.toy import ToyPredictor

FAST = ToyModelParams(height=32, width=32, channels=8, steps=10)


class TestContentGeometry:
    def test_background_direction_owns_axis_zero(self):
        bg = content_direction(BACKGROUND_TOKEN, 8, vocab_seed=0)
        assert bg[0] == 1.0 and np.all(bg[1:] == 0)
        dog = content_direction("dog", 8, vocab_seed=0)
        assert dog[0] == 0.0
        assert np.linalg.norm(dog) == pytest.approx(1.0)
        assert float(bg @ dog) == 0.0

    def test_projections_hit_targets(self):
        params = ToyModelParams(channels=8)
        tokens = TokenSet.from_names(("dog", "cat", BACKGROUND_TOKEN), vocab_seed=0)
        weights = build_projections(tokens, params)
        vecs = weights.value_vectors(tokens).astype(np.float64)
        for k, name in enumerate(tokens.names):
            target = params.content_scale * content_direction(name, 8, 0)
            assert np.allclose(vecs[k], target, atol=1e-4)

    def test_logit_gain_coupling(self):
        # a block's logit for a token responds exactly to its content direction
        params = ToyModelParams(channels=8)
        tokens = TokenSet.from_names(("dog", "cat"), vocab_seed=0)
        weights = build_projections(tokens, params)
        direction = content_direction("dog", 8, 0).astype(np.float32)
        q = direction @ weights.w_q  # query of a unit-content feature
        logit_dog = float(q @ (tokens.embeddings[0] @ weights.w_k))
        logit_cat = float(q @ (tokens.embeddings[1] @ weights.w_k))
        assert logit_dog == pytest.approx(params.logit_gain * params.content_scale, rel=1e-3)
        assert abs(logit_cat) < 0.05 * abs(logit_dog)


class TestBoxSmooth:
    def test_radius_zero_is_identity(self):
        g = np.arange(12, dtype=np.float32).reshape(2, 2, 3)
        assert box_smooth(g, 0) is g

    def test_uniform_kernel_hand_oracle(self):
        g = np.zeros((3, 3, 1), np.float32)
        g[1, 1, 0] = 9.0
        out = box_smooth(g, 1)
        assert out[1, 1, 0] == pytest.approx(1.0)  # 9 / 9 cells
        assert out[0, 0, 0] == pytest.approx(9.0 / 4)  # corner window has 4 cells
        assert out[0, 1, 0] == pytest.approx(9.0 / 6)

    def test_center_weight_hand_oracle(self):
        g = np.zeros((3, 3, 1), np.float32)
        g[0, 0, 0] = 4.0
        out = box_smooth(g, 1, center_weight=6.0)
        # corner: own weight 6 + 3 neighbors; value 4*6 / (6+3)
        assert out[0, 0, 0] == pytest.approx(24.0 / 9)
        assert out[1, 1, 0] == pytest.approx(4.0 / 14)

    def test_constant_field_fixed_point(self):
        g = np.full((5, 4, 2), 3.25, np.float32)
        out = box_smooth(g, 1, center_weight=6.0)
        assert np.array_equal(out, g)


class TestToyPredictor:
    def test_radius_zero_locality_bitwise(self):
        # perturbing a distant block leaves a block's estimate untouched
        params = ToyModelParams(height=32, width=32, channels=8, smoothing_radius=0)
        engine = ToyEngine(("dog", "cat"), params)
        sched = default_schedule(params.steps)
        predictor = ToyPredictor(engine.tokens, engine.weights, params, sched, engine.prior_bias)
        z = engine.sample(3)
        eps_a = predictor(z, params.steps)
        perturbed = resample_region(z, RegionMask.from_blocks([(7, 7)], 8, 8), 999)
        eps_b = predictor(perturbed, params.steps)
        changed = np.any(eps_a != eps_b, axis=2)
        blocks_changed = changed.reshape(8, 4, 8, 4).any(axis=(1, 3))
        assert blocks_changed[7, 7]
        assert blocks_changed.sum() == 1

    def test_zero_estimate_at_fixed_point(self):
        # single token, latent already equal to the content target
        params = ToyModelParams(height=32, width=32, channels=8, smoothing_radius=0)
        tokens = TokenSet.from_names(("dog",), vocab_seed=0)
        weights = build_projections(tokens, params)
        sched = default_schedule(params.steps)
        predictor = ToyPredictor(tokens, weights, params, sched)
        target = weights.value_vectors(tokens)[0] * np.float32(params.attention_strength)
        values = np.broadcast_to(target, (32, 32, 8)).astype(np.float32)
        z = sample_latent(32, 32, 8, 0).with_values(values)
        eps = predictor(z, params.steps)
        assert np.all(eps == 0)
        # smoothing only adds float rounding around the same fixed point
        smooth = ToyPredictor(
            tokens, weights, ToyModelParams(height=32, width=32, channels=8), sched
        )
        assert np.allclose(smooth(z, params.steps), 0.0, atol=1e-4)

    def test_single_token_convergence(self):
        # every block converges toward the lone token's content direction
        params = ToyModelParams(height=32, width=32, channels=8, steps=50)
        tokens = TokenSet.from_names(("dog",), vocab_seed=0)
        weights = build_projections(tokens, params)
        z = sample_latent(32, 32, 8, seed=11)
        result = generate(z, tokens, weights, params, "plms")
        frac_labeled = float((result.label_map.labels == 0).mean())
        assert frac_labeled >= 0.9


class TestGenerate:
    def test_bitwise_determinism_both_samplers(self):
        engine = ToyEngine(("dog", "cat"), FAST)
        z = engine.sample(5)
        for kind in ("ddim", "plms"):
            a = engine.generate(z, kind)
            b = engine.generate(z, kind)
            assert np.array_equal(a.final_latent.values, b.final_latent.values)
            assert np.array_equal(a.label_map.labels, b.label_map.labels)
            assert np.array_equal(a.step0_attention.values, b.step0_attention.values)

    def test_different_seeds_differ(self):
        engine = ToyEngine(("dog", "cat"), FAST)
        a = engine.generate(engine.sample(1))
        b = engine.generate(engine.sample(2))
        assert not np.array_equal(a.final_latent.values, b.final_latent.values)

    def test_provenance_and_snapshots(self):
        engine = ToyEngine(("dog",), FAST)
        result = engine.generate(engine.sample(3), "ddim", record_attention=True)
        assert result.provenance["sampler"] == "ddim"
        assert result.provenance["prompt"] == ["dog"]
        assert len(result.attention_snapshots) == FAST.steps
        t_values = [t for t, _ in result.attention_snapshots]
        assert t_values == sorted(t_values, reverse=True)

    def test_background_token_reserved(self):
        with pytest.raises(ConfigError):
            ToyEngine(("dog", BACKGROUND_TOKEN), FAST)
        with pytest.raises(ConfigError):
            ToyEngine(("dog", "dog"), FAST)


class TestRenderLabelMap:
    def test_block_on_token_direction_gets_label(self):
        params = ToyModelParams(height=32, width=32, channels=8)
        cats = TokenSet.from_names(("dog", "cat"), vocab_seed=0)
        weights = build_projections(
            TokenSet.from_names(("dog", "cat", BACKGROUND_TOKEN), vocab_seed=0), params
        )
        vec = weights.value_vectors(cats)[1]
        z = sample_latent(32, 32, 8, 0)
        values = np.zeros_like(z.values)
        blocks = values.reshape(8, 4, 8, 4, 8)
        blocks[2, :, 3, :, :] = vec
        labeled = render_label_map(z.with_values(values), cats, weights, threshold=0.3)
        assert labeled.labels[2, 3] == 1

    def test_zero_latent_is_background(self):
        params = ToyModelParams(height=32, width=32, channels=8)
        cats = TokenSet.from_names(("dog",), vocab_seed=0)
        weights = build_projections(cats, params)
        z = sample_latent(32, 32, 8, 0).with_values(np.zeros((32, 32, 8), np.float32))
        labeled = render_label_map(z, cats, weights, threshold=0.3)
        assert np.all(labeled.labels == -1)

    def test_matches_brute_force_argmax(self):
        # oracle: per-block scalar cosine recompute
        params = ToyModelParams(height=32, width=32, channels=8)
        cats = TokenSet.from_names(("dog", "cat"), vocab_seed=0)
        weights = build_projections(cats, params)
        z = sample_latent(32, 32, 8, seed=21)
        labeled = render_label_map(z, cats, weights, threshold=0.3)
        vecs = weights.value_vectors(cats).astype(np.float64)
        for r in range(8):
            for c in range(8):
                block = z.values[r * 4 : (r + 1) * 4, c * 4 : (c + 1) * 4, :]
                mean = block.reshape(-1, 8).mean(axis=0).astype(np.float64)
                if np.linalg.norm(mean) == 0:
                    assert labeled.labels[r, c] == -1
                    continue
                cos = vecs @ mean / (np.linalg.norm(vecs, axis=1) * np.linalg.norm(mean))
                expected = int(np.argmax(cos)) if cos.max() >= 0.3 else -1
                assert labeled.labels[r, c] == expected


class TestRepaintLocality:
    def test_radius_zero_bitwise_outside(self):
        params = ToyModelParams(height=32, width=32, channels=8, steps=8, smoothing_radius=0)
        engine = ToyEngine(("dog", "cat"), params)
        z = engine.sample(13)
        region = Region(2, 3, 5, 6)
        mask = RegionMask.from_region(region, 8, 8)
        z_edit = resample_region(z, mask, 555)
        final_a = engine.generate(z).final_latent.values
        final_b = engine.generate(z_edit).final_latent.values
        pixel_mask = np.repeat(np.repeat(mask.bits, 4, 0), 4, 1)
        assert np.array_equal(final_a[~pixel_mask], final_b[~pixel_mask])
        assert np.any(final_a[pixel_mask] != final_b[pixel_mask])

    def test_radius_one_three_steps_dilation(self):
        params = ToyModelParams(height=64, width=64, channels=8, steps=3, smoothing_radius=1)
        engine = ToyEngine(("dog", "cat"), params)
        z = engine.sample(14)
        region = Region(6, 6, 8, 8)
        mask = RegionMask.from_region(region, 16, 16)
        z_edit = resample_region(z, mask, 777)
        final_a = engine.generate(z).final_latent.values
        final_b = engine.generate(z_edit).final_latent.values
        diff_blocks = (
            np.any(final_a != final_b, axis=2).reshape(16, 4, 16, 4).any(axis=(1, 3))
        )
        dilated = np.zeros((16, 16), bool)
        reach = 3  # radius * steps
        dilated[
            max(0, region.top - reach) : region.bottom + reach,
            max(0, region.left - reach) : region.right + reach,
        ] = True
        assert not diff_blocks[~dilated].any()
        assert diff_blocks[region.top : region.bottom, region.left : region.right].any()


class TestExports:
    def test_pgm_levels(self):
        engine = ToyEngine(("dog", "cat"), FAST)
        result = engine.generate(engine.sample(1))
        pgm = label_map_to_pgm(result.label_map)
        assert pgm.startswith(b"P5\n8 8\n255\n")
        body = np.frombuffer(pgm[len(b"P5\n8 8\n255\n") :], np.uint8)
        allowed = {0, round(255 / 2), 255}
        assert set(body.tolist()) <= allowed

    def test_png_deterministic(self):
        engine = ToyEngine(("dog", "cat"), FAST)
        result = engine.generate(engine.sample(1))
        a = label_map_to_png(result.label_map)
        b = label_map_to_png(result.label_map)
        assert a == b and a.startswith(b"\x89PNG")

    def test_param_validation(self):
        with pytest.raises(ConfigError):
            ToyModelParams(attention_strength=0.0)
        with pytest.raises(ConfigError):
            ToyModelParams(smoothing_radius=-1)
        with pytest.raises(ConfigError):
            ToyModelParams(background_threshold=1.5)
        with pytest.raises(ConfigError):
            ToyModelParams(smoothing_center_weight=0.5)
