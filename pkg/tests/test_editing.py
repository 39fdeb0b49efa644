"""Block selection, in/out pairing and the layout-swap pipeline."""

import numpy as np
import pytest

from noiseloom import (
    BlockCoord,
    GeometryError,
    GuidanceError,
    GuidanceItem,
    LayoutGuidance,
    PairingError,
    Region,
    TokenSet,
    apply_block_permutation,
    build_swaps,
    classify_blocks,
    compute_in_out,
    cross_attention,
    layout_swap,
    sample_latent,
    select_top_blocks,
    step0_attention,
)
from noiseloom.editing import SwapList, guidance_to_jsonable, parse_guidance
from noiseloom.toy import ToyModelParams, build_projections


def brute_force_top_s(attn: np.ndarray, s: int) -> list[BlockCoord]:
    """Independent oracle: exhaustive sort with the stated tie-break."""
    cells = [
        (-attn[r, c], r * attn.shape[1] + c, BlockCoord(r, c))
        for r in range(attn.shape[0])
        for c in range(attn.shape[1])
    ]
    cells.sort()
    return [coord for _, _, coord in cells[:s]]


def worked_attention() -> np.ndarray:
    attn = np.full((4, 4), 0.1, np.float32)
    attn[0, 0] = 0.9
    attn[2, 2] = 0.8
    attn[3, 3] = 0.7
    return attn


WORKED_REGION = Region(0, 0, 2, 2)  # rows 0-1 x cols 0-1, s = 4


class TestSelectTopBlocks:
    def test_whole_grid(self):
        attn = worked_attention()
        selected = select_top_blocks(attn, Region(0, 0, 4, 4))
        assert len(selected.coords) == 16
        assert selected.min_attention == pytest.approx(0.1)
        assert set(selected.coords) == {BlockCoord(r, c) for r in range(4) for c in range(4)}

    def test_worked_instance(self):
        # frozen from the exhaustive-sort oracle: ties at 0.1 break row-major
        attn = worked_attention()
        selected = select_top_blocks(attn, WORKED_REGION)
        assert selected.coords == (
            BlockCoord(0, 0),
            BlockCoord(2, 2),
            BlockCoord(3, 3),
            BlockCoord(0, 1),
        )
        assert selected.min_attention == pytest.approx(0.1)
        assert list(selected.coords) == brute_force_top_s(attn, 4)

    def test_all_equal_attention_row_major(self):
        attn = np.full((4, 4), 0.25, np.float32)
        selected = select_top_blocks(attn, Region(0, 0, 1, 3))
        assert selected.coords == (BlockCoord(0, 0), BlockCoord(0, 1), BlockCoord(0, 2))

    def test_region_outside_grid(self):
        with pytest.raises(GeometryError):
            select_top_blocks(worked_attention(), Region(0, 0, 5, 5))

    def test_matches_oracle_on_random_instances(self):
        rng = np.random.default_rng(12)
        for _ in range(200):
            attn = rng.random((6, 7)).astype(np.float32)
            region = Region(1, 1, 4, 5)
            selected = select_top_blocks(attn, region)
            assert list(selected.coords) == brute_force_top_s(attn, region.area)


class TestComputeInOut:
    def test_all_selected_inside(self):
        attn = np.zeros((4, 4), np.float32)
        attn[0:2, 0:2] = 1.0
        selected = select_top_blocks(attn, WORKED_REGION)
        move_in, move_out = compute_in_out(selected, WORKED_REGION)
        assert move_in == [] and move_out == []

    def test_worked_instance(self):
        selected = select_top_blocks(worked_attention(), WORKED_REGION)
        move_in, move_out = compute_in_out(selected, WORKED_REGION)
        assert move_in == [BlockCoord(2, 2), BlockCoord(3, 3)]
        assert move_out == [BlockCoord(1, 0), BlockCoord(1, 1)]

    def test_sizes_match_on_random_instances(self):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            rows, cols = int(rng.integers(2, 9)), int(rng.integers(2, 9))
            attn = rng.random((rows, cols)).astype(np.float32)
            top = int(rng.integers(0, rows - 1))
            left = int(rng.integers(0, cols - 1))
            region = Region(
                top, left,
                int(rng.integers(top + 1, rows + 1)),
                int(rng.integers(left + 1, cols + 1)),
            )
            move_in, move_out = compute_in_out(select_top_blocks(attn, region), region)
            assert len(move_in) == len(move_out)

    def test_size_mismatch_rejected(self):
        from noiseloom import SelectedSet

        with pytest.raises(GeometryError):
            compute_in_out(SelectedSet((BlockCoord(0, 0),), 1.0), WORKED_REGION)


class TestBuildSwaps:
    def test_empty(self):
        assert build_swaps([], [], 0).pairs == ()

    def test_single_pair_any_seed(self):
        for seed in (0, 1, 99):
            swaps = build_swaps([BlockCoord(2, 2)], [BlockCoord(0, 1)], seed)
            assert swaps.pairs == ((BlockCoord(2, 2), BlockCoord(0, 1)),)

    def test_deterministic_and_seed_sensitive(self):
        move_in = [BlockCoord(5, i) for i in range(6)]
        move_out = [BlockCoord(0, i) for i in range(6)]
        a = build_swaps(move_in, move_out, 1)
        b = build_swaps(move_in, move_out, 1)
        assert a.pairs == b.pairs
        others = {build_swaps(move_in, move_out, s).pairs for s in range(2, 12)}
        assert any(p != a.pairs for p in others)

    def test_each_element_used_once(self):
        move_in = [BlockCoord(5, i) for i in range(8)]
        move_out = [BlockCoord(0, i) for i in range(8)]
        swaps = build_swaps(move_in, move_out, 3)
        assert sorted(p[0] for p in swaps.pairs) == move_in
        assert sorted(p[1] for p in swaps.pairs) == move_out

    def test_length_mismatch(self):
        with pytest.raises(PairingError):
            build_swaps([BlockCoord(0, 0)], [], 0)

    def test_swaplist_rejects_reuse(self):
        with pytest.raises(PairingError):
            SwapList(pairs=((BlockCoord(0, 0), BlockCoord(1, 1)), (BlockCoord(1, 1), BlockCoord(2, 2))), pairing_seed=0)


@pytest.fixture(scope="module")
def engine_bits():
    params = ToyModelParams(height=64, width=64, channels=8)
    tokens = TokenSet.from_names(("dog", "cat", "bus"), vocab_seed=0)
    weights = build_projections(tokens, params)
    return params, tokens, weights


class TestClassifyBlocks:
    def test_single_category(self, engine_bits):
        _, tokens, weights = engine_bits
        attn = step0_attention(sample_latent(64, 64, 8, seed=3), tokens, weights)
        assignment = classify_blocks(attn, ["dog"])
        assert np.all(assignment == 0)

    def test_matches_argmax_oracle(self, engine_bits):
        _, tokens, weights = engine_bits
        attn = step0_attention(sample_latent(64, 64, 8, seed=4), tokens, weights)
        cats = ["dog", "cat", "bus"]
        assignment = classify_blocks(attn, cats)
        for r in range(16):
            for c in range(16):
                values = [attn.column(k)[r, c] for k in cats]
                assert assignment[r, c] == int(np.argmax(values))

    def test_unknown_category(self, engine_bits):
        _, tokens, weights = engine_bits
        attn = step0_attention(sample_latent(64, 64, 8, seed=4), tokens, weights)
        with pytest.raises(GuidanceError):
            classify_blocks(attn, ["zebra"])


def planted_latent(tokens, weights, params, plan, fill=0.02, seed=77):
    """Latent whose block means are planted multiples of content vectors."""
    vecs = weights.value_vectors(tokens)
    unit = (vecs.T / np.linalg.norm(vecs, axis=1)).T
    rows = params.height // params.block_size
    cols = params.width // params.block_size
    base = sample_latent(params.height, params.width, params.channels, seed)
    values = base.values * np.float32(fill)
    blocks = values.reshape(rows, params.block_size, cols, params.block_size, params.channels)
    for (r, c), (token_index, strength) in plan.items():
        blocks[r, :, c, :, :] += np.float32(strength) * unit[token_index]
    return base.with_values(values)


class TestLayoutSwap:
    def test_already_satisfied_guidance_is_identity(self, engine_bits):
        params, tokens, weights = engine_bits
        plan = {(0, 0): (0, 3.0), (0, 1): (0, 2.5), (1, 0): (0, 2.0), (1, 1): (0, 1.5)}
        z = planted_latent(tokens, weights, params, plan)
        guidance = LayoutGuidance((GuidanceItem(Region(0, 0, 2, 2), "dog"),))
        swapped, swap_lists = layout_swap(z, tokens, weights, guidance, pairing_seed=0)
        assert swap_lists[0].pairs == ()
        assert np.array_equal(swapped.values, z.values)

    def test_worked_four_by_four_instance(self):
        # 4x4-block grid mirroring the worked selection example: strong dog
        # content at (0,0) > (2,2) > (3,3), a mild 4th at (0,1)
        params = ToyModelParams(height=16, width=16, channels=8)
        tokens = TokenSet.from_names(("dog", "cat"), vocab_seed=0)
        weights = build_projections(tokens, params)
        plan = {(0, 0): (0, 3.0), (2, 2): (0, 2.5), (3, 3): (0, 2.0), (0, 1): (0, 1.0)}
        z = planted_latent(tokens, weights, params, plan)
        region = Region(0, 0, 2, 2)
        attn = step0_attention(z, tokens, weights)
        selected = select_top_blocks(attn.column("dog"), region)
        assert set(selected.coords) == {
            BlockCoord(0, 0), BlockCoord(2, 2), BlockCoord(3, 3), BlockCoord(0, 1)
        }
        move_in, move_out = compute_in_out(selected, region)
        assert set(move_in) == {BlockCoord(2, 2), BlockCoord(3, 3)}
        assert set(move_out) == {BlockCoord(1, 0), BlockCoord(1, 1)}

        guidance = LayoutGuidance((GuidanceItem(region, "dog"),))
        for pairing_seed in (0, 1, 2):
            swapped, swap_lists = layout_swap(z, tokens, weights, guidance, pairing_seed)
            pairs = set(swap_lists[0].pairs)
            assert pairs in (
                {(BlockCoord(2, 2), BlockCoord(1, 0)), (BlockCoord(3, 3), BlockCoord(1, 1))},
                {(BlockCoord(2, 2), BlockCoord(1, 1)), (BlockCoord(3, 3), BlockCoord(1, 0))},
            )
            # Fig.5-style check: recomputed tendency sits inside the region
            attn_after = step0_attention(swapped, tokens, weights)
            top_after = select_top_blocks(attn_after.column("dog"), region)
            assert all(region.contains(c) for c in top_after.coords)

    def test_conservation_and_determinism(self, engine_bits):
        params, tokens, weights = engine_bits
        z = sample_latent(64, 64, 8, seed=5)
        guidance = LayoutGuidance((GuidanceItem(Region(3, 4, 9, 10), "cat"),))
        a, swaps_a = layout_swap(z, tokens, weights, guidance, pairing_seed=9)
        b, swaps_b = layout_swap(z, tokens, weights, guidance, pairing_seed=9)
        assert np.array_equal(a.values, b.values)
        assert [s.pairs for s in swaps_a] == [s.pairs for s in swaps_b]
        assert np.array_equal(np.sort(a.values, axis=None), np.sort(z.values, axis=None))

    def test_idempotence(self, engine_bits):
        params, tokens, weights = engine_bits
        z = sample_latent(64, 64, 8, seed=6)
        guidance = LayoutGuidance((GuidanceItem(Region(2, 2, 7, 8), "dog"),))
        swapped, _ = layout_swap(z, tokens, weights, guidance, pairing_seed=1)
        again, swap_lists = layout_swap(swapped, tokens, weights, guidance, pairing_seed=1)
        assert swap_lists[0].pairs == ()
        assert np.array_equal(again.values, swapped.values)

    def test_two_single_block_regions(self, engine_bits):
        # oracle: brute force over the 256-block grid with classification
        params, tokens, weights = engine_bits
        z = sample_latent(64, 64, 8, seed=7)
        guidance = LayoutGuidance(
            (
                GuidanceItem(Region(0, 0, 1, 1), "dog"),
                GuidanceItem(Region(15, 15, 16, 16), "cat"),
            )
        )
        swapped, swap_lists = layout_swap(z, tokens, weights, guidance, pairing_seed=0)
        attn = step0_attention(z, tokens, weights)
        assignment = classify_blocks(attn, ["dog", "cat"])
        for item_index, (category, corner) in enumerate(
            [("dog", BlockCoord(0, 0)), ("cat", BlockCoord(15, 15))]
        ):
            col = attn.column(category)
            eligible = np.array(assignment == item_index)
            flat = np.where(eligible.ravel(), col.ravel(), -np.inf)
            best = BlockCoord(int(np.argmax(flat)) // 16, int(np.argmax(flat)) % 16)
            rows_dst, cols_dst = swapped.block_slices(corner)
            rows_src, cols_src = z.block_slices(best)
            assert np.array_equal(
                swapped.values[rows_dst, cols_dst], z.values[rows_src, cols_src]
            )

    def test_multi_item_conservation_and_order(self, engine_bits):
        params, tokens, weights = engine_bits
        z = sample_latent(64, 64, 8, seed=8)
        guidance = LayoutGuidance(
            (
                GuidanceItem(Region(0, 0, 3, 3), "dog"),
                GuidanceItem(Region(8, 8, 14, 14), "cat"),  # larger, processed first
            )
        )
        swapped, swap_lists = layout_swap(z, tokens, weights, guidance, pairing_seed=4)
        assert len(swap_lists) == 2
        assert np.array_equal(np.sort(swapped.values, axis=None), np.sort(z.values, axis=None))
        # locked blocks: no later swap may touch the larger region's blocks
        larger = guidance.items[1].region
        for pair in swap_lists[0].pairs:
            for coord in pair:
                assert not larger.contains(coord)

    def test_guidance_errors(self, engine_bits):
        params, tokens, weights = engine_bits
        z = sample_latent(64, 64, 8, seed=9)
        overlapping = LayoutGuidance(
            (
                GuidanceItem(Region(0, 0, 4, 4), "dog"),
                GuidanceItem(Region(2, 2, 6, 6), "cat"),
            )
        )
        with pytest.raises(GuidanceError, match="overlap"):
            layout_swap(z, tokens, weights, overlapping, 0)
        unknown = LayoutGuidance((GuidanceItem(Region(0, 0, 2, 2), "zebra"),))
        with pytest.raises(GuidanceError, match="zebra"):
            layout_swap(z, tokens, weights, unknown, 0)
        with pytest.raises(GuidanceError, match="duplicate"):
            LayoutGuidance(
                (
                    GuidanceItem(Region(0, 0, 2, 2), "dog"),
                    GuidanceItem(Region(4, 4, 6, 6), "dog"),
                )
            )


class TestGuidanceJson:
    def test_round_trip(self):
        guidance = LayoutGuidance(
            (
                GuidanceItem(Region(1, 2, 3, 4), "dog"),
                GuidanceItem(Region(5, 6, 8, 9), "cat"),
            )
        )
        payload = guidance_to_jsonable(guidance, pairing_seed=42)
        parsed, seed = parse_guidance(payload)
        assert parsed == guidance
        assert seed == 42

    def test_malformed_payload(self):
        with pytest.raises(GuidanceError):
            parse_guidance({"wrong": []})

    def test_swaplist_jsonable(self):
        swaps = build_swaps([BlockCoord(1, 2)], [BlockCoord(3, 4)], 7)
        payload = swaps.to_jsonable()
        assert payload == {"pairing_seed": 7, "pairs": [{"in": [1, 2], "out": [3, 4]}]}
