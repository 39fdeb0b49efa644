"""Attention-guided block selection and the layout-swap pipeline.

The selection is rank-based: for a target region of ``s`` blocks we take the
``s`` highest-attention blocks (ties broken by row-major index), then
exchange the selected blocks sitting outside the region one-for-one with the
non-selected blocks inside it.  Rank-based sets always pair up exactly, even
when several blocks tie at the cutoff attention value.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .attention import AttentionMap, ProjectionWeights, TokenSet, step0_attention
from .errors import GeometryError, GuidanceError, PairingError
from .latent import BlockCoord, LatentGrid, Region, apply_block_permutation
from .rng import shuffled


@dataclass(frozen=True)
class GuidanceItem:
    region: Region
    category: str


@dataclass(frozen=True)
class LayoutGuidance:
    """User layout intent: each category should end up in its region."""

    items: tuple[GuidanceItem, ...]

    def __post_init__(self):
        if not self.items:
            raise GuidanceError("guidance needs at least one item")
        names = [it.category for it in self.items]
        if len(set(names)) != len(names):
            raise GuidanceError(f"duplicate guidance categories in {names}")

    def categories(self) -> list[str]:
        return [it.category for it in self.items]

    def validate(self, block_rows: int, block_cols: int, token_names) -> None:
        for item in self.items:
            item.region.check_inside(block_rows, block_cols)
            if item.category not in token_names:
                raise GuidanceError(
                    f"category {item.category!r} is not mentioned in the prompt tokens {tuple(token_names)}"
                )
        for i, a in enumerate(self.items):
            for b in self.items[i + 1 :]:
                if a.region.overlaps(b.region):
                    raise GuidanceError(
                        f"guidance regions overlap: {a.category!r} at {a.region.as_tuple()} "
                        f"and {b.category!r} at {b.region.as_tuple()}"
                    )


@dataclass(frozen=True)
class SelectedSet:
    """The region-sized set of strongest blocks for one category."""

    coords: tuple[BlockCoord, ...]
    min_attention: float  # attention of the weakest selected block


@dataclass(frozen=True)
class SwapList:
    """Block pairs to exchange; (incoming, outgoing) per pair."""

    pairs: tuple[tuple[BlockCoord, BlockCoord], ...]
    pairing_seed: int

    def __post_init__(self):
        seen = set()
        for pair in self.pairs:
            for coord in pair:
                if coord in seen:
                    raise PairingError(f"block {tuple(coord)} used more than once")
                seen.add(coord)

    def to_jsonable(self) -> dict:
        return {
            "pairing_seed": self.pairing_seed,
            "pairs": [
                {"in": [int(i.row), int(i.col)], "out": [int(o.row), int(o.col)]}
                for i, o in self.pairs
            ],
        }


def _ranked_flat_indices(attn_col: np.ndarray) -> np.ndarray:
    # descending attention, ties resolved by ascending row-major index
    return np.argsort(-attn_col.ravel(), kind="stable")


def select_top_blocks(attn_col: np.ndarray, region: Region) -> SelectedSet:
    """Top region-area blocks of the whole grid by attention value."""
    rows, cols = attn_col.shape
    region.check_inside(rows, cols)
    s = region.area
    order = _ranked_flat_indices(attn_col)[:s]
    coords = tuple(BlockCoord(int(i) // cols, int(i) % cols) for i in order)
    return SelectedSet(coords=coords, min_attention=float(attn_col.ravel()[order[-1]]))


def compute_in_out(selected: SelectedSet, region: Region) -> tuple[list[BlockCoord], list[BlockCoord]]:
    """Blocks moving into the region and region blocks being displaced.

    Sizes always agree: both equal region area minus the selected blocks
    already in place.
    """
    if len(selected.coords) != region.area:
        raise GeometryError(
            f"selected {len(selected.coords)} blocks for a region of area {region.area}"
        )
    chosen = set(selected.coords)
    move_in = [c for c in selected.coords if not region.contains(c)]
    move_out = [c for c in region.coords() if c not in chosen]
    return move_in, move_out


def build_swaps(
    move_in: list[BlockCoord], move_out: list[BlockCoord], pairing_seed: int
) -> SwapList:
    """Randomly pair the two lists; every element used exactly once."""
    if len(move_in) != len(move_out):
        raise PairingError(f"cannot pair {len(move_in)} inbound with {len(move_out)} outbound blocks")
    shuffled_out = shuffled(move_out, pairing_seed, "pairing")
    return SwapList(
        pairs=tuple((BlockCoord(*i), BlockCoord(*o)) for i, o in zip(move_in, shuffled_out)),
        pairing_seed=pairing_seed,
    )


def classify_blocks(attn: AttentionMap, categories) -> np.ndarray:
    """Assign each block to the guided category with maximal attention.

    Returns indices into ``categories``; ties go to the earliest category.
    """
    categories = list(categories)
    if not categories:
        raise GuidanceError("no categories to classify against")
    stacked = np.stack([attn.column(c) for c in categories], axis=2)
    return np.argmax(stacked, axis=2)


def _select_from_pool(
    attn_col: np.ndarray, eligible: np.ndarray, want: int
) -> list[BlockCoord]:
    cols = attn_col.shape[1]
    flat_eligible = np.flatnonzero(eligible.ravel())
    if flat_eligible.size == 0:
        return []
    order = np.argsort(-attn_col.ravel()[flat_eligible], kind="stable")
    picked = flat_eligible[order[: min(want, flat_eligible.size)]]
    return [BlockCoord(int(i) // cols, int(i) % cols) for i in picked]


def _swap_cells(grid: np.ndarray, swaps: SwapList) -> None:
    for a, b in swaps.pairs:
        grid[a.row, a.col], grid[b.row, b.col] = grid[b.row, b.col], grid[a.row, a.col]


def layout_swap(
    z: LatentGrid,
    tokens: TokenSet,
    weights: ProjectionWeights,
    guidance: LayoutGuidance,
    pairing_seed: int,
    bias: np.ndarray | None = None,
) -> tuple[LatentGrid, list[SwapList]]:
    """Move the blocks most inclined to generate each category into its region.

    Multi-item guidance first classifies every block to a unique category,
    then serves items in decreasing region-area order; blocks inside an
    already-served region are locked.  If a category owns fewer blocks than
    its region holds, all of them move and the lowest-attention region blocks
    are the ones displaced.  Returns the edited latent and one SwapList per
    guidance item (in guidance order).
    """
    guidance.validate(z.block_rows, z.block_cols, tokens.names)
    attn = step0_attention(z, tokens, weights, bias)

    if len(guidance.items) == 1:
        item = guidance.items[0]
        selected = select_top_blocks(attn.column(item.category), item.region)
        move_in, move_out = compute_in_out(selected, item.region)
        swaps = build_swaps(move_in, move_out, pairing_seed)
        return apply_block_permutation(z, swaps), [swaps]

    categories = guidance.categories()
    assignment = classify_blocks(attn, categories)
    # mutable copies: attention values and assignments travel with their blocks
    columns = {c: attn.column(c).copy() for c in categories}
    locked = np.zeros(assignment.shape, dtype=bool)
    order = sorted(
        range(len(guidance.items)),
        key=lambda i: (-guidance.items[i].region.area, i),
    )
    swap_lists: list[SwapList | None] = [None] * len(guidance.items)
    current = z
    for idx in order:
        item = guidance.items[idx]
        cat_index = categories.index(item.category)
        col = columns[item.category]
        eligible = (assignment == cat_index) & ~locked
        selected = _select_from_pool(col, eligible, item.region.area)
        chosen = set(selected)
        move_in = [c for c in selected if not item.region.contains(c)]
        displaceable = [c for c in item.region.coords() if c not in chosen]
        if len(move_in) < len(displaceable):
            # partial fill: displace only the weakest blocks, keep the rest
            weak_order = np.argsort(
                [col[c.row, c.col] for c in displaceable], kind="stable"
            )
            displaceable = [displaceable[int(i)] for i in weak_order[: len(move_in)]]
        swaps = build_swaps(move_in, displaceable, pairing_seed)
        current = apply_block_permutation(current, swaps)
        _swap_cells(assignment, swaps)
        for col_arr in columns.values():
            _swap_cells(col_arr, swaps)
        locked[item.region.top : item.region.bottom, item.region.left : item.region.right] = True
        swap_lists[idx] = swaps
    return current, [s for s in swap_lists if s is not None]


def parse_guidance(payload) -> tuple[LayoutGuidance, int]:
    """Read the guidance wire format: items with block-unit boxes plus seed."""
    if isinstance(payload, (str, bytes)):
        payload = json.loads(payload)
    try:
        items = tuple(
            GuidanceItem(region=Region(*[int(v) for v in entry["box"]]), category=str(entry["category"]))
            for entry in payload["items"]
        )
        pairing_seed = int(payload.get("pairing_seed", 0))
    except (KeyError, TypeError) as exc:
        raise GuidanceError(f"malformed guidance payload: {exc}") from exc
    return LayoutGuidance(items=items), pairing_seed


def guidance_to_jsonable(guidance: LayoutGuidance, pairing_seed: int) -> dict:
    return {
        "items": [
            {"box": list(item.region.as_tuple()), "category": item.category}
            for item in guidance.items
        ],
        "pairing_seed": pairing_seed,
    }
