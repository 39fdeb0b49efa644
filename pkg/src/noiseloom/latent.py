"""Latent grids, block geometry and the noise-editing primitives.

A latent is an ``H x W x C`` float32 array whose every value is addressed by
its row-major, channel-minor flat index.  Sampling and resampling both draw
value ``i`` from the counter-based stream ``(seed, "latent", i)``, so a full
grid redraw with seed ``s`` is bitwise identical to ``sample_latent(..., s)``
and a partial redraw leaves every untouched value bitwise intact.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import DegenerateInputError, GeometryError, IngestError, PermutationError
from .rng import normals

DEFAULT_BLOCK_SIZE = 4

_NLAT_MAGIC = b"NLAT"
_NLAT_VERSION = 1
_NLAT_HEADER = struct.Struct("<4sHHII")  # magic, version, channels, height, width


class BlockCoord(NamedTuple):
    row: int
    col: int


@dataclass(frozen=True)
class Region:
    """Half-open block rectangle: rows [top, bottom), cols [left, right)."""

    top: int
    left: int
    bottom: int
    right: int

    def __post_init__(self):
        if self.bottom <= self.top or self.right <= self.left:
            raise GeometryError(f"empty region {self.as_tuple()}")
        if self.top < 0 or self.left < 0:
            raise GeometryError(f"negative region corner {self.as_tuple()}")

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.top, self.left, self.bottom, self.right)

    @property
    def area(self) -> int:
        return (self.bottom - self.top) * (self.right - self.left)

    def contains(self, coord) -> bool:
        row, col = coord
        return self.top <= row < self.bottom and self.left <= col < self.right

    def coords(self) -> list[BlockCoord]:
        """All covered blocks in row-major order."""
        return [
            BlockCoord(r, c)
            for r in range(self.top, self.bottom)
            for c in range(self.left, self.right)
        ]

    def overlaps(self, other: "Region") -> bool:
        return not (
            self.bottom <= other.top
            or other.bottom <= self.top
            or self.right <= other.left
            or other.right <= self.left
        )

    def check_inside(self, grid_rows: int, grid_cols: int) -> None:
        if self.bottom > grid_rows or self.right > grid_cols:
            raise GeometryError(
                f"region {self.as_tuple()} exceeds {grid_rows}x{grid_cols} block grid"
            )


@dataclass(frozen=True)
class RegionMask:
    """Block-resolution boolean mask over a latent's block grid."""

    height: int
    width: int
    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=bool)
        if bits.shape != (self.height, self.width):
            raise GeometryError(
                f"mask bits {bits.shape} do not match declared {self.height}x{self.width}"
            )
        object.__setattr__(self, "bits", bits)

    @classmethod
    def from_region(cls, region: Region, grid_rows: int, grid_cols: int) -> "RegionMask":
        region.check_inside(grid_rows, grid_cols)
        bits = np.zeros((grid_rows, grid_cols), dtype=bool)
        bits[region.top : region.bottom, region.left : region.right] = True
        return cls(grid_rows, grid_cols, bits)

    @classmethod
    def from_blocks(
        cls, blocks: Iterable[tuple[int, int]], grid_rows: int, grid_cols: int
    ) -> "RegionMask":
        bits = np.zeros((grid_rows, grid_cols), dtype=bool)
        for row, col in blocks:
            if not (0 <= row < grid_rows and 0 <= col < grid_cols):
                raise GeometryError(f"block ({row},{col}) outside {grid_rows}x{grid_cols} grid")
            bits[row, col] = True
        return cls(grid_rows, grid_cols, bits)

    @property
    def count(self) -> int:
        return int(self.bits.sum())


@dataclass(frozen=True)
class LatentGrid:
    """Immutable noise latent plus the seed it originated from."""

    height: int
    width: int
    channels: int
    values: np.ndarray
    seed: int
    block_size: int = DEFAULT_BLOCK_SIZE

    def __post_init__(self):
        check_block_dims(self.height, self.width, self.block_size)
        if self.channels < 1:
            raise GeometryError(f"channels must be positive, got {self.channels}")
        values = np.ascontiguousarray(self.values, dtype=np.float32)
        if values.shape != (self.height, self.width, self.channels):
            raise GeometryError(
                f"values shape {values.shape} does not match "
                f"({self.height},{self.width},{self.channels})"
            )
        values.flags.writeable = False  # the grid owns its array
        object.__setattr__(self, "values", values)

    @property
    def block_rows(self) -> int:
        return self.height // self.block_size

    @property
    def block_cols(self) -> int:
        return self.width // self.block_size

    def with_values(self, values: np.ndarray) -> "LatentGrid":
        return LatentGrid(self.height, self.width, self.channels, values, self.seed, self.block_size)

    def block_slices(self, coord: BlockCoord) -> tuple[slice, slice]:
        b = self.block_size
        if not (0 <= coord.row < self.block_rows and 0 <= coord.col < self.block_cols):
            raise GeometryError(
                f"block {tuple(coord)} outside {self.block_rows}x{self.block_cols} grid"
            )
        return (
            slice(coord.row * b, (coord.row + 1) * b),
            slice(coord.col * b, (coord.col + 1) * b),
        )


def check_block_dims(height: int, width: int, block_size: int = DEFAULT_BLOCK_SIZE) -> None:
    if block_size < 1:
        raise GeometryError(f"block size must be positive, got {block_size}")
    if height < 1 or width < 1:
        raise GeometryError(f"dimensions must be positive, got {height}x{width}")
    if height % block_size or width % block_size:
        raise GeometryError(
            f"dimensions {height}x{width} are not multiples of block size {block_size}"
        )


def sample_latent(
    height: int,
    width: int,
    channels: int,
    seed: int,
    block_size: int = DEFAULT_BLOCK_SIZE,
) -> LatentGrid:
    """Draw a unit-Gaussian latent; bitwise reproducible from (shape, seed)."""
    check_block_dims(height, width, block_size)
    if channels < 1:
        raise GeometryError(f"channels must be positive, got {channels}")
    count = height * width * channels
    values = normals(seed, "latent", np.arange(count, dtype=np.uint64)).reshape(
        height, width, channels
    )
    return LatentGrid(height, width, channels, values, seed, block_size)


def resample_region(z: LatentGrid, mask: RegionMask, fresh_seed: int) -> LatentGrid:
    """Redraw the masked blocks from the stream keyed by ``fresh_seed``.

    Values outside the mask are bitwise unchanged; the input grid is not
    mutated.  A mask with no set bit is rejected: the caller almost certainly
    built the wrong mask.
    """
    if (mask.height, mask.width) != (z.block_rows, z.block_cols):
        raise GeometryError(
            f"mask grid {mask.height}x{mask.width} does not match "
            f"latent block grid {z.block_rows}x{z.block_cols}"
        )
    if mask.count == 0:
        raise DegenerateInputError("resample mask selects no blocks")
    pixel_mask = np.repeat(np.repeat(mask.bits, z.block_size, axis=0), z.block_size, axis=1)
    flat_idx = np.flatnonzero(np.broadcast_to(pixel_mask[:, :, None], z.values.shape))
    values = z.values.copy()
    values.reshape(-1)[flat_idx] = normals(fresh_seed, "latent", flat_idx.astype(np.uint64))
    return z.with_values(values)


def _as_pairs(swaps) -> Sequence[tuple[BlockCoord, BlockCoord]]:
    pairs = getattr(swaps, "pairs", swaps)
    return [(BlockCoord(*a), BlockCoord(*b)) for a, b in pairs]


def apply_block_permutation(z: LatentGrid, swaps) -> LatentGrid:
    """Exchange whole blocks, leaving their internal values untouched.

    ``swaps`` is a SwapList or a plain sequence of coordinate pairs.  Each
    block may occur at most once across all pairs, so applying the same list
    twice restores the original grid.
    """
    pairs = _as_pairs(swaps)
    seen: set[BlockCoord] = set()
    for a, b in pairs:
        for coord in (a, b):
            if coord in seen:
                raise PermutationError(f"block {tuple(coord)} appears in more than one pair")
            seen.add(coord)
    values = z.values.copy()
    for a, b in pairs:
        ra, ca = z.block_slices(a)
        rb, cb = z.block_slices(b)
        tmp = values[ra, ca].copy()
        values[ra, ca] = values[rb, cb]
        values[rb, cb] = tmp
    return z.with_values(values)


def latent_to_bytes(z: LatentGrid) -> bytes:
    """NLAT binary format: 16-byte header, little-endian f32 body, 8-byte seed."""
    header = _NLAT_HEADER.pack(_NLAT_MAGIC, _NLAT_VERSION, z.channels, z.height, z.width)
    body = np.ascontiguousarray(z.values, dtype="<f4").tobytes()
    tail = struct.pack("<Q", int(z.seed) & 0xFFFFFFFFFFFFFFFF)
    return header + body + tail


def write_latent(z: LatentGrid, path) -> None:
    with open(path, "wb") as fh:
        fh.write(latent_to_bytes(z))


def read_latent(path, block_size: int = DEFAULT_BLOCK_SIZE) -> LatentGrid:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _NLAT_HEADER.size + 8:
        raise IngestError(f"{path}: truncated latent file")
    magic, version, channels, height, width = _NLAT_HEADER.unpack_from(raw)
    if magic != _NLAT_MAGIC:
        raise IngestError(f"{path}: bad magic {magic!r}")
    if version != _NLAT_VERSION:
        raise IngestError(f"{path}: unsupported version {version}")
    expected = _NLAT_HEADER.size + height * width * channels * 4 + 8
    if len(raw) != expected:
        raise IngestError(f"{path}: expected {expected} bytes, found {len(raw)}")
    values = np.frombuffer(
        raw, dtype="<f4", count=height * width * channels, offset=_NLAT_HEADER.size
    ).reshape(height, width, channels)
    (seed,) = struct.unpack_from("<Q", raw, expected - 8)
    return LatentGrid(height, width, channels, values.copy(), seed, block_size)
