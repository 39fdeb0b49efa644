"""Additive attention-mask baselines: in-region boost, out-of-region damping.

Both are pre-softmax logit offsets on the guided token's column, applied at
every denoising step.  They steer where features get injected without
touching the initial latent, which is exactly what the swap pipeline edits;
the two mechanisms therefore compose.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .attention import TokenSet
from .editing import LayoutGuidance
from .errors import ConfigError


@dataclass(frozen=True)
class LogitBias:
    """Dense per-(block, token) additive logits plus the weights that built it."""

    values: np.ndarray  # (block_rows, block_cols, K) float32
    weight_in: float
    weight_out: float

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=np.float32)
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    def __add__(self, other):
        other_vals = np.asarray(getattr(other, "values", other), dtype=np.float32)
        return self.values + other_vals


def default_mask_weights(grid_blocks: int) -> tuple[float, float]:
    """Boost comparable to the logit spread of a grid this size."""
    w_in = 0.5 * math.log(grid_blocks)
    return w_in, -0.5 * w_in


def paint_bias(
    guidance: LayoutGuidance,
    w_in: float,
    grid_shape: tuple[int, int],
    tokens: TokenSet,
) -> LogitBias:
    """Raise each guided token's logits inside its region; zero elsewhere."""
    if w_in < 0:
        raise ConfigError(f"paint weight must be non-negative, got {w_in}")
    rows, cols = grid_shape
    guidance.validate(rows, cols, tokens.names)
    values = np.zeros((rows, cols, len(tokens)), dtype=np.float32)
    for item in guidance.items:
        k = tokens.index(item.category)
        r = item.region
        values[r.top : r.bottom, r.left : r.right, k] = np.float32(w_in)
    return LogitBias(values=values, weight_in=float(w_in), weight_out=0.0)


def soft_bias(
    guidance: LayoutGuidance,
    w_in: float,
    w_out: float,
    grid_shape: tuple[int, int],
    tokens: TokenSet,
) -> LogitBias:
    """Paint boost plus suppression of the guided token outside its region."""
    if not (w_in >= 0 >= w_out):
        raise ConfigError(f"need w_in >= 0 >= w_out, got ({w_in}, {w_out})")
    base = paint_bias(guidance, w_in, grid_shape, tokens)
    values = np.array(base.values)
    rows, cols = grid_shape
    for item in guidance.items:
        k = tokens.index(item.category)
        outside = np.ones((rows, cols), dtype=bool)
        r = item.region
        outside[r.top : r.bottom, r.left : r.right] = False
        values[:, :, k] += np.float32(w_out) * outside
    return LogitBias(values=values, weight_in=float(w_in), weight_out=float(w_out))
