"""Block-level cross-attention maps: the generation-tendency probe.

All row computations here (query projection, logits, softmax) reduce only
along feature/token axes, never across blocks.  Two blocks holding the same
pixel values therefore get bitwise-identical attention rows wherever they
sit in the grid; block permutations of the latent permute the attention map
exactly.  einsum (non-BLAS path) is used instead of ``@`` to keep per-row
summation order independent of row position.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, GeometryError, GuidanceError
from .latent import LatentGrid
from .rng import normals

DEFAULT_EMBED_DIM = 16


@dataclass(frozen=True)
class TokenSet:
    """Named prompt tokens with deterministic unit-norm embeddings."""

    names: tuple[str, ...]
    embeddings: np.ndarray  # (K, embed_dim) float32, unit rows

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise ConfigError(f"duplicate token names in {self.names}")
        emb = np.ascontiguousarray(self.embeddings, dtype=np.float32)
        if emb.ndim != 2 or emb.shape[0] != len(self.names):
            raise GeometryError(f"embeddings shape {emb.shape} does not match {len(self.names)} names")
        emb.flags.writeable = False
        object.__setattr__(self, "embeddings", emb)

    @classmethod
    def from_names(
        cls, names, vocab_seed: int = 0, embed_dim: int = DEFAULT_EMBED_DIM
    ) -> "TokenSet":
        """Embeddings are pure functions of (name, vocab seed); order is kept."""
        rows = []
        for name in names:
            raw = normals(vocab_seed, f"token:{name}", np.arange(embed_dim, dtype=np.uint64))
            rows.append((raw.astype(np.float64) / np.linalg.norm(raw.astype(np.float64))).astype(np.float32))
        return cls(tuple(names), np.stack(rows) if rows else np.zeros((0, embed_dim), np.float32))

    def __len__(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise GuidanceError(f"category {name!r} is not among the prompt tokens {self.names}") from None


@dataclass(frozen=True)
class ProjectionWeights:
    """Frozen query/key/value projections; never trained."""

    w_q: np.ndarray  # (channels, key_dim)
    w_k: np.ndarray  # (embed_dim, key_dim)
    w_v: np.ndarray  # (embed_dim, channels)

    def __post_init__(self):
        for name in ("w_q", "w_k", "w_v"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float32)
            if not np.isfinite(arr).all():
                raise ConfigError(f"{name} contains non-finite entries")
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if self.w_q.shape[1] != self.w_k.shape[1]:
            raise GeometryError("w_q and w_k disagree on key dimension")
        if self.w_k.shape[0] != self.w_v.shape[0]:
            raise GeometryError("w_k and w_v disagree on embedding dimension")

    @property
    def key_dim(self) -> int:
        return self.w_q.shape[1]

    @property
    def channels(self) -> int:
        return self.w_q.shape[0]

    @classmethod
    def random(
        cls,
        engine_seed: int,
        channels: int,
        key_dim: int = DEFAULT_EMBED_DIM,
        embed_dim: int = DEFAULT_EMBED_DIM,
        scale: float = 1.0,
    ) -> "ProjectionWeights":
        def draw(tag, rows, cols):
            flat = normals(engine_seed, tag, np.arange(rows * cols, dtype=np.uint64))
            return flat.reshape(rows, cols) * np.float32(scale)

        return cls(
            w_q=draw("proj:wq", channels, key_dim),
            w_k=draw("proj:wk", embed_dim, key_dim),
            w_v=draw("proj:wv", embed_dim, channels),
        )

    @classmethod
    def aligned(
        cls,
        engine_seed: int,
        channels: int,
        embed_dim: int = DEFAULT_EMBED_DIM,
        scale: float = 8.0,
    ) -> "ProjectionWeights":
        """Coupled projections with a self-reinforcing attention loop.

        With ``w_k`` the identity and ``w_v = w_q.T``, a token's value vector
        is exactly the direction that raises its own attention logit, so
        pulling a block toward the content it already attends to strictly
        strengthens that attention.  This turns the qualitative
        rich-get-richer story of cross-attention into a monotone mechanism.
        """
        flat = normals(engine_seed, "proj:wq", np.arange(channels * embed_dim, dtype=np.uint64))
        w_q = flat.reshape(channels, embed_dim) * np.float32(scale)
        return cls(w_q=w_q, w_k=np.eye(embed_dim, dtype=np.float32), w_v=w_q.T.copy())

    def value_vectors(self, tokens: TokenSet) -> np.ndarray:
        """Per-token content directions in latent-channel space, (K, channels)."""
        return np.einsum("ke,ec->kc", tokens.embeddings, self.w_v)


@dataclass(frozen=True)
class AttentionMap:
    """Row-stochastic block-grid attention, one column per token."""

    values: np.ndarray  # (block_rows, block_cols, K) float32
    token_names: tuple[str, ...]

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=np.float32)
        if vals.ndim != 3 or vals.shape[2] != len(self.token_names):
            raise GeometryError(f"attention shape {vals.shape} does not fit {len(self.token_names)} tokens")
        if (vals < 0).any():
            raise GeometryError("attention values must be non-negative")
        row_sums = vals.sum(axis=2, dtype=np.float64)
        if not np.allclose(row_sums, 1.0, atol=1e-6, rtol=0.0):
            raise GeometryError("attention rows must sum to 1 within 1e-6")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    def column(self, name: str) -> np.ndarray:
        try:
            k = self.token_names.index(name)
        except ValueError:
            raise GuidanceError(f"token {name!r} not in attention map {self.token_names}") from None
        return self.values[:, :, k]


def block_features(values: np.ndarray, block_size: int) -> np.ndarray:
    """Mean-pool each block's pixel vectors; (H,W,C) -> (H/B, W/B, C).

    Pooling never mixes blocks, so swapping two blocks of the input permutes
    exactly those two feature vectors.
    """
    h, w, c = values.shape
    if h % block_size or w % block_size:
        raise GeometryError(f"{h}x{w} not divisible by block size {block_size}")
    hb, wb = h // block_size, w // block_size
    return values.reshape(hb, block_size, wb, block_size, c).mean(axis=(1, 3))


def attention_values(
    features: np.ndarray,
    tokens: TokenSet,
    weights: ProjectionWeights,
    bias: np.ndarray | None = None,
) -> np.ndarray:
    """Raw row-softmax attention array, (rows, cols, K) float32.

    Hot path for the sampler loop; ``cross_attention`` wraps the identical
    bits in a validated AttentionMap.
    """
    hb, wb, c = features.shape
    if c != weights.channels:
        raise GeometryError(f"feature channels {c} do not match projection channels {weights.channels}")
    if tokens.embeddings.shape[1] != weights.w_k.shape[0]:
        raise GeometryError("token embedding dim does not match projection embed dim")
    queries = np.einsum("hwc,cd->hwd", features, weights.w_q)
    keys = np.einsum("ke,ed->kd", tokens.embeddings, weights.w_k)
    logits = np.einsum("hwd,kd->hwk", queries, keys) * np.float32(1.0 / np.sqrt(weights.key_dim))
    if bias is not None:
        bias = np.asarray(getattr(bias, "values", bias), dtype=np.float32)
        if bias.shape != logits.shape:
            raise GeometryError(f"bias shape {bias.shape} does not match logits {logits.shape}")
        logits = logits + bias
    shifted = logits - logits.max(axis=2, keepdims=True)
    expd = np.exp(shifted)
    return expd / expd.sum(axis=2, keepdims=True)


def cross_attention(
    features: np.ndarray,
    tokens: TokenSet,
    weights: ProjectionWeights,
    bias: np.ndarray | None = None,
) -> AttentionMap:
    """Row-softmax of scaled query-key similarity, one row per block."""
    return AttentionMap(
        values=attention_values(features, tokens, weights, bias), token_names=tokens.names
    )


def step0_attention(
    z: LatentGrid,
    tokens: TokenSet,
    weights: ProjectionWeights,
    bias: np.ndarray | None = None,
) -> AttentionMap:
    """Generation tendency read off the very first denoising step."""
    return cross_attention(block_features(z.values, z.block_size), tokens, weights, bias)


def attention_to_pgm(attn: AttentionMap, token: str) -> bytes:
    """One binary PGM (P5) per token, attention scaled by 255."""
    col = attn.column(token)
    pixels = np.clip(np.rint(col * 255.0), 0, 255).astype(np.uint8)
    header = f"P5\n{col.shape[1]} {col.shape[0]}\n255\n".encode("ascii")
    return header + pixels.tobytes()


def attention_to_json(attn: AttentionMap) -> str:
    payload = {
        "rows": attn.values.shape[0],
        "cols": attn.values.shape[1],
        "tokens": list(attn.token_names),
        "maps": {
            name: [[float(v) for v in row] for row in attn.column(name)]
            for name in attn.token_names
        },
    }
    return json.dumps(payload, sort_keys=True)
