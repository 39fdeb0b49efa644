"""Counter-based deterministic random streams.

Every random value in the engine is a pure function of
``(seed, purpose, counter index)``: there is no generator state to advance,
so redrawing one slice of a latent can never perturb the values of any other
slice.  Purposes are short strings ("latent", "token:dog", ...) hashed with
SHA-256 so results do not depend on Python's per-process hash salt.
"""

from __future__ import annotations

import hashlib

import numpy as np
from scipy.special import ndtri

_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


def stream_key(seed: int, purpose: str) -> int:
    """Derive the 64-bit subkey for one (seed, purpose) stream."""
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    digest = hashlib.sha256(f"{purpose}|{seed:#x}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def _mix64(x: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer; relies on uint64 wraparound
    x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


def random_words(seed: int, purpose: str, indices: np.ndarray) -> np.ndarray:
    """uint64 words, one per counter index."""
    key = np.uint64(stream_key(seed, purpose))
    x = (indices.astype(np.uint64) * _GOLDEN + key) & _MASK64
    return _mix64(_mix64(x))


def uniforms(seed: int, purpose: str, indices: np.ndarray) -> np.ndarray:
    """Uniform floats in the open interval (0, 1), one per index."""
    words = random_words(seed, purpose, indices)
    # 53 significant bits, offset by half a ulp so 0 and 1 are excluded
    return ((words >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def normals(seed: int, purpose: str, indices: np.ndarray) -> np.ndarray:
    """Standard-normal float32 values, one per counter index.

    The inverse normal CDF applied to a (0,1) uniform is exact, branch-free
    and independent per index, which is what makes partial redraws safe.
    """
    return ndtri(uniforms(seed, purpose, indices)).astype(np.float32)


def shuffled(items: list, seed: int, purpose: str) -> list:
    """Deterministic Fisher-Yates shuffle driven by the keyed stream."""
    out = list(items)
    n = len(out)
    if n < 2:
        return out
    words = random_words(seed, purpose, np.arange(n - 1, dtype=np.uint64))
    for i in range(n - 1, 0, -1):
        j = int(words[n - 1 - i] % np.uint64(i + 1))
        out[i], out[j] = out[j], out[i]
    return out
