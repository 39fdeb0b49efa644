"""scikit-learn style wrappers around the noise-editing operators.

Rows of ``X`` are flattened latents (``height * width * channels`` floats,
row-major, channel-minor), so the editors compose with pipelines and grid
search like any other stateless transformer.  ``fit`` validates parameters
and is otherwise a no-op; every transform is a pure function of its inputs.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array

from .editing import parse_guidance
from .errors import GeometryError
from .latent import LatentGrid, RegionMask, Region, resample_region
from .toy import ToyEngine, ToyModelParams


def _params_from(estimator) -> ToyModelParams:
    return ToyModelParams(**(estimator.toy_params or {}))


def _check_latent_matrix(X, params: ToyModelParams) -> np.ndarray:
    X = check_array(X, dtype=np.float32, ensure_2d=True)
    expected = params.height * params.width * params.channels
    if X.shape[1] != expected:
        raise GeometryError(
            f"X has {X.shape[1]} columns, expected {expected} "
            f"({params.height}x{params.width}x{params.channels})"
        )
    return X


def _rows_to_grids(X: np.ndarray, params: ToyModelParams, seed: int = 0):
    for row in X:
        yield LatentGrid(
            params.height,
            params.width,
            params.channels,
            row.reshape(params.height, params.width, params.channels),
            seed,
            params.block_size,
        )


class RegionResampler(TransformerMixin, BaseEstimator):
    """Redraws the configured block region of every latent row.

    Parameters
    ----------
    box : (top, left, bottom, right) in block units, or None
    blocks : explicit [(row, col), ...] list, or None (exactly one of the two)
    fresh_seed : seed of the replacement noise stream
    toy_params : optional dict of ToyModelParams overrides (geometry source)
    """

    def __init__(self, box=None, blocks=None, fresh_seed=0, toy_params=None):
        self.box = box
        self.blocks = blocks
        self.fresh_seed = fresh_seed
        self.toy_params = toy_params

    def fit(self, X=None, y=None):
        params = _params_from(self)
        if (self.box is None) == (self.blocks is None):
            raise GeometryError("specify exactly one of box= or blocks=")
        grid = (params.block_rows, params.block_cols)
        if self.box is not None:
            self.mask_ = RegionMask.from_region(Region(*self.box), *grid)
        else:
            self.mask_ = RegionMask.from_blocks(self.blocks, *grid)
        self.params_ = params
        return self

    def transform(self, X):
        if not hasattr(self, "mask_"):
            self.fit()
        X = _check_latent_matrix(X, self.params_)
        out = np.empty_like(X)
        for i, grid in enumerate(_rows_to_grids(X, self.params_)):
            out[i] = resample_region(grid, self.mask_, self.fresh_seed).values.reshape(-1)
        return out


class LayoutSwapper(TransformerMixin, BaseEstimator):
    """Applies the attention-guided block swap to every latent row.

    Parameters
    ----------
    prompt : category names the generator is conditioned on
    guidance : {"items": [{"box": [t,l,b,r], "category": name}, ...]}
    pairing_seed : seed for the random in/out pairing
    toy_params : optional dict of ToyModelParams overrides
    """

    def __init__(self, prompt=(), guidance=None, pairing_seed=0, toy_params=None):
        self.prompt = prompt
        self.guidance = guidance
        self.pairing_seed = pairing_seed
        self.toy_params = toy_params

    def fit(self, X=None, y=None):
        params = _params_from(self)
        self.engine_ = ToyEngine(tuple(self.prompt), params)
        guidance, seed = parse_guidance(self.guidance)
        self.guidance_ = guidance
        self.pairing_seed_ = self.pairing_seed if self.pairing_seed is not None else seed
        self.guidance_.validate(params.block_rows, params.block_cols, self.engine_.tokens.names)
        self.params_ = params
        return self

    def transform(self, X):
        if not hasattr(self, "engine_"):
            self.fit()
        X = _check_latent_matrix(X, self.params_)
        out = np.empty_like(X)
        for i, grid in enumerate(_rows_to_grids(X, self.params_)):
            swapped, _ = self.engine_.swap(grid, self.guidance_, self.pairing_seed_)
            out[i] = swapped.values.reshape(-1)
        return out


class AttentionFeaturizer(TransformerMixin, BaseEstimator):
    """Extracts flattened step-0 attention maps as features.

    Output shape is ``(n_samples, block_rows * block_cols * n_tokens)`` where
    the token axis covers the prompt categories plus the background token.
    """

    def __init__(self, prompt=(), toy_params=None):
        self.prompt = prompt
        self.toy_params = toy_params

    def fit(self, X=None, y=None):
        self.params_ = _params_from(self)
        self.engine_ = ToyEngine(tuple(self.prompt), self.params_)
        self.feature_tokens_ = self.engine_.tokens.names
        return self

    def transform(self, X):
        if not hasattr(self, "engine_"):
            self.fit()
        X = _check_latent_matrix(X, self.params_)
        rows = []
        for grid in _rows_to_grids(X, self.params_):
            rows.append(self.engine_.attention(grid).values.reshape(-1))
        return np.stack(rows) if rows else np.zeros((0, 0), np.float32)


class ToyLabeler(BaseEstimator):
    """Runs the toy generator and predicts per-block label indices.

    ``predict`` returns ``(n_samples, block_rows * block_cols)`` ints where
    -1 is background and other values index into ``category_names_``.
    """

    def __init__(self, prompt=(), sampler="plms", toy_params=None):
        self.prompt = prompt
        self.sampler = sampler
        self.toy_params = toy_params

    def fit(self, X=None, y=None):
        self.params_ = _params_from(self)
        self.engine_ = ToyEngine(tuple(self.prompt), self.params_)
        self.category_names_ = self.engine_.categories.names
        return self

    def predict(self, X):
        if not hasattr(self, "engine_"):
            self.fit()
        X = _check_latent_matrix(X, self.params_)
        rows = []
        for grid in _rows_to_grids(X, self.params_):
            result = self.engine_.generate(grid, self.sampler)
            rows.append(result.label_map.labels.reshape(-1).astype(np.int64))
        return np.stack(rows) if rows else np.zeros((0, 0), np.int64)
