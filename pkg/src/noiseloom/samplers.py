"""Deterministic denoising schedulers (DDIM and the linear multi-step variant).

Both samplers are pure functions of (initial latent, predictor, schedule):
there is no stochastic branch anywhere, which is the premise the whole
noise-editing engine rests on.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np

from .errors import ConfigError, GeometryError
from .latent import LatentGrid

# Noise predictor: maps (current latent, timestep) to an eps array of the
# same shape.  The prompt, if any, is bound inside the callable.
Predictor = Callable[[LatentGrid, int], np.ndarray]

SamplerKind = Literal["ddim", "plms"]

# Adams-Bashforth style weights, most recent estimate first.  Order 4 is the
# classic 55/-59/37/-9 over 24 combination; lower orders serve as warmup.
_MULTISTEP_WEIGHTS = {
    1: (1.0,),
    2: (3 / 2, -1 / 2),
    3: (23 / 12, -16 / 12, 5 / 12),
    4: (55 / 24, -59 / 24, 37 / 24, -9 / 24),
}
for _order, _w in _MULTISTEP_WEIGHTS.items():
    assert abs(sum(_w) - 1.0) < 1e-12, f"order-{_order} weights must sum to 1"

# Same combinations rewritten as a base estimate plus weighted differences
# (exact identity in real arithmetic).  With a constant predictor every
# difference is exactly zero, so the multistep path reproduces plain DDIM
# bitwise instead of merely to rounding error.
_DIFF_WEIGHTS = {
    1: (),
    2: (1 / 2,),
    3: (16 / 12, -5 / 12),
    4: (59 / 24, -37 / 24, 9 / 24),
}


@dataclass(frozen=True)
class NoiseSchedule:
    """Linear beta schedule with cumulative signal levels.

    ``alpha_bars[k]`` belongs to timestep ``k + 1``; timestep 0 is the clean
    endpoint with a conceptual cumulative alpha of exactly 1.
    """

    steps: int
    betas: np.ndarray
    alpha_bars: np.ndarray
    timestep_sequence: tuple[int, ...]

    def alpha_bar(self, t: int) -> float:
        if t == 0:
            return 1.0
        if not 1 <= t <= self.steps:
            raise GeometryError(f"timestep {t} outside [0, {self.steps}]")
        return float(self.alpha_bars[t - 1])


def make_schedule(steps: int, beta_start: float, beta_end: float) -> NoiseSchedule:
    if steps < 1:
        raise ConfigError(f"steps must be >= 1, got {steps}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ConfigError(f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})")
    betas = np.linspace(beta_start, beta_end, steps, dtype=np.float64)
    alpha_bars = np.cumprod(1.0 - betas)
    return NoiseSchedule(
        steps=steps,
        betas=betas,
        alpha_bars=alpha_bars,
        timestep_sequence=tuple(range(steps, 0, -1)),
    )


def default_schedule(steps: int = 50) -> NoiseSchedule:
    """Common diffusion defaults squeezed into the requested step count."""
    return make_schedule(steps, 1e-4, 2e-2)


@dataclass(frozen=True)
class SamplerState:
    """Value-type cursor for a multistep sampling run."""

    latent: LatentGrid
    step: int
    eps_history: tuple[np.ndarray, ...] = field(default_factory=tuple)  # most recent first

    def __post_init__(self):
        if len(self.eps_history) > 3:
            raise ConfigError("eps history keeps at most 3 past estimates")


def _check_eps(z: LatentGrid, eps: np.ndarray) -> np.ndarray:
    eps = np.asarray(getattr(eps, "values", eps))
    if eps.shape != z.values.shape:
        raise GeometryError(f"eps shape {eps.shape} does not match latent {z.values.shape}")
    return eps


def ddim_update(
    values: np.ndarray, eps: np.ndarray, alpha_bar_t: float, alpha_bar_prev: float
) -> np.ndarray:
    """Deterministic DDIM update on raw float32 arrays (eta = 0)."""
    noise_t = np.float32(np.sqrt(1.0 - alpha_bar_t))
    signal_t = np.float32(np.sqrt(alpha_bar_t))
    noise_p = np.float32(np.sqrt(1.0 - alpha_bar_prev))
    signal_p = np.float32(np.sqrt(alpha_bar_prev))
    x0_hat = (values - noise_t * eps) / signal_t
    return signal_p * x0_hat + noise_p * eps


def ddim_step(
    z_t: LatentGrid, eps: np.ndarray, t: int, t_prev: int, sched: NoiseSchedule
) -> LatentGrid:
    if t_prev > t:
        raise ConfigError(f"denoising runs backwards in t: {t} -> {t_prev}")
    eps = _check_eps(z_t, eps)
    out = ddim_update(z_t.values, eps, sched.alpha_bar(t), sched.alpha_bar(t_prev))
    return z_t.with_values(out)


def combine_eps(history_newest_first: tuple[np.ndarray, ...]) -> np.ndarray:
    """Multistep effective noise estimate from up to 4 raw estimates."""
    order = min(len(history_newest_first), 4)
    if order == 0:
        raise ConfigError("need at least one eps estimate")
    newest = history_newest_first[0]
    eff = newest
    for weight, past in zip(_DIFF_WEIGHTS[order], history_newest_first[1:order]):
        eff = eff + np.float32(weight) * (newest - past)
    return eff


def plms_step(
    state: SamplerState, eps_new: np.ndarray, t: int, t_prev: int, sched: NoiseSchedule
) -> SamplerState:
    """One multistep update; warms up through orders 1..4 as history fills."""
    eps_new = _check_eps(state.latent, eps_new)
    eps_eff = combine_eps((eps_new, *state.eps_history))
    out = ddim_update(state.latent.values, eps_eff, sched.alpha_bar(t), sched.alpha_bar(t_prev))
    return SamplerState(
        latent=state.latent.with_values(out),
        step=t_prev,
        eps_history=(eps_new, *state.eps_history)[:3],
    )


def run_sampler(
    z_start: LatentGrid,
    predictor: Predictor,
    sched: NoiseSchedule,
    kind: SamplerKind = "plms",
) -> LatentGrid:
    """Iterate the schedule's timestep sequence down to the clean latent."""
    if kind not in ("ddim", "plms"):
        raise ConfigError(f"unknown sampler kind {kind!r}")
    seq = sched.timestep_sequence
    state = SamplerState(latent=z_start, step=seq[0] if seq else 0)
    for i, t in enumerate(seq):
        t_prev = seq[i + 1] if i + 1 < len(seq) else 0
        eps = predictor(state.latent, t)
        if kind == "ddim":
            state = SamplerState(latent=ddim_step(state.latent, eps, t, t_prev, sched), step=t_prev)
        else:
            state = plms_step(state, eps, t, t_prev, sched)
    return state.latent
