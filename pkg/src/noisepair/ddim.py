"""Deterministic DDIM sampling and inversion against a pluggable denoiser.

The schedule exposes alpha_bar for timestep indices 1..T with alpha_bar(0)
defined as 1 so the first inversion step is well-formed. Analytic denoisers
(zero, Gaussian-score) make both trajectories verifiable in closed form at
desk scale; real backends plug in through the same predict() surface.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol, runtime_checkable

import numpy as np

from .lattice import LatentGrid

__all__ = [
    "NoiseSchedule",
    "ConditioningRef",
    "Denoiser",
    "DenoiserStepError",
    "ddim_sample",
    "ddim_invert",
    "zero_denoiser",
    "analytic_gaussian_denoiser",
    "DEFAULT_BETA_START",
    "DEFAULT_BETA_END",
    "DEFAULT_TRAIN_STEPS",
]

DEFAULT_BETA_START = 8.5e-4
DEFAULT_BETA_END = 1.2e-2
DEFAULT_TRAIN_STEPS = 1000


@dataclass(frozen=True)
class ConditioningRef:
    """Opaque token the backend resolves to a prompt or embedding."""

    token: int = 0

    def __post_init__(self):
        if not (0 <= self.token < 2**64):
            raise ValueError("conditioning token must fit in 64 bits")


@dataclass(frozen=True)
class NoiseSchedule:
    """Strictly decreasing alpha_bar sequence for timesteps 1..T."""

    alpha_bar: np.ndarray
    summary: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        ab = np.asarray(self.alpha_bar, dtype=np.float64)
        if ab.ndim != 1 or ab.size < 1:
            raise ValueError("alpha_bar must be a non-empty 1D sequence")
        if not (np.all(ab > 0.0) and np.all(ab < 1.0)):
            raise ValueError("alpha_bar values must lie in (0, 1)")
        if not np.all(np.diff(ab) < 0.0):
            raise ValueError("alpha_bar must be strictly decreasing")
        object.__setattr__(self, "alpha_bar", ab)
        if not self.summary:
            object.__setattr__(self, "summary", {"kind": "explicit", "steps": int(ab.size)})

    @property
    def steps(self) -> int:
        return int(self.alpha_bar.size)

    def alpha_bar_at(self, t: int) -> float:
        """alpha_bar for timestep index t in 0..T, with alpha_bar(0) == 1."""
        if not (0 <= t <= self.steps):
            raise ValueError(f"timestep {t} outside 0..{self.steps}")
        return 1.0 if t == 0 else float(self.alpha_bar[t - 1])

    @classmethod
    def linear_beta(
        cls,
        steps: int,
        beta_start: float = DEFAULT_BETA_START,
        beta_end: float = DEFAULT_BETA_END,
        train_steps: int = DEFAULT_TRAIN_STEPS,
    ) -> "NoiseSchedule":
        """Linear-beta training schedule strided uniformly to ``steps``."""
        if not (1 <= steps <= train_steps):
            raise ValueError(f"steps must be in 1..{train_steps}, got {steps}")
        if not (0.0 < beta_start <= beta_end < 1.0):
            raise ValueError("betas must satisfy 0 < beta_start <= beta_end < 1")
        betas = np.linspace(beta_start, beta_end, train_steps)
        full = np.cumprod(1.0 - betas)
        idx = (np.arange(1, steps + 1) * train_steps) // steps - 1
        return cls(
            full[idx],
            summary={
                "kind": "linear_beta",
                "beta_start": beta_start,
                "beta_end": beta_end,
                "train_steps": train_steps,
                "steps": steps,
            },
        )


@runtime_checkable
class Denoiser(Protocol):
    """Noise predictor: eps = predict(z_t, t, cond), same shape as z_t."""

    def predict(self, z: LatentGrid, t: int, cond: ConditioningRef | None) -> LatentGrid: ...


class DenoiserStepError(RuntimeError):
    """A denoiser call failed at a specific trajectory step."""

    def __init__(self, step: int, message: str):
        super().__init__(f"denoiser failed at step {step}: {message}")
        self.step = step


class _ZeroDenoiser:
    def predict(self, z: LatentGrid, t: int, cond: ConditioningRef | None) -> LatentGrid:
        return LatentGrid(np.zeros_like(z.data))


class _GaussianScoreDenoiser:
    """Bayes-optimal noise predictor for unit-Gaussian clean latents.

    For z_0 ~ N(0, I) and z_t = sqrt(ab)*z_0 + sqrt(1-ab)*eps, the posterior
    mean of eps given z_t is sqrt(1-ab)*z_t: pointwise, linear, and spatially
    local, which makes whole trajectories collapse to per-pixel scalar maps.
    """

    def __init__(self, schedule: NoiseSchedule):
        self.schedule = schedule

    def predict(self, z: LatentGrid, t: int, cond: ConditioningRef | None) -> LatentGrid:
        ab = self.schedule.alpha_bar_at(t)
        return LatentGrid(math.sqrt(1.0 - ab) * z.data)


def zero_denoiser() -> Denoiser:
    """Denoiser that always predicts zero noise (exact scaling trajectories)."""
    return _ZeroDenoiser()


def analytic_gaussian_denoiser(schedule: NoiseSchedule) -> Denoiser:
    """Bayes-optimal predictor for z_0 ~ N(0, I) under ``schedule``."""
    return _GaussianScoreDenoiser(schedule)


def _predict(denoiser: Denoiser, z: LatentGrid, t: int, cond, step: int) -> LatentGrid:
    try:
        eps = denoiser.predict(z, t, cond)
    except Exception as exc:
        raise DenoiserStepError(step, str(exc)) from exc
    if eps.shape != z.shape:
        raise DenoiserStepError(step, f"prediction shape {eps.shape} != input {z.shape}")
    return eps


def _ddim_step(z: np.ndarray, eps: np.ndarray, ab_from: float, ab_to: float) -> np.ndarray:
    """One deterministic (eta=0) DDIM update between two alpha_bar levels."""
    x0 = (z - math.sqrt(1.0 - ab_from) * eps) / math.sqrt(ab_from)
    return math.sqrt(ab_to) * x0 + math.sqrt(1.0 - ab_to) * eps


def ddim_sample(
    z_T: LatentGrid,
    denoiser: Denoiser,
    schedule: NoiseSchedule,
    cond: ConditioningRef | None = None,
) -> LatentGrid:
    """Deterministic DDIM sampling from z_T down to z_0."""
    z = z_T.data
    for t in range(schedule.steps, 0, -1):
        eps = _predict(denoiser, LatentGrid(z), t, cond, step=t)
        z = _ddim_step(z, eps.data, schedule.alpha_bar_at(t), schedule.alpha_bar_at(t - 1))
    return LatentGrid(z)


def ddim_invert(
    z_0: LatentGrid,
    denoiser: Denoiser,
    schedule: NoiseSchedule,
    cond: ConditioningRef | None = None,
) -> list[LatentGrid]:
    """Deterministic DDIM inversion; returns the full trajectory z_0 .. z_T.

    Each forward step reuses the noise prediction evaluated at the current
    (earlier) latent, the standard first-order approximation whose round-trip
    mismatch shrinks as the step count grows.
    """
    trajectory = [z_0]
    z = z_0.data
    for t in range(schedule.steps):
        eps = _predict(denoiser, LatentGrid(z), t, cond, step=t)
        z = _ddim_step(z, eps.data, schedule.alpha_bar_at(t), schedule.alpha_bar_at(t + 1))
        trajectory.append(LatentGrid(z))
    return trajectory
