"""Diffusion primitives: noise schedule, latent state, denoiser and scheduler interfaces."""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .masks import ClassMask

DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 2e-2


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    """Forward-process variances ``beta_1..beta_T``.

    ``alpha_bars[t]`` is the cumulative product of ``1 - beta_i`` for
    ``i <= t``, with ``alpha_bars[0] == 1``.
    """

    betas: np.ndarray

    def __post_init__(self) -> None:
        betas = np.asarray(self.betas, dtype=np.float64).reshape(-1)
        if betas.size < 1:
            raise ValueError("noise schedule needs at least one step")
        if not np.all((betas > 0) & (betas < 1)):
            raise ValueError("every beta must lie in (0, 1)")
        betas.setflags(write=False)
        object.__setattr__(self, "betas", betas)
        alpha_bars = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
        alpha_bars.setflags(write=False)
        object.__setattr__(self, "alpha_bars", alpha_bars)

    @classmethod
    def linear(cls, T: int = 1000, beta_start: float = DEFAULT_BETA_START,
               beta_end: float = DEFAULT_BETA_END) -> "NoiseSchedule":
        return cls(np.linspace(beta_start, beta_end, T))

    @property
    def T(self) -> int:
        return self.betas.size

    def alpha_bar(self, t: int) -> float:
        return float(self.alpha_bars[t])


@dataclass(frozen=True, eq=False)
class LatentState:
    z: np.ndarray
    t: int

    def __post_init__(self) -> None:
        z = np.array(self.z, dtype=np.float64).reshape(-1)
        z.setflags(write=False)
        object.__setattr__(self, "z", z)
        if self.t < 0:
            raise ValueError(f"timestep must be nonnegative, got {self.t}")


def forward_noise(x0, t: int, sched: NoiseSchedule, rng: np.random.Generator) -> LatentState:
    """Sample ``z_t = sqrt(ab_t) x0 + sqrt(1 - ab_t) eps``."""
    if not 1 <= t <= sched.T:
        raise ValueError(f"t={t} outside [1, {sched.T}]")
    x0 = np.asarray(x0, dtype=np.float64)
    ab = sched.alpha_bar(t)
    eps = rng.standard_normal(x0.shape)
    return LatentState(np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps, t)


class Denoiser(ABC):
    """Noise predictor ``D(z_t, t, mask, embedding; lambda)``.

    Implementations must be deterministic and return finite values for
    finite inputs. ``lam`` is an opaque conditioning-strength scalar whose
    meaning belongs to the implementation. Implementations should also be
    Lipschitz in ``embedding``; otherwise the discrepancy signal need not
    vanish as the perturbation does.
    """

    @abstractmethod
    def predict(self, z: LatentState, t: int, mask: ClassMask, embedding: np.ndarray,
                lam: float) -> np.ndarray:
        raise NotImplementedError


class CountingDenoiser(Denoiser):
    """Wraps another denoiser and counts ``predict`` calls."""

    def __init__(self, inner: Denoiser):
        self.inner = inner
        self.calls = 0

    def predict(self, z, t, mask, embedding, lam):
        self.calls += 1
        return self.inner.predict(z, t, mask, embedding, lam)


def timestep_grid(T: int, num_steps: int) -> list[int]:
    """``num_steps`` integer timesteps spaced uniformly from ``T`` down to 1."""
    if num_steps < 1:
        raise ValueError(f"num_steps must be positive, got {num_steps}")
    if num_steps > T:
        raise ValueError(f"num_steps={num_steps} exceeds the {T} available timesteps")
    if num_steps == 1:
        return [T]
    grid = np.rint(np.linspace(T, 1, num_steps)).astype(int)
    return [int(t) for t in grid]


def ddim_step(z: np.ndarray, eps_hat: np.ndarray, alpha_bar_t: float, alpha_bar_prev: float) -> np.ndarray:
    """Deterministic DDIM (eta = 0) update from ``alpha_bar_t`` to ``alpha_bar_prev``."""
    x0_hat = (z - np.sqrt(1.0 - alpha_bar_t) * eps_hat) / np.sqrt(alpha_bar_t)
    return np.sqrt(alpha_bar_prev) * x0_hat + np.sqrt(1.0 - alpha_bar_prev) * eps_hat


class Scheduler(ABC):
    timesteps: list[int]

    @abstractmethod
    def step(self, state: LatentState, eps_hat: np.ndarray) -> LatentState:
        raise NotImplementedError


class DDIMScheduler(Scheduler):
    """Deterministic DDIM over a uniform grid; the step after ``t = 1`` lands on ``t = 0``."""

    def __init__(self, noise_schedule: NoiseSchedule, num_steps: int):
        self.noise_schedule = noise_schedule
        self.timesteps = timestep_grid(noise_schedule.T, num_steps)
        self._next = dict(zip(self.timesteps, self.timesteps[1:] + [0]))

    def prev_timestep(self, t: int) -> int:
        try:
            return self._next[t]
        except KeyError:
            raise ValueError(f"t={t} is not on the step grid") from None

    def step(self, state: LatentState, eps_hat: np.ndarray) -> LatentState:
        if state.t < 1:
            raise ValueError("cannot step past t = 0")
        t_prev = self.prev_timestep(state.t)
        ab = self.noise_schedule.alpha_bars
        z = ddim_step(state.z, np.asarray(eps_hat, dtype=np.float64), ab[state.t], ab[t_prev])
        return LatentState(z, t_prev)
