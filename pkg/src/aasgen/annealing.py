"""Annealing schedule, conditioning strength and the noise-scale controller.

``gamma`` ramps linearly from 0 at ``t >= tau2`` to 1 at ``t <= tau1``; it is
the weight on the clean embedding. Sampling runs ``t = T -> 1``, so gamma
rises from 0 to 1 over the trajectory. ``lambda_strength`` maps gamma onto
``[lambda_min, lambda_max]``. ``update_noise_scale`` is a saturating
proportional controller that drives the measured conditional output
discrepancy (COD) toward ``cod_target``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .errors import NonFiniteCOD

DEFAULT_TAU1 = 200
DEFAULT_TAU2 = 800
DEFAULT_T = 1000
DEFAULT_COD_TARGET = 0.1
DEFAULT_KP = 0.01
DEFAULT_S_INIT = 0.1
DEFAULT_S_MIN = 0.05
DEFAULT_S_MAX = 0.5
DEFAULT_LAMBDA_MIN = 0.6
DEFAULT_LAMBDA_MAX = 1.0


@dataclass(frozen=True)
class AnnealSchedule:
    tau1: int = DEFAULT_TAU1
    tau2: int = DEFAULT_TAU2
    total_steps: int = DEFAULT_T

    def __post_init__(self) -> None:
        if self.total_steps < 1:
            raise ValueError(f"total_steps must be positive, got {self.total_steps}")
        if not 0 <= self.tau1 < self.tau2 <= self.total_steps:
            raise ValueError(
                f"annealing bounds must satisfy 0 <= tau1 < tau2 <= T, "
                f"got tau1={self.tau1}, tau2={self.tau2}, T={self.total_steps}"
            )


def gamma(t: float, sched: AnnealSchedule) -> float:
    """Clamped linear ramp ``max(0, min(1, (tau2 - t) / (tau2 - tau1)))``."""
    if not 0 <= t <= sched.total_steps:
        raise ValueError(f"t={t} outside [0, {sched.total_steps}]")
    return max(0.0, min(1.0, (sched.tau2 - t) / (sched.tau2 - sched.tau1)))


def lambda_strength(
    gamma_val: float,
    lambda_min: float = DEFAULT_LAMBDA_MIN,
    lambda_max: float = DEFAULT_LAMBDA_MAX,
) -> float:
    if not 0.0 <= gamma_val <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma_val}")
    if lambda_min > lambda_max:
        raise ValueError("lambda_min must not exceed lambda_max")
    # convex-combination form is exact at both endpoints
    return (1.0 - gamma_val) * lambda_min + gamma_val * lambda_max


def clip(x: float, lo: float, hi: float) -> float:
    return min(max(x, lo), hi)


@dataclass(frozen=True)
class ControllerState:
    """Noise scale ``s`` and the controller constants.

    ``ki`` is an optional integral gain, off by default; with ``ki == 0`` the
    update is purely proportional.
    """

    s: float = DEFAULT_S_INIT
    s_min: float = DEFAULT_S_MIN
    s_max: float = DEFAULT_S_MAX
    kappa_p: float = DEFAULT_KP
    cod_target: float = DEFAULT_COD_TARGET
    ki: float = 0.0
    integral: float = 0.0

    def __post_init__(self) -> None:
        for name in ("s", "s_min", "s_max", "kappa_p", "cod_target", "ki"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be a finite nonnegative number, got {value}")
        if self.s_min > self.s_max:
            raise ValueError(f"s_min={self.s_min} exceeds s_max={self.s_max}")
        if not self.s_min <= self.s <= self.s_max:
            raise ValueError(f"s={self.s} outside [{self.s_min}, {self.s_max}]")


def update_noise_scale(state: ControllerState, cod: float) -> ControllerState:
    """``s' = clip(s + kappa_p * (cod_target - cod), s_min, s_max)``."""
    if not math.isfinite(cod):
        raise NonFiniteCOD(f"COD is not finite: {cod}")
    if cod < 0:
        raise ValueError(f"COD must be nonnegative, got {cod}")
    error = state.cod_target - cod
    integral = state.integral + error
    s = state.s + state.kappa_p * error
    if state.ki:
        s += state.ki * integral
    return replace(state, s=clip(s, state.s_min, state.s_max), integral=integral)
