"""Adaptive annealing sampler.

Each denoising step:

1. evaluates the annealing weight ``gamma`` and conditioning strength ``lambda``;
2. measures the conditional output discrepancy (COD) between two
   independently perturbed copies of the positive embedding;
3. computes the next noise scale from COD with the proportional controller;
4. perturbs the positive and unconditional embeddings with one shared noise
   vector of opposite sign, plus independent residual jitter;
5. combines the two guided predictions with classifier-free guidance and
   takes a deterministic DDIM step.

The controller output only takes effect on the following step. Each step
costs exactly four denoiser calls.
"""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import annealing
from .annealing import AnnealSchedule, ControllerState, gamma, lambda_strength, update_noise_scale
from .diffusion import DDIMScheduler, Denoiser, LatentState, NoiseSchedule, Scheduler
from .embedder import check_embedding
from .errors import DimensionMismatch, NumericalDivergence
from .masks import ClassMask
from .rng import check_seed, sampler_rng

TELEMETRY_HEADER = ("step", "t", "gamma", "lambda", "cod", "s_before", "s_after")


@dataclass(frozen=True)
class AASConfig:
    """All sampler hyperparameters.

    ``steps`` is the diffusion horizon ``T`` the annealing bounds refer to;
    ``num_steps`` is how many denoising steps are actually taken. With
    ``anneal=False`` gamma is pinned to 1, which together with zero noise
    scale and ``sigma_r=0`` gives plain classifier-free guidance sampling.
    """

    tau1: int = annealing.DEFAULT_TAU1
    tau2: int = annealing.DEFAULT_TAU2
    steps: int = annealing.DEFAULT_T
    cod_target: float = annealing.DEFAULT_COD_TARGET
    kp: float = annealing.DEFAULT_KP
    ki: float = 0.0
    s_init: float = annealing.DEFAULT_S_INIT
    s_min: float = annealing.DEFAULT_S_MIN
    s_max: float = annealing.DEFAULT_S_MAX
    lambda_min: float = annealing.DEFAULT_LAMBDA_MIN
    lambda_max: float = annealing.DEFAULT_LAMBDA_MAX
    sigma_r: float = 0.1
    guidance_w: float = 7.5
    num_steps: int = 50
    seed: int = 0
    anneal: bool = True

    def __post_init__(self) -> None:
        AnnealSchedule(self.tau1, self.tau2, self.steps)  # validates the bounds
        self.controller()
        if self.sigma_r < 0:
            raise ValueError(f"sigma_r must be nonnegative, got {self.sigma_r}")
        if self.num_steps < 1:
            raise ValueError(f"num_steps must be positive, got {self.num_steps}")
        if self.num_steps > self.steps:
            raise ValueError(f"num_steps={self.num_steps} exceeds steps={self.steps}")
        if self.lambda_min > self.lambda_max:
            raise ValueError("lambda_min must not exceed lambda_max")
        check_seed(self.seed)

    @property
    def schedule(self) -> AnnealSchedule:
        return AnnealSchedule(self.tau1, self.tau2, self.steps)

    def controller(self) -> ControllerState:
        return ControllerState(
            s=self.s_init, s_min=self.s_min, s_max=self.s_max,
            kappa_p=self.kp, cod_target=self.cod_target, ki=self.ki,
        )

    def baseline(self) -> "AASConfig":
        """Same config with every AAS mechanism switched off."""
        return replace(self, s_init=0.0, s_min=0.0, s_max=0.0, sigma_r=0.0, anneal=False)

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class StepTelemetry:
    step: int
    t: int
    gamma: float
    lam: float
    cod: float
    s_before: float
    s_after: float

    def row(self) -> list[str]:
        return [str(self.step), str(self.t)] + [
            f"{v:.9g}" for v in (self.gamma, self.lam, self.cod, self.s_before, self.s_after)
        ]


def telemetry_csv(telemetry: list[StepTelemetry]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TELEMETRY_HEADER)
    for rec in telemetry:
        writer.writerow(rec.row())
    return buf.getvalue()


def write_telemetry_csv(path: str | Path, telemetry: list[StepTelemetry]) -> None:
    Path(path).write_text(telemetry_csv(telemetry), encoding="utf-8")


def read_telemetry_csv(path: str | Path) -> list[StepTelemetry]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != TELEMETRY_HEADER:
            raise ValueError(f"unexpected telemetry header {header}")
        return [
            StepTelemetry(int(r[0]), int(r[1]), *(float(v) for v in r[2:]))
            for r in reader
        ]


def anticorrelated_pair(y_p, y_u, gamma_val, s, n, eps_p, eps_u, sigma_r):
    """Perturbed embeddings for fixed draws ``n``, ``eps_p``, ``eps_u`` (all standard normal)."""
    a = np.sqrt(gamma_val)
    b = s * np.sqrt(1.0 - gamma_val)
    yp = a * y_p - b * n + sigma_r * eps_p
    yu = a * y_u + b * n + sigma_r * eps_u
    return yp, yu


def perturb_anticorrelated(y_p, y_u, gamma_val: float, s: float, sigma_r: float,
                           rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Shared-noise perturbation of the positive/unconditional pair.

    Draw order: ``n``, then ``eps_p``, then ``eps_u``.
    """
    if not 0.0 <= gamma_val <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma_val}")
    y_p = np.asarray(y_p, dtype=np.float64)
    y_u = np.asarray(y_u, dtype=np.float64)
    if y_p.shape != y_u.shape:
        raise DimensionMismatch(f"embedding shapes differ: {y_p.shape} vs {y_u.shape}")
    d = y_p.shape
    n = rng.standard_normal(d)
    eps_p = rng.standard_normal(d)
    eps_u = rng.standard_normal(d)
    return anticorrelated_pair(y_p, y_u, gamma_val, s, n, eps_p, eps_u, sigma_r)


def dual_path_embeddings(y_p, gamma_val, s, n1, n2):
    a = np.sqrt(gamma_val)
    b = s * np.sqrt(1.0 - gamma_val)
    return a * y_p + b * n1, a * y_p + b * n2


def estimate_cod(z: LatentState, mask: ClassMask, y_p, gamma_val: float, s: float, lam: float,
                 denoiser: Denoiser, rng: np.random.Generator | None = None,
                 noises: tuple[np.ndarray, np.ndarray] | None = None) -> float:
    """L2 distance between predictions under two independent perturbations of ``y_p``.

    Pass ``noises=(n1, n2)`` to pin the draws; otherwise two standard normal
    vectors are drawn from ``rng``. No residual jitter is applied here.
    """
    y_p = np.asarray(y_p, dtype=np.float64)
    if noises is None:
        if rng is None:
            raise ValueError("either rng or noises is required")
        n1 = rng.standard_normal(y_p.shape)
        n2 = rng.standard_normal(y_p.shape)
    else:
        n1, n2 = noises
    y1, y2 = dual_path_embeddings(y_p, gamma_val, s, n1, n2)
    e1 = denoiser.predict(z, z.t, mask, y1, lam)
    e2 = denoiser.predict(z, z.t, mask, y2, lam)
    return float(np.linalg.norm(np.asarray(e1) - np.asarray(e2)))


def cfg_combine(eps_u, eps_p, w: float) -> np.ndarray:
    eps_u = np.asarray(eps_u, dtype=np.float64)
    eps_p = np.asarray(eps_p, dtype=np.float64)
    if eps_u.shape != eps_p.shape:
        raise DimensionMismatch(f"prediction shapes differ: {eps_u.shape} vs {eps_p.shape}")
    return eps_u + w * (eps_p - eps_u)


def scheduler_step(z: LatentState, eps_hat, scheduler: Scheduler) -> LatentState:
    return scheduler.step(z, eps_hat)


def run_aas(z_T: LatentState, y_p, y_u, mask: ClassMask, cfg: AASConfig, denoiser: Denoiser,
            noise_schedule: NoiseSchedule, scheduler: Scheduler | None = None,
            trajectory: str | None = None) -> tuple[LatentState, list[StepTelemetry]]:
    """Run the full sampler from ``z_T`` and return ``(z_0, telemetry)``.

    All noise comes from ``rng.sampler_rng(cfg.seed)``; per step the draw
    order is ``n1, n2`` (COD paths) then ``n, eps_p, eps_u``.
    """
    if noise_schedule.T != cfg.steps:
        raise ValueError(f"noise schedule has T={noise_schedule.T} but config steps={cfg.steps}")
    y_p = check_embedding(y_p, name="y_p")
    y_u = check_embedding(y_u, y_p.shape[0], name="y_u")
    if scheduler is None:
        scheduler = DDIMScheduler(noise_schedule, cfg.num_steps)
    if len(scheduler.timesteps) != cfg.num_steps:
        raise ValueError("scheduler grid length does not match num_steps")
    if z_T.t != scheduler.timesteps[0]:
        raise ValueError(f"initial latent is at t={z_T.t}, grid starts at t={scheduler.timesteps[0]}")
    if not np.all(np.isfinite(z_T.z)):
        raise NumericalDivergence(0, z_T.t, trajectory)

    rng = sampler_rng(cfg.seed)
    sched = cfg.schedule
    ctrl = cfg.controller()
    state = z_T
    telemetry: list[StepTelemetry] = []
    for step, t in enumerate(scheduler.timesteps):
        g = gamma(t, sched) if cfg.anneal else 1.0
        lam = lambda_strength(g, cfg.lambda_min, cfg.lambda_max)

        cod = estimate_cod(state, mask, y_p, g, ctrl.s, lam, denoiser, rng=rng)
        next_ctrl = update_noise_scale(ctrl, cod)

        yp_t, yu_t = perturb_anticorrelated(y_p, y_u, g, ctrl.s, cfg.sigma_r, rng)
        eps_u = denoiser.predict(state, t, mask, yu_t, lam)
        eps_p = denoiser.predict(state, t, mask, yp_t, lam)
        eps_hat = cfg_combine(eps_u, eps_p, cfg.guidance_w)

        with np.errstate(over="ignore", invalid="ignore"):
            state = scheduler.step(state, eps_hat)
        if not np.all(np.isfinite(state.z)):
            raise NumericalDivergence(step, t, trajectory)
        telemetry.append(StepTelemetry(step, t, g, lam, cod, ctrl.s, next_ctrl.s))
        ctrl = next_ctrl
    return state, telemetry
