"""Inference-time generative augmentation: style-bank prompts and adaptive annealing sampling."""

from .annealing import AnnealSchedule, ControllerState, gamma, lambda_strength, update_noise_scale
from .diffusion import (CountingDenoiser, DDIMScheduler, Denoiser, LatentState, NoiseSchedule,
                        forward_noise)
from .embedder import embed, embed_unconditional
from .masks import ClassMask, read_pgm, write_pgm
from .sampler import (AASConfig, StepTelemetry, cfg_combine, estimate_cod, perturb_anticorrelated,
                      run_aas, scheduler_step)
from .style_bank import (StyleBank, StylizedPrompt, construct_prompt, extract_present_classes,
                         load_style_bank)
from .toy import ToyDenoiser, ToyWorld, analytic_cod, default_toy_world, toy_predict

__version__ = "0.1.0"

__all__ = [
    "AnnealSchedule",
    "ControllerState",
    "gamma",
    "lambda_strength",
    "update_noise_scale",
    "CountingDenoiser",
    "DDIMScheduler",
    "Denoiser",
    "LatentState",
    "NoiseSchedule",
    "forward_noise",
    "embed",
    "embed_unconditional",
    "ClassMask",
    "read_pgm",
    "write_pgm",
    "AASConfig",
    "StepTelemetry",
    "cfg_combine",
    "estimate_cod",
    "perturb_anticorrelated",
    "run_aas",
    "scheduler_step",
    "StyleBank",
    "StylizedPrompt",
    "construct_prompt",
    "extract_present_classes",
    "load_style_bank",
    "ToyDenoiser",
    "ToyWorld",
    "analytic_cod",
    "default_toy_world",
    "toy_predict",
]
