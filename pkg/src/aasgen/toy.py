"""Closed-form denoiser over a class-conditioned Gaussian world.

Data for a mask whose majority class is ``c`` is modelled as
``x0 ~ N(mu, sigma^2 I)`` with ``mu = mu_c + lam * W @ y``, where ``y`` is the
text embedding and ``lam`` the conditioning strength. Under the forward
process ``z_t ~ N(sqrt(ab) mu, (ab sigma^2 + 1 - ab) I)`` and the
Bayes-optimal noise prediction is linear in both ``z`` and ``y``::

    eps = sqrt(1 - ab) (z - sqrt(ab) mu) / (ab sigma^2 + 1 - ab)

That linearity is what makes discrepancy and trajectory properties of the
sampler checkable in closed form.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .diffusion import DEFAULT_BETA_END, DEFAULT_BETA_START, Denoiser, LatentState, NoiseSchedule
from .errors import DimensionMismatch, SchemaError, UnknownClassId
from .masks import ClassMask


@dataclass(frozen=True, eq=False)
class ToyWorld:
    class_means: dict
    cond_matrix: np.ndarray
    data_sigma: float
    noise_schedule: NoiseSchedule

    def __post_init__(self) -> None:
        W = np.array(self.cond_matrix, dtype=np.float64)
        if W.ndim != 2:
            raise DimensionMismatch(f"cond_matrix must be 2D, got shape {W.shape}")
        if not np.all(np.isfinite(W)):
            raise ValueError("cond_matrix has non-finite entries")
        if not self.class_means:
            raise ValueError("toy world needs at least one class mean")
        means = {}
        for cid, mu in self.class_means.items():
            mu = np.array(mu, dtype=np.float64).reshape(-1)
            if mu.shape != (W.shape[0],):
                raise DimensionMismatch(
                    f"mean of class {cid} has dimension {mu.size}, cond_matrix has {W.shape[0]} rows"
                )
            if not np.all(np.isfinite(mu)):
                raise ValueError(f"mean of class {cid} has non-finite entries")
            mu.setflags(write=False)
            means[int(cid)] = mu
        if not (np.isfinite(self.data_sigma) and self.data_sigma >= 0):
            raise ValueError(f"data_sigma must be finite and nonnegative, got {self.data_sigma}")
        W.setflags(write=False)
        object.__setattr__(self, "class_means", means)
        object.__setattr__(self, "cond_matrix", W)

    @property
    def latent_dim(self) -> int:
        return self.cond_matrix.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.cond_matrix.shape[1]

    def majority_class(self, mask: ClassMask) -> int:
        """Most frequent class id in ``mask``; ties go to the smaller id."""
        cid = int(np.argmax(np.bincount(mask.data)))
        if cid not in self.class_means:
            raise UnknownClassId(cid, where="toy world")
        return cid

    def conditioned_mean(self, class_id: int, embedding, lam: float) -> np.ndarray:
        try:
            mu_c = self.class_means[class_id]
        except KeyError:
            raise UnknownClassId(class_id, where="toy world") from None
        y = np.asarray(embedding, dtype=np.float64)
        if y.shape != (self.embed_dim,):
            raise DimensionMismatch(f"embedding has shape {y.shape}, toy world expects ({self.embed_dim},)")
        return mu_c + lam * (self.cond_matrix @ y)

    def guided_mean(self, class_id: int, y_p, y_u, w: float, lam: float) -> np.ndarray:
        """Endpoint mean of guided sampling: the CFG mix of the two embeddings, pushed through the model."""
        y_p = np.asarray(y_p, dtype=np.float64)
        y_u = np.asarray(y_u, dtype=np.float64)
        return self.conditioned_mean(class_id, y_u + w * (y_p - y_u), lam)

    def embedding_gain(self, t: int, lam: float) -> float:
        """Scalar ``g`` with ``d eps / d y = -g W``."""
        ab = self.noise_schedule.alpha_bar(t)
        return np.sqrt(ab * (1.0 - ab)) * lam / (ab * self.data_sigma**2 + 1.0 - ab)

    def embedding_jacobian(self, t: int, lam: float) -> np.ndarray:
        return -self.embedding_gain(t, lam) * self.cond_matrix

    def to_json(self) -> str:
        doc = {
            "class_means": {str(k): v.tolist() for k, v in sorted(self.class_means.items())},
            "W": self.cond_matrix.tolist(),
            "sigma": self.data_sigma,
        }
        betas = self.noise_schedule.betas
        linear = NoiseSchedule.linear(betas.size, float(betas[0]), float(betas[-1])).betas
        if np.array_equal(betas, linear):
            doc.update(T=int(betas.size), beta_start=float(betas[0]), beta_end=float(betas[-1]))
        else:
            doc["betas"] = betas.tolist()
        return json.dumps(doc, indent=1)


def toy_predict(z: LatentState, t: int, mask: ClassMask, embedding, lam: float,
                world: ToyWorld, sched: NoiseSchedule | None = None) -> np.ndarray:
    sched = world.noise_schedule if sched is None else sched
    if not 1 <= t <= sched.T:
        raise ValueError(f"t={t} outside [1, {sched.T}]")
    zt = np.asarray(z.z, dtype=np.float64)
    if zt.shape != (world.latent_dim,):
        raise DimensionMismatch(f"latent has shape {zt.shape}, toy world expects ({world.latent_dim},)")
    mu = world.conditioned_mean(world.majority_class(mask), embedding, lam)
    ab = sched.alpha_bar(t)
    return np.sqrt(1.0 - ab) * (zt - np.sqrt(ab) * mu) / (ab * world.data_sigma**2 + 1.0 - ab)


class ToyDenoiser(Denoiser):
    def __init__(self, world: ToyWorld):
        self.world = world

    def predict(self, z, t, mask, embedding, lam):
        return toy_predict(z, t, mask, embedding, lam, self.world)


def analytic_cod(gamma_val: float, s: float, lam: float, t: int, world: ToyWorld,
                 sched: NoiseSchedule | None, n1, n2) -> float:
    """Closed-form discrepancy ``s sqrt(1-gamma) * gain(t, lam) * ||W (n1 - n2)||``."""
    sched = world.noise_schedule if sched is None else sched
    ab = sched.alpha_bar(t)
    gain = np.sqrt(ab * (1.0 - ab)) * lam / (ab * world.data_sigma**2 + 1.0 - ab)
    diff = world.cond_matrix @ (np.asarray(n1, dtype=np.float64) - np.asarray(n2, dtype=np.float64))
    return float(s * np.sqrt(1.0 - gamma_val) * gain * np.linalg.norm(diff))


def load_toy_world(document: str | bytes) -> ToyWorld:
    """Parse a toy-world JSON spec.

    Required: ``class_means`` (object of id -> vector), ``W`` (list of rows,
    ``d_z x d_embed``), ``sigma``. The noise schedule is either ``betas``
    (explicit list) or ``T`` with optional ``beta_start``/``beta_end``
    (linear, default 1e-4 to 2e-2).
    """
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise SchemaError("", f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise SchemaError("", "top level must be an object")
    for key in ("class_means", "W", "sigma"):
        if key not in doc:
            raise SchemaError(key, "missing required field")
    if not isinstance(doc["class_means"], dict):
        raise SchemaError("class_means", "expected an object mapping class id to a vector")
    try:
        means = {int(k): v for k, v in doc["class_means"].items()}
    except ValueError:
        raise SchemaError("class_means", "keys must be integer class ids") from None
    if "betas" in doc:
        sched = NoiseSchedule(np.asarray(doc["betas"], dtype=np.float64))
    elif "T" in doc:
        sched = NoiseSchedule.linear(int(doc["T"]), float(doc.get("beta_start", DEFAULT_BETA_START)),
                                     float(doc.get("beta_end", DEFAULT_BETA_END)))
    else:
        raise SchemaError("T", "either T or betas is required")
    try:
        return ToyWorld(means, np.asarray(doc["W"], dtype=np.float64), float(doc["sigma"]), sched)
    except (ValueError, DimensionMismatch) as exc:
        raise SchemaError("", str(exc)) from None


def read_toy_world(path: str | Path) -> ToyWorld:
    return load_toy_world(Path(path).read_text(encoding="utf-8"))


DEFAULT_LATENT_DIM = 8
DEFAULT_EMBED_DIM = 64


def default_toy_world(latent_dim: int = DEFAULT_LATENT_DIM, embed_dim: int = DEFAULT_EMBED_DIM,
                      class_ids=(0, 1, 2), data_sigma: float = 0.5, cond_scale: float = 2.0, seed: int = 0,
                      T: int = 1000) -> ToyWorld:
    """A small world with well-separated class means and a random Gaussian ``W``.

    ``W`` has i.i.d. ``N(0, cond_scale^2 / embed_dim)`` entries, so a unit
    embedding moves the mean by roughly ``cond_scale`` per latent coordinate.
    """
    rng = np.random.default_rng(seed)
    means = {int(c): 2.0 * rng.standard_normal(latent_dim) for c in class_ids}
    W = cond_scale * rng.standard_normal((latent_dim, embed_dim)) / np.sqrt(embed_dim)
    return ToyWorld(means, W, data_sigma, NoiseSchedule.linear(T))
