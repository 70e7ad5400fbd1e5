"""Batch orchestration: prompt compilation, sampling, and latent-space metrics.

Each ``cmd_*`` function returns a process exit code: 0 on success, 1 when
some items failed, 2 when the configuration or inputs are invalid.
"""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .diffusion import LatentState
from .embedder import embed, embed_unconditional
from .errors import AasgenError, ConfigError, NumericalDivergence, TooFewSamples
from .masks import read_pgm
from .rng import initial_latent, split_seed
from .sampler import AASConfig, run_aas, write_telemetry_csv
from .style_bank import construct_prompt, load_style_bank
from .toy import DEFAULT_EMBED_DIM, ToyDenoiser, ToyWorld, default_toy_world, read_toy_world

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_INVALID = 2

DIVERSITY_METRIC = "latent_mean_pairwise_l2"
FIDELITY_TOLERANCE = 1e-6


@dataclass(frozen=True)
class RunConfig:
    """Sampler hyperparameters plus batch settings.

    ``seed`` is the master seed; trajectory ``i`` uses ``seed ^ i``.
    ``toy_world`` is a path to a toy-world spec, resolved against the config
    file's directory; when absent the built-in default world is used.
    """

    aas: AASConfig = AASConfig()
    num_samples: int = 4
    embed_dim: int = DEFAULT_EMBED_DIM
    toy_world: str | None = None

    def __post_init__(self) -> None:
        if self.num_samples < 1:
            raise ConfigError(f"num_samples must be positive, got {self.num_samples}")
        if self.embed_dim < 1:
            raise ConfigError(f"embed_dim must be positive, got {self.embed_dim}")

    @property
    def master_seed(self) -> int:
        return self.aas.seed


_AAS_KEYS = {f.name: f for f in fields(AASConfig) if f.name != "anneal"}
_RUN_KEYS = {"num_samples": int, "embed_dim": int, "toy_world": str}


def config_keys() -> dict[str, type]:
    """Flat config keys and their value types."""
    keys = {name: type(f.default) for name, f in _AAS_KEYS.items()}
    keys.update(_RUN_KEYS)
    return keys


def _coerce(key: str, value, kind: type):
    if kind is str:
        if value is not None and not isinstance(value, str):
            raise ConfigError(f"{key}: expected a string path")
        return value
    if isinstance(value, bool):
        raise ConfigError(f"{key}: expected a number, got {value!r}")
    if kind is int:
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return value
    if not isinstance(value, (int, float)):
        raise ConfigError(f"{key}: expected a number, got {value!r}")
    return float(value)


def build_run_config(values: dict, base_dir: Path | None = None) -> RunConfig:
    keys = config_keys()
    unknown = sorted(set(values) - set(keys))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    values = {k: _coerce(k, v, keys[k]) for k, v in values.items()}
    aas_values = {k: v for k, v in values.items() if k in _AAS_KEYS}
    toy_world = values.get("toy_world")
    if toy_world is not None and base_dir is not None:
        toy_world = str(base_dir / toy_world)
    try:
        return RunConfig(
            aas=AASConfig(**aas_values),
            num_samples=values.get("num_samples", RunConfig.num_samples),
            embed_dim=values.get("embed_dim", RunConfig.embed_dim),
            toy_world=toy_world,
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_run_config(path: str | Path | None, overrides: dict | None = None) -> RunConfig:
    """Read a flat JSON config; ``overrides`` (e.g. from CLI flags) win over file values."""
    values: dict = {}
    base_dir = None
    if path is not None:
        path = Path(path)
        try:
            values = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(values, dict):
            raise ConfigError("config must be a JSON object")
        base_dir = path.parent
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    if overrides and overrides.get("toy_world") is not None:
        # paths given on the command line are relative to the working directory
        values["toy_world"] = str(Path(overrides["toy_world"]).resolve())
    return build_run_config(values, base_dir)


def max_workers() -> int:
    cap = os.environ.get("AASGEN_WORKERS")
    n = os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            log.warning("ignoring non-integer AASGEN_WORKERS=%r", cap)
    return n


# --------------------------------------------------------------------------- prompt

def cmd_prompt(bank_path, masks_dir, out_path, seed: int) -> int:
    """Write one JSON Lines record per ``*.pgm`` mask (sorted by name).

    Mask ``i`` uses prompt seed ``seed ^ i``. Masks that cannot be turned
    into a prompt get an ``{"mask", "seed", "error"}`` record instead.
    """
    try:
        bank = load_style_bank(Path(bank_path).read_text(encoding="utf-8"))
    except (OSError, AasgenError) as exc:
        log.error("invalid style bank %s: %s", bank_path, exc)
        return EXIT_INVALID
    masks = sorted(Path(masks_dir).glob("*.pgm"))
    if not masks:
        log.error("no .pgm masks found in %s", masks_dir)
        return EXIT_INVALID
    failed = 0
    lines = []
    for i, path in enumerate(masks):
        mask_seed = split_seed(seed, i)
        try:
            record = construct_prompt(read_pgm(path), bank, mask_seed).to_record(str(path))
        except AasgenError as exc:
            failed += 1
            log.error("%s: %s", path, exc)
            record = {"mask": str(path), "seed": mask_seed, "error": f"{type(exc).__name__}: {exc}"}
        lines.append(json.dumps(record, ensure_ascii=False))
    Path(out_path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return EXIT_PARTIAL if failed else EXIT_OK


def read_prompts(path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}:{lineno}: invalid JSON: {exc}") from None
            if not isinstance(rec, dict) or "mask" not in rec:
                raise ConfigError(f"{path}:{lineno}: record needs a 'mask' field")
            if "error" not in rec and not isinstance(rec.get("prompt"), str):
                raise ConfigError(f"{path}:{lineno}: record needs a 'prompt' string")
            records.append(rec)
    return records


def _resolve_mask(mask_path: str, prompts_path: Path) -> Path:
    p = Path(mask_path)
    if p.is_absolute() or p.exists():
        return p.resolve()
    return (prompts_path.parent / p).resolve()


# --------------------------------------------------------------------------- sample

@dataclass(frozen=True)
class Trajectory:
    name: str
    index: int
    group: int
    seed: int
    prompt: str
    mask_path: Path


def trajectory_plan(records: list[dict], prompts_path: Path, cfg: RunConfig) -> list[Trajectory]:
    plan = []
    for p, rec in enumerate(records):
        if "error" in rec:
            log.warning("skipping prompt record %d (%s): %s", p, rec["mask"], rec["error"])
            continue
        mask_path = _resolve_mask(rec["mask"], prompts_path)
        for j in range(cfg.num_samples):
            index = p * cfg.num_samples + j
            plan.append(Trajectory(f"{p:04d}_{j:03d}", index, p, split_seed(cfg.master_seed, index),
                                   rec["prompt"], mask_path))
    return plan


def _world_for(cfg: RunConfig) -> ToyWorld:
    if cfg.toy_world is None:
        world = default_toy_world(embed_dim=cfg.embed_dim, T=cfg.aas.steps)
    else:
        try:
            world = read_toy_world(cfg.toy_world)
        except OSError as exc:
            raise ConfigError(f"cannot read toy world: {exc}") from None
    if world.embed_dim != cfg.embed_dim:
        raise ConfigError(f"toy world expects embed_dim={world.embed_dim}, config has {cfg.embed_dim}")
    if world.noise_schedule.T != cfg.aas.steps:
        raise ConfigError(f"toy world has T={world.noise_schedule.T}, config steps={cfg.aas.steps}")
    return world


def sample_one(traj: Trajectory, cfg: RunConfig, world: ToyWorld, out_dir: Path, baseline: bool) -> None:
    aas = replace(cfg.aas, seed=traj.seed)
    if baseline:
        aas = aas.baseline()
    mask = read_pgm(traj.mask_path)
    y_p = embed(traj.prompt, cfg.embed_dim)
    y_u = embed_unconditional(cfg.embed_dim)
    z_T = LatentState(initial_latent(traj.seed, world.latent_dim), world.noise_schedule.T)
    z0, telemetry = run_aas(z_T, y_p, y_u, mask, aas, ToyDenoiser(world), world.noise_schedule,
                            trajectory=traj.name)
    z0.z.astype("<f4").tofile(out_dir / f"{traj.name}.f32")
    write_telemetry_csv(out_dir / f"{traj.name}.csv", telemetry)
    sidecar = {
        "shape": [int(z0.z.size)],
        "dtype": "f32",
        "seed": traj.seed,
        "prompt": traj.prompt,
        "mask": str(traj.mask_path),
        "group": traj.group,
        "trajectory": traj.name,
        "embed_dim": cfg.embed_dim,
        "guidance_w": aas.guidance_w,
        "lambda_max": aas.lambda_max,
        "baseline": baseline,
    }
    (out_dir / f"{traj.name}.json").write_text(json.dumps(sidecar, ensure_ascii=False) + "\n",
                                               encoding="utf-8")


def cmd_sample(config_path, prompts_path, out_dir, baseline: bool = False,
               overrides: dict | None = None) -> int:
    """Run the sampler for every (prompt, sample index) pair.

    Writes ``<prompt>_<sample>.f32`` (little-endian float32 latent),
    ``.json`` sidecar and ``.csv`` telemetry into ``out_dir``.
    """
    try:
        cfg = load_run_config(config_path, overrides)
        world = _world_for(cfg)
        prompts_path = Path(prompts_path)
        plan = trajectory_plan(read_prompts(prompts_path), prompts_path, cfg)
    except (OSError, AasgenError) as exc:
        log.error("invalid configuration: %s", exc)
        return EXIT_INVALID
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def work(traj: Trajectory):
        try:
            sample_one(traj, cfg, world, out_dir, baseline)
        except NumericalDivergence as exc:
            log.error("trajectory %s diverged at step %d (t=%d)", traj.name, exc.step, exc.t)
            return traj.name
        except (OSError, AasgenError) as exc:
            log.error("trajectory %s failed: %s", traj.name, exc)
            return traj.name
        return None

    with ThreadPoolExecutor(max_workers=max_workers()) as pool:
        failures = [name for name in pool.map(work, plan) if name is not None]
    return EXIT_PARTIAL if failures else EXIT_OK


# --------------------------------------------------------------------------- metrics

def mean_pairwise_distance(samples) -> float:
    """Mean L2 distance over all unordered pairs of rows."""
    X = np.asarray(samples, dtype=np.float64)
    n = X.shape[0]
    if n < 2:
        raise TooFewSamples(f"need at least 2 samples, got {n}")
    diff = X[:, None, :] - X[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    return float(dist[np.triu_indices(n, 1)].mean())


def effective_sigma(world: ToyWorld, tol: float = FIDELITY_TOLERANCE) -> float:
    return float(np.sqrt(world.data_sigma**2 + tol))


def within_fidelity(sample, mean, sigma_eff: float) -> bool:
    """RMS per-coordinate deviation from ``mean`` is at most ``3 * sigma_eff``."""
    sample = np.asarray(sample, dtype=np.float64)
    rms = np.linalg.norm(sample - mean) / np.sqrt(sample.size)
    return bool(rms <= 3.0 * sigma_eff)


def fidelity_rate(samples, means, sigma_eff: float) -> float:
    samples = np.asarray(samples, dtype=np.float64)
    means = np.broadcast_to(np.asarray(means, dtype=np.float64), samples.shape)
    hits = [within_fidelity(x, m, sigma_eff) for x, m in zip(samples, means)]
    return float(np.mean(hits))


def read_samples(samples_dir) -> list[tuple[dict, np.ndarray]]:
    out = []
    for meta_path in sorted(Path(samples_dir).glob("*.json")):
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        if meta.get("dtype") != "f32":
            raise ConfigError(f"{meta_path}: unsupported dtype {meta.get('dtype')!r}")
        z = np.fromfile(meta_path.with_suffix(".f32"), dtype="<f4").astype(np.float64)
        if list(z.shape) != list(meta["shape"]):
            raise ConfigError(f"{meta_path}: tensor shape {z.shape} does not match sidecar {meta['shape']}")
        out.append((meta, z))
    return out


def diversity_report(samples: list[tuple[dict, np.ndarray]], world: ToyWorld | None = None) -> dict:
    """Per-mask diversity (and fidelity when ``world`` is given)."""
    groups: dict[str, list[tuple[dict, np.ndarray]]] = {}
    for meta, z in samples:
        groups.setdefault(meta["mask"], []).append((meta, z))
    sigma_eff = effective_sigma(world) if world is not None else None
    rows = []
    for mask_path in sorted(groups):
        members = groups[mask_path]
        X = np.stack([z for _, z in members])
        if len(members) < 2:
            raise TooFewSamples(f"mask group {mask_path} has {len(members)} sample(s), need at least 2")
        row = {"mask": mask_path, "count": len(members), "diversity": mean_pairwise_distance(X),
               "fidelity": None}
        if world is not None:
            cid = world.majority_class(read_pgm(mask_path))
            means = []
            for meta, _ in members:
                d = int(meta["embed_dim"])
                means.append(world.guided_mean(cid, embed(meta["prompt"], d), embed_unconditional(d),
                                               float(meta["guidance_w"]), float(meta["lambda_max"])))
            row["fidelity"] = fidelity_rate(X, np.stack(means), sigma_eff)
        rows.append(row)
    total = sum(r["count"] for r in rows)
    report = {
        "diversity_metric": DIVERSITY_METRIC,
        "diversity_note": "latent-space proxy; not a perceptual diversity measure",
        "sample_count": total,
        "mean_diversity": float(np.mean([r["diversity"] for r in rows])) if rows else None,
        "fidelity": None,
        "groups": rows,
    }
    if world is not None and rows:
        report["fidelity"] = sum(r["fidelity"] * r["count"] for r in rows) / total
        report["fidelity_sigma_eff"] = sigma_eff
        report["fidelity_rule"] = "rms(z - guided_mean) <= 3 * sigma_eff"
    return report


def cmd_metrics(samples_dir, toy_world_path, out_path) -> int:
    try:
        world = read_toy_world(toy_world_path) if toy_world_path else None
        samples = read_samples(samples_dir)
        if not samples:
            raise TooFewSamples(f"no samples found in {samples_dir}")
        report = diversity_report(samples, world)
    except TooFewSamples as exc:
        log.error("%s", exc)
        return EXIT_PARTIAL
    except (OSError, AasgenError, KeyError) as exc:
        log.error("invalid input: %s", exc)
        return EXIT_INVALID
    Path(out_path).write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    return EXIT_OK
