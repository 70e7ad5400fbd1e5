"""Command-line entry point: ``aasgen prompt | sample | metrics | toy-world``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import pipeline
from .toy import default_toy_world


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("config overrides (take precedence over --config)")
    for key, kind in pipeline.config_keys().items():
        group.add_argument(f"--{key.replace('_', '-')}", dest=f"cfg_{key}", type=kind, default=None,
                           metavar=kind.__name__.upper())


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="aasgen", description="Style-bank prompts and adaptive annealing sampling")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prompt", help="compile a stylized prompt for every mask")
    p.add_argument("--bank", required=True, type=Path, help="style bank JSON")
    p.add_argument("--masks", required=True, type=Path, help="directory of 8-bit PGM class-id masks")
    p.add_argument("--out", required=True, type=Path, help="output JSON Lines file")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("sample", help="run the sampler over a prompts file")
    p.add_argument("--config", type=Path, default=None, help="flat JSON config")
    p.add_argument("--prompts", required=True, type=Path)
    p.add_argument("--out-dir", required=True, type=Path)
    p.add_argument("--baseline", action="store_true",
                   help="plain classifier-free guidance: no annealing, no perturbation")
    _add_config_flags(p)

    p = sub.add_parser("metrics", help="latent diversity / fidelity report")
    p.add_argument("--samples", required=True, type=Path)
    p.add_argument("--toy-world", type=Path, default=None)
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("toy-world", help="write the built-in toy world spec")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--embed-dim", type=int, default=pipeline.DEFAULT_EMBED_DIM)
    p.add_argument("--latent-dim", type=int, default=8)
    p.add_argument("--steps", type=int, default=1000, help="diffusion horizon T")
    p.add_argument("--seed", type=int, default=0)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    if args.command == "prompt":
        return pipeline.cmd_prompt(args.bank, args.masks, args.out, args.seed)
    if args.command == "sample":
        overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg_")}
        return pipeline.cmd_sample(args.config, args.prompts, args.out_dir, args.baseline, overrides)
    if args.command == "metrics":
        return pipeline.cmd_metrics(args.samples, args.toy_world, args.out)
    world = default_toy_world(latent_dim=args.latent_dim, embed_dim=args.embed_dim, T=args.steps, seed=args.seed)
    args.out.write_text(world.to_json() + "\n", encoding="utf-8")
    return pipeline.EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
