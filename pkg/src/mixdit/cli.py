"""Command line interface.

    mixdit make-data --config cfg.json --out data/
    mixdit train     --config cfg.json --data data/ --out run/
    mixdit sample    --checkpoint run/ckpt_003000.bin --prompt "t2i red square ..."
    mixdit eval      --checkpoint run/ckpt_003000.bin --data data/ --out eval.jsonl
    mixdit ablate    --config cfg.json --out ablation/
    mixdit gradcheck
    mixdit bench-pack

Any config leaf is overridable with a flag of its dotted name, e.g.
``--model.layers 3`` or ``--train.optim.total_steps 500``. Relative --out
paths resolve under $MIXDIT_OUT when it is set.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import config as config_mod
from .config import RunConfig
from .errors import MixditError
from .harness import (
    cmd_ablate,
    cmd_bench_pack,
    cmd_eval,
    cmd_gradcheck,
    cmd_make_data,
    cmd_sample,
    cmd_train,
)

OUT_ROOT_ENV = "MIXDIT_OUT"


def resolve_out(path: str) -> str:
    if os.path.isabs(path):
        return path
    root = os.environ.get(OUT_ROOT_ENV)
    return os.path.join(root, path) if root else path


def _extract_overrides(extras: list[str]) -> list[tuple[str, str]]:
    pairs = []
    i = 0
    while i < len(extras):
        arg = extras[i]
        if not arg.startswith("--"):
            raise MixditError(f"unrecognized argument {arg!r}")
        key = arg[2:]
        if "=" in key:
            key, value = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(extras):
                raise MixditError(f"flag --{key} needs a value")
            value = extras[i + 1]
            i += 2
        pairs.append((key, value))
    return pairs


def _load_config(args, extras) -> RunConfig:
    cfg = config_mod.load(args.config) if args.config else RunConfig()
    pairs = _extract_overrides(extras)
    if getattr(args, "seed", None) is not None:
        pairs.insert(0, ("seed", str(args.seed)))
    if getattr(args, "no_video_edit", False):
        pairs.insert(0, ("data.include_video_edit", "false"))
    if getattr(args, "seq_mode", None):
        pairs.insert(0, ("layout.seq_mode", args.seq_mode))
    if getattr(args, "no_interleave", False):
        pairs.insert(0, ("layout.interleave", "false"))
    if getattr(args, "no_seq_pe", False):
        pairs.insert(0, ("layout.use_seq_pe", "false"))
    return config_mod.apply_overrides(cfg, pairs)


def _add_common(p: argparse.ArgumentParser, out_default=None):
    p.add_argument("--config", help="path to a run-config JSON file")
    p.add_argument("--seed", type=int, help="override the run seed")
    p.add_argument("--out", default=out_default, help="output directory")
    p.add_argument("--no-video-edit", action="store_true",
                   help="drop video-editing tasks from the data mix")
    p.add_argument("--seq-mode", choices=("per_frame", "per_segment"),
                   help="sequential-coordinate mode")
    p.add_argument("--no-interleave", action="store_true",
                   help="place all vision segments after all text")
    p.add_argument("--no-seq-pe", action="store_true",
                   help="zero the sequential coordinate axis")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mixdit", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-data", help="generate the synthetic dataset files")
    _add_common(p, out_default="data")

    p = sub.add_parser("train", help="train from a generated dataset")
    _add_common(p, out_default="run")
    p.add_argument("--data", default="data", help="dataset directory")
    p.add_argument("--resume", help="checkpoint step number or 'latest'")
    p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("sample", help="sample images/videos from a checkpoint")
    _add_common(p, out_default="samples")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--prompt", help="generation prompt, e.g. 't2i red square size small at p1 p2'")
    p.add_argument("--data", help="dataset directory (editing prompts)")
    p.add_argument("--split", default="val")
    p.add_argument("--index", type=int, help="sample index within the split")
    p.add_argument("--name", default="sample", help="output file stem")

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split")
    _add_common(p, out_default=None)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", default="data")
    p.add_argument("--split", default="val")
    p.add_argument("--max-per-task", type=int, default=4)

    p = sub.add_parser("ablate", help="run the data-mix and design ablation grids")
    _add_common(p, out_default="ablation")
    p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    _add_common(p, out_default=None)

    p = sub.add_parser("bench-pack", help="packer throughput and bin efficiency")
    _add_common(p, out_default=None)
    p.add_argument("--budget", type=int, default=512)
    p.add_argument("--sequences", type=int, default=2000)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args, extras = parser.parse_known_args(argv)
    try:
        cfg = _load_config(args, extras)
        if args.command == "make-data":
            cmd_make_data(cfg, resolve_out(args.out))
        elif args.command == "train":
            cmd_train(cfg, resolve_out(args.data), resolve_out(args.out),
                      resume=args.resume, quiet=args.quiet)
        elif args.command == "sample":
            cmd_sample(cfg, args.checkpoint, resolve_out(args.out), seed=cfg.seed,
                       prompt=args.prompt,
                       data_dir=resolve_out(args.data) if args.data else None,
                       split=args.split, index=args.index, name=args.name)
        elif args.command == "eval":
            out = resolve_out(args.out) if args.out else None
            cmd_eval(cfg, args.checkpoint, resolve_out(args.data), out,
                     split=args.split, max_per_task=args.max_per_task, seed=cfg.seed)
        elif args.command == "ablate":
            cmd_ablate(cfg, resolve_out(args.out), quiet=args.quiet)
        elif args.command == "gradcheck":
            if not cmd_gradcheck(seed=cfg.seed):
                return 1
        elif args.command == "bench-pack":
            cmd_bench_pack(budget=args.budget, n_sequences=args.sequences)
    except MixditError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
