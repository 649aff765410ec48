"""Command-line surface: train / eval / generate / ablate / make-toy-data."""

import argparse
import sys
from pathlib import Path

from .config import load_config
from .data import generate_toy_dataset
from .errors import ConfigurationError, DataError, DomainError, ShapeError
from .metrics import format_report, report_key_values
from .reporting import ablate, evaluate, generate
from .trainer import train


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crossmlp",
        description="Two-stage cross-view image translation with a "
                    "cross-mixer cascade.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run a training job from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--resume", default=None, help="checkpoint to continue from")

    p = sub.add_parser("eval", help="score a checkpoint over a manifest")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--probs", default=None,
                   help="precomputed classifier probabilities "
                        "(ids <sample>/fake and <sample>/real)")
    p.add_argument("--out", default=None,
                   help="report directory (default: <ckpt dir>/eval)")

    p = sub.add_parser("generate", help="translate one source/semantic pair")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--source", required=True)
    p.add_argument("--semantic", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("ablate", help="comparative sweep over one config axis")
    p.add_argument("--config", required=True)
    p.add_argument("--axis", required=True, choices=["blocks", "loss"])

    p = sub.add_parser("make-toy-data", help="render a procedural paired dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--size", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)

    return parser


def _cmd_train(args) -> int:
    cfg = load_config(args.config)
    result = train(cfg, resume=args.resume)
    print(f"trained {result.state.step} steps")
    print(f"log: {result.log_path}")
    print(f"final checkpoint: {result.final_checkpoint}")
    return 0


def _cmd_eval(args) -> int:
    out_dir = Path(args.out) if args.out else Path(args.ckpt).parent / "eval"
    report = evaluate(args.ckpt, args.manifest, probs_path=args.probs,
                      out_dir=out_dir)
    for line in report_key_values(report):
        print(line)
    print()
    print(format_report(report))
    print(f"report files in {out_dir}")
    return 0


def _cmd_generate(args) -> int:
    paths = generate(args.ckpt, args.source, args.semantic, args.out)
    for name, path in paths.items():
        print(f"{name}: {path}")
    return 0


def _cmd_ablate(args) -> int:
    cfg = load_config(args.config)
    labels, _reports = ablate(cfg, args.axis)
    base = Path(cfg.run.out_dir)
    print(f"ran {len(labels)} configurations: {', '.join(labels)}")
    print((base / "ablation.txt").read_text())
    print(f"report files in {base}")
    return 0


def _cmd_make_toy_data(args) -> int:
    manifest = generate_toy_dataset(args.out, args.n, args.size, args.seed)
    print(f"manifest: {manifest}")
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "eval": _cmd_eval,
    "generate": _cmd_generate,
    "ablate": _cmd_ablate,
    "make-toy-data": _cmd_make_toy_data,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigurationError, DataError, DomainError, ShapeError,
            FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
