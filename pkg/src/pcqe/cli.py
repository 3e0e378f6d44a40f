"""Command-line interface.

Subcommands: convert, distort, patch, train, enhance, eval, bd. Every
failure exits nonzero with a single machine-parsable line on stderr:
`error: <ErrorType>: <message>`.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from . import validation
from .cloud import YCBCR8, rgb_to_ycbcr, ycbcr_to_rgb
from .configfile import load_train_config
from .distortion import DistortionLevel, distort
from .enhance import enhance
from .errors import EnhancerError, InvalidArgument
from .metrics import bd_metric, psnr, read_rd_csv, ycbcr_psnr
from .patches import extract_patches, save_manifest, sequential_patches
from .ply import read_ply, write_ply
from .train import TrainConfig, train


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pcqe",
        description="Graph-attention post-filter for compressed point-cloud colors",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="convert colors between RGB and YCbCr")
    p.add_argument("--to", required=True, choices=("rgb", "ycbcr"))
    p.add_argument("--encoding", default="binary_le", choices=("ascii", "binary_le"))
    p.add_argument("input")
    p.add_argument("output")

    p = sub.add_parser("distort", help="apply synthetic codec-like color distortion")
    p.add_argument("--step", type=int, required=True, help="color quantization step")
    p.add_argument("--smooth", type=float, default=0.0, help="smoothing strength in [0,1]")
    p.add_argument("--smooth-k", type=int, default=8, help="smoothing neighborhood size")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--encoding", default="binary_le", choices=("ascii", "binary_le"))
    p.add_argument("input")
    p.add_argument("output")

    p = sub.add_parser("patch", help="write a patch manifest for inspection")
    p.add_argument("--n", type=int, default=2048, help="points per patch")
    p.add_argument("--r", type=float, default=2.0, help="overlap ratio")
    p.add_argument("--k", type=int, default=20, help="neighbor count recorded for graphs")
    p.add_argument("--start", type=int, default=0, help="index of the first sample point")
    p.add_argument("--method", default="fps", choices=("fps", "sequential"))
    p.add_argument("input")
    p.add_argument("output")

    p = sub.add_parser("train", help="train one component network")
    p.add_argument("--pairs", help="TSV file: one 'clean<TAB>distorted' pair per line")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--component", choices=validation.COMPONENTS)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float, dest="base_lr")
    p.add_argument("--n", type=int)
    p.add_argument("--r", type=float)
    p.add_argument("--k", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--max-patches", type=int)
    p.add_argument("--out", required=True, help="checkpoint output path")

    p = sub.add_parser("enhance", help="enhance a decoded cloud with trained models")
    p.add_argument("--y", required=True, help="Y-component checkpoint")
    p.add_argument("--cb", required=True, help="Cb-component checkpoint")
    p.add_argument("--cr", required=True, help="Cr-component checkpoint")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--encoding", default="binary_le", choices=("ascii", "binary_le"))
    p.add_argument("input")
    p.add_argument("output")

    p = sub.add_parser("eval", help="print per-component PSNR as TSV")
    p.add_argument("--ref", required=True)
    p.add_argument("--test", required=True)

    p = sub.add_parser("bd", help="Bjontegaard delta between two RD curves")
    p.add_argument("--anchor", required=True, help="anchor curve CSV (bpip, dB)")
    p.add_argument("--test", required=True, help="test curve CSV (bpip, dB)")
    p.add_argument("--mode", required=True, choices=("psnr", "rate"))
    return parser


def _cmd_convert(args) -> int:
    # PLY has no color-space tag: --to ycbcr treats the file as RGB,
    # --to rgb treats it as YCbCr written by a previous conversion.
    pc = read_ply(args.input)
    if args.to == "ycbcr":
        pc = rgb_to_ycbcr(pc)
    else:
        pc = ycbcr_to_rgb(pc.with_colors(pc.colors, YCBCR8))
    write_ply(pc, args.output, args.encoding)
    return 0


def _cmd_distort(args) -> int:
    level = DistortionLevel(quant_step=args.step, smooth_strength=args.smooth,
                            smooth_k=args.smooth_k, seed=args.seed)
    pc = read_ply(args.input)
    out = ycbcr_to_rgb(distort(rgb_to_ycbcr(pc), level))
    write_ply(out, args.output, args.encoding)
    return 0


def _cmd_patch(args) -> int:
    pc = read_ply(args.input)
    if args.method == "sequential":
        ps = sequential_patches(pc, args.n)
    else:
        ps = extract_patches(pc, args.n, args.r, start=args.start)
    save_manifest(ps, args.output, k=args.k)
    print(f"patches\t{ps.m}")
    print(f"covered\t{int(ps.covered_mask().sum())}/{ps.parent_size}")
    return 0


def _read_pairs_tsv(path):
    pairs = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise InvalidArgument(f"{path}:{lineno}: expected 'clean<TAB>distorted'")
            pairs.append((read_ply(parts[0]), read_ply(parts[1])))
    if not pairs:
        raise InvalidArgument(f"{path}: no pairs listed")
    return pairs


def _cmd_train(args) -> int:
    if args.config:
        cfg, pairs_path = load_train_config(args.config)
    else:
        cfg, pairs_path = TrainConfig(), None
    overrides = {
        name: getattr(args, name)
        for name in ("component", "epochs", "batch_size", "base_lr",
                     "n", "r", "k", "seed", "max_patches")
        if getattr(args, name) is not None
    }
    overrides["checkpoint_out"] = args.out
    cfg = dataclasses.replace(cfg, **overrides)
    pairs_path = args.pairs or pairs_path
    if not pairs_path:
        raise InvalidArgument("no training pairs: pass --pairs or set pairs= in the config")
    pairs = _read_pairs_tsv(pairs_path)
    ckpt = train(cfg, pairs)
    print(f"checkpoint\t{args.out}")
    print(f"final_loss\t{ckpt.metadata['loss_history'][-1]:.8g}")
    return 0


def _cmd_enhance(args) -> int:
    pc = read_ply(args.input)
    out = enhance({"Y": args.y, "Cb": args.cb, "Cr": args.cr}, pc, workers=args.workers)
    write_ply(out, args.output, args.encoding)
    return 0


def _cmd_eval(args) -> int:
    ref = rgb_to_ycbcr(read_ply(args.ref))
    test = rgb_to_ycbcr(read_ply(args.test))
    for comp in validation.COMPONENTS:
        print(f"{comp}\t{psnr(ref, test, comp):.4f}")
    print(f"YCbCr\t{ycbcr_psnr(ref, test):.4f}")
    return 0


def _cmd_bd(args) -> int:
    anchor = read_rd_csv(args.anchor, label="anchor")
    test = read_rd_csv(args.test, label="test")
    value = bd_metric(anchor, test, f"bd_{args.mode}")
    print(f"bd_{args.mode}\t{value:.6f}")
    return 0


_COMMANDS = {
    "convert": _cmd_convert,
    "distort": _cmd_distort,
    "patch": _cmd_patch,
    "train": _cmd_train,
    "enhance": _cmd_enhance,
    "eval": _cmd_eval,
    "bd": _cmd_bd,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except EnhancerError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: IoFailure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
