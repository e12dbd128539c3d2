"""Command line front end: corrupt, train, denoise, evaluate, params, gradcheck.

Exit codes are a stable scripting contract: 0 success, 1 check failure,
2 usage or input error, 3 runtime abort (non-finite loss).
"""

from __future__ import annotations

import argparse
import os
import sys
import time

from . import gradcheck as gradcheck_mod
from . import imageio
from .checkpoint import CheckpointError, load_checkpoint
from .config import ConfigError, load_run_config
from .data import (DatasetManifest, IMAGE_EXTENSIONS, build_manifest, list_images)
from .metrics import evaluate
from .model import DOWNSCALE_FACTOR, forward, layer_specs, param_count
from .noise import NoiseSpec, corrupt
from .tensor import no_grad
from .train import NonFiniteLossError, train

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_ABORT = 3


class UsageError(Exception):
    pass


def _parse_sigmas(text: str) -> list[int]:
    """Accept '25', '10,25,50' or '0..50' (inclusive range)."""
    text = text.strip()
    try:
        if ".." in text:
            lo_s, hi_s = text.split("..")
            lo, hi = int(lo_s), int(hi_s)
            if lo > hi:
                raise ValueError
            values = list(range(lo, hi + 1))
        else:
            values = [int(p) for p in text.split(",") if p != ""]
        if not values:
            raise ValueError
    except ValueError:
        raise UsageError(f"cannot parse sigma list {text!r} (use N, N,M,... or LO..HI)")
    for v in values:
        if not 0 <= v <= 50:
            raise UsageError(f"sigma {v} outside the supported range 0..50")
    return values


def _echo_config(rc, stream) -> None:
    for line in rc.echo_lines():
        stream.write(f"# {line}\n")


# ------------------------------------------------------------- commands

def cmd_corrupt(args) -> int:
    if not os.path.isdir(args.input):
        raise UsageError(f"input directory not readable: {args.input}")
    sigmas = _parse_sigmas(args.sigmas)
    manifest = build_manifest(args.input, sigmas, args.seed, split_ratio=args.train_frac)
    os.makedirs(args.output, exist_ok=True)
    for row in manifest.rows:
        clean = imageio.load_image(manifest.resolve(row))
        noisy = corrupt(clean, NoiseSpec(sigma=float(row.sigma), seed=row.seed))
        stem, ext = os.path.splitext(row.clean_path)
        imageio.save_image(noisy, os.path.join(args.output, f"{stem}_s{row.sigma:02d}{ext}"))
    manifest_path = os.path.join(args.output, args.manifest_name)
    manifest.save(manifest_path)
    for sigma, count in manifest.sigma_counts().items():
        print(f"sigma {sigma:2d}: {count} image(s)")
    print(f"wrote {len(manifest.rows)} noisy images and {manifest_path}")
    return EXIT_OK


def cmd_train(args) -> int:
    rc = load_run_config(args.config, args.set)
    manifest = DatasetManifest.load(args.manifest)
    os.makedirs(args.out, exist_ok=True)
    log_path = os.path.join(args.out, "train.log")
    with open(log_path, "w", encoding="utf-8") as log:
        _echo_config(rc, log)
        _echo_config(rc, sys.stdout)
        log.flush()
        try:
            result = train(rc.model_config(), rc.train_config(), manifest, args.out,
                           resume=args.resume, log_stream=log)
        except NonFiniteLossError as e:
            print(f"ABORT: {e}", file=sys.stderr)
            return EXIT_ABORT
    print(f"trained {result.steps_run} step(s); final checkpoint {result.final_checkpoint}")
    print(f"log written to {log_path}")
    return EXIT_OK


def _denoise_one(params, config, in_path, out_path) -> float:
    img = imageio.load_image(in_path)
    h, w = img.shape[0], img.shape[1]
    if h % DOWNSCALE_FACTOR or w % DOWNSCALE_FACTOR:
        raise UsageError(
            f"{in_path}: dimensions {w}x{h} not divisible by {DOWNSCALE_FACTOR}; "
            f"pad the image to a multiple of {DOWNSCALE_FACTOR} first")
    x = imageio.to_batch([img])
    start = time.perf_counter()
    with no_grad():
        z = forward(x, config, params)
    elapsed = time.perf_counter() - start
    imageio.save_image(imageio.tensor_to_image(z), out_path)
    return elapsed


def cmd_denoise(args) -> int:
    loaded = load_checkpoint(args.checkpoint)
    if os.path.isdir(args.input):
        names = list_images(args.input)
        skipped = [n for n in os.listdir(args.input)
                   if os.path.isfile(os.path.join(args.input, n))
                   and not n.lower().endswith(IMAGE_EXTENSIONS)]
        if not names:
            raise UsageError(f"no supported images (png/ppm) in {args.input}")
        os.makedirs(args.output, exist_ok=True)
        for name in names:
            seconds = _denoise_one(loaded.params, loaded.config,
                                   os.path.join(args.input, name),
                                   os.path.join(args.output, name))
            print(f"{name}: {seconds:.3f}s")
        for name in sorted(skipped):
            print(f"skipped (unsupported format): {name}")
        print(f"denoised {len(names)} image(s), skipped {len(skipped)}")
    else:
        if not os.path.isfile(args.input):
            raise UsageError(f"input not found: {args.input}")
        parent = os.path.dirname(os.path.abspath(args.output))
        os.makedirs(parent, exist_ok=True)
        seconds = _denoise_one(loaded.params, loaded.config, args.input, args.output)
        print(f"{args.input}: {seconds:.3f}s")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    manifest = DatasetManifest.load(args.manifest)
    report = evaluate(args.checkpoint, manifest, args.split,
                      unit_scale_psnr=args.unit_scale_psnr)
    text = report.to_tsv()
    if args.out == "-":
        sys.stdout.write(text)
    else:
        with open(args.out, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        print(f"report written to {args.out}")
    return EXIT_OK


def cmd_params(args) -> int:
    rc = load_run_config(args.config, args.set)
    config = rc.model_config()
    total = 0
    for name, spec in layer_specs(config):
        n = spec.param_count()
        total += n
        print(f"{name:20s} weight{spec.weight_shape} bias({spec.out_channels},)  {n}")
    print(f"total trainable parameters: {total}")
    assert total == param_count(config)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    results = gradcheck_mod.run(args.level, seed=args.seed)
    for r in results:
        print(r.line())
        if not r.passed:
            for line in r.group_lines():
                print(line)
    failed = [r for r in results if not r.passed]
    if failed:
        print(f"{len(failed)} gradient check(s) FAILED")
        return EXIT_CHECK_FAILED
    print(f"all {len(results)} gradient check(s) passed")
    return EXIT_OK


# -------------------------------------------------------------- argparse

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="irunet",
        description="Blind image denoiser: dataset corruption, training, "
                    "inference and evaluation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("corrupt", help="corrupt a clean image directory and write a manifest")
    p.add_argument("--input", required=True, help="directory of clean PNG/PPM images")
    p.add_argument("--output", required=True, help="directory for noisy images + manifest")
    p.add_argument("--sigmas", default="0..50", help="sigma list: N, N,M,... or LO..HI")
    p.add_argument("--seed", type=int, default=0, help="base seed for noise and shuffling")
    p.add_argument("--train-frac", type=float, default=0.8,
                   help="fraction of rows assigned to the train split")
    p.add_argument("--manifest-name", default="manifest.csv")
    p.set_defaults(func=cmd_corrupt)

    p = sub.add_parser("train", help="train a model on a corruption manifest")
    p.add_argument("--config", default=None, help="key=value configuration file")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output directory for checkpoints and log")
    p.add_argument("--resume", default=None, help="training checkpoint to resume from")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one configuration key (repeatable)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("denoise", help="run a checkpoint on an image or directory")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="image file or directory")
    p.add_argument("--output", required=True, help="output file or directory")
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("evaluate", help="score a checkpoint on a manifest split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="test", choices=["train", "test"])
    p.add_argument("--out", default="-", help="TSV report path, or - for stdout")
    p.add_argument("--unit-scale-psnr", action="store_true",
                   help="PSNR on the raw [0,1] reconstruction instead of 8-bit")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("params", help="print per-layer and total parameter counts")
    p.add_argument("--config", default=None)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.set_defaults(func=cmd_params)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--level", default="all", choices=["layer", "block", "model", "all"])
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, CheckpointError, imageio.ImageFormatError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
