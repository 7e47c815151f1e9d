"""Command-line entry points: dataset generation and training."""
from __future__ import annotations

import argparse
import sys

from .errors import TrainerError
from .netcore import ARCH_CEN, ARCH_DEC
from .train import TrainConfig, build_dataset, train

_ARCH_ALIASES = {"cen": ARCH_CEN, "dec": ARCH_DEC, ARCH_CEN: ARCH_CEN, ARCH_DEC: ARCH_DEC}


def _add_scene_args(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--sats", type=int, default=3)
    sub.add_argument("--uts", type=int, default=8)
    sub.add_argument("--tx-grid", type=int, nargs=2, default=(4, 4), metavar=("MX", "MY"))
    sub.add_argument("--rx-grid", type=int, nargs=2, default=(2, 1), metavar=("NX", "NY"))
    sub.add_argument("--spacing", type=float, default=0.5, help="element spacing (wavelengths)")
    sub.add_argument("--seed", type=int, default=0)


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sattrain",
        description="Train tuple-predicting precoder networks on generated scenario files.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    gen = subs.add_parser("build-dataset", help="generate train/val/test scenario files")
    gen.add_argument("--out", required=True, help="dataset output directory")
    _add_scene_args(gen)
    gen.add_argument(
        "--levels",
        type=float,
        nargs="+",
        default=(-10.0, -5.0, 0.0, 5.0, 10.0),
        help="per-satellite budget levels in dBW; each sample tags one at random",
    )
    gen.add_argument(
        "--sizes",
        type=int,
        nargs=3,
        default=(7000, 2000, 1000),
        metavar=("TRAIN", "VAL", "TEST"),
    )

    fit = subs.add_parser("train", help="fit a network and export a weight container")
    fit.add_argument("--arch", required=True, choices=sorted(_ARCH_ALIASES))
    fit.add_argument("--data", required=True, help="dataset directory from build-dataset")
    fit.add_argument("--out", required=True, help="output weight container path")
    _add_scene_args(fit)
    fit.add_argument(
        "--sizes",
        type=int,
        nargs=3,
        default=(7000, 2000, 1000),
        metavar=("TRAIN", "VAL", "TEST"),
        help="how many samples of each split to use",
    )
    fit.add_argument("--epochs", type=int, default=200)
    fit.add_argument("--batch", type=int, default=32)
    fit.add_argument("--lr", type=float, default=1e-3)
    fit.add_argument("--n-mc", type=int, default=32, help="fading draws per training step")
    fit.add_argument("--val-n-mc", type=int, default=64)
    fit.add_argument("--patience", type=int, default=20)
    fit.add_argument("--hidden", type=int, default=None)
    fit.add_argument("--fused", type=int, default=None)
    fit.add_argument("--depth", type=int, default=None)
    fit.add_argument("--heads", type=int, default=None)
    fit.add_argument("--quiet", action="store_true")
    return parser


def _config(args: argparse.Namespace, arch: str) -> TrainConfig:
    cfg = TrainConfig(
        arch=arch,
        sats=args.sats,
        uts=args.uts,
        tx_grid=tuple(args.tx_grid),
        rx_grid=tuple(args.rx_grid),
        spacing_wl=args.spacing,
        split_sizes=tuple(args.sizes),
        seed=args.seed,
    )
    if args.command == "build-dataset":
        return TrainConfig(**{**cfg.__dict__, "power_levels_dbw": tuple(args.levels)})
    return TrainConfig(
        **{
            **cfg.__dict__,
            "epochs": args.epochs,
            "batch_size": args.batch,
            "learning_rate": args.lr,
            "n_mc": args.n_mc,
            "val_n_mc": args.val_n_mc,
            "patience": args.patience,
            "hidden": args.hidden,
            "fused": args.fused,
            "depth": args.depth,
            "heads": args.heads,
        }
    )


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "build-dataset":
            cfg = _config(args, ARCH_CEN)
            root = build_dataset(cfg, args.out)
            print(f"dataset written to {root}")
        else:
            cfg = _config(args, _ARCH_ALIASES[args.arch])
            emit = (lambda msg: None) if args.quiet else print
            result = train(cfg, args.data, args.out, log=emit)
            print(
                f"{result.arch}: best epoch {result.best_epoch} "
                f"(val WSR {result.best_val_wsr:.4f}) -> {result.container_path}"
            )
    except TrainerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
