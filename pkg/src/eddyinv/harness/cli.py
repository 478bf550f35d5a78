"""Command-line front end.

Subcommands: gen, train, eval, ablate, bench, gradcheck, reconstruct.
Defaults are the desk-scale profile (n=5000, C=64, 15 epochs); the
full-scale recipe (C=320, 30 epochs, n=20000) is reachable by flags.
Failures print one line, ``error:<category>: <message>``, and exit
nonzero.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .. import dataset as ds
from ..errors import EddyInvError
from ..neural.checkpoint import load_checkpoint
from ..neural.gradcheck import run_all
from ..simulate import SimConfig, with_calibration
from .evaluation import (
    benchmark_reconstruction,
    binarize,
    evaluate,
    format_report,
    predict,
    run_ablations,
    write_eval_montages,
)
from .montage import write_profile_pgm
from .training import TrainConfig, train

TRAIN_FRACTION = 0.8


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eddyinv",
        description="Simulate eddy-current scans and train crack-profile reconstructors.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a dataset file")
    p.add_argument("--n", type=int, default=5000, help="number of samples (default 5000)")
    p.add_argument("--seed", type=_u64, default=0)
    p.add_argument("--gamma", type=float, default=SimConfig().gamma, help="shadowing strength")
    p.add_argument("--out", required=True, help="output .ecd path")
    p.add_argument("--workers", type=int, default=1, help="parallel generation processes")

    p = sub.add_parser("train", help="train one variant on a dataset")
    p.add_argument("--data", required=True, help=".ecd dataset path")
    p.add_argument("--variant", choices=["eddynet", "nodec", "relu", "noattn"], default="eddynet")
    p.add_argument("--channels", type=int, default=64, help="encoder/decoder width C")
    p.add_argument("--k", type=int, default=20, help="attention channels K")
    p.add_argument("--epochs", type=int, default=15)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--lr", type=float, default=2e-4)
    p.add_argument("--seed", type=_u64, default=0)
    p.add_argument("--out", required=True, help="output .eck path")

    p = sub.add_parser("eval", help="score a checkpoint against a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--report", default=None, help="write the report table here")
    p.add_argument("--montage-dir", default=None, help="write truth/pred/error montages here")
    p.add_argument(
        "--split",
        choices=["test", "train", "all"],
        default="test",
        help="which part of the dataset to score (default: the held-out test split)",
    )

    p = sub.add_parser("ablate", help="train and compare all four variants")
    p.add_argument("--data", required=True)
    p.add_argument("--seed", type=_u64, default=0)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--channels", type=int, default=64)
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--epochs", type=int, default=15)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--lr", type=float, default=2e-4)

    p = sub.add_parser("bench", help="time eval-mode reconstruction")
    p.add_argument("--model", required=True)
    p.add_argument("--repeats", type=int, default=20)

    sub.add_parser("gradcheck", help="finite-difference check of every gradient path")

    p = sub.add_parser("reconstruct", help="reconstruct one sample to a PGM image")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--out", required=True, help="output .pgm path")

    return parser


def _load_split(path: str, part: str) -> ds.Dataset:
    data = ds.load_dataset(path)
    if part == "all":
        return data
    train_set, test_set = ds.split(data, TRAIN_FRACTION)
    return train_set if part == "train" else test_set


def _cmd_gen(args) -> int:
    cfg = with_calibration(SimConfig(gamma=args.gamma))
    data = ds.build_dataset(args.n, args.seed, cfg, workers=args.workers)
    ds.save_dataset(data, args.out)
    print(f"wrote {args.n} samples to {args.out}")
    return 0


def _cmd_train(args) -> int:
    data = ds.load_dataset(args.data)
    train_set, val_set = ds.split(data, TRAIN_FRACTION)
    ds.compute_channel_stats(train_set)
    cfg = TrainConfig(
        variant=args.variant,
        channels=args.channels,
        attn_channels=args.k,
        epochs=args.epochs,
        batch_size=args.batch,
        lr=args.lr,
        seed=args.seed,
        data_path=args.data,
        out_path=args.out,
    )
    _, history = train(cfg, train_set, val_set, verbose=True)
    print(f"wrote checkpoint to {args.out} (final val raw mae {history.val_raw_mae[-1]:.4f})")
    return 0


def _cmd_eval(args) -> int:
    params = load_checkpoint(args.model)
    test_set = _load_split(args.data, args.split)
    report = evaluate(params, test_set)
    text = format_report(report)
    print(text, end="")
    if args.report is not None:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write(text)
    if args.montage_dir is not None:
        for path in write_eval_montages(params, test_set, args.montage_dir):
            print(f"wrote {path}")
    return 0


def _cmd_ablate(args) -> int:
    data = ds.load_dataset(args.data)
    train_set, test_set = ds.split(data, TRAIN_FRACTION)
    ds.compute_channel_stats(train_set)
    base = TrainConfig(
        channels=args.channels,
        attn_channels=args.k,
        epochs=args.epochs,
        batch_size=args.batch,
        lr=args.lr,
        seed=args.seed,
        data_path=args.data,
    )
    _, table = run_ablations(train_set, test_set, base, out_dir=args.out_dir, verbose=True)
    print(table, end="")
    return 0


def _cmd_bench(args) -> int:
    params = load_checkpoint(args.model)
    _, table = benchmark_reconstruction(params, repeats=args.repeats)
    print(table, end="")
    return 0


def _cmd_gradcheck(args) -> int:
    results = run_all()
    failures = 0
    for result in results:
        status = "ok" if result.ok else "FAIL"
        print(f"{result.name:<28} max rel err {result.max_rel_err:.3e}  {status}")
        failures += not result.ok
    print(f"{len(results) - failures}/{len(results)} gradient checks passed")
    return 1 if failures else 0


def _cmd_reconstruct(args) -> int:
    params = load_checkpoint(args.model)
    data = ds.load_dataset(args.data)
    if not 0 <= args.index < data.n_samples:
        raise EddyInvError(f"index {args.index} outside dataset of {data.n_samples} samples")
    head = ds.Dataset(
        data.profiles[args.index : args.index + 1],
        data.channels[args.index : args.index + 1],
        data.sim_config,
        data.seed,
    )
    pred = predict(params, head)[0]
    truth = head.profiles[0].astype(np.float64)
    write_profile_pgm(pred, args.out)
    raw = float(np.abs(pred - truth).mean())
    binned = float(np.abs(binarize(pred) - truth).mean())
    print(f"wrote {args.out} (raw mae {raw:.4f}, binarized mae {binned:.4f})")
    return 0


_COMMANDS = {
    "gen": _cmd_gen,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "ablate": _cmd_ablate,
    "bench": _cmd_bench,
    "gradcheck": _cmd_gradcheck,
    "reconstruct": _cmd_reconstruct,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except EddyInvError as exc:
        print(f"error:{exc.category}: {exc}", file=sys.stderr)
        return 2
    except FloatingPointError as exc:
        print(f"error:numeric: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error:config: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error:io: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
