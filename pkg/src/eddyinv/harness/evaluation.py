"""Evaluation protocol: raw/binarized MAE, ablation table, timing table."""

from __future__ import annotations

import os
import statistics
import time
from dataclasses import dataclass, field, replace

import numpy as np

from ..dataset import Dataset, standardize
from ..neural.model import INPUT_CHANNELS, INPUT_HW, VARIANTS, ModelParams, model_forward
from .montage import write_montage
from .training import TrainConfig, train

BINARIZE_THRESHOLD = 0.5


@dataclass
class EvalReport:
    raw_mae: float
    binarized_mae: float
    per_sample_raw: np.ndarray
    per_sample_binarized: np.ndarray
    timing: dict[str, float] = field(default_factory=dict)


def binarize(profile: np.ndarray, threshold: float = BINARIZE_THRESHOLD) -> np.ndarray:
    """1.0 where value >= threshold, else 0.0 (ties go to 1)."""
    return np.where(np.asarray(profile) >= threshold, 1.0, 0.0)


def predict(params: ModelParams, dataset: Dataset, batch_size: int = 64) -> np.ndarray:
    """Eval-mode reconstructions [n, 40, 12], standardizing with params' stats."""
    outs = []
    for start in range(0, dataset.n_samples, batch_size):
        chans = dataset.channels[start : start + batch_size]
        x = standardize(chans, params.channel_mean, params.channel_std)
        outs.append(model_forward(params, x, mode="eval")[:, 0])
    return np.concatenate(outs, axis=0)


def evaluate(params: ModelParams, test_set: Dataset, batch_size: int = 64) -> EvalReport:
    """Score reconstructions against ground truth over a whole dataset.

    Aggregates are the exact means of the per-sample MAE vectors; wall
    time covers the forward passes only (standardization included, the
    file I/O that produced ``test_set`` excluded).
    """
    t0 = time.perf_counter()
    pred = predict(params, test_set, batch_size)
    seconds = time.perf_counter() - t0
    truth = test_set.profiles.astype(np.float64)
    per_raw = np.abs(pred - truth).mean(axis=(1, 2))
    per_bin = np.abs(binarize(pred) - truth).mean(axis=(1, 2))
    return EvalReport(
        raw_mae=float(per_raw.mean()),
        binarized_mae=float(per_bin.mean()),
        per_sample_raw=per_raw,
        per_sample_binarized=per_bin,
        timing={
            "forward_seconds_total": seconds,
            "seconds_per_sample": seconds / test_set.n_samples,
        },
    )


def format_report(report: EvalReport) -> str:
    lines = [
        "metric          value",
        f"raw MAE         {report.raw_mae:.4f}",
        f"binarized MAE   {report.binarized_mae:.4f}",
        f"samples         {len(report.per_sample_raw)}",
        f"forward time    {report.timing['forward_seconds_total']:.3f} s"
        f" ({1e3 * report.timing['seconds_per_sample']:.2f} ms/sample)",
    ]
    return "\n".join(lines) + "\n"


def write_eval_montages(params: ModelParams, test_set: Dataset, out_dir: str) -> list[str]:
    """Truth / binarized-prediction / error montages of the first 32 samples.

    The error page is |binarized - truth|: white marks mislabeled cells.
    """
    os.makedirs(out_dir, exist_ok=True)
    count = min(32, test_set.n_samples)
    head = Dataset(
        test_set.profiles[:count],
        test_set.channels[:count],
        test_set.sim_config,
        test_set.seed,
    )
    pred_bin = binarize(predict(params, head))
    truth = head.profiles.astype(np.float64)
    pages = {
        "truth.pgm": truth,
        "pred.pgm": pred_bin,
        "error.pgm": np.abs(pred_bin - truth),
    }
    paths = []
    for name, grids in pages.items():
        path = os.path.join(out_dir, name)
        write_montage(list(grids), path)
        paths.append(path)
    return paths


def run_ablations(
    train_set: Dataset,
    test_set: Dataset,
    base_cfg: TrainConfig,
    out_dir: str | None = None,
    verbose: bool = False,
) -> tuple[dict[str, EvalReport], str]:
    """Train and score all four variants on one split with one seed.

    Returns the per-variant reports and a four-column text table (raw
    and binarized rows).  With ``out_dir`` set, each variant's
    checkpoint and the table land there.
    """
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
    reports: dict[str, EvalReport] = {}
    for variant in VARIANTS:
        out_path = os.path.join(out_dir, f"{variant}.eck") if out_dir is not None else None
        cfg = replace(base_cfg, variant=variant, out_path=out_path)
        if verbose:
            print(f"== {variant} ==", flush=True)
        params, _ = train(cfg, train_set, test_set if verbose else None, verbose=verbose)
        reports[variant] = evaluate(params, test_set, base_cfg.batch_size)
    table = format_ablation_table(reports)
    if out_dir is not None:
        with open(os.path.join(out_dir, "ablation.txt"), "w", encoding="utf-8") as fh:
            fh.write(table)
    return reports, table


def format_ablation_table(reports: dict[str, EvalReport]) -> str:
    names = list(reports)
    header = "MAE        " + "".join(f"{name:>10}" for name in names)
    raw = "raw        " + "".join(f"{reports[n].raw_mae:>10.4f}" for n in names)
    binned = "binarized  " + "".join(f"{reports[n].binarized_mae:>10.4f}" for n in names)
    return "\n".join([header, raw, binned]) + "\n"


def benchmark_reconstruction(
    params: ModelParams,
    batch_sizes: tuple[int, ...] = (64, 1),
    repeats: int = 20,
    warmup: int = 2,
) -> tuple[dict[int, float], str]:
    """Median eval-mode forward seconds per batch at each batch size.

    The payload is synthetic (timing does not depend on values); warmup
    passes are run and discarded before the measured repeats.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    gen = np.random.default_rng(0)
    medians: dict[int, float] = {}
    for bsz in batch_sizes:
        batch = gen.standard_normal((bsz, INPUT_CHANNELS, *INPUT_HW))
        for _ in range(warmup):
            model_forward(params, batch, mode="eval")
        times = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            model_forward(params, batch, mode="eval")
            times.append(time.perf_counter() - t0)
        medians[bsz] = statistics.median(times)
    return medians, format_benchmark_table(medians)


def format_benchmark_table(medians: dict[int, float]) -> str:
    lines = ["batch   s/batch     ms/profile"]
    for bsz, seconds in medians.items():
        lines.append(f"{bsz:<8}{seconds:<12.4f}{1e3 * seconds / bsz:.2f}")
    return "\n".join(lines) + "\n"
