"""Evaluation metrics, montage geometry, the training loop, and the CLI."""

import copy

import numpy as np
import pytest

from eddyinv import dataset as ds
from eddyinv.harness import training as training_mod
from eddyinv.harness.cli import build_parser, main
from eddyinv.harness.evaluation import (
    benchmark_reconstruction,
    binarize,
    evaluate,
    format_ablation_table,
    format_benchmark_table,
    format_report,
    predict,
    write_eval_montages,
)
from eddyinv.harness.montage import (
    GRID_CAPACITY,
    MONTAGE_H,
    MONTAGE_W,
    SEPARATOR_GRAY,
    montage_image,
    read_pgm,
    write_pgm,
    write_profile_pgm,
)
from eddyinv.harness.training import (
    TrainConfig,
    _shuffled_indices,
    train,
    validation_raw_mae,
)
from eddyinv.neural.checkpoint import load_checkpoint, save_checkpoint
from eddyinv.neural.model import init_params
from eddyinv.rng import Rng
from eddyinv.simulate import SimConfig, with_calibration


@pytest.fixture(scope="module")
def tiny_split():
    data = ds.build_dataset(12, 2, with_calibration(SimConfig()))
    train_set, test_set = ds.split(data, 0.75)  # 9 train / 3 test
    ds.compute_channel_stats(train_set)
    return train_set, test_set


@pytest.fixture(scope="module")
def untrained(tiny_split):
    train_set, _ = tiny_split
    params = init_params("eddynet", 4, 3, Rng(1))
    params.channel_mean = train_set.channel_mean.copy()
    params.channel_std = train_set.channel_std.copy()
    return params


# ---------------------------------------------------------------- binarize


def test_binarize_threshold_rules():
    x = np.array([0.0, 0.49, 0.5, 0.51, 1.0])
    assert np.array_equal(binarize(x), [0.0, 0.0, 1.0, 1.0, 1.0])


def test_binarize_is_idempotent():
    rng = np.random.default_rng(1)
    x = rng.uniform(size=(5, 5))
    once = binarize(x)
    assert np.array_equal(binarize(once), once)


# ---------------------------------------------------------------- evaluate


def test_constant_half_predictor_scores_exactly(tiny_split, untrained):
    _, test_set = tiny_split
    params = copy.deepcopy(untrained)
    for name, tensor in params.tensors.items():
        if name.endswith((".w", ".b")):
            tensor[...] = 0.0
    report = evaluate(params, test_set)
    # sigmoid(0) = 0.5 against 0/1 truth: raw error is 0.5 everywhere,
    # and binarize(0.5) = 1 makes the binarized error the zero fraction
    assert report.raw_mae == 0.5
    zero_fraction = float((test_set.profiles == 0).mean())
    assert abs(report.binarized_mae - zero_fraction) < 1e-12


def test_evaluate_aggregates_are_per_sample_means(tiny_split, untrained):
    _, test_set = tiny_split
    report = evaluate(untrained, test_set)
    assert len(report.per_sample_raw) == test_set.n_samples
    assert len(report.per_sample_binarized) == test_set.n_samples
    assert report.raw_mae == pytest.approx(report.per_sample_raw.mean(), abs=1e-15)
    assert report.binarized_mae == pytest.approx(report.per_sample_binarized.mean(), abs=1e-15)
    assert report.timing["forward_seconds_total"] > 0.0
    assert report.timing["seconds_per_sample"] == pytest.approx(
        report.timing["forward_seconds_total"] / test_set.n_samples
    )


def test_evaluate_is_repeatable_and_pure(tiny_split, untrained):
    _, test_set = tiny_split
    before = test_set.channels.copy()
    a = evaluate(untrained, test_set)
    b = evaluate(untrained, test_set)
    assert a.raw_mae == b.raw_mae
    assert np.array_equal(a.per_sample_raw, b.per_sample_raw)
    assert np.array_equal(test_set.channels, before)


def test_predict_batches_agree_with_single(tiny_split, untrained):
    _, test_set = tiny_split
    whole = predict(untrained, test_set, batch_size=64)
    one_by_one = predict(untrained, test_set, batch_size=1)
    assert whole.shape == (test_set.n_samples, 40, 12)
    assert np.allclose(whole, one_by_one, atol=1e-12)


def test_format_report_carries_the_numbers(tiny_split, untrained):
    _, test_set = tiny_split
    report = evaluate(untrained, test_set)
    text = format_report(report)
    assert f"{report.raw_mae:.4f}" in text
    assert f"{report.binarized_mae:.4f}" in text
    assert str(test_set.n_samples) in text


# ---------------------------------------------------------------- montage


def test_montage_geometry_and_tile_placement():
    rng = np.random.default_rng(4)
    profiles = [rng.uniform(size=(40, 12)) for _ in range(GRID_CAPACITY)]
    image = montage_image(profiles)
    assert image.shape == (MONTAGE_H, MONTAGE_W) == (166, 110)
    want00 = np.rint(np.clip(profiles[0], 0, 1) * 255).astype(np.uint8)
    assert np.array_equal(image[:40, :12], want00)
    # separators keep the background gray
    assert (image[40:42, :] == SEPARATOR_GRAY).all()
    assert (image[:, 12:14] == SEPARATOR_GRAY).all()


def test_montage_pads_missing_tiles_with_black():
    profiles = [np.ones((40, 12))] * 3
    image = montage_image(profiles)
    assert image.shape == (166, 110)
    assert (image[:40, :12] == 255).all()
    assert (image[:40, 42:54] == 0).all()  # fourth slot of the top row
    assert (image[126:, 98:] == 0).all()  # last slot


def test_montage_rejects_overflow():
    with pytest.raises(ValueError):
        montage_image([np.zeros((40, 12))] * (GRID_CAPACITY + 1))


def test_pgm_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    image = rng.integers(0, 256, size=(17, 9), dtype=np.uint8)
    path = str(tmp_path / "img.pgm")
    write_pgm(image, path)
    with open(path, "rb") as fh:
        assert fh.read(12) == b"P5\n9 17\n255\n"
    assert np.array_equal(read_pgm(path), image)


def test_write_pgm_rejects_non_uint8():
    with pytest.raises(ValueError):
        write_pgm(np.zeros((4, 4)), "/dev/null")


def test_profile_pgm_is_raw_grayscale(tmp_path):
    profile = np.linspace(0.0, 1.0, 480).reshape(40, 12)
    path = str(tmp_path / "p.pgm")
    write_profile_pgm(profile, path)
    image = read_pgm(path)
    assert image.shape == (40, 12)
    assert image[0, 0] == 0 and image[-1, -1] == 255
    assert len(np.unique(image)) > 2  # raw values, not binarized


def test_eval_montages_written(tmp_path, tiny_split, untrained):
    _, test_set = tiny_split
    paths = write_eval_montages(untrained, test_set, str(tmp_path / "pgm"))
    names = sorted(p.rsplit("/", 1)[1] for p in paths)
    assert names == ["error.pgm", "pred.pgm", "truth.pgm"]
    for path in paths:
        assert read_pgm(path).shape == (166, 110)
    # truth and binarized prediction pages are two-level; tile content
    # of the truth page matches the dataset
    truth_img = read_pgm(str(tmp_path / "pgm" / "truth.pgm"))
    want = (test_set.profiles[0] * 255).astype(np.uint8)
    assert np.array_equal(truth_img[:40, :12], want)


# ---------------------------------------------------------------- training


def test_shuffled_indices_is_a_permutation():
    idx = _shuffled_indices(100, Rng(9))
    assert sorted(idx) == list(range(100))
    assert np.array_equal(idx, _shuffled_indices(100, Rng(9)))
    assert not np.array_equal(idx, _shuffled_indices(100, Rng(10)))


def test_train_config_defaults_and_validation():
    cfg = TrainConfig()
    assert cfg.variant == "eddynet"
    assert cfg.channels == 320
    assert cfg.attn_channels == 20
    assert cfg.epochs == 30
    assert cfg.batch_size == 64
    assert cfg.lr == 2e-4
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)


def test_train_records_history_and_learns(tiny_split):
    train_set, test_set = tiny_split
    cfg = TrainConfig(
        channels=4, attn_channels=2, epochs=2, batch_size=4, lr=1e-3, seed=11
    )
    params, history = train(cfg, train_set, test_set)
    assert len(history.train_loss) == 2
    assert len(history.val_raw_mae) == 2
    assert all(np.isfinite(v) for v in history.train_loss)
    assert params.width == 4
    assert params.variant == "eddynet"


def test_train_is_deterministic_in_the_seed(tiny_split):
    train_set, _ = tiny_split
    cfg = TrainConfig(channels=3, attn_channels=2, epochs=1, batch_size=4, seed=21)
    a, _ = train(cfg, train_set)
    b, _ = train(cfg, train_set)
    for name in a.tensors:
        assert np.array_equal(a.tensors[name], b.tensors[name]), name


def test_train_requires_channel_stats():
    data = ds.build_dataset(4, 3, with_calibration(SimConfig()))
    cfg = TrainConfig(channels=3, attn_channels=2, epochs=1, batch_size=2)
    with pytest.raises(ValueError, match="stats"):
        train(cfg, data)


def test_train_keeps_the_short_final_batch(tiny_split, monkeypatch):
    # 9 samples at batch 4 -> batches of 4, 4 and 1 each epoch
    train_set, _ = tiny_split
    calls = []
    real = training_mod.ranger_step

    def counting(tensors, grads, state):
        calls.append(state.t + 1)
        return real(tensors, grads, state)

    monkeypatch.setattr(training_mod, "ranger_step", counting)
    cfg = TrainConfig(channels=3, attn_channels=2, epochs=2, batch_size=4, seed=5)
    train(cfg, train_set)
    assert len(calls) == 6


def test_train_writes_checkpoint_with_baked_stats(tmp_path, tiny_split):
    train_set, _ = tiny_split
    path = str(tmp_path / "model.eck")
    cfg = TrainConfig(
        channels=3, attn_channels=2, epochs=1, batch_size=4, seed=8, out_path=path
    )
    train(cfg, train_set)
    loaded = load_checkpoint(path)
    assert np.array_equal(loaded.channel_mean, train_set.channel_mean)
    assert np.array_equal(loaded.channel_std, train_set.channel_std)


def test_validation_mae_matches_evaluate(tiny_split, untrained):
    _, test_set = tiny_split
    direct = validation_raw_mae(untrained, test_set)
    report = evaluate(untrained, test_set)
    assert direct == pytest.approx(report.raw_mae, abs=1e-15)


# ---------------------------------------------------------------- tables


def test_benchmark_table_shape(untrained):
    medians, table = benchmark_reconstruction(
        untrained, batch_sizes=(4, 1), repeats=3, warmup=1
    )
    assert set(medians) == {4, 1}
    assert all(v > 0.0 for v in medians.values())
    lines = table.strip().split("\n")
    assert lines[0].startswith("batch")
    assert len(lines) == 3
    assert format_benchmark_table(medians) == table


def test_benchmark_rejects_zero_repeats(untrained):
    with pytest.raises(ValueError):
        benchmark_reconstruction(untrained, repeats=0)


def test_ablation_table_format():
    class Dummy:
        raw_mae = 0.123456
        binarized_mae = 0.2

    table = format_ablation_table({"eddynet": Dummy(), "nodec": Dummy()})
    lines = table.strip().split("\n")
    assert len(lines) == 3
    assert lines[0].split() == ["MAE", "eddynet", "nodec"]
    assert lines[1].split() == ["raw", "0.1235", "0.1235"]
    assert lines[2].split() == ["binarized", "0.2000", "0.2000"]


# ---------------------------------------------------------------- CLI


@pytest.fixture(scope="module")
def cli_workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data = str(root / "tiny.ecd")
    model = str(root / "tiny.eck")
    assert main(["gen", "--n", "10", "--seed", "4", "--out", data]) == 0
    rc = main(
        [
            "train", "--data", data, "--variant", "eddynet", "--channels", "4",
            "--k", "2", "--epochs", "1", "--batch", "4", "--seed", "1",
            "--out", model,
        ]
    )
    assert rc == 0
    return root, data, model


def test_cli_gen_output_loads(cli_workspace):
    _, data, _ = cli_workspace
    loaded = ds.load_dataset(data)
    assert loaded.n_samples == 10
    assert loaded.seed == 4


def test_cli_train_output_loads(cli_workspace):
    _, _, model = cli_workspace
    params = load_checkpoint(model)
    assert params.variant == "eddynet"
    assert params.width == 4
    assert params.channel_std.min() > 0.0


def test_cli_eval_writes_report_and_montages(cli_workspace, capsys):
    root, data, model = cli_workspace
    report = str(root / "report.txt")
    mdir = str(root / "montages")
    rc = main(
        ["eval", "--data", data, "--model", model, "--report", report,
         "--montage-dir", mdir]
    )
    assert rc == 0
    out = capsys.readouterr().out
    assert "raw MAE" in out
    with open(report, encoding="utf-8") as fh:
        assert fh.read() in out
    for name in ("truth.pgm", "pred.pgm", "error.pgm"):
        assert read_pgm(str(root / "montages" / name)).shape == (166, 110)


def test_cli_reconstruct_writes_pgm(cli_workspace, capsys):
    root, data, model = cli_workspace
    out_path = str(root / "recon.pgm")
    rc = main(
        ["reconstruct", "--model", model, "--data", data, "--index", "0",
         "--out", out_path]
    )
    assert rc == 0
    assert read_pgm(out_path).shape == (40, 12)
    assert "raw mae" in capsys.readouterr().out


def test_cli_reconstruct_rejects_bad_index(cli_workspace, capsys):
    root, data, model = cli_workspace
    rc = main(
        ["reconstruct", "--model", model, "--data", data, "--index", "99",
         "--out", str(root / "no.pgm")]
    )
    assert rc == 2
    assert capsys.readouterr().err.startswith("error:")


def test_cli_bench_runs(cli_workspace, capsys):
    _, _, model = cli_workspace
    assert main(["bench", "--model", model, "--repeats", "2"]) == 0
    assert capsys.readouterr().out.startswith("batch")


def test_cli_missing_file_reports_io_error(tmp_path, capsys):
    rc = main(["bench", "--model", str(tmp_path / "absent.eck"), "--repeats", "1"])
    assert rc == 2
    assert capsys.readouterr().err.startswith("error:io:")


def test_cli_corrupt_model_reports_bad_magic(cli_workspace, tmp_path, capsys):
    bad = str(tmp_path / "bad.eck")
    with open(bad, "wb") as fh:
        fh.write(b"JUNKJUNKJUNKJUNK" * 20)
    rc = main(["bench", "--model", bad, "--repeats", "1"])
    assert rc == 2
    assert capsys.readouterr().err.startswith("error:bad-magic:")


def test_cli_bad_config_reports_config_error(cli_workspace, capsys):
    root, data, _ = cli_workspace
    rc = main(
        ["train", "--data", data, "--epochs", "0", "--channels", "4",
         "--k", "2", "--out", str(root / "x.eck")]
    )
    assert rc == 2
    assert capsys.readouterr().err.startswith("error:config:")


def test_cli_parser_covers_all_subcommands():
    parser = build_parser()
    commands = {"gen", "train", "eval", "ablate", "bench", "gradcheck", "reconstruct"}
    actions = [a for a in parser._actions if hasattr(a, "choices") and a.choices]
    assert commands <= set(actions[0].choices)
