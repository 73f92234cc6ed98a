import hashlib
import json

import numpy as np
import pytest
from PIL import Image

from driveseg import CHECKPOINT_FORMAT, __version__
from driveseg.cli import main
from driveseg.config import ConfigError, RunConfig, apply_overrides, load_config
from driveseg.datapipe import load_manifest
from driveseg.lossweight import to_uint8, weight_map
from driveseg.ordinal import sord_encode
from driveseg.taxonomy import Level


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--count", "16", "--val", "8", "--test", "6", "--seed", "2", "--out", str(root)]) == 0
    return root


@pytest.fixture(scope="module")
def trained(dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    argv = ["train", "--train-manifest", str(dataset / "train.tsv"), "--val-manifest", str(dataset / "val.tsv"),
            "--epochs", "1", "--lr", "1e-3", "--set", "model.overrides={\"base_width\": 8}", "--out", str(out)]
    assert main(argv) == 0
    return out


def test_version(capsys):
    assert main(["--version"]) == 0
    out = capsys.readouterr().out
    assert __version__ in out and CHECKPOINT_FORMAT in out


def test_unknown_subcommand_is_usage_error(capsys):
    assert main(["frobnicate"]) == 2
    assert "usage:" in capsys.readouterr().err


def test_synth_count_and_manifest(tmp_path):
    assert main(["synth", "--count", "200", "--seed", "1", "--out", str(tmp_path)]) == 0
    man = load_manifest(tmp_path / "train.tsv")
    assert len(man) == 200
    assert len(list((tmp_path / "train" / "images").glob("*.png"))) == 200
    assert len(list((tmp_path / "train" / "masks").glob("*.png"))) == 200
    arts = json.loads((tmp_path / "artifacts.json").read_text())
    assert len(arts["files"]) == 402


def test_perfect_self_prediction_scores_zero_rmse(dataset, tmp_path):
    assert main(["remap", "--manifest", str(dataset / "test.tsv"), "--taxonomy", "synth",
                 "--out", str(tmp_path / "levels")]) == 0
    assert main(["eval", "--pred-dir", str(tmp_path / "levels"), "--manifest", str(dataset / "test.tsv"),
                 "--out", str(tmp_path / "ev")]) == 0
    rep = json.loads((tmp_path / "ev" / "report.json").read_text())
    assert rep["rmse"] == 0.0 and rep["ms"] is None
    assert "n/a" in (tmp_path / "ev" / "report.txt").read_text()
    for fig in ("confusion.png", "confusion_weighted.png", "metrics.png"):
        assert (tmp_path / "ev" / fig).stat().st_size > 0


def test_train_outputs_and_resolved_config(trained):
    for name in ("checkpoint.pt", "history.tsv", "loss.png", "config.json", "artifacts.json"):
        assert (trained / name).is_file()
    cfg = json.loads((trained / "config.json").read_text())
    assert cfg["train"]["max_epochs"] == 1 and cfg["loss"]["beta"] == 30.0 and cfg["run"]["seed"] == 0
    assert RunConfig.from_dict(cfg).to_dict() == cfg  # the resolved file reloads to itself
    arts = json.loads((trained / "artifacts.json").read_text())
    for entry in arts["files"]:
        data = (trained / entry["path"]).read_bytes()
        assert hashlib.sha256(data).hexdigest() == entry["sha256"]


def test_predict_then_eval_matches_eval(dataset, trained, tmp_path):
    ck, test = str(trained / "checkpoint.pt"), str(dataset / "test.tsv")
    boxes = str(dataset / "test_boxes.txt")
    assert main(["eval", "--checkpoint", ck, "--manifest", test, "--boxes", boxes, "--out", str(tmp_path / "a")]) == 0
    assert main(["predict", "--checkpoint", ck, "--manifest", test, "--out", str(tmp_path / "p")]) == 0
    assert main(["eval", "--pred-dir", str(tmp_path / "p"), "--manifest", test, "--boxes", boxes,
                 "--out", str(tmp_path / "b")]) == 0
    a = json.loads((tmp_path / "a" / "report.json").read_text())
    b = json.loads((tmp_path / "b" / "report.json").read_text())
    assert a == b
    name = load_manifest(test)[0].stem
    gray = np.asarray(Image.open(tmp_path / "p" / f"{name}_affordance.png"))
    rgb = np.asarray(Image.open(tmp_path / "p" / f"{name}_affordance_rgb.png"))
    assert gray.dtype == np.uint8 and gray.ndim == 2 and rgb.shape == gray.shape + (3,)


def test_predict_image_directory(dataset, trained, tmp_path):
    assert main(["predict", "--checkpoint", str(trained / "checkpoint.pt"), "--images",
                 str(dataset / "val" / "images"), "--figures", "1", "--out", str(tmp_path)]) == 0
    levels = np.asarray(Image.open(tmp_path / "val_00000.png"))
    assert levels.shape == (64, 128) and set(np.unique(levels)) <= {1, 2, 3}
    assert len(list((tmp_path / "figures").glob("*.png"))) == 1


def test_output_root_env(dataset, trained, tmp_path, monkeypatch):
    monkeypatch.setenv("DRIVESEG_OUT", str(tmp_path))
    assert main(["eval", "--checkpoint", str(trained / "checkpoint.pt"), "--manifest",
                 str(dataset / "test.tsv")]) == 0
    assert (tmp_path / "runs" / "eval" / "report.json").is_file()


def test_toml_config_and_flag_precedence(dataset, tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text(f"""
[data]
train = ["{dataset / 'train.tsv'}"]
val = "{dataset / 'val.tsv'}"

[train]
max_epochs = 7
lr = 0.01

[loss]
label_mode = "one_hot"
""")
    rc = load_config(cfg, ["train.lr=0.002"], {"train.max_epochs": 1})
    assert rc.train.max_epochs == 1 and rc.train.lr == 0.002 and rc.loss.label_mode == "one_hot"
    assert rc.train_config().resolved().loss_weighting is False


def test_weightmap_png_scaling(dataset, tmp_path):
    mask = load_manifest(dataset / "test.tsv")[0].mask
    assert main(["weightmap", str(mask), "--taxonomy", "synth", "--out", str(tmp_path)]) == 0
    png = np.asarray(Image.open(tmp_path / f"{mask.stem}_weights.png"))
    from driveseg.taxonomy import builtin_taxonomy, remap_mask
    levels = remap_mask(np.asarray(Image.open(mask)), builtin_taxonomy("synth"))
    np.testing.assert_array_equal(png, to_uint8(weight_map(levels), 10))
    assert png.min() == 0 and png.max() == 255
    assert (tmp_path / f"{mask.stem}_weightmap.png").is_file()


def test_encode_table(tmp_path):
    Image.fromarray(np.array([[1, 2], [3, 0]], np.uint8)).save(tmp_path / "m.png")
    assert main(["encode", str(tmp_path / "m.png"), "--out", str(tmp_path / "enc")]) == 0
    rows = (tmp_path / "enc" / "soft_labels.tsv").read_text().splitlines()[1:]
    for row, lvl in zip(rows, Level):
        np.testing.assert_allclose([float(v) for v in row.split("\t")[2:]], sord_encode(lvl), atol=1e-6)
    labels = np.load(tmp_path / "enc" / "m_labels.npy")
    assert labels.shape == (2, 2, 3) and (labels[1, 1] == 0).all()


def test_exit_codes(dataset, trained, tmp_path, monkeypatch, capsys):
    test = str(dataset / "test.tsv")
    # config errors
    assert main(["train", "--set", "train.stage=bogus", "--out", str(tmp_path)]) == 2
    assert main(["train", "--set", "loss.nope=1", "--out", str(tmp_path)]) == 2
    assert main(["eval", "--manifest", test, "--out", str(tmp_path)]) == 2  # no checkpoint
    # data errors
    assert main(["eval", "--checkpoint", str(tmp_path / "missing.pt"), "--manifest", test, "--out",
                 str(tmp_path)]) == 3
    bad = tmp_path / "bad.png"
    Image.fromarray(np.full((4, 4), 77, np.uint8)).save(bad)
    assert main(["remap", str(bad), "--taxonomy", "synth", "--out", str(tmp_path / "r")]) == 3
    assert "77" in capsys.readouterr().err
    # runtime failure
    import driveseg.cli as cli

    def boom(*a, **k):
        raise RuntimeError("simulated")
    monkeypatch.setattr(cli, "predict", boom)
    assert main(["eval", "--checkpoint", str(trained / "checkpoint.pt"), "--manifest", test, "--out",
                 str(tmp_path)]) == 1


def test_config_validation():
    with pytest.raises(ConfigError, match="section"):
        RunConfig.from_dict({"bogus": {}})
    with pytest.raises(ConfigError, match="unknown key"):
        RunConfig.from_dict({"train": {"epochz": 3}})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"model": {"overrides": {"depth": 9}}})
    with pytest.raises(ConfigError):
        apply_overrides({}, ["novalue"])
    d = apply_overrides({}, ["model.overrides.depth=4", "data.train=[\"a\", \"b\"]", "eval.label=x y"])
    assert d == {"model": {"overrides": {"depth": 4}}, "data": {"train": ["a", "b"]}, "eval": {"label": "x y"}}
