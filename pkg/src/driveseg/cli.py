"""``driveseg`` command-line entry point.

Exit codes: 0 success, 1 runtime failure, 2 usage/config error, 3 data error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np
from PIL import Image

from . import CHECKPOINT_FORMAT, __version__
from .config import ConfigError, RunConfig, load_config
from .datapipe import (
    AugmentationPolicy, ManifestError, SampleError, load_manifest, prepare_sample, to_gray, write_synth_dataset,
)
from .datapipe.prepare import read_image, read_mask, resize_image
from .evalkit import (
    ConfusionMatrix, affordance_map, affordance_rasters, box_counts, format_rmse_table, format_table,
    merge_box_counts, read_boxes, report, scale_boxes, _recalls,
)
from .lossweight import edge_distance_map, raw_weight_map, to_uint8, weight_map
from .network import Checkpoint, TrainingDiverged, init_model, predict, train
from .ordinal import LABEL_MODES, PENALTIES, RankSet, decode_argmax, encode_mask, label_table
from .taxonomy import BINARY_MODES, Level, TaxonomyError, collapse_binary, remap_mask, resolve_taxonomy

log = logging.getLogger("driveseg")

EXIT_RUNTIME, EXIT_CONFIG, EXIT_DATA = 1, 2, 3
IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"}


class DataError(Exception):
    pass


class Artifacts:
    """Collects files a run produced and writes ``artifacts.json`` beside them."""

    def __init__(self, out_dir: Path, command: str):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.command = command
        self.files: list[Path] = []
        self.started = time.time()

    def add(self, path) -> Path:
        self.files.append(Path(path))
        return Path(path)

    def path(self, name: str) -> Path:
        return self.out_dir / name

    def write_text(self, name: str, text: str) -> Path:
        p = self.path(name)
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text)
        return self.add(p)

    def save_png(self, name: str, arr: np.ndarray) -> Path:
        p = self.path(name)
        p.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(arr).save(p)
        return self.add(p)

    def close(self) -> Path:
        entries = []
        for f in self.files:
            digest = hashlib.sha256(f.read_bytes()).hexdigest()
            try:
                rel = f.relative_to(self.out_dir)
            except ValueError:
                rel = f
            entries.append({"path": str(rel), "bytes": f.stat().st_size, "sha256": digest})
        manifest = {"command": self.command, "version": __version__, "seconds": round(time.time() - self.started, 3),
                    "files": entries}
        p = self.out_dir / "artifacts.json"
        p.write_text(json.dumps(manifest, indent=2) + "\n")
        return p


# -- helpers -------------------------------------------------------------------

def _config(args, default_out: str) -> tuple[RunConfig, Path]:
    values = {}
    for flag, key in FLAG_KEYS:
        val = getattr(args, flag, None)
        if val is not None:
            values[key] = [str(v) for v in val] if flag == "train_manifest" else val
    cfg = load_config(getattr(args, "config", None), args.set or (), values)
    out = Path(args.out) if getattr(args, "out", None) else cfg.out_dir(default_out)
    return cfg, out


def _taxonomy_for(manifest, cfg: RunConfig):
    if cfg.data.taxonomy:
        return resolve_taxonomy(cfg.data.taxonomy)
    if manifest.taxonomy is None:
        raise DataError(f"{manifest.path}: no taxonomy header and no data.taxonomy configured")
    return manifest.taxonomy


def _load_samples(path, cfg: RunConfig, size, grayscale: bool):
    tax = resolve_taxonomy(cfg.data.taxonomy) if cfg.data.taxonomy else None
    man = load_manifest(path, taxonomy=tax)
    tax = _taxonomy_for(man, cfg)
    return man, [prepare_sample(r, size, grayscale, tax, man.dataset_id) for r in man]


def _gt(levels, label_space: str):
    return collapse_binary(levels, label_space) if label_space in BINARY_MODES else levels


def _load_checkpoint(path) -> Checkpoint:
    if not path:
        raise ConfigError("a checkpoint is required (--checkpoint or eval.checkpoint)")
    if not Path(path).is_file():
        raise DataError(f"checkpoint not found: {path}")
    try:
        return Checkpoint.load(path)
    except (RuntimeError, ValueError, OSError) as e:
        raise DataError(f"cannot load checkpoint {path}: {e}") from e


def _mask_inputs(args) -> list[Path]:
    paths = [Path(p) for p in args.masks]
    if getattr(args, "manifest", None):
        paths += [r.mask for r in load_manifest(args.manifest, check_ids=False)]
    if not paths:
        raise ConfigError("no input masks given")
    for p in paths:
        if not p.is_file():
            raise DataError(f"mask not found: {p}")
    return paths


def _levels_from(path: Path, taxonomy: str | None) -> np.ndarray:
    ids = read_mask(path)
    if taxonomy:
        return remap_mask(ids, resolve_taxonomy(taxonomy))
    if ids.max() > 3:
        raise DataError(f"{path}: values above 3; pass --taxonomy to map class ids to levels")
    return ids.astype(np.int8)


def _box_counts_for(boxes_path, man, samples, preds) -> dict | None:
    if not boxes_path:
        return None
    boxes = read_boxes(boxes_path)
    parts = []
    for rec, s, pred in zip(man, samples, preds):
        if rec.stem not in boxes:
            continue
        with Image.open(rec.mask) as im:
            src = (im.height, im.width)
        scaled = scale_boxes(boxes[rec.stem], src, s.size)
        if scaled:
            parts.append(box_counts(pred, scaled))
    return merge_box_counts(parts) if parts else None


# -- subcommands ---------------------------------------------------------------

def cmd_remap(args) -> Artifacts:
    tax = resolve_taxonomy(args.taxonomy)
    art = Artifacts(Path(args.out), "remap")
    from .plotting import level_rgb

    lines = []
    for path in _mask_inputs(args):
        levels = remap_mask(read_mask(path), tax)
        out = art.save_png(f"{path.stem}.png", levels.astype(np.uint8))
        art.save_png(f"{path.stem}_rgb.png", level_rgb(levels))
        lines.append(f"{path}\t{out.name}")
    art.write_text("levels.tsv", f"# taxonomy: {tax.dataset_id}\n" + "\n".join(lines) + "\n")
    return art


def cmd_encode(args) -> Artifacts:
    from .plotting import soft_label_figure

    ranks = RankSet.for_space(args.label_space)
    table = np.asarray(label_table(ranks, args.penalty, args.mode))
    art = Artifacts(Path(args.out), "encode")
    head = "level\trank\t" + "\t".join(f"y_{r:g}" for r in ranks.values)
    rows = [f"{Level(lvl).label}\t{r:g}\t" + "\t".join(f"{v:.6f}" for v in row)
            for lvl, r, row in zip(ranks.levels, ranks.values, table)]
    art.write_text("soft_labels.tsv", "\n".join([head] + rows) + "\n")
    art.add(soft_label_figure(table, ranks.values, art.path("soft_labels.png"), f"{args.mode} ({args.penalty})"))
    for path in [Path(p) for p in args.masks]:
        if not path.is_file():
            raise DataError(f"mask not found: {path}")
        levels = _gt(_levels_from(path, args.taxonomy), args.label_space)
        labels, void = encode_mask(levels, ranks, args.penalty, args.mode)
        p = art.path(f"{path.stem}_labels.npy")
        np.save(p, labels.astype(np.float32))
        art.add(p)
        _, rendered = affordance_map(labels, ranks)
        gray, _ = affordance_rasters(np.where(void, 0.0, rendered))
        art.save_png(f"{path.stem}_expected_rank.png", gray)
    return art


def cmd_weightmap(args) -> Artifacts:
    from .plotting import weightmap_figure

    art = Artifacts(Path(args.out), "weightmap")
    rows = ["mask\tmin\tmean\tmax"]
    for path in _mask_inputs(args):
        levels = _levels_from(path, args.taxonomy)
        w = weight_map(levels, args.beta, args.w_max)
        art.save_png(f"{path.stem}_weights.png", to_uint8(w, args.w_max))
        art.add(weightmap_figure(levels, edge_distance_map(levels), raw_weight_map(levels, args.beta), w,
                                 art.path(f"{path.stem}_weightmap.png"), w_max=args.w_max))
        rows.append(f"{path.name}\t{w.min():.4f}\t{w.mean():.4f}\t{w.max():.4f}")
    art.write_text("weights.tsv", "\n".join(rows) + "\n")
    return art


def cmd_synth(args) -> Artifacts:
    art = Artifacts(Path(args.out), "synth")
    counts = {"train": args.count, "val": args.val, "test": args.test}
    if sum(counts.values()) <= 0:
        raise ConfigError("nothing to generate: all split counts are zero")
    paths = write_synth_dataset(art.out_dir, counts, seed=args.seed, width=args.width, height=args.height)
    for split, mpath in paths.items():
        man = load_manifest(mpath, check_ids=False)
        for r in man:
            art.add(r.image)
            art.add(r.mask)
        art.add(mpath)
        art.add(art.out_dir / f"{split}_boxes.txt")
        print(f"{split}: {len(man)} scenes -> {mpath}")
    return art


def cmd_train(args) -> Artifacts:
    from .plotting import loss_curves

    cfg, out = _config(args, "runs/train")
    if not cfg.data.train or not cfg.data.val:
        raise ConfigError("training needs data.train and data.val manifests")
    art = Artifacts(out, "train")
    art.add(cfg.save(art.path("config.json")))
    mcfg, tcfg = cfg.model_config(), cfg.train_config()
    size, gray = (mcfg.height, mcfg.width), mcfg.in_channels == 1
    train_sets = [_load_samples(p, cfg, size, gray)[1] for p in cfg.data.train]
    _, val = _load_samples(cfg.data.val, cfg, size, gray)
    init = _load_checkpoint(cfg.train.init) if cfg.train.init else None
    try:
        model = init_model(tcfg, mcfg, init, seed=cfg.run.seed)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    policy = AugmentationPolicy() if tcfg.augment else None
    ck = train(tcfg, model, train_sets, val, policy=policy, checkpoint_path=art.path("checkpoint.pt"))
    art.add(art.path("checkpoint.pt"))
    h = ck.history
    lines = ["epoch\ttrain_loss\tval_loss"] + [f"{i + 1}\t{a:.6f}\t{b:.6f}"
                                               for i, (a, b) in enumerate(zip(h["train_loss"], h["val_loss"]))]
    art.write_text("history.tsv", "\n".join(lines) + "\n")
    art.add(loss_curves(h, art.path("loss.png")))
    print(f"best epoch {ck.epoch}: val loss {ck.best_val:.6f} -> {art.path('checkpoint.pt')}")
    return art


def _eval_inputs(cfg: RunConfig, args):
    path = args.manifest or cfg.data.test
    if not path:
        raise ConfigError("evaluation needs a test manifest (--manifest or data.test)")
    return path


def cmd_eval(args) -> Artifacts:
    from .plotting import confusion_figure, metrics_bars

    cfg, out = _config(args, "runs/eval")
    ck_path = args.checkpoint or cfg.eval.checkpoint
    art = Artifacts(out, "eval")
    if args.pred_dir:
        label_space = cfg.loss.label_space
        size, gray = tuple(int(v) for v in cfg.data.size), cfg.data.grayscale
        ck = None
    else:
        ck = _load_checkpoint(ck_path)
        label_space = ck.train_cfg.label_space
        size, gray = (ck.model_cfg.height, ck.model_cfg.width), ck.model_cfg.in_channels == 1
    if label_space == "objects":
        raise ConfigError("object-pretraining checkpoints have no driveability levels to evaluate")
    cfg.loss.label_space = label_space
    cfg.eval.checkpoint = str(ck_path or "")
    art.add(cfg.save(art.path("config.json")))
    man, samples = _load_samples(_eval_inputs(cfg, args), cfg, size, gray)
    ranks = RankSet.for_space(label_space)

    if ck is not None:
        probs = predict(ck.model(), np.stack([s.image for s in samples]))
        preds = [decode_argmax(p, ranks) for p in probs]
    else:
        preds = []
        for s in samples:
            p = Path(args.pred_dir) / f"{s.name}.png"
            if not p.is_file():
                raise DataError(f"prediction missing for {s.name}: {p}")
            pred = read_mask(p).astype(np.int8)
            if pred.shape != s.size:
                raise DataError(f"{p}: prediction {pred.shape} does not match evaluation size {s.size}")
            preds.append(pred)

    conf = ConfusionMatrix(ranks)
    for s, pred in zip(samples, preds):
        gt = _gt(s.levels, label_space)
        try:
            conf.accumulate(pred, gt, weight_map(gt, cfg.loss.beta, cfg.loss.w_max))
        except ValueError as e:
            raise DataError(f"{s.name}: {e}") from None

    instance = {}
    boxes = _box_counts_for(cfg.data.boxes, man, samples, preds)
    if boxes is not None:
        for t in cfg.eval.thresholds:
            pix, inst = _recalls(boxes, float(t))
            instance["pixel_recall"] = pix
            instance[f"instance_recall@{float(t):g}"] = inst
    rep = report(conf, len(samples), instance, cfg.eval.label or man.dataset_id)
    art.write_text("report.json", rep.to_json() + "\n")
    text = rep.to_text()
    if instance:
        text += "\n\n" + "\n".join(f"{k}: {'n/a' if v is None else f'{100 * v:.2f} %'}"
                                  for k, v in instance.items())
    art.write_text("report.txt", text + "\n")
    art.add(confusion_figure(conf, art.path("confusion.png")))
    art.add(confusion_figure(conf, art.path("confusion_weighted.png"), weighted=True))
    art.add(metrics_bars([rep], art.path("metrics.png")))
    print(text)
    return art


def _predict_inputs(args, cfg, size, gray):
    """(name, image) pairs from a manifest or an image directory."""
    if args.manifest:
        man, samples = _load_samples(args.manifest, cfg, size, gray)
        return [(s.name, s.image, s.levels) for s in samples]
    folder = Path(args.images)
    if not folder.is_dir():
        raise DataError(f"image directory not found: {folder}")
    files = sorted(p for p in folder.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not files:
        raise DataError(f"no images in {folder}")
    out = []
    for p in files:
        img = read_image(p)
        if gray:
            img = to_gray(img)
        out.append((p.stem, resize_image(img, size), None))
    return out


def cmd_predict(args) -> Artifacts:
    from .plotting import prediction_figure

    cfg, out = _config(args, "runs/predict")
    ck = _load_checkpoint(args.checkpoint or cfg.eval.checkpoint)
    if ck.train_cfg.label_space == "objects":
        raise ConfigError("object-pretraining checkpoints do not predict driveability levels")
    if not args.manifest and not args.images:
        raise ConfigError("predict needs --images DIR or --manifest FILE")
    art = Artifacts(out, "predict")
    cfg.eval.checkpoint = str(args.checkpoint or cfg.eval.checkpoint)
    art.add(cfg.save(art.path("config.json")))
    size, gray = (ck.model_cfg.height, ck.model_cfg.width), ck.model_cfg.in_channels == 1
    items = _predict_inputs(args, cfg, size, gray)
    ranks = RankSet.for_space(ck.train_cfg.label_space)
    probs = predict(ck.model(), np.stack([img for _, img, _ in items]))
    for k, ((name, img, gt), p) in enumerate(zip(items, probs)):
        levels = decode_argmax(p, ranks)
        art.save_png(f"{name}.png", levels.astype(np.uint8))
        _, rendered = affordance_map(p, ranks)
        gray_map, color_map = affordance_rasters(rendered)
        art.save_png(f"{name}_affordance.png", gray_map)
        art.save_png(f"{name}_affordance_rgb.png", color_map)
        if k < args.figures:
            gt = _gt(gt, ck.train_cfg.label_space) if gt is not None else None
            art.add(prediction_figure(img, levels, rendered, art.path(f"figures/{name}.png"), gt))
    print(f"{len(items)} predictions -> {art.out_dir}")
    return art


def cmd_study(args) -> Artifacts:
    from .experiments import BINARY_ROWS, StudyConfig, binary_study, severity_study
    from .evalkit import MetricsReport
    from .network import ModelConfig
    from .plotting import grouped_bars

    out = Path(args.out) if args.out else load_config().out_dir(f"runs/study_{args.kind}")
    art = Artifacts(out, f"study {args.kind}")
    scfg = StudyConfig(n_train=args.n_train, n_val=args.n_val, n_test=args.n_test, data_seed=args.data_seed,
                       epochs=args.epochs, lw_epochs=args.lw_epochs, model=ModelConfig.desk())
    if args.kind == "severity":
        res = severity_study(scfg, seeds=tuple(args.seeds))
        art.write_text("study.json", json.dumps(res, indent=2) + "\n")
        reps = [MetricsReport(**{**r[key], "label": f"{key} seed {r['seed']}"})
                for key in res["summary"] for r in res["runs"]]
        lines = [format_table(reps, label_header="Labels"), "", "median over seeds"]
        medians = {}
        for key, s in res["summary"].items():
            lines.append(f"  {key:8s} MS {100 * s['median_ms']:.2f} %  RMSE {s['median_rmse']:.3f}  "
                         f"red R_w {100 * s['median_red_recall_w']:.2f} %  "
                         f"green P_w {100 * s['median_green_precision_w']:.2f} %")
            medians[key] = {"MS %": 100 * s["median_ms"], "red R_w %": 100 * s["median_red_recall_w"],
                            "green P_w %": 100 * s["median_green_precision_w"]}
        text = "\n".join(lines)
        art.add(grouped_bars(medians, ["MS %", "red R_w %", "green P_w %"], art.path("study.png"),
                             ylabel="median over seeds (%)"))
    else:
        res = binary_study(scfg, seed=args.seeds[0])
        art.write_text("study.json", json.dumps(res, indent=2) + "\n")
        rows = {BINARY_ROWS[k]: v for k, v in res.items()}
        text = format_rmse_table(rows, ["val", "test"])
        art.add(grouped_bars(rows, ["val", "test"], art.path("study.png"), ylabel="RMSE"))
    art.write_text("study.txt", text + "\n")
    print(text)
    return art


# -- parser ----------------------------------------------------------------------

# (argparse dest, config key) pairs that shadow config entries
FLAG_KEYS = [
    ("train_manifest", "data.train"), ("val_manifest", "data.val"), ("test_manifest", "data.test"),
    ("taxonomy", "data.taxonomy"), ("boxes", "data.boxes"), ("preset", "model.preset"),
    ("stage", "train.stage"), ("init", "train.init"), ("epochs", "train.max_epochs"), ("lr", "train.lr"),
    ("batch_size", "train.batch_size"), ("label_mode", "loss.label_mode"), ("penalty", "loss.penalty"),
    ("label_space", "loss.label_space"), ("loss_weighting", "loss.loss_weighting"), ("seed", "run.seed"),
    ("label", "eval.label"),
]


def _run_flags(p: argparse.ArgumentParser):
    p.add_argument("-c", "--config", help="TOML (or resolved JSON) run config")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override a config value")
    p.add_argument("--out", help="output directory (default: $DRIVESEG_OUT/runs/<command>)")
    p.add_argument("--seed", type=int)
    p.add_argument("--taxonomy", help="taxonomy file or builtin name, overriding manifest headers")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="driveseg", description="Driveability segmentation toolkit.")
    ap.add_argument("--version", action="version",
                    version=f"driveseg {__version__} (checkpoint format {CHECKPOINT_FORMAT})")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", metavar="COMMAND", required=True)

    p = sub.add_parser("remap", help="class-id masks -> level masks")
    p.add_argument("masks", nargs="*")
    p.add_argument("--manifest", help="take masks from a dataset manifest")
    p.add_argument("--taxonomy", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_remap)

    p = sub.add_parser("encode", help="dump soft-label tables and per-pixel targets")
    p.add_argument("masks", nargs="*", help="level masks (or class-id masks with --taxonomy)")
    p.add_argument("--taxonomy")
    p.add_argument("--mode", choices=LABEL_MODES, default="sord")
    p.add_argument("--penalty", choices=PENALTIES, default="sld")
    p.add_argument("--label-space", choices=("three_level",) + tuple(BINARY_MODES), default="three_level")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("weightmap", help="loss weight maps as 8-bit images and figures")
    p.add_argument("masks", nargs="*")
    p.add_argument("--manifest")
    p.add_argument("--taxonomy")
    p.add_argument("--beta", type=float, default=30.0)
    p.add_argument("--w-max", type=float, default=10.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_weightmap)

    p = sub.add_parser("synth", help="generate a synthetic dataset with manifests")
    p.add_argument("--count", type=int, default=200, help="training scenes")
    p.add_argument("--val", type=int, default=0)
    p.add_argument("--test", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--width", type=int, default=128)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train one stage")
    _run_flags(p)
    p.add_argument("--train-manifest", action="append", help="repeat for multi-dataset training")
    p.add_argument("--val-manifest")
    p.add_argument("--preset", choices=("desk", "full"))
    p.add_argument("--stage")
    p.add_argument("--init", help="checkpoint to start from")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--label-mode", choices=LABEL_MODES)
    p.add_argument("--penalty", choices=PENALTIES)
    p.add_argument("--label-space")
    p.add_argument("--lw", dest="loss_weighting", action="store_true", default=None)
    p.add_argument("--no-lw", dest="loss_weighting", action="store_false")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="metrics report over a test manifest")
    _run_flags(p)
    p.add_argument("--checkpoint")
    p.add_argument("--manifest", help="test manifest (default data.test)")
    p.add_argument("--pred-dir", help="score saved argmax masks instead of running a model")
    p.add_argument("--boxes", help="obstacle boxes 'image_id x0 y0 x1 y1' for instance recall")
    p.add_argument("--label-space")
    p.add_argument("--label")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="argmax masks and affordance maps")
    _run_flags(p)
    p.add_argument("--checkpoint")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--images", help="directory of images")
    src.add_argument("--manifest")
    p.add_argument("--figures", type=int, default=4, help="how many side-by-side figures to render")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("study", help="desk-scale synthetic studies")
    p.add_argument("kind", choices=("severity", "binary"))
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    p.add_argument("--n-train", type=int, default=200)
    p.add_argument("--n-val", type=int, default=40)
    p.add_argument("--n-test", type=int, default=40)
    p.add_argument("--data-seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=15)
    p.add_argument("--lw-epochs", type=int, default=8)
    p.add_argument("--out")
    p.set_defaults(func=cmd_study)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        art = args.func(args)
        art.close()
        return 0
    except ConfigError as e:
        print(f"driveseg {args.command}: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, ManifestError, SampleError, TaxonomyError, FileNotFoundError) as e:
        print(f"driveseg {args.command}: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except TrainingDiverged as e:
        print(f"driveseg {args.command}: training diverged: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as e:  # noqa: BLE001 - last-resort classification for the exit code
        log.debug("unhandled", exc_info=True)
        print(f"driveseg {args.command}: error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
