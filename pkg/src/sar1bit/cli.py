"""Command-line entry point.

Subcommands map one-to-one onto the pipeline stages::

    sar1bit dataset synth --classes 6 --per-class 35 --seed 7 --out data/
    sar1bit dataset preview --manifest data/manifest.csv --out previews/
    sar1bit pretrain --manifest data/manifest.csv --out run/
    sar1bit hog --manifest data/manifest.csv --ckpt run/ckpt_best.cfck --out hogrun/
    sar1bit finetune --manifest hogrun/manifest.csv --init run/ckpt_best.cfck --out clf/
    sar1bit eval --manifest hogrun/manifest.csv --classifier clf/ckpt_classifier.cfck --out eval/

Every subcommand accepts ``--config FILE`` plus repeated ``--set key=value``
overrides and ``--seed N``; the effective configuration is written to
``<out>/config.resolved``. Exit codes: 0 success, 1 runtime failure,
2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import metrics
from .config import ConfigError, RunConfig
from .ndgrad import NdgradError, TensorFileError, load_tensor
from .pipeline import (
    CheckpointError,
    Manifest,
    StageError,
    evaluate,
    extract_hog_stage,
    finetune,
    pretrain,
    score_predictions,
    synth_dataset,
    write_pgm,
)
from .sarsim import SimulationError


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", metavar="FILE", help="flat key=value configuration file")
    p.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
        help="override one configuration key (repeatable)",
    )
    p.add_argument("--seed", type=int, help="override train.seed")


def _load_config(args) -> RunConfig:
    overrides = {}
    for item in args.overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    cfg = RunConfig.from_file(args.config, overrides)
    if args.seed is not None:
        cfg.set("train.seed", str(args.seed))
    return cfg


def cmd_dataset_synth(args) -> int:
    cfg = _load_config(args)
    for key, val in (
        ("dataset.classes", args.classes),
        ("dataset.per_class", args.per_class),
        ("dataset.size", args.size),
        ("dataset.imbalance", args.imbalance),
        ("dataset.gt_source", args.gt_source),
        ("dataset.workers", args.workers),
        ("dataset.train_frac", args.train_frac),
        ("dataset.val_frac", args.val_frac),
    ):
        if val is not None:
            cfg.set(key, str(val))
    out = Path(args.out)
    manifest = synth_dataset(
        out,
        num_classes=cfg["dataset.classes"],
        per_class=cfg["dataset.per_class"],
        size=cfg["dataset.size"],
        seed=cfg["train.seed"],
        params=cfg.radar_params(),
        imbalance=cfg["dataset.imbalance"],
        train_frac=cfg["dataset.train_frac"],
        val_frac=cfg["dataset.val_frac"],
        gt_source=cfg["dataset.gt_source"],
        workers=cfg["dataset.workers"],
    )
    cfg.write_resolved(out)
    counts = {s: len(manifest.rows_for(s)) for s in ("train", "val", "test")}
    print(f"wrote {len(manifest.rows)} pairs to {out} "
          f"(train {counts['train']} / val {counts['val']} / test {counts['test']})")
    return 0


def cmd_dataset_preview(args) -> int:
    manifest = Manifest.load(args.manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = manifest.rows[: args.count] if args.count else manifest.rows
    for r in rows:
        img1 = load_tensor(manifest.resolve(r.path_1bit))
        img16 = load_tensor(manifest.resolve(r.path_16bit))
        write_pgm(out / f"{r.id}_1b.pgm", img1)
        write_pgm(out / f"{r.id}_16.pgm", img16)
    print(f"wrote {2 * len(rows)} previews to {out}")
    return 0


def cmd_pretrain(args) -> int:
    cfg = _load_config(args)
    manifest = Manifest.load(args.manifest)
    result = pretrain(manifest, cfg, args.out)
    if result.curves:
        last = result.curves[-1]
        print(f"pre-training done: {len(result.curves)} epochs, "
              f"final l_rec {last['l_rec']:.4f}, l_total {last['l_total']:.4f}")
    else:
        print("pre-training done: 0 epochs (checkpoint equals initialization)")
    print(f"checkpoints: {result.best_path} {result.final_path}")
    return 0


def cmd_hog(args) -> int:
    cfg = _load_config(args)
    if args.source is not None:
        cfg.set("hog.source", args.source)
    manifest = Manifest.load(args.manifest)
    if cfg["hog.source"] == "reconstructed" and not args.ckpt:
        raise StageError("hog --source reconstructed needs --ckpt from the pre-training stage")
    out = extract_hog_stage(manifest, cfg, args.out, ckpt_path=args.ckpt)
    n = sum(1 for r in out.rows if r.path_hog)
    print(f"descriptor stage done ({cfg['hog.source']}): {n}/{len(out.rows)} rows have descriptors")
    print(f"manifest: {Path(args.out) / 'manifest.csv'}")
    return 0


def cmd_finetune(args) -> int:
    cfg = _load_config(args)
    manifest = Manifest.load(args.manifest)
    init = args.init
    if init != "scratch" and not Path(init).exists():
        raise StageError(f"--init checkpoint not found: {init} (run the pre-training stage first)")
    result = finetune(manifest, cfg, args.out, init=init)
    print(f"fine-tuning done: best validation accuracy {result.best_val_acc:.4f}")
    print(f"checkpoint: {result.ckpt_path}")
    return 0


def _read_prediction_file(path: str) -> list[tuple[str, int]]:
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        for rec in reader:
            if not rec or rec[0] in ("id", "sample"):
                continue
            rows.append((rec[0], int(float(rec[-1]))))
    return rows


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    if args.matrix_only:
        conf = metrics.load_confusion_csv(Path(args.matrix_only).read_text(encoding="utf-8"))
        rep = metrics.report(conf)
        print(metrics.report_text(rep), end="")
        print(f"accuracy {100 * rep.accuracy:.2f}%  macro-F1 {100 * rep.macro_f1:.2f}%")
        return 0
    if not args.manifest:
        raise StageError("eval needs --manifest (or --matrix-only FILE)")
    manifest = Manifest.load(args.manifest)
    if args.predictions:
        conf, rep = score_predictions(manifest, _read_prediction_file(args.predictions))
        print(metrics.report_text(rep, manifest.class_names), end="")
        if args.out:
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            (out / "confusion.csv").write_text(metrics.confusion_csv(conf, manifest.class_names), "utf-8")
            (out / "metrics.csv").write_text(metrics.report_csv(rep, manifest.class_names), "utf-8")
        return 0
    if not args.classifier or not args.out:
        raise StageError("eval needs --classifier and --out (or --matrix-only / --predictions)")
    result = evaluate(
        manifest, cfg, args.out, classifier_ckpt=args.classifier,
        pretrain_ckpt=args.pretrain, split=args.split,
    )
    print(metrics.report_text(result.report, manifest.class_names), end="")
    if result.mean_psnr_recon is not None:
        print(f"mean reconstruction PSNR {result.mean_psnr_recon:.2f} dB "
              f"(1-bit input: {result.mean_psnr_1bit:.2f} dB)")
    print(f"reports written to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sar1bit",
        description="1-bit radar image simulation, reconstruction pre-training, and classification",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_dataset = sub.add_parser("dataset", help="synthesize or preview paired datasets")
    dsub = p_dataset.add_subparsers(dest="dataset_command", required=True)

    p_synth = dsub.add_parser("synth", help="generate paired images and a manifest")
    p_synth.add_argument("--out", required=True, help="output directory")
    p_synth.add_argument("--classes", type=int, help="number of classes (2..10)")
    p_synth.add_argument("--per-class", dest="per_class", type=int, help="samples per class")
    p_synth.add_argument("--size", type=int, help="target map side length")
    p_synth.add_argument("--imbalance", choices=("balanced", "table1"), help="class-count profile")
    p_synth.add_argument("--gt-source", dest="gt_source", choices=("rda", "original"))
    p_synth.add_argument("--train-frac", dest="train_frac", type=float)
    p_synth.add_argument("--val-frac", dest="val_frac", type=float)
    p_synth.add_argument("--workers", type=int, help="parallel synthesis workers")
    _add_common(p_synth)
    p_synth.set_defaults(func=cmd_dataset_synth)

    p_prev = dsub.add_parser("preview", help="write PGM previews of manifest images")
    p_prev.add_argument("--manifest", required=True)
    p_prev.add_argument("--out", required=True)
    p_prev.add_argument("--count", type=int, default=0, help="limit rows (0 = all)")
    _add_common(p_prev)
    p_prev.set_defaults(func=cmd_dataset_preview)

    p_pre = sub.add_parser("pretrain", help="cross-feature reconstruction pre-training")
    p_pre.add_argument("--manifest", required=True)
    p_pre.add_argument("--out", required=True)
    _add_common(p_pre)
    p_pre.set_defaults(func=cmd_pretrain)

    p_hog = sub.add_parser("hog", help="attach gradient-histogram descriptors to a manifest")
    p_hog.add_argument("--manifest", required=True)
    p_hog.add_argument("--out", required=True)
    p_hog.add_argument("--ckpt", help="pre-training checkpoint (needed for reconstructed source)")
    p_hog.add_argument("--source", choices=("reconstructed", "raw1bit", "off"))
    _add_common(p_hog)
    p_hog.set_defaults(func=cmd_hog)

    p_fin = sub.add_parser("finetune", help="two-phase classifier fine-tuning")
    p_fin.add_argument("--manifest", required=True)
    p_fin.add_argument("--out", required=True)
    p_fin.add_argument("--init", required=True,
                       help="'scratch' or a pre-training checkpoint path")
    _add_common(p_fin)
    p_fin.set_defaults(func=cmd_finetune)

    p_eval = sub.add_parser("eval", help="score a classifier or a stored matrix/prediction file")
    p_eval.add_argument("--manifest")
    p_eval.add_argument("--classifier", help="classifier checkpoint")
    p_eval.add_argument("--pretrain", help="pre-training checkpoint for reconstruction metrics")
    p_eval.add_argument("--out", help="report directory")
    p_eval.add_argument("--split", default="test", choices=("train", "val", "test"))
    p_eval.add_argument("--matrix-only", dest="matrix_only", metavar="CSV",
                        help="score a stored confusion matrix and exit")
    p_eval.add_argument("--predictions", metavar="CSV", help="score stored (id,pred) rows")
    _add_common(p_eval)
    p_eval.set_defaults(func=cmd_eval)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (
        ConfigError,
        StageError,
        CheckpointError,
        SimulationError,
        TensorFileError,
        NdgradError,
        FileNotFoundError,
        ValueError,
        RuntimeError,
    ) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
