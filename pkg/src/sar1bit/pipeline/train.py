"""Training stages: pre-training, descriptor extraction, fine-tuning, evaluation.

All stages are deterministic functions of (manifest, config, seed): epoch
plans, batch composition and per-sample augmentation streams derive from
the master seed, so two single-threaded runs produce bit-identical
checkpoints, curve files and reports.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import losses, metrics
from .. import ndgrad as ng
from ..config import RunConfig
from ..features import hog_extract
from ..model import FusionClassifier, ReconstructionNet
from ..ndgrad import AdamW, Tensor, load_tensor, save_tensor
from .augment import AugmentOptions, augment_pair, sample_rng
from .checkpoint import load_checkpoint, save_checkpoint
from .dataset import Manifest
from .pgm import write_pgm
from .sampling import oversample_plan, pk_batches

_PRETRAIN_STREAM = 101
_FINETUNE_STREAM = 202


class StageError(RuntimeError):
    """A pipeline stage was invoked without its prerequisites."""


class ImageCache:
    """Lazy in-memory image/descriptor store for one manifest."""

    def __init__(self, manifest: Manifest):
        self.manifest = manifest
        self._pairs: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        self._hogs: dict[int, np.ndarray] = {}

    def pair(self, idx: int) -> tuple[np.ndarray, np.ndarray]:
        if idx not in self._pairs:
            row = self.manifest.rows[idx]
            img16 = load_tensor(self.manifest.resolve(row.path_16bit)).astype(np.float32)
            img1 = load_tensor(self.manifest.resolve(row.path_1bit)).astype(np.float32)
            self._pairs[idx] = (img16, img1)
        return self._pairs[idx]

    def hog(self, idx: int) -> np.ndarray:
        if idx not in self._hogs:
            row = self.manifest.rows[idx]
            if not row.path_hog:
                raise StageError(
                    f"row '{row.id}' has no descriptor; run the descriptor stage first"
                )
            self._hogs[idx] = load_tensor(self.manifest.resolve(row.path_hog)).astype(np.float32)
        return self._hogs[idx]


def _write_curves(path: Path, header: list[str], rows: list[list]):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _epoch_plan(labels, target, rng):
    if target > 0:
        return oversample_plan(labels, target, rng, allow_undersample=True)
    plan = np.arange(len(labels), dtype=np.int64)
    rng.shuffle(plan)
    return plan


# -- stage 1: cross-feature reconstruction pre-training -------------------------


@dataclass
class PretrainResult:
    best_path: Path
    final_path: Path
    curves_path: Path
    curves: list[dict]


def pretrain(manifest: Manifest, cfg: RunConfig, out_dir: str | Path) -> PretrainResult:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg.write_resolved(out_dir)

    seed = cfg["train.seed"]
    train_idx = [i for i, r in enumerate(manifest.rows) if r.split == "train"]
    if not train_idx:
        raise StageError("manifest has no train split")
    labels_all = manifest.labels()
    train_idx = np.array(train_idx, dtype=np.int64)

    net = ReconstructionNet(cfg.encoder_config(), seed=seed)
    opt = AdamW(net.params(), lr=cfg["train.pretrain_lr"], weight_decay=cfg["train.weight_decay"])
    weights = cfg.loss_weights()
    margin = cfg["loss.margin"]
    normalize = cfg["loss.normalize_features"]
    p, k = cfg["train.batch_p"], cfg["train.batch_k"]
    opts = AugmentOptions.from_config(cfg) if cfg["augment.enabled"] else None
    cache = ImageCache(manifest)

    curves: list[dict] = []
    rows_csv: list[list] = []
    best_total = np.inf
    best_arrays = {n: t.data.copy() for n, t in net.params().items()}

    for epoch in range(1, cfg["train.pretrain_epochs"] + 1):
        rng = np.random.default_rng([seed, _PRETRAIN_STREAM, epoch])
        plan = _epoch_plan(labels_all[train_idx], cfg["augment.oversample_pretrain"], rng)
        batches = pk_batches(plan, labels_all[train_idx], p, k, rng)
        sums = np.zeros(5)
        position = 0
        for batch_local in batches:
            batch = train_idx[batch_local]
            xs16, xs1 = [], []
            for idx in batch:
                img16, img1 = cache.pair(int(idx))
                if opts is not None:
                    srng = sample_rng(seed, epoch, position)
                    img16, img1 = augment_pair(img16, img1, srng, opts)
                position += 1
                xs16.append(img16)
                xs1.append(img1)
            x16 = Tensor(np.stack(xs16)[:, None, :, :])
            x1 = Tensor(np.stack(xs1)[:, None, :, :])
            y = labels_all[batch]

            swap_active = epoch > cfg["train.selfattn_start"] * cfg["train.pretrain_epochs"]
            student_kv = (
                "student"
                if swap_active and rng.uniform() < cfg["train.selfattn_prob"]
                else "teacher"
            )
            xhat_t, xhat_s, f_t, f_s = net.forward(x16, x1, student_kv=student_kv)
            parts = {}
            for name, fn in (
                ("rec", lambda: losses.reconstruction_loss(xhat_s, x16)),
                ("con", lambda: losses.consistency_loss(xhat_t, xhat_s)),
                ("align", lambda: losses.alignment_loss(f_t, f_s)),
                ("sep", lambda: losses.separation_loss(f_s, y, margin=margin, normalize=normalize)),
            ):
                try:
                    parts[name] = fn()
                except ng.NumericError as e:
                    raise RuntimeError(f"non-finite '{name}' loss at epoch {epoch}: {e}") from e
                if not np.isfinite(parts[name].item()):
                    raise RuntimeError(f"non-finite '{name}' loss at epoch {epoch}")
            total = losses.compound_loss(parts["rec"], parts["con"], parts["align"], parts["sep"], weights)
            ng.backward(total)
            opt.step()
            sums += [parts["rec"].item(), parts["con"].item(), parts["align"].item(),
                     parts["sep"].item(), total.item()]
        n = max(1, len(batches))
        rec = dict(zip(("l_rec", "l_con", "l_align", "l_sep", "l_total"), sums / n))
        rec["epoch"] = epoch
        curves.append(rec)
        rows_csv.append([epoch] + [f"{rec[c]:.6f}" for c in ("l_rec", "l_con", "l_align", "l_sep", "l_total")])
        if rec["l_total"] < best_total:
            best_total = rec["l_total"]
            best_arrays = {n_: t.data.copy() for n_, t in net.params().items()}

    curves_path = out_dir / "pretrain_curves.csv"
    _write_curves(curves_path, ["epoch", "l_rec", "l_con", "l_align", "l_sep", "l_total"], rows_csv)

    meta = {"meta.best_total": np.array([best_total if np.isfinite(best_total) else 0.0], dtype=np.float64),
            "meta.epochs": np.array([cfg["train.pretrain_epochs"]], dtype=np.float64)}
    best_path = out_dir / "ckpt_best.cfck"
    save_checkpoint(best_path, {**best_arrays, **meta})
    final_path = out_dir / "ckpt_final.cfck"
    final_arrays = {n_: t.data for n_, t in net.params().items()}
    save_checkpoint(final_path, {**final_arrays, **meta, **opt.state_arrays()})
    return PretrainResult(best_path, final_path, curves_path, curves)


def load_reconstruction_net(ckpt_path: str | Path, cfg: RunConfig) -> ReconstructionNet:
    arrays = load_checkpoint(ckpt_path)
    net = ReconstructionNet(cfg.encoder_config(), seed=cfg["train.seed"])
    net.load_arrays(arrays)
    return net


def reconstruct_batch(net: ReconstructionNet, images: np.ndarray) -> np.ndarray:
    """Student-branch reconstructions of a (N,H,W) stack, gradient-free."""
    with ng.no_grad():
        out = net.reconstruct(Tensor(images[:, None, :, :]))
    return out.data[:, 0]


# -- stage 2: handcrafted descriptor extraction ----------------------------------


def extract_hog_stage(
    manifest: Manifest, cfg: RunConfig, out_dir: str | Path, ckpt_path: str | Path | None = None
) -> Manifest:
    """Attach a descriptor file to every manifest row.

    ``hog.source`` selects the image the descriptor is computed from:
    the student reconstruction of the 1-bit image (needs a pre-training
    checkpoint), the raw 1-bit image, or nothing at all (rows keep an
    empty descriptor path).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg.write_resolved(out_dir)
    source = cfg["hog.source"]
    if source not in ("reconstructed", "raw1bit", "off"):
        raise ValueError(f"hog.source must be reconstructed|raw1bit|off, got {source!r}")

    def rel_image(row_path: str) -> str:
        return str(manifest.resolve(row_path).relative_to(out_dir)) if _is_relative(
            manifest.resolve(row_path), out_dir
        ) else str(manifest.resolve(row_path))

    new_rows = []
    if source == "off":
        for r in manifest.rows:
            new_rows.append(
                type(r)(r.id, rel_image(r.path_1bit), rel_image(r.path_16bit), r.label, r.split, "")
            )
        out = Manifest(new_rows, manifest.class_names)
        out.save(out_dir / "manifest.csv")
        return out

    net = None
    if source == "reconstructed":
        if ckpt_path is None:
            raise StageError("hog.source=reconstructed needs a pre-training checkpoint")
        net = load_reconstruction_net(ckpt_path, cfg)

    hog_cfg = cfg.hog_config()
    (out_dir / "hog").mkdir(exist_ok=True)
    cache = ImageCache(manifest)
    chunk = 32
    for start in range(0, len(manifest.rows), chunk):
        idxs = range(start, min(start + chunk, len(manifest.rows)))
        imgs1 = np.stack([cache.pair(i)[1] for i in idxs])
        if source == "reconstructed":
            images = reconstruct_batch(net, imgs1)
        else:
            images = imgs1
        for j, i in enumerate(idxs):
            r = manifest.rows[i]
            desc = hog_extract(images[j], hog_cfg)
            save_tensor(out_dir / "hog" / f"{r.id}.cft", desc)
            new_rows.append(
                type(r)(r.id, rel_image(r.path_1bit), rel_image(r.path_16bit), r.label, r.split,
                        f"hog/{r.id}.cft")
            )
    out = Manifest(new_rows, manifest.class_names)
    out.save(out_dir / "manifest.csv")
    return out


def _is_relative(path: Path, base: Path) -> bool:
    try:
        path.relative_to(base.resolve())
        return True
    except ValueError:
        return False


# -- stage 3: two-phase classification fine-tuning --------------------------------


@dataclass
class FinetuneResult:
    ckpt_path: Path
    curves_path: Path
    best_val_acc: float
    curves: list[dict]


def _predict(clf: FusionClassifier, cache: ImageCache, idxs: list[int], use_hog: bool,
             batch: int = 32) -> np.ndarray:
    preds = []
    with ng.no_grad():
        for start in range(0, len(idxs), batch):
            part = idxs[start : start + batch]
            x = Tensor(np.stack([cache.pair(i)[1] for i in part])[:, None])
            hog = Tensor(np.stack([cache.hog(i) for i in part])) if use_hog else None
            logits = clf.forward(x, hog)
            preds.append(logits.data.argmax(axis=1))
    return np.concatenate(preds) if preds else np.empty(0, dtype=np.int64)


def finetune(
    manifest: Manifest, cfg: RunConfig, out_dir: str | Path, init: str | Path = "scratch"
) -> FinetuneResult:
    """Two-phase fine-tuning: head-only with a frozen backbone, then the
    full network with a reduced backbone learning rate; the best
    validation-accuracy parameters are kept."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg.write_resolved(out_dir)
    seed = cfg["train.seed"]

    train_idx = [i for i, r in enumerate(manifest.rows) if r.split == "train"]
    val_idx = [i for i, r in enumerate(manifest.rows) if r.split == "val"]
    if not train_idx:
        raise StageError("manifest has no train split")
    if not val_idx:
        raise StageError("manifest has no val split (needed for best-checkpoint selection)")
    labels_all = manifest.labels()
    train_idx = np.array(train_idx, dtype=np.int64)

    use_hog = all(manifest.rows[i].path_hog for i in train_idx)
    cache = ImageCache(manifest)
    hog_dim = len(cache.hog(int(train_idx[0]))) if use_hog else 0

    clf = FusionClassifier(
        num_classes=manifest.num_classes,
        cfg=cfg.encoder_config(),
        hog_dim=hog_dim,
        embed_dim=cfg["model.embed_dim"],
        hog_hidden=cfg["model.hog_hidden"],
        scales_used=cfg["model.scales_used"],
        seed=seed,
    )
    if str(init) != "scratch":
        clf.load_backbone_from_pretrain(load_checkpoint(init))

    if cfg["loss.alpha"] == "inverse":
        alpha = losses.inverse_frequency_alpha(labels_all[train_idx], manifest.num_classes)
    else:
        alpha = None
    gamma = cfg["loss.gamma"]
    lr = cfg["train.finetune_lr"]
    batch_size = cfg["train.batch_p"] * cfg["train.batch_k"]
    opts = AugmentOptions.from_config(cfg) if cfg["augment.enabled"] else None

    curves: list[dict] = []
    rows_csv: list[list] = []
    best = {"val_acc": -1.0, "arrays": None}

    def snapshot_if_better(val_acc: float):
        if np.isfinite(val_acc) and val_acc > best["val_acc"]:
            best["val_acc"] = val_acc
            best["arrays"] = {n: t.data.copy() for n, t in clf.params().items()}

    def run_epochs(phase: str, n_epochs: int, opt: AdamW, epoch_offset: int, track_best: bool):
        for e in range(1, n_epochs + 1):
            epoch = epoch_offset + e
            rng = np.random.default_rng([seed, _FINETUNE_STREAM, epoch])
            plan = _epoch_plan(labels_all[train_idx], cfg["augment.oversample_finetune"], rng)
            loss_sum = 0.0
            correct = 0
            seen = 0
            position = 0
            for start in range(0, len(plan) - len(plan) % batch_size, batch_size):
                batch = train_idx[plan[start : start + batch_size]]
                xs, hs = [], []
                for idx in batch:
                    _, img1 = cache.pair(int(idx))
                    if opts is not None:
                        srng = sample_rng(seed, epoch, position)
                        _, img1 = augment_pair(img1, img1, srng, opts)
                    position += 1
                    xs.append(img1)
                    if use_hog:
                        hs.append(cache.hog(int(idx)))
                x = Tensor(np.stack(xs)[:, None])
                hog = Tensor(np.stack(hs)) if use_hog else None
                y = labels_all[batch]
                logits = clf.forward(x, hog)
                loss = losses.focal_loss(logits, y, gamma=gamma, alpha=alpha)
                ng.backward(loss)
                opt.step()
                loss_sum += loss.item() * len(y)
                correct += int((logits.data.argmax(axis=1) == y).sum())
                seen += len(y)
            val_acc = np.nan
            if epoch % cfg["train.val_every"] == 0 or e == n_epochs:
                val_preds = _predict(clf, cache, list(val_idx), use_hog)
                val_acc = float((val_preds == labels_all[val_idx]).mean())
                if track_best:
                    snapshot_if_better(val_acc)
            rec = {
                "epoch": epoch,
                "phase": phase,
                "train_loss": loss_sum / max(1, seen),
                "train_acc": correct / max(1, seen),
                "val_acc": val_acc,
            }
            curves.append(rec)
            rows_csv.append([epoch, phase, f"{rec['train_loss']:.6f}", f"{rec['train_acc']:.6f}",
                             f"{rec['val_acc']:.6f}" if np.isfinite(val_acc) else ""])

    # Phase 1: frozen backbone, head only
    clf.set_backbone_trainable(False)
    opt1 = AdamW(clf.head_params, lr=lr, weight_decay=cfg["train.weight_decay"])
    run_epochs("head", cfg["train.head_epochs"], opt1, 0, track_best=False)

    # the phase-1 model is the fallback best (phase 2 may only improve on it)
    val_preds = _predict(clf, cache, list(val_idx), use_hog)
    snapshot_if_better(float((val_preds == labels_all[val_idx]).mean()))

    # Phase 2: everything trainable, backbone at a reduced rate
    clf.set_backbone_trainable(True)
    opt2 = AdamW(clf.head_params, lr=lr, weight_decay=cfg["train.weight_decay"])
    opt2.add_group(clf.backbone_params(), lr * cfg["train.backbone_lr_mult"])
    run_epochs("full", cfg["train.full_epochs"], opt2, cfg["train.head_epochs"], track_best=True)

    best_val = best["val_acc"]
    best_arrays = best["arrays"]

    curves_path = out_dir / "finetune_curves.csv"
    _write_curves(curves_path, ["epoch", "phase", "train_loss", "train_acc", "val_acc"], rows_csv)

    meta = {
        "meta.num_classes": np.array([manifest.num_classes], dtype=np.float64),
        "meta.hog_dim": np.array([hog_dim], dtype=np.float64),
        "meta.scales_used": np.array([cfg["model.scales_used"]], dtype=np.float64),
        "meta.embed_dim": np.array([cfg["model.embed_dim"]], dtype=np.float64),
        "meta.hog_hidden": np.array([cfg["model.hog_hidden"]], dtype=np.float64),
        "meta.best_val_acc": np.array([best_val], dtype=np.float64),
    }
    ckpt_path = out_dir / "ckpt_classifier.cfck"
    save_checkpoint(ckpt_path, {**best_arrays, **meta})
    return FinetuneResult(ckpt_path, curves_path, best_val, curves)


# -- evaluation -------------------------------------------------------------------


def load_classifier(ckpt_path: str | Path, cfg: RunConfig) -> FusionClassifier:
    arrays = load_checkpoint(ckpt_path)
    for key in ("meta.num_classes", "meta.hog_dim", "meta.scales_used"):
        if key not in arrays:
            raise StageError(f"{ckpt_path}: missing '{key}'; not a classifier checkpoint")
    clf = FusionClassifier(
        num_classes=int(arrays["meta.num_classes"][0]),
        cfg=cfg.encoder_config(),
        hog_dim=int(arrays["meta.hog_dim"][0]),
        embed_dim=int(arrays["meta.embed_dim"][0]),
        hog_hidden=int(arrays["meta.hog_hidden"][0]),
        scales_used=int(arrays["meta.scales_used"][0]),
        seed=cfg["train.seed"],
    )
    clf.load_arrays(arrays)
    return clf


@dataclass
class EvalResult:
    report: metrics.MetricReport
    confusion: np.ndarray
    mean_psnr_recon: float | None
    mean_psnr_1bit: float | None


def evaluate(
    manifest: Manifest,
    cfg: RunConfig,
    out_dir: str | Path,
    classifier_ckpt: str | Path,
    pretrain_ckpt: str | Path | None = None,
    split: str = "test",
) -> EvalResult:
    """Score the classifier on a split; optionally add reconstruction
    fidelity (mean PSNR) and an image gallery when a pre-training
    checkpoint is supplied."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg.write_resolved(out_dir)
    idxs = [i for i, r in enumerate(manifest.rows) if r.split == split]
    if not idxs:
        raise StageError(f"manifest has no '{split}' split")
    labels_all = manifest.labels()
    clf = load_classifier(classifier_ckpt, cfg)
    use_hog = clf.hog_dim > 0
    cache = ImageCache(manifest)
    preds = _predict(clf, cache, idxs, use_hog)
    y = labels_all[idxs]
    conf = metrics.confusion(preds, y, manifest.num_classes)
    rep = metrics.report(conf)

    (out_dir / "confusion.csv").write_text(
        metrics.confusion_csv(conf, manifest.class_names), encoding="utf-8"
    )
    (out_dir / "metrics.csv").write_text(
        metrics.report_csv(rep, manifest.class_names), encoding="utf-8"
    )
    (out_dir / "report.txt").write_text(
        metrics.report_text(rep, manifest.class_names), encoding="utf-8"
    )
    with open(out_dir / "predictions.csv", "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "label", "pred"])
        for i, p in zip(idxs, preds):
            writer.writerow([manifest.rows[i].id, int(labels_all[i]), int(p)])

    mean_recon = mean_raw = None
    if pretrain_ckpt is not None:
        net = load_reconstruction_net(pretrain_ckpt, cfg)
        psnr_recon, psnr_raw = [], []
        gallery = cfg["eval.gallery"]
        for start in range(0, len(idxs), 16):
            part = idxs[start : start + 16]
            img16 = np.stack([cache.pair(i)[0] for i in part])
            img1 = np.stack([cache.pair(i)[1] for i in part])
            recon = reconstruct_batch(net, img1)
            for j, i in enumerate(part):
                psnr_recon.append(metrics.psnr(recon[j], img16[j]))
                psnr_raw.append(metrics.psnr(img1[j], img16[j]))
                rank = start + j
                if rank < gallery:
                    sep = np.ones((img16[j].shape[0], 1), dtype=np.float32)
                    strip = np.concatenate([img1[j], sep, recon[j], sep, img16[j]], axis=1)
                    write_pgm(out_dir / f"triptych_{manifest.rows[i].id}.pgm", strip)
        mean_recon = float(np.mean(psnr_recon))
        mean_raw = float(np.mean(psnr_raw))
        (out_dir / "psnr.csv").write_text(
            "mean_psnr_reconstructed,mean_psnr_1bit\n"
            f"{_fmt_inf(mean_recon)},{_fmt_inf(mean_raw)}\n",
            encoding="utf-8",
        )
    return EvalResult(rep, conf, mean_recon, mean_raw)


def _fmt_inf(v: float) -> str:
    return "inf" if np.isinf(v) else f"{v:.4f}"


def score_predictions(manifest: Manifest, pred_rows: list[tuple[str, int]]) -> tuple[np.ndarray, metrics.MetricReport]:
    """Metrics from stored (sample id, predicted label) pairs."""
    by_id = {r.id: r.label for r in manifest.rows}
    labels, preds = [], []
    for sid, pred in pred_rows:
        if sid not in by_id:
            raise StageError(f"prediction references unknown sample id '{sid}'")
        labels.append(by_id[sid])
        preds.append(pred)
    conf = metrics.confusion(np.array(preds), np.array(labels), manifest.num_classes)
    return conf, metrics.report(conf)
