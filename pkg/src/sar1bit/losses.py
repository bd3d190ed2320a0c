"""Training objectives.

Pre-training uses a four-term compound loss: pixel reconstruction against
the full-precision image, consistency between the two decoder outputs,
cosine alignment of the two bottleneck features, and a batch-hard triplet
margin on the student features. Fine-tuning uses focal loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ndgrad as ng
from .ndgrad import Tensor

_EPS = 1e-8


@dataclass
class LossWeights:
    rec: float = 1.0
    con: float = 0.5
    align: float = 0.1
    sep: float = 0.1
    margin: float = 0.2

    def __post_init__(self):
        if min(self.rec, self.con, self.align, self.sep) < 0:
            raise ValueError("loss weights must be non-negative")
        if self.margin <= 0:
            raise ValueError("triplet margin must be positive")


def reconstruction_loss(xhat: Tensor, target: Tensor) -> Tensor:
    """Mean squared error over batch and pixels."""
    if xhat.shape != target.shape:
        raise ng.ShapeError(f"reconstruction_loss: {xhat.shape} vs {target.shape}")
    return ng.mean(ng.square(ng.sub(xhat, target)))


def consistency_loss(xhat_teacher: Tensor, xhat_student: Tensor) -> Tensor:
    """MSE between the two decoder outputs (symmetric)."""
    return reconstruction_loss(xhat_teacher, xhat_student)


def alignment_loss(f_teacher: Tensor, f_student: Tensor) -> Tensor:
    """1 - cosine similarity of per-sample flattened features, batch mean."""
    if f_teacher.shape != f_student.shape:
        raise ng.ShapeError(f"alignment_loss: {f_teacher.shape} vs {f_student.shape}")
    ft = ng.flatten(f_teacher)
    fs = ng.flatten(f_student)
    dot = ng.tsum(ng.mul(ft, fs), axes=1)
    denom = ng.add(ng.mul(ng.l2_norm(ft, axis=1), ng.l2_norm(fs, axis=1)),
                   ng.Tensor(np.full(dot.shape, _EPS, dtype=np.float32), dtype=dot.dtype))
    cos = ng.mul(dot, ng.reciprocal_pos(denom))
    one = ng.Tensor(np.ones(cos.shape), dtype=cos.dtype)
    return ng.mean(ng.sub(one, cos))


def separation_loss(
    features: Tensor, labels: np.ndarray, margin: float = 0.2, normalize: bool = False
) -> Tensor:
    """Batch-hard triplet loss on (B, F) features.

    Per anchor, the hardest positive is the farthest same-class sample
    (self excluded) and the hardest negative the nearest other-class
    sample; hinge terms are summed over anchors. Anchors with no in-batch
    positive are skipped. A single-class batch is a sampler-contract
    violation and raises.
    """
    labels = np.asarray(labels)
    feats = ng.flatten(features)
    if feats.shape[0] != len(labels):
        raise ng.ShapeError(f"separation_loss: {feats.shape[0]} features vs {len(labels)} labels")
    if len(np.unique(labels)) < 2:
        raise ValueError("separation_loss: batch contains a single class (PK sampler contract)")
    if normalize:
        norms = ng.add(ng.l2_norm(feats, axis=1, keepdims=True),
                       ng.Tensor(np.full((feats.shape[0], 1), _EPS), dtype=feats.dtype))
        feats = ng.mul(feats, ng.reciprocal_pos(norms))
    dist = ng.pairwise_distance(feats)
    dmat = dist.data
    b = len(labels)
    terms = []
    for i in range(b):
        same = labels == labels[i]
        same[i] = False
        if not same.any():
            continue
        hardest_pos = int(np.flatnonzero(same)[dmat[i, same].argmax()])
        diff = labels != labels[i]
        hardest_neg = int(np.flatnonzero(diff)[dmat[i, diff].argmin()])
        gap = ng.sub(dist[i, hardest_pos], dist[i, hardest_neg])
        terms.append(ng.relu(ng.add(gap, ng.Tensor(float(margin), dtype=gap.dtype))))
    if not terms:
        return ng.Tensor(0.0)
    total = terms[0]
    for t in terms[1:]:
        total = ng.add(total, t)
    return total


def compound_loss(l_rec: Tensor, l_con: Tensor, l_align: Tensor, l_sep: Tensor, w: LossWeights) -> Tensor:
    """Weighted sum of the four pre-training components."""
    total = ng.scalar_mul(l_rec, w.rec)
    total = ng.add(total, ng.scalar_mul(l_con, w.con))
    total = ng.add(total, ng.scalar_mul(l_align, w.align))
    total = ng.add(total, ng.scalar_mul(l_sep, w.sep))
    return total


def focal_loss(logits: Tensor, labels: np.ndarray, gamma: float = 2.0, alpha=None) -> Tensor:
    """Mean over the batch of -alpha_y * (1 - p_y)^gamma * log(p_y).

    ``alpha`` is a per-class weight vector (None = all ones). With
    gamma = 0 and unit alpha this reduces exactly to cross-entropy.
    """
    labels = np.asarray(labels, dtype=np.int64)
    b, c = logits.shape
    if labels.shape != (b,):
        raise ng.ShapeError(f"focal_loss: labels shape {labels.shape} vs batch {b}")
    if labels.min() < 0 or labels.max() >= c:
        raise ValueError(f"focal_loss: label out of range [0, {c})")
    if gamma < 0:
        raise ValueError("focal_loss: gamma must be >= 0")
    onehot = np.zeros((b, c), dtype=np.float64)
    onehot[np.arange(b), labels] = 1.0
    onehot_t = ng.Tensor(onehot, dtype=logits.dtype)

    # stable log-softmax from primitives: shift by a detached row max
    shift = ng.Tensor(logits.data.max(axis=1, keepdims=True), dtype=logits.dtype)
    z = ng.sub(logits, shift)
    lse = ng.log(ng.tsum(ng.exp(z), axes=1, keepdims=True))
    logp = ng.sub(z, lse)
    logp_y = ng.tsum(ng.mul(logp, onehot_t), axes=1)
    p_y = ng.exp(logp_y)

    one = ng.Tensor(np.ones(p_y.shape), dtype=p_y.dtype)
    eps = ng.Tensor(np.full(p_y.shape, _EPS), dtype=p_y.dtype)
    focus = ng.power_pos(ng.add(ng.sub(one, p_y), eps), float(gamma))

    if alpha is None:
        alpha_y = one
    else:
        alpha = np.asarray(alpha, dtype=np.float64)
        if alpha.shape != (c,):
            raise ng.ShapeError(f"focal_loss: alpha shape {alpha.shape} != ({c},)")
        alpha_y = ng.Tensor(alpha[labels], dtype=p_y.dtype)
    per_sample = ng.mul(alpha_y, ng.mul(focus, ng.scalar_mul(logp_y, -1.0)))
    return ng.mean(per_sample)


def inverse_frequency_alpha(labels: np.ndarray, num_classes: int) -> np.ndarray:
    """Per-class weights proportional to 1/frequency, normalized to mean 1."""
    labels = np.asarray(labels, dtype=np.int64)
    counts = np.bincount(labels, minlength=num_classes).astype(np.float64)
    counts = np.maximum(counts, 1.0)
    alpha = 1.0 / counts
    return alpha / alpha.mean()
