"""Class-aware oversampling and P-classes-x-K-samples batch construction."""

from __future__ import annotations

import numpy as np


def oversample_plan(
    labels: np.ndarray, target_per_class: int, rng: np.random.Generator,
    allow_undersample: bool = False,
) -> np.ndarray:
    """Epoch index sequence with exactly ``target_per_class`` entries per class.

    Each class's indices repeat ``target // n`` times plus a shuffled
    remainder drawn without replacement; the full sequence is shuffled.
    """
    labels = np.asarray(labels, dtype=np.int64)
    plan: list[np.ndarray] = []
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        n = len(idx)
        if n == 0:
            raise ValueError(f"class {cls} has no samples")
        if target_per_class < n and not allow_undersample:
            raise ValueError(
                f"target {target_per_class} below class {cls} count {n}; "
                "pass allow_undersample to subsample"
            )
        reps, rem = divmod(target_per_class, n)
        parts = [np.tile(idx, reps)] if reps else []
        if rem:
            parts.append(rng.permutation(idx)[:rem])
        plan.append(np.concatenate(parts) if parts else np.empty(0, dtype=np.int64))
    seq = np.concatenate(plan)
    rng.shuffle(seq)
    return seq


def pk_batches(
    plan: np.ndarray, labels: np.ndarray, p: int, k: int, rng: np.random.Generator
) -> list[np.ndarray]:
    """Split an epoch plan into batches of P distinct classes x K samples.

    Classes with the most remaining entries are drained first so coverage
    stays high; the final partial remainder is dropped. Every batch
    satisfies the triplet-mining precondition (>= 2 classes when P >= 2).
    """
    plan = np.asarray(plan, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if p < 2:
        raise ValueError("need at least 2 classes per batch for triplet mining")
    pools: dict[int, list[int]] = {}
    for i in plan:
        pools.setdefault(int(labels[i]), []).append(int(i))
    if len(pools) < p:
        raise ValueError(f"only {len(pools)} classes available, need P={p}")
    for cls in pools:
        order = rng.permutation(len(pools[cls]))
        pools[cls] = [pools[cls][j] for j in order]

    batches: list[np.ndarray] = []
    while True:
        eligible = [c for c, pool in pools.items() if len(pool) >= k]
        if len(eligible) < p:
            break
        eligible.sort(key=lambda c: (-len(pools[c]), c))
        chosen = eligible[:p]
        batch = []
        for c in chosen:
            batch.extend(pools[c][-k:])
            del pools[c][-k:]
        batches.append(np.array(batch, dtype=np.int64))
    order = rng.permutation(len(batches))
    return [batches[i] for i in order]
