"""Dataset synthesis, augmentation, sampling, and the training stages."""

from .augment import IDENTITY, AugmentOptions, augment_pair, erase_rect, gaussian_blur, rot90, sample_rng
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .dataset import (
    MANIFEST_HEADER,
    TABLE1_RATIOS,
    Manifest,
    SamplePair,
    class_counts,
    stratified_split,
    synth_dataset,
)
from .pgm import read_pgm, write_pgm
from .sampling import oversample_plan, pk_batches
from .train import (
    EvalResult,
    FinetuneResult,
    ImageCache,
    PretrainResult,
    StageError,
    evaluate,
    extract_hog_stage,
    finetune,
    load_classifier,
    load_reconstruction_net,
    pretrain,
    reconstruct_batch,
    score_predictions,
)

__all__ = [
    "AugmentOptions",
    "CheckpointError",
    "EvalResult",
    "FinetuneResult",
    "IDENTITY",
    "ImageCache",
    "MANIFEST_HEADER",
    "Manifest",
    "PretrainResult",
    "SamplePair",
    "StageError",
    "TABLE1_RATIOS",
    "augment_pair",
    "class_counts",
    "erase_rect",
    "evaluate",
    "extract_hog_stage",
    "finetune",
    "gaussian_blur",
    "load_checkpoint",
    "load_classifier",
    "load_reconstruction_net",
    "oversample_plan",
    "pk_batches",
    "pretrain",
    "read_pgm",
    "reconstruct_batch",
    "rot90",
    "sample_rng",
    "save_checkpoint",
    "score_predictions",
    "stratified_split",
    "synth_dataset",
    "write_pgm",
]
