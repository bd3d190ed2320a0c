"""Flat key=value run configuration.

Files are UTF-8 text, one ``namespace.key = value`` per line, ``#`` starts
a comment. Every key has a registered default and type; unknown keys are
rejected. The fully resolved configuration is echoed to
``<outdir>/config.resolved`` by every pipeline stage so a run is always
reproducible from its output directory.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path


class ConfigError(ValueError):
    """Unknown key, malformed line, or unparseable value."""


def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {s!r}")


def _parse_floatpair(s: str) -> tuple[float, float]:
    parts = [p.strip() for p in s.split(",")]
    if len(parts) != 2:
        raise ConfigError(f"expected 'lo,hi' pair, got {s!r}")
    return float(parts[0]), float(parts[1])


def _parse_intlist(s: str) -> tuple[int, ...]:
    return tuple(int(p.strip()) for p in s.split(",") if p.strip())


_PARSERS = {
    "int": int,
    "float": float,
    "bool": _parse_bool,
    "str": lambda s: s.strip(),
    "floatpair": _parse_floatpair,
    "intlist": _parse_intlist,
}


@dataclass(frozen=True)
class KeySpec:
    default: str
    kind: str
    help: str


DEFAULTS: dict[str, KeySpec] = {
    # radar / scene geometry
    "radar.wavelength": KeySpec("0.055", "float", "carrier wavelength [m]"),
    "radar.chirp_rate": KeySpec("3.75e11", "float", "LFM chirp rate [Hz/s]"),
    "radar.pulse_duration": KeySpec("4e-6", "float", "transmit pulse length [s]"),
    "radar.sample_rate": KeySpec("2e6", "float", "fast-time sampling rate [Hz]"),
    "radar.prf": KeySpec("85.0", "float", "pulse repetition frequency [Hz]"),
    "radar.velocity": KeySpec("150.0", "float", "platform along-track speed [m/s]"),
    "radar.r0": KeySpec("10000.0", "float", "reference slant range [m]"),
    "radar.pixel_range": KeySpec("0", "float", "scene range pixel spacing [m]; 0 = c/(2*fs)"),
    "radar.pixel_azimuth": KeySpec("0", "float", "scene azimuth pixel spacing [m]; 0 = v/prf"),
    "radar.n_range": KeySpec("64", "int", "range samples (power of two)"),
    "radar.n_azimuth": KeySpec("64", "int", "azimuth pulses (power of two)"),
    "radar.c": KeySpec("3.0e8", "float", "propagation speed [m/s]"),
    # dataset synthesis
    "dataset.classes": KeySpec("6", "int", "number of target classes (2..10)"),
    "dataset.per_class": KeySpec("35", "int", "samples per class (budget in imbalanced mode)"),
    "dataset.size": KeySpec("64", "int", "target map side length [pixels]"),
    "dataset.imbalance": KeySpec("balanced", "str", "class-count profile: balanced | table1"),
    "dataset.train_frac": KeySpec("0.70", "float", "train fraction of each class"),
    "dataset.val_frac": KeySpec("0.15", "float", "validation fraction (test = remainder)"),
    "dataset.gt_source": KeySpec("rda", "str", "full-precision image source: rda | original"),
    "dataset.workers": KeySpec("1", "int", "parallel workers for image synthesis"),
    # model
    "model.channels": KeySpec("8,16,32,64,128", "intlist", "encoder channels, 5 increasing stages"),
    "model.embed_dim": KeySpec("128", "int", "scale-processor output width"),
    "model.hog_hidden": KeySpec("256", "int", "hidden width of the descriptor MLP"),
    "model.scales_used": KeySpec("5", "int", "deepest k encoder scales fed to the classifier (1..5)"),
    # losses
    "loss.lambda_rec": KeySpec("1.0", "float", "weight of the reconstruction term"),
    "loss.lambda_con": KeySpec("0.5", "float", "weight of the decoder-consistency term"),
    "loss.lambda_align": KeySpec("0.1", "float", "weight of the feature-alignment term"),
    "loss.lambda_sep": KeySpec("0.1", "float", "weight of the feature-separation term"),
    "loss.margin": KeySpec("0.2", "float", "triplet margin"),
    "loss.gamma": KeySpec("2.0", "float", "focal-loss focusing exponent"),
    "loss.alpha": KeySpec("inverse", "str", "focal per-class weights: inverse | uniform"),
    "loss.normalize_features": KeySpec("false", "bool", "L2-normalize features before triplet distances"),
    # augmentation
    "augment.enabled": KeySpec("true", "bool", "master switch for training-time augmentation"),
    "augment.rot90_prob": KeySpec("0.75", "float", "probability of a non-identity 90-degree rotation"),
    "augment.hflip_prob": KeySpec("0.5", "float", "horizontal flip probability"),
    "augment.vflip_prob": KeySpec("0.5", "float", "vertical flip probability"),
    "augment.speckle_prob": KeySpec("0.3", "float", "multiplicative speckle probability"),
    "augment.speckle_var": KeySpec("0.005,0.05", "floatpair", "speckle variance range"),
    "augment.gamma_prob": KeySpec("0.3", "float", "gamma-correction probability"),
    "augment.gamma_range": KeySpec("0.7,1.4", "floatpair", "gamma exponent range"),
    "augment.blur_prob": KeySpec("0.2", "float", "Gaussian blur probability"),
    "augment.blur_sigma": KeySpec("0.3,0.9", "floatpair", "blur sigma range [pixels]"),
    "augment.bc_prob": KeySpec("0.3", "float", "brightness/contrast probability"),
    "augment.brightness": KeySpec("-0.08,0.08", "floatpair", "additive brightness range"),
    "augment.contrast": KeySpec("0.85,1.15", "floatpair", "multiplicative contrast range"),
    "augment.erase_prob": KeySpec("0.5", "float", "random-erasing probability (1-bit stream only)"),
    "augment.erase_area": KeySpec("0.02,0.15", "floatpair", "erased area fraction range"),
    "augment.erase_aspect": KeySpec("0.3,3.3", "floatpair", "erased rectangle aspect range"),
    "augment.erase_fill": KeySpec("0.0", "float", "fill value for erased pixels"),
    "augment.photometric_both": KeySpec("false", "bool", "apply photometric transforms to both streams"),
    "augment.oversample_pretrain": KeySpec("800", "int", "per-class samples per pre-training epoch (0 = off)"),
    "augment.oversample_finetune": KeySpec("800", "int", "per-class samples per fine-tuning epoch (0 = off)"),
    # training
    "train.seed": KeySpec("0", "int", "master seed; all randomness derives from it"),
    "train.pretrain_epochs": KeySpec("30", "int", "pre-training epochs"),
    "train.head_epochs": KeySpec("5", "int", "fine-tuning phase-1 (head only) epochs"),
    "train.full_epochs": KeySpec("15", "int", "fine-tuning phase-2 (full network) epochs"),
    "train.pretrain_lr": KeySpec("1e-4", "float", "pre-training learning rate"),
    "train.finetune_lr": KeySpec("5e-5", "float", "fine-tuning head learning rate"),
    "train.backbone_lr_mult": KeySpec("0.1", "float", "backbone LR multiplier in phase 2"),
    "train.weight_decay": KeySpec("0.01", "float", "AdamW decoupled weight decay"),
    "train.batch_p": KeySpec("4", "int", "classes per batch (PK sampling)"),
    "train.batch_k": KeySpec("4", "int", "samples per class per batch (PK sampling)"),
    "train.val_every": KeySpec("1", "int", "validation cadence in epochs"),
    "train.selfattn_prob": KeySpec("0.5", "float",
                                   "per-batch probability of training the student path with its own "
                                   "keys/values (keeps the teacher-free deployment path trained)"),
    "train.selfattn_start": KeySpec("0.5", "float",
                                    "fraction of pre-training epochs before key/value swapping begins "
                                    "(earlier epochs always attend over the teacher)"),
    "train.init": KeySpec("pretrained", "str", "backbone init: pretrained | scratch"),
    # handcrafted descriptor stage
    "hog.source": KeySpec("reconstructed", "str", "descriptor source: reconstructed | raw1bit | off"),
    "hog.cell": KeySpec("8", "int", "cell side [pixels]"),
    "hog.bins": KeySpec("9", "int", "orientation bins over 180 degrees"),
    "hog.block": KeySpec("2", "int", "block side [cells]"),
    "hog.block_stride": KeySpec("1", "int", "block stride [cells]"),
    "hog.clip": KeySpec("0.2", "float", "L2-Hys clipping threshold"),
    # evaluation
    "eval.gallery": KeySpec("8", "int", "reconstruction triptychs written by eval"),
}


class RunConfig:
    """Typed view over the flat key space."""

    def __init__(self, overrides: dict[str, str] | None = None):
        self._values: dict[str, object] = {}
        for key, spec in DEFAULTS.items():
            self._values[key] = _PARSERS[spec.kind](spec.default)
        if overrides:
            for key, raw in overrides.items():
                self.set(key, raw)

    def set(self, key: str, raw: str):
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key '{key}'")
        spec = DEFAULTS[key]
        try:
            self._values[key] = _PARSERS[spec.kind](raw)
        except ConfigError:
            raise
        except (TypeError, ValueError) as e:
            raise ConfigError(f"bad value for '{key}': {raw!r} ({e})") from None

    def __getitem__(self, key: str):
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key '{key}'")
        return self._values[key]

    def items(self):
        return self._values.items()

    # -- file round-trip -------------------------------------------------------

    @classmethod
    def from_file(cls, path: str | Path | None, overrides: dict[str, str] | None = None) -> "RunConfig":
        cfg = cls()
        if path is not None:
            text = Path(path).read_text(encoding="utf-8")
            for lineno, line in enumerate(text.splitlines(), start=1):
                stripped = line.split("#", 1)[0].strip()
                if not stripped:
                    continue
                if "=" not in stripped:
                    raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
                key, raw = stripped.split("=", 1)
                cfg.set(key.strip(), raw.strip())
        for key, raw in (overrides or {}).items():
            cfg.set(key, raw)
        return cfg

    def resolved_text(self) -> str:
        lines = ["# resolved configuration (all keys, effective values)"]
        for key in sorted(DEFAULTS):
            v = self._values[key]
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{key} = {v}")
        return "\n".join(lines) + "\n"

    def write_resolved(self, out_dir: str | Path):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.resolved").write_text(self.resolved_text(), encoding="utf-8")

    # -- structured views --------------------------------------------------------

    def radar_params(self):
        from .sarsim import RadarParams

        return RadarParams(
            wavelength=self["radar.wavelength"],
            chirp_rate=self["radar.chirp_rate"],
            pulse_duration=self["radar.pulse_duration"],
            sample_rate=self["radar.sample_rate"],
            prf=self["radar.prf"],
            velocity=self["radar.velocity"],
            r0=self["radar.r0"],
            pixel_range=self["radar.pixel_range"],
            pixel_azimuth=self["radar.pixel_azimuth"],
            n_range=self["radar.n_range"],
            n_azimuth=self["radar.n_azimuth"],
            c=self["radar.c"],
        )

    def hog_config(self):
        from .features import HogConfig

        return HogConfig(
            cell=self["hog.cell"],
            bins=self["hog.bins"],
            block=self["hog.block"],
            block_stride=self["hog.block_stride"],
            clip=self["hog.clip"],
        )

    def encoder_config(self):
        from .model import EncoderConfig

        return EncoderConfig(channels=self["model.channels"])

    def loss_weights(self):
        from .losses import LossWeights

        return LossWeights(
            rec=self["loss.lambda_rec"],
            con=self["loss.lambda_con"],
            align=self["loss.lambda_align"],
            sep=self["loss.lambda_sep"],
            margin=self["loss.margin"],
        )
