"""Networks: dual-branch reconstruction model and multi-scale fusion classifier.

The reconstruction model pairs two architecturally identical but
parameter-independent encoders (student on sign-quantized input, teacher
on full-precision input) around a single-head attention block at the
bottleneck, with one decoder per branch fed by that branch's skip
connections. The classifier reuses the student encoder as a backbone,
pools each of its five feature scales into a shared embedding space,
optionally fuses a handcrafted-descriptor branch, and ends in a small
classification head.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import ndgrad as ng
from .ndgrad import Tensor


@dataclass
class EncoderConfig:
    channels: tuple[int, ...] = (8, 16, 32, 64, 128)

    def __post_init__(self):
        self.channels = tuple(int(c) for c in self.channels)
        if len(self.channels) != 5:
            raise ValueError(f"encoder needs exactly 5 stages, got {len(self.channels)}")
        if any(b <= a for a, b in zip(self.channels, self.channels[1:])):
            raise ValueError(f"channels must strictly increase, got {self.channels}")


def _conv_w(rng, cout, cin, k):
    return ng.kaiming_uniform((cout, cin, k, k), fan_in=cin * k * k, rng=rng)


def _convT_w(rng, cin, cout, k, stride):
    fan = max(1, cin * k * k // (stride * stride))
    return ng.kaiming_uniform((cin, cout, k, k), fan_in=fan, rng=rng)


def _linear_w(rng, fin, fout):
    return ng.kaiming_uniform((fin, fout), fan_in=fin, rng=rng)


def _bias(n):
    return ng.zeros((n,))


def _conv(x, w, b, stride, pad):
    y = ng.conv2d(x, w, stride=stride, pad=pad)
    return ng.add(y, ng.reshape(b, (1, b.shape[0], 1, 1)))


def _convT(x, w, b, stride, pad):
    y = ng.conv2d_transpose(x, w, stride=stride, pad=pad)
    return ng.add(y, ng.reshape(b, (1, b.shape[0], 1, 1)))


def _linear(x, w, b):
    return ng.add(ng.matmul(x, w), ng.reshape(b, (1, b.shape[0])))


def _center(image: Tensor) -> Tensor:
    """Shift [0,1] images to zero mean before the first conv.

    Non-negative inputs let a single bad update silence a relu unit on
    the whole data manifold at once; centering makes that cascade rare.
    """
    return ng.add(image, ng.Tensor(np.full((1,) * len(image.shape), -0.5, dtype=np.float32),
                                   dtype=image.dtype))


class Encoder:
    """Five stride-2 3x3 conv stages producing a feature pyramid s0..s4."""

    def __init__(self, cfg: EncoderConfig, rng: np.random.Generator, in_channels: int = 1):
        self.cfg = cfg
        self.params: dict[str, Tensor] = {}
        cin = in_channels
        for i, cout in enumerate(cfg.channels):
            self.params[f"stage{i}.w"] = _conv_w(rng, cout, cin, 3)
            self.params[f"stage{i}.b"] = _bias(cout)
            cin = cout

    def forward(self, x: Tensor) -> list[Tensor]:
        b, c, h, w = x.shape
        if h % 32 or w % 32:
            raise ng.ShapeError(f"encoder input spatial dims must divide 32, got {h}x{w}")
        feats = []
        cur = x
        for i in range(5):
            cur = ng.relu(_conv(cur, self.params[f"stage{i}.w"], self.params[f"stage{i}.b"], stride=2, pad=1))
            feats.append(cur)
        return feats


class CrossAttention:
    """Single-head scaled dot-product attention over bottleneck positions.

    The query source is flattened to h*w tokens of dimension C; keys and
    values come from the (possibly different) key/value source. The output
    projection result is added back onto the query source (residual).
    """

    def __init__(self, channels: int, rng: np.random.Generator):
        self.channels = channels
        self.params = {
            "wq": _linear_w(rng, channels, channels),
            "wk": _linear_w(rng, channels, channels),
            "wv": _linear_w(rng, channels, channels),
            "wo": _linear_w(rng, channels, channels),
        }

    def forward(self, query_src: Tensor, kv_src: Tensor) -> Tensor:
        if query_src.shape != kv_src.shape:
            raise ng.ShapeError(f"attention shape mismatch {query_src.shape} vs {kv_src.shape}")
        b, c, h, w = query_src.shape
        if c != self.channels:
            raise ng.ShapeError(f"attention built for {self.channels} channels, got {c}")
        fq = ng.reshape(query_src, (b, c, h * w))  # tokens as columns
        fk = ng.reshape(kv_src, (b, c, h * w))
        q = ng.matmul(self.params["wq"], fq)
        k = ng.matmul(self.params["wk"], fk)
        v = ng.matmul(self.params["wv"], fk)
        scores = ng.scalar_mul(ng.matmul(q, k, transpose_a=True), 1.0 / math.sqrt(c))
        attn = ng.softmax(scores)  # (b, tokens_q, tokens_kv), rows sum to 1
        mixed = ng.matmul(v, attn, transpose_b=True)  # (b, c, tokens_q)
        out = ng.matmul(self.params["wo"], mixed)
        return ng.add(query_src, ng.reshape(out, (b, c, h, w)))


class Decoder:
    """Five 2x upsampling stages mirroring the encoder, with skip concats.

    Each stage is a stride-2 transposed conv followed by channel
    concatenation with the matching encoder feature and a 3x3 conv. The
    final stage has no encoder feature at input resolution, so it
    concatenates the branch's network input instead: without that
    full-resolution path the reconstruction cannot out-resolve its own
    first downsample. The head conv maps to one channel; sigmoid bounds
    the output to (0, 1).
    """

    def __init__(self, cfg: EncoderConfig, rng: np.random.Generator, in_channels: int = 1):
        enc = cfg.channels
        self.out_channels = [enc[3], enc[2], enc[1], enc[0], enc[0]]
        self.params: dict[str, Tensor] = {}
        cin = enc[4]
        for i, cout in enumerate(self.out_channels):
            self.params[f"up{i}.w"] = _convT_w(rng, cin, cout, 2, 2)
            self.params[f"up{i}.b"] = _bias(cout)
            skip_ch = enc[3 - i] if i < 4 else in_channels
            self.params[f"conv{i}.w"] = _conv_w(rng, cout, cout + skip_ch, 3)
            self.params[f"conv{i}.b"] = _bias(cout)
            cin = cout
        self.params["out.w"] = _conv_w(rng, 1, self.out_channels[-1], 3)
        # start the sigmoid head near the dark-background prior; a zero init
        # makes the first epochs one huge "darken everything" gradient that
        # reliably kills the input pathways (constant-output collapse)
        self.params["out.b"] = Tensor(np.full(1, -2.2, dtype=np.float32), requires_grad=True)

    def forward(self, bottleneck: Tensor, skips: list[Tensor], image: Tensor) -> Tensor:
        if len(skips) != 4:
            raise ng.ShapeError(f"decoder expects 4 skip features, got {len(skips)}")
        cur = bottleneck
        for i in range(5):
            cur = _convT(cur, self.params[f"up{i}.w"], self.params[f"up{i}.b"], stride=2, pad=0)
            cur = ng.concat([cur, skips[3 - i] if i < 4 else image], axis=1)
            cur = ng.relu(_conv(cur, self.params[f"conv{i}.w"], self.params[f"conv{i}.b"], stride=1, pad=1))
        head = _conv(cur, self.params["out.w"], self.params["out.b"], stride=1, pad=1)
        return ng.sigmoid(head)


class ReconstructionNet:
    """Dual-branch reconstruction model used for pre-training.

    The student decoder receives the student bottleneck attended over the
    teacher bottleneck (query = student, key/value = teacher). The teacher
    decoder receives the teacher bottleneck attended over itself with the
    same projection weights. Without a teacher input (deployment), the
    student falls back to attending over its own bottleneck.
    """

    def __init__(self, cfg: EncoderConfig | None = None, seed: int = 0):
        cfg = cfg or EncoderConfig()
        self.cfg = cfg
        rng = np.random.default_rng([seed, 0x5EC0])
        self.student_enc = Encoder(cfg, rng)
        self.teacher_enc = Encoder(cfg, rng)
        self.attn = CrossAttention(cfg.channels[-1], rng)
        self.student_dec = Decoder(cfg, rng)
        self.teacher_dec = Decoder(cfg, rng)

    def params(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for name, t in self.student_enc.params.items():
            out[f"student.enc.{name}"] = t
        for name, t in self.teacher_enc.params.items():
            out[f"teacher.enc.{name}"] = t
        for name, t in self.attn.params.items():
            out[f"attn.{name}"] = t
        for name, t in self.student_dec.params.items():
            out[f"student.dec.{name}"] = t
        for name, t in self.teacher_dec.params.items():
            out[f"teacher.dec.{name}"] = t
        return out

    def load_arrays(self, arrays: dict[str, np.ndarray]):
        params = self.params()
        for name, p in params.items():
            if name not in arrays:
                raise KeyError(f"checkpoint missing parameter '{name}'")
            if arrays[name].shape != p.data.shape:
                raise ValueError(f"checkpoint shape mismatch for '{name}'")
            p.data = arrays[name].astype(p.data.dtype, copy=True)

    def forward(self, x_full: Tensor, x_1bit: Tensor, student_kv: str = "teacher"):
        """Returns (teacher reconstruction, student reconstruction, teacher
        bottleneck, student bottleneck).

        ``student_kv`` chooses the key/value source of the student-side
        attention: ``teacher`` (default) or ``student``. The training loop
        occasionally swaps to ``student`` so the teacher-free deployment
        path stays on the training distribution.
        """
        if x_full.shape != x_1bit.shape:
            raise ng.ShapeError(f"branch inputs differ: {x_full.shape} vs {x_1bit.shape}")
        if student_kv not in ("teacher", "student"):
            raise ValueError(f"student_kv must be 'teacher' or 'student', got {student_kv!r}")
        s_feats = self.student_enc.forward(_center(x_1bit))
        t_feats = self.teacher_enc.forward(_center(x_full))
        f_student = s_feats[4]
        f_teacher = t_feats[4]
        kv = f_teacher if student_kv == "teacher" else f_student
        fused_student = self.attn.forward(f_student, kv)
        fused_teacher = self.attn.forward(f_teacher, f_teacher)
        xhat_student = self.student_dec.forward(fused_student, s_feats[:4], x_1bit)
        xhat_teacher = self.teacher_dec.forward(fused_teacher, t_feats[:4], x_full)
        return xhat_teacher, xhat_student, f_teacher, f_student

    def reconstruct(self, x_1bit: Tensor) -> Tensor:
        """Teacher-free inference: student branch with self-attention."""
        s_feats = self.student_enc.forward(_center(x_1bit))
        fused = self.attn.forward(s_feats[4], s_feats[4])
        return self.student_dec.forward(fused, s_feats[:4], x_1bit)


class FusionClassifier:
    """Multi-scale feature fusion classifier on top of the student encoder.

    Each used encoder scale passes through its own processor (global
    average pool + linear to a shared embedding width); processed scales
    are averaged element-wise. An optional descriptor branch (2-layer MLP)
    is concatenated before the fusion block and classification head.
    """

    def __init__(
        self,
        num_classes: int,
        cfg: EncoderConfig | None = None,
        hog_dim: int = 0,
        embed_dim: int = 128,
        hog_hidden: int = 256,
        scales_used: int = 5,
        seed: int = 0,
    ):
        if not 1 <= scales_used <= 5:
            raise ValueError(f"scales_used must be in 1..5, got {scales_used}")
        cfg = cfg or EncoderConfig()
        self.cfg = cfg
        self.num_classes = int(num_classes)
        self.hog_dim = int(hog_dim)
        self.embed_dim = int(embed_dim)
        self.scales_used = int(scales_used)
        rng = np.random.default_rng([seed, 0xC1A5])
        self.backbone = Encoder(cfg, rng)
        self.scale_indices = list(range(5 - scales_used, 5))
        self.head_params: dict[str, Tensor] = {}
        for i in self.scale_indices:
            self.head_params[f"scale{i}.w"] = _linear_w(rng, cfg.channels[i], embed_dim)
            self.head_params[f"scale{i}.b"] = _bias(embed_dim)
        if hog_dim:
            self.head_params["hog.fc1.w"] = _linear_w(rng, hog_dim, hog_hidden)
            self.head_params["hog.fc1.b"] = _bias(hog_hidden)
            self.head_params["hog.fc2.w"] = _linear_w(rng, hog_hidden, embed_dim)
            self.head_params["hog.fc2.b"] = _bias(embed_dim)
        fuse_in = embed_dim * 2 if hog_dim else embed_dim
        self.head_params["fuse.w"] = _linear_w(rng, fuse_in, embed_dim)
        self.head_params["fuse.b"] = _bias(embed_dim)
        self.head_params["head.w"] = _linear_w(rng, embed_dim, num_classes)
        self.head_params["head.b"] = _bias(num_classes)

    # -- parameter bookkeeping -------------------------------------------------

    def backbone_params(self) -> dict[str, Tensor]:
        return {f"backbone.{n}": t for n, t in self.backbone.params.items()}

    def params(self) -> dict[str, Tensor]:
        out = self.backbone_params()
        out.update(self.head_params)
        return out

    def load_backbone_from_pretrain(self, arrays: dict[str, np.ndarray]):
        """Copy student-encoder weights out of a pre-training checkpoint."""
        for name, p in self.backbone.params.items():
            key = f"student.enc.{name}"
            if key not in arrays:
                raise KeyError(f"pre-training checkpoint missing '{key}'")
            if arrays[key].shape != p.data.shape:
                raise ValueError(f"backbone shape mismatch for '{key}'")
            p.data = arrays[key].astype(p.data.dtype, copy=True)

    def load_arrays(self, arrays: dict[str, np.ndarray]):
        for name, p in self.params().items():
            if name not in arrays:
                raise KeyError(f"checkpoint missing parameter '{name}'")
            p.data = arrays[name].astype(p.data.dtype, copy=True)

    def set_backbone_trainable(self, trainable: bool):
        for t in self.backbone.params.values():
            t.requires_grad = trainable
            if not trainable:
                t.grad = None

    # -- forward ----------------------------------------------------------------

    def forward(self, x_1bit: Tensor, hog: Tensor | None = None) -> Tensor:
        feats = self.backbone.forward(_center(x_1bit))
        pooled = None
        for i in self.scale_indices:
            v = _linear(ng.global_avg_pool(feats[i]), self.head_params[f"scale{i}.w"], self.head_params[f"scale{i}.b"])
            pooled = v if pooled is None else ng.add(pooled, v)
        v_cnn = ng.scalar_mul(pooled, 1.0 / len(self.scale_indices))
        if self.hog_dim:
            if hog is None:
                raise ng.ShapeError("classifier was built with a descriptor branch but got no descriptor")
            if hog.shape[-1] != self.hog_dim:
                raise ng.ShapeError(f"descriptor length {hog.shape[-1]} != expected {self.hog_dim}")
            h1 = ng.relu(_linear(hog, self.head_params["hog.fc1.w"], self.head_params["hog.fc1.b"]))
            v_hog = _linear(h1, self.head_params["hog.fc2.w"], self.head_params["hog.fc2.b"])
            fused = ng.concat([v_cnn, v_hog], axis=1)
        else:
            fused = v_cnn
        z = ng.relu(_linear(fused, self.head_params["fuse.w"], self.head_params["fuse.b"]))
        return _linear(z, self.head_params["head.w"], self.head_params["head.b"])
