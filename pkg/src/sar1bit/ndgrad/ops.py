"""Differentiable primitives.

Every function here computes a forward value with numpy, validates that
the output is finite, and (when gradients are enabled and some input
requires them) records a backward rule on the active tape. Backward rules
receive the output gradient and return one gradient array per input, or
None for inputs that need none.
"""

from __future__ import annotations

import numpy as np

from .tensor import (
    NumericError,
    ShapeError,
    Tensor,
    active_tape,
    grad_enabled,
)

_TINY = 1e-12


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)


def _result(op: str, data: np.ndarray, inputs: tuple[Tensor, ...], backward_fn):
    if not np.all(np.isfinite(data)):
        raise NumericError(f"{op}: non-finite output (numeric overflow)")
    track = grad_enabled() and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=track, dtype=data.dtype)
    if track:
        tape = active_tape()
        tape.record(op, out, inputs, backward_fn)
        out.node = tape
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum gradient over axes that were broadcast in the forward pass."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _check_broadcastable(op: str, a: Tensor, b: Tensor):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


# -- arithmetic ---------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcastable("add", a, b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _result("add", a.data + b.data, (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcastable("sub", a, b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _result("sub", a.data - b.data, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcastable("mul", a, b)

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _result("mul", a.data * b.data, (a, b), bw)


def scalar_mul(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)

    def bw(g):
        return (g * c,)

    return _result("scalar_mul", a.data * c, (a,), bw)


def matmul(a, b, transpose_a: bool = False, transpose_b: bool = False) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(f"matmul: operands must be >=2-D, got {a.shape} @ {b.shape}")
    ae = a.data.swapaxes(-1, -2) if transpose_a else a.data
    be = b.data.swapaxes(-1, -2) if transpose_b else b.data
    if ae.shape[-1] != be.shape[-2]:
        raise ShapeError(
            f"matmul: inner dims disagree, {ae.shape[-1]} vs {be.shape[-2]} "
            f"(shapes {a.shape} @ {b.shape})"
        )

    def bw(g):
        da_e = np.matmul(g, be.swapaxes(-1, -2))
        db_e = np.matmul(ae.swapaxes(-1, -2), g)
        da = da_e.swapaxes(-1, -2) if transpose_a else da_e
        db = db_e.swapaxes(-1, -2) if transpose_b else db_e
        return _unbroadcast(da, a.shape), _unbroadcast(db, b.shape)

    return _result("matmul", np.matmul(ae, be), (a, b), bw)


# -- convolution --------------------------------------------------------------


def _conv_out_size(n: int, k: int, stride: int, pad: int) -> int:
    return (n + 2 * pad - k) // stride + 1


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad: int) -> np.ndarray:
    """(B,C,H,W) -> (B, C*kh*kw, Ho*Wo) patch matrix."""
    b, c, h, w = x.shape
    ho = _conv_out_size(h, kh, stride, pad)
    wo = _conv_out_size(w, kw, stride, pad)
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    s0, s1, s2, s3 = x.strides
    win = np.lib.stride_tricks.as_strided(
        x,
        shape=(b, c, kh, kw, ho, wo),
        strides=(s0, s1, s2, s3, s2 * stride, s3 * stride),
        writeable=False,
    )
    return win.reshape(b, c * kh * kw, ho * wo)


def _col2im(cols: np.ndarray, x_shape: tuple[int, ...], kh: int, kw: int, stride: int, pad: int) -> np.ndarray:
    """Scatter-add inverse of :func:`_im2col`."""
    b, c, h, w = x_shape
    ho = _conv_out_size(h, kh, stride, pad)
    wo = _conv_out_size(w, kw, stride, pad)
    xp = np.zeros((b, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    cols6 = cols.reshape(b, c, kh, kw, ho, wo)
    for i in range(kh):
        for j in range(kw):
            xp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += cols6[:, :, i, j]
    if pad:
        return xp[:, :, pad : pad + h, pad : pad + w]
    return xp


def conv2d(x, w, stride: int = 1, pad: int = 0) -> Tensor:
    """2-D convolution (cross-correlation): x (B,Cin,H,W), w (Cout,Cin,kh,kw)."""
    x, w = as_tensor(x), as_tensor(w)
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeError(f"conv2d: need 4-D input and weight, got {x.shape}, {w.shape}")
    b, cin, h, hw = x.shape
    cout, cin_w, kh, kw = w.shape
    if cin != cin_w:
        raise ShapeError(f"conv2d: input channels {cin} != weight channels {cin_w}")
    ho = _conv_out_size(h, kh, stride, pad)
    wo = _conv_out_size(hw, kw, stride, pad)
    if ho <= 0 or wo <= 0:
        raise ShapeError(f"conv2d: kernel {kh}x{kw} too large for input {h}x{hw} at pad {pad}")
    cols = _im2col(x.data, kh, kw, stride, pad)
    w2 = w.data.reshape(cout, -1)
    out = np.matmul(w2, cols).reshape(b, cout, ho, wo)

    def bw(g):
        g2 = g.reshape(b, cout, ho * wo)
        dw = np.tensordot(g2, cols, axes=([0, 2], [0, 2])).reshape(w.shape)
        dcols = np.matmul(w2.T, g2)
        dx = _col2im(dcols, x.shape, kh, kw, stride, pad)
        return dx, dw

    return _result("conv2d", out, (x, w), bw)


def conv2d_transpose(x, w, stride: int = 1, pad: int = 0) -> Tensor:
    """Transposed 2-D convolution: x (B,Cin,H,W), w (Cin,Cout,kh,kw).

    Output spatial size is (H-1)*stride - 2*pad + kh.
    """
    x, w = as_tensor(x), as_tensor(w)
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeError(f"conv2d_transpose: need 4-D input and weight, got {x.shape}, {w.shape}")
    b, cin, h, hw = x.shape
    cin_w, cout, kh, kw = w.shape
    if cin != cin_w:
        raise ShapeError(f"conv2d_transpose: input channels {cin} != weight channels {cin_w}")
    ho = (h - 1) * stride - 2 * pad + kh
    wo = (hw - 1) * stride - 2 * pad + kw
    if ho <= 0 or wo <= 0:
        raise ShapeError(f"conv2d_transpose: degenerate output {ho}x{wo}")
    x2 = x.data.reshape(b, cin, h * hw)
    w2 = w.data.reshape(cin, cout * kh * kw)
    cols = np.matmul(w2.T, x2)  # (B, Cout*kh*kw, H*W)
    out = _col2im(cols, (b, cout, ho, wo), kh, kw, stride, pad)

    def bw(g):
        gcols = _im2col(g, kh, kw, stride, pad)  # (B, Cout*kh*kw, H*W)
        dx = np.matmul(w2, gcols).reshape(x.shape)
        dw = np.tensordot(x2, gcols, axes=([0, 2], [0, 2])).reshape(w.shape)
        return dx, dw

    return _result("conv2d_transpose", out, (x, w), bw)


def avg_pool(x, k: int, stride: int | None = None) -> Tensor:
    """Average pooling with window k and given stride (default k)."""
    x = as_tensor(x)
    if x.data.ndim != 4:
        raise ShapeError(f"avg_pool: need 4-D input, got {x.shape}")
    stride = k if stride is None else stride
    b, c, h, w = x.shape
    ho = _conv_out_size(h, k, stride, 0)
    wo = _conv_out_size(w, k, stride, 0)
    if ho <= 0 or wo <= 0:
        raise ShapeError(f"avg_pool: window {k} too large for input {h}x{w}")
    cols = _im2col(x.data, k, k, stride, 0).reshape(b, c, k * k, ho * wo)
    out = cols.mean(axis=2).reshape(b, c, ho, wo)

    def bw(g):
        gc = np.broadcast_to(
            g.reshape(b, c, 1, ho * wo) / (k * k), (b, c, k * k, ho * wo)
        ).reshape(b, c * k * k, ho * wo)
        return (_col2im(gc, x.shape, k, k, stride, 0),)

    return _result("avg_pool", out, (x,), bw)


def global_avg_pool(x) -> Tensor:
    """(B,C,H,W) -> (B,C) spatial mean."""
    x = as_tensor(x)
    if x.data.ndim != 4:
        raise ShapeError(f"global_avg_pool: need 4-D input, got {x.shape}")
    b, c, h, w = x.shape
    out = x.data.mean(axis=(2, 3))

    def bw(g):
        return (np.broadcast_to(g[:, :, None, None] / (h * w), x.shape).astype(g.dtype),)

    return _result("global_avg_pool", out, (x,), bw)


# -- activations --------------------------------------------------------------


def relu(x) -> Tensor:
    x = as_tensor(x)

    def bw(g):
        return (g * (x.data > 0),)

    return _result("relu", np.maximum(x.data, 0), (x,), bw)


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    d = x.data
    out = np.empty_like(d)
    pos = d >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    ex = np.exp(d[~pos])
    out[~pos] = ex / (1.0 + ex)

    def bw(g):
        return (g * out * (1.0 - out),)

    return _result("sigmoid", out, (x,), bw)


def softmax(x) -> Tensor:
    """Softmax over the last axis."""
    x = as_tensor(x)
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        return (out * (g - dot),)

    return _result("softmax", out, (x,), bw)


def exp(x) -> Tensor:
    x = as_tensor(x)
    out = np.exp(x.data)

    def bw(g):
        return (g * out,)

    return _result("exp", out, (x,), bw)


def log(x) -> Tensor:
    x = as_tensor(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(x.data)

    def bw(g):
        return (g / np.maximum(x.data, _TINY),)

    return _result("log", out, (x,), bw)


def square(x) -> Tensor:
    x = as_tensor(x)

    def bw(g):
        return (g * 2.0 * x.data,)

    return _result("square", x.data * x.data, (x,), bw)


def sqrt(x) -> Tensor:
    x = as_tensor(x)
    with np.errstate(invalid="ignore"):
        out = np.sqrt(x.data)

    def bw(g):
        return (g * 0.5 / np.maximum(out, _TINY),)

    return _result("sqrt", out, (x,), bw)


# -- shape manipulation -------------------------------------------------------


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {x.shape} as {tuple(shape)}") from None

    def bw(g):
        return (g.reshape(x.shape),)

    return _result("reshape", out, (x,), bw)


def flatten(x) -> Tensor:
    """Collapse all axes after the first (batch) axis."""
    x = as_tensor(x)
    b = x.shape[0] if x.data.ndim > 0 else 1
    return reshape(x, (b, -1))


def concat(tensors, axis: int = 1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise ShapeError("concat: empty input list")
    for t in ts[1:]:
        if t.data.ndim != ts[0].data.ndim:
            raise ShapeError(f"concat: rank mismatch {ts[0].shape} vs {t.shape}")
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: shapes {[t.shape for t in ts]} on axis {axis}") from None
    sizes = [t.shape[axis] for t in ts]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        sl = [slice(None)] * g.ndim
        grads = []
        for i in range(len(ts)):
            sl[axis] = slice(offsets[i], offsets[i + 1])
            grads.append(g[tuple(sl)])
        return tuple(grads)

    return _result("concat", out, tuple(ts), bw)


def slice_(x, index) -> Tensor:
    """Basic indexing (ints, slices, tuples thereof) with scatter backward."""
    x = as_tensor(x)
    out = np.asarray(x.data[index])

    def bw(g):
        dx = np.zeros_like(x.data)
        np.add.at(dx, index, g)
        return (dx,)

    return _result("slice", out.copy(), (x,), bw)


# -- reductions ---------------------------------------------------------------


def _norm_axes(axes, ndim):
    if axes is None:
        return tuple(range(ndim))
    if isinstance(axes, int):
        axes = (axes,)
    return tuple(a % ndim for a in axes)


def tsum(x, axes=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    ax = _norm_axes(axes, x.data.ndim)
    out = x.data.sum(axis=ax, keepdims=keepdims)

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, ax)
        return (np.broadcast_to(g, x.shape).astype(g.dtype),)

    return _result("sum", np.asarray(out), (x,), bw)


def mean(x, axes=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    ax = _norm_axes(axes, x.data.ndim)
    count = int(np.prod([x.shape[a] for a in ax])) if x.data.ndim else 1
    out = x.data.mean(axis=ax, keepdims=keepdims)

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, ax)
        return (np.broadcast_to(g / count, x.shape).astype(g.dtype),)

    return _result("mean", np.asarray(out), (x,), bw)


def l2_norm(x, axis: int = -1, keepdims: bool = False) -> Tensor:
    """Euclidean norm over one axis."""
    x = as_tensor(x)
    out = np.sqrt((x.data * x.data).sum(axis=axis, keepdims=keepdims))

    def bw(g):
        n = out if keepdims else np.expand_dims(out, axis)
        ge = g if keepdims else np.expand_dims(g, axis)
        return (ge * x.data / np.maximum(n, _TINY),)

    return _result("l2_norm", np.asarray(out), (x,), bw)


def pairwise_distance(x) -> Tensor:
    """All-pairs Euclidean distances of row vectors: (B,F) -> (B,B)."""
    x = as_tensor(x)
    if x.data.ndim != 2:
        raise ShapeError(f"pairwise_distance: need 2-D input, got {x.shape}")
    diff = x.data[:, None, :] - x.data[None, :, :]
    d = np.sqrt((diff * diff).sum(axis=-1))

    def bw(g):
        w = (g + g.T) / np.maximum(d, _TINY)
        np.fill_diagonal(w, 0.0)
        w[d <= _TINY] = 0.0
        dx = w.sum(axis=1)[:, None] * x.data - w @ x.data
        return (dx.astype(x.data.dtype),)

    return _result("pairwise_distance", d, (x,), bw)


# -- composites built only from the primitives above --------------------------


def reciprocal_pos(x) -> Tensor:
    """1/x for strictly positive x, composed as exp(-log(x))."""
    return exp(scalar_mul(log(x), -1.0))


def power_pos(x, p: float) -> Tensor:
    """x**p for strictly positive x, composed as exp(p*log(x))."""
    return exp(scalar_mul(log(x), float(p)))


# operator sugar on Tensor ----------------------------------------------------

Tensor.__add__ = lambda self, other: add(self, other)
Tensor.__radd__ = lambda self, other: add(other, self)
Tensor.__sub__ = lambda self, other: sub(self, other)
Tensor.__rsub__ = lambda self, other: sub(other, self)
Tensor.__mul__ = lambda self, other: mul(self, other)
Tensor.__rmul__ = lambda self, other: mul(other, self)
Tensor.__matmul__ = lambda self, other: matmul(self, other)
Tensor.__neg__ = lambda self: scalar_mul(self, -1.0)
Tensor.__getitem__ = lambda self, idx: slice_(self, idx)
