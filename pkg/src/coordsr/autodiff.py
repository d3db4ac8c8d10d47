"""Reverse-mode automatic differentiation over dense float tensors.

The op set is the minimum needed to train the convolutional encoder and the
MLP / pixel-shuffle decoders: elementwise arithmetic, ReLU, affine layers,
same-padded convolution, reductions, shape moves, and the gather/blend ops
used by continuous grid queries. Forward results are plain numpy arrays
wrapped in `Tensor`; gradients are recorded on an explicit `Tape` that is
rebuilt for every forward pass and consumed by a single `backward` call.

Default precision is float32. `dtype_context(np.float64)` exists so gradient
checks can run a high-precision forward pass; production paths never use it.
"""

from __future__ import annotations

import itertools
from contextlib import contextmanager
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigurationError, NonFiniteError, UsageError

_uid_counter = itertools.count()

_DTYPE = np.float32

MAX_RANK = 4


def default_dtype():
    """Element dtype used for newly created tensors (normally float32)."""
    return _DTYPE


@contextmanager
def dtype_context(dtype):
    """Temporarily switch the default dtype (finite-difference checks only)."""
    global _DTYPE
    prev = _DTYPE
    _DTYPE = np.dtype(dtype).type
    try:
        yield
    finally:
        _DTYPE = prev


class Tensor:
    """Dense tensor of up to 4 axes (batch, channel, height, width).

    Data is stored row-major in the default dtype. `requires_grad` marks
    trainable leaves; after `Tape.backward` each such leaf holds `grad`
    with the same shape as `data`.
    """

    __slots__ = ("data", "requires_grad", "grad", "uid")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=_DTYPE)
        if arr.ndim > MAX_RANK:
            raise ConfigurationError(
                f"tensors support at most {MAX_RANK} axes, got shape {arr.shape}"
            )
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.uid = next(_uid_counter)

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def check_finite(self, context: str = "tensor") -> "Tensor":
        if not np.all(np.isfinite(self.data)):
            raise NonFiniteError(f"non-finite values in {context}")
        return self

    def __repr__(self):
        req = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{req})"

    # Operator sugar covers the same-shape / scalar cases the models need.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)


class TapeEntry:
    """One recorded op: kind, input/output node ids, and its backward rule."""

    __slots__ = ("op", "inputs", "output", "backward")

    def __init__(self, op: str, inputs: Sequence[Tensor], output: Tensor,
                 backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]):
        self.op = op
        self.inputs = tuple(inputs)
        self.output = output
        self.backward = backward


class Tape:
    """Ordered record of differentiable ops for one forward pass.

    Entries are appended in execution order, so every entry's inputs precede
    it and a single reversed sweep implements backpropagation. A tape is
    consumed by its first `backward`; reuse raises `UsageError`.
    """

    _active: Optional["Tape"] = None

    def __init__(self):
        self.entries: list[TapeEntry] = []
        self._consumed = False

    def __enter__(self) -> "Tape":
        if Tape._active is not None:
            raise UsageError("a tape is already active; tapes do not nest")
        Tape._active = self
        return self

    def __exit__(self, exc_type, exc, tb):
        Tape._active = None
        return False

    def __len__(self) -> int:
        return len(self.entries)

    def backward(self, loss: Tensor) -> None:
        """Populate `grad` on every requires_grad leaf reachable from `loss`."""
        if self._consumed:
            raise UsageError("tape already consumed; one backward per forward")
        if loss.size != 1:
            raise UsageError(f"backward requires a scalar loss, got shape {loss.shape}")
        if not self.entries:
            raise UsageError("tape is empty; nothing was recorded")
        self._consumed = True

        grads: dict[int, np.ndarray] = {loss.uid: np.ones(loss.shape, dtype=loss.data.dtype)}
        produced = {e.output.uid for e in self.entries}
        for entry in reversed(self.entries):
            gout = grads.pop(entry.output.uid, None)
            if gout is None:
                continue
            for inp, gin in zip(entry.inputs, entry.backward(gout)):
                if gin is None or not inp.requires_grad:
                    continue
                acc = grads.get(inp.uid)
                grads[inp.uid] = gin if acc is None else acc + gin
        seen: set[int] = set()
        for entry in self.entries:
            for inp in entry.inputs:
                if inp.uid in seen or not inp.requires_grad or inp.uid in produced:
                    continue
                seen.add(inp.uid)
                g = grads.get(inp.uid)
                if g is not None:
                    inp.grad = g.reshape(inp.shape)


def _record(op: str, inputs: Sequence[Tensor], out_data: np.ndarray,
            backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = out_data
    out.requires_grad = any(t.requires_grad for t in inputs)
    out.grad = None
    out.uid = next(_uid_counter)
    tape = Tape._active
    if tape is not None and out.requires_grad:
        tape.entries.append(TapeEntry(op, inputs, out, backward))
    return out


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ConfigurationError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# ---------------------------------------------------------------------------
# elementwise


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")
    return _record("add", (a, b), a.data + b.data, lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")
    return _record("sub", (a, b), a.data - b.data, lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "mul")
    ad, bd = a.data, b.data
    return _record("mul", (a, b), ad * bd, lambda g: (g * bd, g * ad))


def scale(x: Tensor, c: float) -> Tensor:
    return _record("scale", (x,), x.data * np.asarray(c, x.data.dtype),
                   lambda g: (g * c,))


def mulc(x: Tensor, const: np.ndarray) -> Tensor:
    """Elementwise product with a constant (non-learned) array."""
    const = np.asarray(const, dtype=x.data.dtype)
    if const.shape != x.shape:
        raise ConfigurationError(f"mulc: shape mismatch {x.shape} vs {const.shape}")
    return _record("mulc", (x,), x.data * const, lambda g: (g * const,))


def abs_(x: Tensor) -> Tensor:
    sign = np.sign(x.data)
    return _record("abs", (x,), np.abs(x.data), lambda g: (g * sign,))


def relu(x: Tensor) -> Tensor:
    """max(0, x); gradient is 0 where x <= 0."""
    mask = x.data > 0
    out = np.where(mask, x.data, x.data.dtype.type(0))
    return _record("relu", (x,), out, lambda g: (g * mask,))


# ---------------------------------------------------------------------------
# reductions


def sum_(x: Tensor) -> Tensor:
    shape, dt = x.shape, x.data.dtype
    return _record("sum", (x,), np.asarray(x.data.sum(), dtype=dt),
                   lambda g: (np.broadcast_to(g, shape).astype(dt, copy=False),))


def mean_(x: Tensor) -> Tensor:
    shape, dt, n = x.shape, x.data.dtype, x.size
    return _record("mean", (x,), np.asarray(x.data.mean(dtype=np.float64), dtype=dt),
                   lambda g: (np.broadcast_to(g / n, shape).astype(dt, copy=False),))


# ---------------------------------------------------------------------------
# shape moves


def reshape(x: Tensor, shape) -> Tensor:
    old = x.shape
    return _record("reshape", (x,), x.data.reshape(shape),
                   lambda g: (g.reshape(old),))


def permute(x: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _record("permute", (x,), np.ascontiguousarray(x.data.transpose(axes)),
                   lambda g: (g.transpose(inv),))


def concat(xs: Sequence[Tensor]) -> Tensor:
    """Concatenate 1-D tensors along axis 0."""
    if any(x.data.ndim != 1 for x in xs):
        raise ConfigurationError("concat expects 1-D tensors")
    sizes = [x.size for x in xs]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        return tuple(g[offsets[i]:offsets[i + 1]] for i in range(len(sizes)))

    return _record("concat", tuple(xs), np.concatenate([x.data for x in xs]), bwd)


def append_const_cols(x: Tensor, const: np.ndarray) -> Tensor:
    """Append constant columns to a [rows, cols] tensor (query offsets etc.)."""
    const = np.asarray(const, dtype=x.data.dtype)
    if x.data.ndim != 2 or const.ndim != 2 or const.shape[0] != x.shape[0]:
        raise ConfigurationError(
            f"append_const_cols: incompatible shapes {x.shape} and {const.shape}"
        )
    d = x.shape[1]
    return _record("append_const_cols", (x,), np.concatenate([x.data, const], axis=1),
                   lambda g: (g[:, :d],))


# ---------------------------------------------------------------------------
# gather / blend


def gather_rows(x: Tensor, idx: np.ndarray) -> Tensor:
    """Select rows of a [rows, cols] tensor; backward scatter-adds per column."""
    if x.data.ndim != 2:
        raise ConfigurationError(f"gather_rows expects a 2-D tensor, got {x.shape}")
    idx = np.asarray(idx, dtype=np.intp).reshape(-1)
    rows, cols = x.shape

    def bwd(g):
        gx = np.empty((rows, cols), dtype=g.dtype)
        for c in range(cols):
            gx[:, c] = np.bincount(idx, weights=g[:, c], minlength=rows)
        return (gx,)

    return _record("gather_rows", (x,), x.data[idx], bwd)


def ensemble_blend(values: Tensor, idx: np.ndarray, weights: np.ndarray) -> Tensor:
    """Blend per-cell values into per-query outputs.

    values: [cells] tensor; idx, weights: [queries, k] constant arrays.
    Output q is sum_k weights[q, k] * values[idx[q, k]]. The weights are
    constants of the query geometry, so gradients flow only into `values`.
    """
    if values.data.ndim != 1:
        raise ConfigurationError("ensemble_blend expects 1-D cell values")
    idx = np.asarray(idx, dtype=np.intp)
    w = np.asarray(weights, dtype=values.data.dtype)
    if idx.shape != w.shape or idx.ndim != 2:
        raise ConfigurationError("ensemble_blend: idx/weights must be [queries, k]")
    n = values.size
    out = (values.data[idx] * w).sum(axis=1)

    def bwd(g):
        contrib = (g[:, None] * w).ravel()
        return (np.bincount(idx.ravel(), weights=contrib, minlength=n)
                .astype(g.dtype, copy=False),)

    return _record("ensemble_blend", (values,), out, bwd)


# ---------------------------------------------------------------------------
# affine / convolution


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map along the last axis: y = x @ weight.T + bias."""
    if weight.data.ndim != 2 or bias.data.ndim != 1:
        raise ConfigurationError("linear: weight must be [out, in], bias [out]")
    out_f, in_f = weight.shape
    if x.shape[-1] != in_f or bias.shape[0] != out_f:
        raise ConfigurationError(
            f"linear: shapes do not conform: x {x.shape}, weight {weight.shape}, "
            f"bias {bias.shape}"
        )
    xd = x.data
    lead = xd.shape[:-1]
    x2 = xd.reshape(-1, in_f)
    y = x2 @ weight.data.T + bias.data

    wd = weight.data

    def bwd(g):
        g2 = g.reshape(-1, out_f)
        return (g2 @ wd).reshape(xd.shape), g2.T @ x2, g2.sum(axis=0)

    return _record("linear", (x, weight, bias), y.reshape(*lead, out_f), bwd)


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor) -> Tensor:
    """Same-padded stride-1 cross-correlation.

    x: [N, Cin, H, W]; kernel: [Cout, Cin, k, k] with odd k; bias: [Cout].
    Zero padding keeps the output spatial dims equal to the input's.
    """
    if x.data.ndim != 4 or kernel.data.ndim != 4 or bias.data.ndim != 1:
        raise ConfigurationError("conv2d: x must be 4-D, kernel 4-D, bias 1-D")
    n, cin, h, w = x.shape
    cout, cin_k, kh, kw = kernel.shape
    if cin_k != cin or bias.shape[0] != cout:
        raise ConfigurationError(
            f"conv2d: shapes do not conform: x {x.shape}, kernel {kernel.shape}, "
            f"bias {bias.shape}"
        )
    if kh != kw or kh % 2 == 0:
        raise ConfigurationError(f"conv2d: kernel must be square with odd size, got {kh}x{kw}")
    pad = kh // 2

    # im2col in channels-last layout: windows become [N*H*W, k*k*Cin] with a
    # cache-friendly gather, and the conv is one sgemm against the permuted
    # kernel matrix. `cols` is retained for the weight gradient.
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    xp_nhwc = np.ascontiguousarray(xp.transpose(0, 2, 3, 1))
    pad_h, pad_w = xp_nhwc.shape[1], xp_nhwc.shape[2]
    windows = np.lib.stride_tricks.sliding_window_view(xp_nhwc, (kh, kw), axis=(1, 2))
    cols = np.ascontiguousarray(windows.transpose(0, 1, 2, 4, 5, 3)).reshape(
        n * h * w, kh * kw * cin)
    kmat = np.ascontiguousarray(kernel.data.transpose(0, 2, 3, 1)).reshape(cout, -1)
    y = cols @ kmat.T + bias.data
    out = np.ascontiguousarray(y.reshape(n, h, w, cout).transpose(0, 3, 1, 2))

    def bwd(g):
        gflat = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(-1, cout)
        dk = np.ascontiguousarray(
            (gflat.T @ cols).reshape(cout, kh, kw, cin).transpose(0, 3, 1, 2))
        # col2im: scatter-add the per-window gradients back onto the padded input
        dcols = (gflat @ kmat).reshape(n, h, w, kh, kw, cin)
        dxp = np.zeros((n, pad_h, pad_w, cin), dtype=g.dtype)
        for i in range(kh):
            for j in range(kw):
                dxp[:, i:i + h, j:j + w, :] += dcols[:, :, :, i, j, :]
        dx = dxp[:, pad:pad + h, pad:pad + w, :] if pad else dxp
        return np.ascontiguousarray(dx.transpose(0, 3, 1, 2)), dk, gflat.sum(axis=0)

    return _record("conv2d", (x, kernel, bias), out, bwd)


def pixel_shuffle(x: Tensor, r: int) -> Tensor:
    """Rearrange [N, C*r*r, H, W] into [N, C, H*r, W*r] (sub-pixel upsampling)."""
    if x.data.ndim != 4:
        raise ConfigurationError("pixel_shuffle expects a 4-D tensor")
    n, crr, h, w = x.shape
    if crr % (r * r) != 0:
        raise ConfigurationError(f"pixel_shuffle: {crr} channels not divisible by r^2={r * r}")
    c = crr // (r * r)
    out = (x.data.reshape(n, c, r, r, h, w)
           .transpose(0, 1, 4, 2, 5, 3)
           .reshape(n, c, h * r, w * r))

    def bwd(g):
        return (g.reshape(n, c, h, r, w, r)
                .transpose(0, 1, 3, 5, 2, 4)
                .reshape(n, crr, h, w),)

    return _record("pixel_shuffle", (x,), np.ascontiguousarray(out), bwd)


# ---------------------------------------------------------------------------
# optimizer


class AdamState:
    """First/second moment estimates plus the shared step counter."""

    def __init__(self, params: Sequence[Tensor]):
        self.m = [np.zeros(p.shape, dtype=p.data.dtype) for p in params]
        self.v = [np.zeros(p.shape, dtype=p.data.dtype) for p in params]
        self.step = 0


def adam_step(params: Sequence[Tensor], grads: Sequence[np.ndarray], state: AdamState,
              lr: float = 1e-4, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> AdamState:
    """One bias-corrected Adam update, applied in place to `params`.

    All gradients are validated before any parameter is touched, so a
    non-finite gradient aborts the whole step.
    """
    if len(params) != len(grads):
        raise ConfigurationError("adam_step: params and grads differ in length")
    for p, g, m in zip(params, grads, state.m):
        if g is None:
            raise UsageError("adam_step: missing gradient (was backward run?)")
        if g.shape != p.shape or m.shape != p.shape:
            raise ConfigurationError(
                f"adam_step: state/grad shape {g.shape} does not match param {p.shape}"
            )
    bad = [i for i, g in enumerate(grads) if not np.all(np.isfinite(g))]
    if bad:
        raise NonFiniteError(
            f"non-finite gradients for {len(bad)} parameter(s) at indices {bad[:8]}; "
            "step aborted"
        )

    state.step += 1
    t = state.step
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * np.square(g)
        p.data -= (lr / c1) * m / (np.sqrt(v / c2) + eps)
    return state
