"""Dense N-D tensors with a reverse-mode differentiation tape.

Values live in plain numpy arrays (float64 for verification paths,
float32 for training). Operations executed while a :class:`Tape` is
active are recorded together with an adjoint rule; ``backward`` replays
the records in exact reverse order and accumulates gradients into the
``grad`` field of every tensor that requires them.

Feature maps follow the (B, C, S, H, W) layout: batch, channel,
spectral band, height, width.
"""

from __future__ import annotations

import math
import threading
from typing import Callable, Sequence

import numpy as np
from scipy.special import erf, expit

from .errors import ContractError, DimensionError, GeometryError, NumericError

DEFAULT_LEAKY_SLOPE = 0.2

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

# When True (the default) every op output is checked for NaN/Inf and a
# NumericError is raised instead of letting bad values propagate.
_strict_finite = True


def set_strict_finite(enabled: bool) -> bool:
    """Toggle the NaN/Inf check on op outputs; returns the old setting."""
    global _strict_finite
    old = _strict_finite
    _strict_finite = bool(enabled)
    return old


_allocator_tuned = False


def tune_allocator() -> bool:
    """Best-effort glibc malloc tuning for batch workloads.

    Large conv buffers churn through mmap/munmap and heap trimming every
    step, costing page faults worth ~25% of a training step. Raising the
    mmap and trim thresholds keeps the buffers resident. No-op when the
    platform has no glibc mallopt. Returns True when applied.
    """
    global _allocator_tuned
    if _allocator_tuned:
        return True
    try:
        import ctypes
        libc = ctypes.CDLL("libc.so.6")
        libc.mallopt(-3, 1 << 28)  # M_MMAP_THRESHOLD
        libc.mallopt(-1, 1 << 30)  # M_TRIM_THRESHOLD
        _allocator_tuned = True
    except OSError:
        return False
    return True


def _check_finite(data: np.ndarray, op: str) -> None:
    # sum() is one fused pass; any NaN/Inf in the data poisons it
    if _strict_finite and not np.isfinite(data.sum(dtype=np.float64)):
        raise NumericError(f"{op} produced a non-finite value")


class Tensor:
    """An immutable dense array plus gradient bookkeeping.

    ``data`` is never mutated by ops; ``grad`` is the only mutable field
    and accumulates additively during ``backward``.
    """

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{flag})"

    # Convenience operators; all elementwise ops require matching shapes.
    def __add__(self, other):
        return add(self, other) if isinstance(other, Tensor) else add_scalar(self, other)

    def __radd__(self, other):
        return add_scalar(self, other)

    def __sub__(self, other):
        return sub(self, other) if isinstance(other, Tensor) else add_scalar(self, -other)

    def __rsub__(self, other):
        return affine(self, -1.0, other)

    def __mul__(self, other):
        return mul(self, other) if isinstance(other, Tensor) else scale(self, other)

    def __rmul__(self, other):
        return scale(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __getitem__(self, idx):
        return slice_view(self, idx)

    def sum(self) -> "Tensor":
        return sum_all(self)

    def mean(self) -> "Tensor":
        return mean_all(self)


class Tape:
    """Ordered record of executed ops for one reverse pass.

    Usable as a context manager; while active, ops whose inputs require
    gradients append ``(name, inputs, output, adjoint)`` records. The
    adjoint maps the output gradient to one gradient (or None) per input.
    """

    __slots__ = ("records",)

    _local = threading.local()

    def __init__(self):
        self.records: list[tuple[str, tuple[Tensor, ...], Tensor, Callable]] = []

    def __enter__(self) -> "Tape":
        stack = getattr(Tape._local, "stack", None)
        if stack is None:
            stack = Tape._local.stack = []
        stack.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        Tape._local.stack.pop()

    @staticmethod
    def current() -> "Tape | None":
        stack = getattr(Tape._local, "stack", None)
        return stack[-1] if stack else None

    def __len__(self) -> int:
        return len(self.records)

    def retained_bytes(self) -> int:
        """Bytes held by recorded op outputs (memory cost of the pass)."""
        return sum(out.data.nbytes for rec in self.records for out in rec[2])

    def _validate(self) -> None:
        # Every input must be a leaf or an output of an earlier record.
        produced_at: dict[int, int] = {}
        for pos, (_, _, outputs, _) in enumerate(self.records):
            for out in outputs:
                produced_at[id(out)] = pos
        for pos, (name, inputs, _, _) in enumerate(self.records):
            for t in inputs:
                made = produced_at.get(id(t))
                if made is not None and made >= pos:
                    raise ContractError(f"tape is not topologically ordered at op '{name}'")

    def backward(self, output: Tensor) -> None:
        backward(output, self)


def _record(name: str, inputs: tuple[Tensor, ...], out_data: np.ndarray, adjoint: Callable) -> Tensor:
    _check_finite(out_data, name)
    out = Tensor(out_data, requires_grad=any(t.requires_grad for t in inputs))
    tape = Tape.current()
    if tape is not None and out.requires_grad:
        tape.records.append((name, inputs, (out,), adjoint))
    return out


def _record_multi(name: str, inputs: tuple[Tensor, ...], outs_data: Sequence[np.ndarray],
                  adjoint: Callable) -> list[Tensor]:
    """Record one op with several outputs; the adjoint receives a tuple of
    output gradients (None where a branch was unused)."""
    req = any(t.requires_grad for t in inputs)
    outs = []
    for d in outs_data:
        _check_finite(d, name)
        outs.append(Tensor(d, requires_grad=req))
    tape = Tape.current()
    if tape is not None and req:
        tape.records.append((name, inputs, tuple(outs), adjoint))
    return outs


def _accumulate(t: Tensor, g: np.ndarray | None) -> None:
    if g is None or not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=t.data.dtype, copy=True)
    else:
        t.grad += g


def backward(output: Tensor, tape: Tape) -> None:
    """Propagate d(output)/d(leaf) to every requires_grad leaf on the tape.

    ``output`` must be a scalar produced on ``tape``. Gradients accumulate
    additively across fan-out; call ``zero_grad`` on leaves between passes.
    """
    if output.shape != ():
        raise ContractError(f"backward needs a scalar output, got shape {output.shape}")
    tape._validate()
    _accumulate(output, np.array(1.0, dtype=output.data.dtype))
    for name, inputs, outs, adjoint in reversed(tape.records):
        if all(o.grad is None for o in outs):
            continue  # branch not reached from the output
        if len(outs) == 1:
            grads = adjoint(outs[0].grad)
        else:
            grads = adjoint(tuple(o.grad for o in outs))
        for t, g in zip(inputs, grads):
            _accumulate(t, g)


# ---------------------------------------------------------------------------
# elementwise ops


def _binary_check(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shape {a.shape} vs {b.shape}")
    if a.data.dtype != b.data.dtype:
        raise DimensionError(f"{op}: dtype {a.data.dtype} vs {b.data.dtype}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _binary_check(a, b, "add")
    return _record("add", (a, b), a.data + b.data, lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _binary_check(a, b, "sub")
    return _record("sub", (a, b), a.data - b.data, lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _binary_check(a, b, "mul")
    ad, bd = a.data, b.data
    return _record("mul", (a, b), ad * bd, lambda g: (g * bd, g * ad))


def scale(a: Tensor, alpha: float) -> Tensor:
    alpha = float(alpha)
    return _record("scale", (a,), a.data * alpha, lambda g: (g * alpha,))


def add_scalar(a: Tensor, beta: float) -> Tensor:
    beta = float(beta)
    return _record("add_scalar", (a,), a.data + beta, lambda g: (g,))


def affine(a: Tensor, alpha: float, beta: float) -> Tensor:
    """alpha * a + beta with scalar constants (e.g. 1 - gate)."""
    alpha, beta = float(alpha), float(beta)
    return _record("affine", (a,), a.data * alpha + beta, lambda g: (g * alpha,))


def sum_all(a: Tensor) -> Tensor:
    shape, dtype = a.shape, a.data.dtype
    return _record("sum", (a,), a.data.sum(), lambda g: (np.full(shape, g, dtype=dtype),))


def mean_all(a: Tensor) -> Tensor:
    n = a.size
    shape, dtype = a.shape, a.data.dtype
    return _record("mean", (a,), a.data.mean(), lambda g: (np.full(shape, g / n, dtype=dtype),))


# ---------------------------------------------------------------------------
# activations


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _record("tanh", (a,), out, lambda g: (g * (1.0 - out * out),))


def sigmoid(a: Tensor) -> Tensor:
    out = expit(a.data)
    return _record("sigmoid", (a,), out, lambda g: (g * out * (1.0 - out),))


def gelu(a: Tensor) -> Tensor:
    # Exact Gaussian-CDF form x * Phi(x), not the tanh approximation.
    x = a.data
    phi_cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    out = x * phi_cdf

    def adjoint(g):
        pdf = np.exp(-0.5 * x * x) * _INV_SQRT_2PI
        return (g * (phi_cdf + x * pdf),)

    return _record("gelu", (a,), out, adjoint)


def leaky_relu(a: Tensor, slope: float = DEFAULT_LEAKY_SLOPE) -> Tensor:
    x = a.data
    slope = float(slope)
    out = np.where(x >= 0, x, slope * x)

    def adjoint(g):
        return (np.where(x >= 0, g, slope * g),)

    return _record("leaky_relu", (a,), out, adjoint)


_ACTIVATIONS = {"tanh": tanh, "sigmoid": sigmoid, "gelu": gelu}


def activation(a: Tensor, kind: str, slope: float = DEFAULT_LEAKY_SLOPE) -> Tensor:
    """Dispatch on kind in {tanh, sigmoid, gelu, leaky_relu}."""
    if kind == "leaky_relu":
        return leaky_relu(a, slope)
    try:
        return _ACTIVATIONS[kind](a)
    except KeyError:
        raise ContractError(f"unknown activation kind '{kind}'") from None


# ---------------------------------------------------------------------------
# shape ops


def slice_view(a: Tensor, idx) -> Tensor:
    """Basic (non-fancy) indexing with a scatter adjoint."""
    if isinstance(idx, (np.ndarray, list)):
        raise ContractError("only basic slicing is differentiable")
    out = a.data[idx]
    if np.isscalar(out) or out.ndim == 0:
        out = np.asarray(out)
    else:
        out = out.copy()
    shape, dtype = a.shape, a.data.dtype

    def adjoint(g):
        buf = np.zeros(shape, dtype=dtype)
        buf[idx] = g  # basic slices never repeat an element
        return (buf,)

    return _record("slice", (a,), out, adjoint)


def split_axis(a: Tensor, axis: int, size: int = 1) -> list[Tensor]:
    """Split into consecutive chunks of ``size`` along ``axis`` (the extent
    must divide evenly). Cheaper than repeated slicing: the whole split is
    one tape record whose adjoint is a single concatenate."""
    n = a.shape[axis]
    if n % size:
        raise DimensionError(f"split_axis: extent {n} not divisible by chunk size {size}")
    pieces = np.split(a.data, n // size, axis=axis)
    outs_data = [np.ascontiguousarray(p) for p in pieces]
    shapes = [p.shape for p in outs_data]
    dtype = a.data.dtype

    def adjoint(grads):
        filled = [g if g is not None else np.zeros(shp, dtype=dtype)
                  for g, shp in zip(grads, shapes)]
        return (np.concatenate(filled, axis=axis),)

    return _record_multi("split", (a,), outs_data, adjoint)


def concat(parts: Sequence[Tensor], axis: int) -> Tensor:
    parts = tuple(parts)
    if not parts:
        raise ContractError("concat of zero tensors")
    out = np.concatenate([p.data for p in parts], axis=axis)
    offsets = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def adjoint(g):
        return tuple(np.ascontiguousarray(piece) for piece in np.split(g, offsets, axis=axis))

    return _record("concat", parts, out, adjoint)


def moveaxis(a: Tensor, src: int, dst: int) -> Tensor:
    out = np.ascontiguousarray(np.moveaxis(a.data, src, dst))

    def adjoint(g):
        return (np.ascontiguousarray(np.moveaxis(g, dst, src)),)

    return _record("moveaxis", (a,), out, adjoint)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    old = a.shape
    return _record("reshape", (a,), a.data.reshape(shape).copy(), lambda g: (g.reshape(old),))


# ---------------------------------------------------------------------------
# linear maps


def pointwise_linear(a: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Apply ``out[..., d] = sum_c a[..., c] * weight[c, d] (+ bias[d])``
    independently at every leading position."""
    x, w = a.data, weight.data
    if w.ndim != 2:
        raise DimensionError(f"pointwise_linear: weight must be 2-D, got {w.shape}")
    if x.shape[-1] != w.shape[0]:
        raise DimensionError(
            f"pointwise_linear: input last axis {x.shape[-1]} != weight rows {w.shape[0]}")
    out = np.matmul(x, w)
    inputs: tuple[Tensor, ...]
    if bias is not None:
        if bias.shape != (w.shape[1],):
            raise DimensionError(f"pointwise_linear: bias shape {bias.shape} != ({w.shape[1]},)")
        out = out + bias.data
        inputs = (a, weight, bias)
    else:
        inputs = (a, weight)

    def adjoint(g):
        dx = np.matmul(g, w.T) if a.requires_grad else None
        dw = None
        if weight.requires_grad:
            dw = np.tensordot(x, g, axes=(range(x.ndim - 1), range(g.ndim - 1)))
        if bias is None:
            return (dx, dw)
        db = g.sum(axis=tuple(range(g.ndim - 1))) if bias.requires_grad else None
        return (dx, dw, db)

    return _record("pointwise_linear", inputs, out, adjoint)


def _triple(v) -> tuple[int, int, int]:
    if isinstance(v, int):
        return (v, v, v)
    t = tuple(int(x) for x in v)
    if len(t) != 3:
        raise ContractError(f"expected 3 extents, got {v!r}")
    return t


def _windows(arr: np.ndarray, ksize, stride) -> np.ndarray:
    """Strided sliding-window view (B, C, n1, n2, n3, k1, k2, k3)."""
    win = np.lib.stride_tricks.sliding_window_view(arr, tuple(ksize), axis=(2, 3, 4))
    return win[:, :, ::stride[0], ::stride[1], ::stride[2]]


def _offset_slices(ksize, stride, counts):
    """Per kernel offset, the strided slice covering all window positions."""
    pairs = []
    for da in range(ksize[0]):
        for db in range(ksize[1]):
            for dc in range(ksize[2]):
                sl = tuple(
                    slice(d, d + (n - 1) * s + 1, s)
                    for d, s, n in zip((da, db, dc), stride, counts))
                pairs.append(((da, db, dc), sl))
    return pairs


def conv3d(a: Tensor, kernel: Tensor, bias: Tensor | None = None,
           stride=(1, 1, 1), padding=(0, 0, 0)) -> Tensor:
    """Strided zero-padded 3-D cross-correlation over (S, H, W).

    Input (B, Cin, S, H, W), kernel (Cout, Cin, kS, kH, kW) with odd
    kernel extents. Output extent per axis is (n + 2p - k)//s + 1.
    """
    x, k = a.data, kernel.data
    if x.ndim != 5 or k.ndim != 5:
        raise DimensionError(f"conv3d: input ndim {x.ndim}, kernel ndim {k.ndim}, expected 5")
    stride, padding = _triple(stride), _triple(padding)
    B, ci, *spatial = x.shape
    co, ci_k, *ksize = k.shape
    if ci != ci_k:
        raise DimensionError(f"conv3d: input channels {ci} != kernel channels {ci_k}")
    if any(ks % 2 == 0 for ks in ksize):
        raise ContractError(f"conv3d: kernel extents must be odd, got {tuple(ksize)}")
    out_sp = []
    for n, ks, s, p in zip(spatial, ksize, stride, padding):
        if n + 2 * p < ks:
            raise GeometryError(f"conv3d: padded extent {n + 2 * p} < kernel extent {ks}")
        out_sp.append((n + 2 * p - ks) // s + 1)

    pS, pH, pW = padding
    xp = np.pad(x, ((0, 0), (0, 0), (pS, pS), (pH, pH), (pW, pW))) if any(padding) else x
    # im2col in (Ci*k^3, B*positions) layout, built from one contiguous
    # slab per kernel offset; shared with the backward pass
    kvol = int(np.prod(ksize))
    offsets = _offset_slices(ksize, stride, out_sp)
    colsT = np.empty((ci, kvol, B, *out_sp), dtype=x.dtype)
    for pos, (_, sl) in enumerate(offsets):
        np.copyto(colsT[:, pos], xp[(slice(None), slice(None), *sl)].transpose(1, 0, 2, 3, 4))
    colsT = colsT.reshape(ci * kvol, -1)
    kflat = k.reshape(co, ci * kvol)
    out2d = colsT.T @ kflat.T  # (B*positions, Co)
    out = np.ascontiguousarray(out2d.reshape(B, *out_sp, co).transpose(0, 4, 1, 2, 3))
    inputs: tuple[Tensor, ...]
    if bias is not None:
        if bias.shape != (co,):
            raise DimensionError(f"conv3d: bias shape {bias.shape} != ({co},)")
        out += bias.data.reshape(1, co, 1, 1, 1)
        inputs = (a, kernel, bias)
    else:
        inputs = (a, kernel)

    def adjoint(g):
        dx = dk = None
        g2d = np.ascontiguousarray(g.transpose(0, 2, 3, 4, 1)).reshape(-1, co)
        if kernel.requires_grad:
            dk = (colsT @ g2d).T.reshape(k.shape)
        if a.requires_grad:
            # (Ci, kS, kH, kW, B, S', H', W'): contiguous slab per offset
            dcols = (kflat.T @ g2d.T).reshape(ci, *ksize, B, *out_sp)
            dxp = np.zeros_like(xp)
            for (da, db_, dc), sl in offsets:
                dxp[(slice(None), slice(None), *sl)] += \
                    dcols[:, da, db_, dc].transpose(1, 0, 2, 3, 4)
            dx = dxp[:, :, pS:pS + spatial[0], pH:pH + spatial[1], pW:pW + spatial[2]] \
                if any(padding) else dxp
            dx = np.ascontiguousarray(dx)
        if bias is None:
            return (dx, dk)
        db = g.sum(axis=(0, 2, 3, 4)) if bias.requires_grad else None
        return (dx, dk, db)

    return _record("conv3d", inputs, out, adjoint)


def conv_transpose3d(a: Tensor, kernel: Tensor, bias: Tensor | None = None,
                     stride=(1, 1, 1), padding=(0, 0, 0)) -> Tensor:
    """Adjoint of conv3d ("transposed convolution"), used for upsampling.

    Input (B, Cin, S, H, W), kernel (Cin, Cout, kS, kH, kW); output
    extent per axis is (n - 1)*s - 2p + k.
    """
    x, k = a.data, kernel.data
    if x.ndim != 5 or k.ndim != 5:
        raise DimensionError(
            f"conv_transpose3d: input ndim {x.ndim}, kernel ndim {k.ndim}, expected 5")
    stride, padding = _triple(stride), _triple(padding)
    B, ci, *spatial = x.shape
    ci_k, co, *ksize = k.shape
    if ci != ci_k:
        raise DimensionError(f"conv_transpose3d: input channels {ci} != kernel channels {ci_k}")
    out_sp = []
    for n, ks, s, p in zip(spatial, ksize, stride, padding):
        ext = (n - 1) * s - 2 * p + ks
        if ext < 1:
            raise GeometryError(f"conv_transpose3d: non-positive output extent {ext}")
        out_sp.append(ext)

    pS, pH, pW = padding
    padded_sp = [e + 2 * p for e, p in zip(out_sp, padding)]
    outp = np.zeros((B, co, *padded_sp), dtype=x.dtype)
    # stamp each kernel offset onto the (padded) output
    full = np.tensordot(x, k, axes=([1], [0]))  # (B, S, H, W, Co, kS, kH, kW)
    slices = _offset_slices(ksize, stride, spatial)
    for (da, db_, dc), sl in slices:
        outp[(slice(None), slice(None), *sl)] += np.moveaxis(full[..., da, db_, dc], 4, 1)
    out = outp[:, :, pS:pS + out_sp[0], pH:pH + out_sp[1], pW:pW + out_sp[2]] \
        if any(padding) else outp
    out = np.ascontiguousarray(out)
    inputs: tuple[Tensor, ...]
    if bias is not None:
        if bias.shape != (co,):
            raise DimensionError(f"conv_transpose3d: bias shape {bias.shape} != ({co},)")
        out += bias.data.reshape(1, co, 1, 1, 1)
        inputs = (a, kernel, bias)
    else:
        inputs = (a, kernel)

    def adjoint(g):
        gp = np.pad(g, ((0, 0), (0, 0), (pS, pS), (pH, pH), (pW, pW))) if any(padding) else g
        gwin = _windows(gp, ksize, stride)  # (B, Co, S, H, W, kS, kH, kW)
        dx = dk = None
        if a.requires_grad:
            dx = np.tensordot(gwin, k, axes=([1, 5, 6, 7], [1, 2, 3, 4]))
            dx = np.ascontiguousarray(np.moveaxis(dx, 4, 1))
        if kernel.requires_grad:
            dk = np.tensordot(x, gwin, axes=([0, 2, 3, 4], [0, 2, 3, 4]))
        if bias is None:
            return (dx, dk)
        db = g.sum(axis=(0, 2, 3, 4)) if bias.requires_grad else None
        return (dx, dk, db)

    return _record("conv_transpose3d", inputs, out, adjoint)


# ---------------------------------------------------------------------------
# gradient checking


def gradcheck(f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-4) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f`` must map one tensor to a scalar tensor and be deterministic.
    The check always runs in double precision. The relative error at each
    coordinate is |analytic - cd| / max(|analytic|, |cd|, 1e-8).
    """
    base = x.data.astype(np.float64, copy=True)
    leaf = Tensor(base, requires_grad=True)
    with Tape() as tape:
        y = f(leaf)
    if y.shape != ():
        raise ContractError("gradcheck requires a scalar-valued function")
    backward(y, tape)
    analytic = np.zeros_like(base) if leaf.grad is None else leaf.grad

    numeric = np.empty_like(base)
    flat = base.reshape(-1)
    num_flat = numeric.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = float(f(Tensor(base)).data)
        flat[i] = orig - eps
        fm = float(f(Tensor(base)).data)
        flat[i] = orig
        num_flat[i] = (fp - fm) / (2.0 * eps)

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))
