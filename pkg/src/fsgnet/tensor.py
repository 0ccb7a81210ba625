"""Reverse-mode autodiff engine on dense float64 arrays.

Every differentiable operation builds a node in an implicit tape: the output
tensor records its parent tensors and a vector-Jacobian closure.  `backward`
replays the tape in reverse topological order and accumulates gradients
additively into the leaves (call `zero_grads` between steps).

Tensors are value-semantic: ops never mutate their inputs, so tensors are
safe to share read-only across threads.  A tape (one forward's graph) belongs
to a single logical training step and must not be mutated concurrently.
"""

from __future__ import annotations

import struct
from contextlib import contextmanager
from functools import lru_cache
from typing import BinaryIO, Callable, Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class NotFiniteError(FloatingPointError):
    """Raised when an operation produces NaN or Inf from finite inputs."""


_grad_enabled = True
_finite_checks = True
_flop_counter = None  # set by flop_count(); accumulates multiply-adds


@contextmanager
def no_grad():
    """Disable tape construction inside the block (pure inference)."""
    global _grad_enabled
    prev, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = prev


@contextmanager
def finite_checks(enabled: bool):
    """Toggle per-op NaN/Inf validation (on by default)."""
    global _finite_checks
    prev, _finite_checks = _finite_checks, enabled
    try:
        yield
    finally:
        _finite_checks = prev


class _MacCounter:
    def __init__(self):
        self.macs = 0

    @property
    def flops(self) -> int:
        # one multiply-add = 2 FLOPs; BN, activations, pooling and
        # interpolation are excluded from the tally
        return 2 * self.macs


@contextmanager
def flop_count():
    """Count multiply-adds of conv/matmul ops executed inside the block."""
    global _flop_counter
    prev, _flop_counter = _flop_counter, _MacCounter()
    try:
        yield _flop_counter
    finally:
        _flop_counter = prev


class Tensor:
    """Dense float64 array with optional gradient and tape linkage."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if _finite_checks and not np.all(np.isfinite(arr)):
            raise NotFiniteError("tensor initialized with NaN/Inf values")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._vjp: Callable[[np.ndarray], tuple] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- operator sugar -----------------------------------------------------
    def __add__(self, other):
        return add(self, _as_tensor(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scalar_mul(self, float(other))
        return hadamard(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, _as_tensor(other))

    def __rtruediv__(self, other):
        return div(_as_tensor(other), self)

    def __neg__(self):
        return scalar_mul(self, -1.0)

    def sum(self) -> "Tensor":
        return sum_all(self)

    def mean(self) -> "Tensor":
        return mean_all(self)

    def backward(self) -> None:
        backward(self)


def _as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


def _make(out_data: np.ndarray, parents: tuple[Tensor, ...], vjp) -> Tensor:
    """Wrap an op result, attaching tape linkage when gradients are live."""
    if _finite_checks and not np.all(np.isfinite(out_data)):
        raise NotFiniteError("operation produced NaN/Inf from finite inputs")
    out = Tensor.__new__(Tensor)
    out.data = out_data
    out.grad = None
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._vjp = vjp
    else:
        out.requires_grad = False
        out._parents = ()
        out._vjp = None
    return out


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into `.grad` of every reachable leaf.

    Gradients add across calls; a second backward without zeroing doubles
    them.  `loss` must hold exactly one element.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward expects a scalar loss, got shape {loss.data.shape}")
    order = _topo_order(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._vjp is not None:
            for parent, pg in zip(node._parents, node._vjp(g)):
                if pg is None or not parent.requires_grad:
                    continue
                acc = grads.get(id(parent))
                grads[id(parent)] = pg if acc is None else acc + pg
        elif node.requires_grad:
            node.grad = g.copy() if node.grad is None else node.grad + g


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def zero_grads(tensors: Iterable[Tensor]) -> None:
    for t in tensors:
        t.grad = None


# --------------------------------------------------------------------------
# elementwise suite
# --------------------------------------------------------------------------

def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape` (adjoint of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _binary(a: Tensor, b: Tensor, fwd, vjp_a, vjp_b, opname: str) -> Tensor:
    try:
        out = fwd(a.data, b.data)
    except ValueError as exc:
        raise ShapeError(
            f"{opname}: shapes {a.data.shape} and {b.data.shape} do not broadcast"
        ) from exc

    def vjp(g):
        ga = _unbroadcast(vjp_a(g), a.data.shape) if a.requires_grad else None
        gb = _unbroadcast(vjp_b(g), b.data.shape) if b.requires_grad else None
        return ga, gb

    return _make(out, (a, b), vjp)


def add(a: Tensor, b: Tensor) -> Tensor:
    return _binary(a, b, np.add, lambda g: g, lambda g: g, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    return _binary(a, b, np.subtract, lambda g: g, lambda g: -g, "sub")


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    return _binary(a, b, np.multiply, lambda g: g * b.data, lambda g: g * a.data, "hadamard")


def div(a: Tensor, b: Tensor) -> Tensor:
    return _binary(
        a, b, np.divide,
        lambda g: g / b.data,
        lambda g: -g * a.data / (b.data * b.data),
        "div",
    )


def scalar_mul(x: Tensor, s: float) -> Tensor:
    return _make(x.data * s, (x,), lambda g: (g * s,))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0.0
    return _make(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(x: Tensor) -> Tensor:
    y = _stable_sigmoid(x.data)
    return _make(y, (x,), lambda g: (g * y * (1.0 - y),))


def softplus(x: Tensor) -> Tensor:
    """log(1 + e^x), computed in log space (never overflows)."""
    y = np.logaddexp(0.0, x.data)
    return _make(y, (x,), lambda g: (g * _stable_sigmoid(x.data),))


def abs_(x: Tensor) -> Tensor:
    return _make(np.abs(x.data), (x,), lambda g: (g * np.sign(x.data),))


def softmax(x: Tensor) -> Tensor:
    """Softmax along the last axis with max-subtraction for stability."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        dot = (g * y).sum(axis=-1, keepdims=True)
        return (y * (g - dot),)

    return _make(y, (x,), vjp)


def sum_all(x: Tensor) -> Tensor:
    return _make(
        np.asarray(x.data.sum()), (x,),
        lambda g: (np.broadcast_to(g, x.data.shape).copy(),),
    )


def mean_all(x: Tensor) -> Tensor:
    n = x.data.size
    return _make(
        np.asarray(x.data.mean()), (x,),
        lambda g: (np.broadcast_to(g / n, x.data.shape).copy(),),
    )


# --------------------------------------------------------------------------
# structural suite
# --------------------------------------------------------------------------

def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    return _make(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.data.shape),))


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _make(
        np.ascontiguousarray(x.data.transpose(axes)), (x,),
        lambda g: (g.transpose(inv),),
    )


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    shapes = [t.data.shape for t in tensors]
    base = list(shapes[0])
    for s in shapes[1:]:
        trimmed = list(s)
        trimmed[axis] = base[axis]
        if trimmed != base:
            raise ShapeError(f"concat: off-axis shapes disagree: {shapes}")
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [s[axis] for s in shapes]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.array_split(g, splits, axis=axis))

    return _make(out, tuple(tensors), vjp)


def narrow(x: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice [start, start+length) along `axis`."""
    idx = [slice(None)] * x.data.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)

    def vjp(g):
        gx = np.zeros_like(x.data)
        gx[idx] = g
        return (gx,)

    return _make(x.data[idx].copy(), (x,), vjp)


def matmul_batched(a: Tensor, b: Tensor) -> Tensor:
    """(N,P,Q) @ (N,Q,R) -> (N,P,R)."""
    if a.data.ndim != 3 or b.data.ndim != 3:
        raise ShapeError(f"matmul_batched expects rank-3 operands, got {a.data.shape} and {b.data.shape}")
    if a.data.shape[0] != b.data.shape[0] or a.data.shape[2] != b.data.shape[1]:
        raise ShapeError(f"matmul_batched: incompatible shapes {a.data.shape} and {b.data.shape}")
    out = np.matmul(a.data, b.data)
    if _flop_counter is not None:
        n, p, q = a.data.shape
        _flop_counter.macs += n * p * q * b.data.shape[2]

    def vjp(g):
        ga = np.matmul(g, b.data.transpose(0, 2, 1)) if a.requires_grad else None
        gb = np.matmul(a.data.transpose(0, 2, 1), g) if b.requires_grad else None
        return ga, gb

    return _make(out, (a, b), vjp)


@lru_cache(maxsize=None)
def _upsample_matrix(src: int) -> np.ndarray:
    """Row-interpolation matrix (2*src, src) for x2 bilinear upsampling.

    Output pixel centers sit at half-integer source coordinates
    (align_corners=false); edge values are replicated outside the grid.
    """
    dst = 2 * src
    m = np.zeros((dst, src), dtype=np.float64)
    for o in range(dst):
        s = (o + 0.5) / 2.0 - 0.5
        lo = int(np.floor(s))
        w = s - lo
        lo_c = min(max(lo, 0), src - 1)
        hi_c = min(max(lo + 1, 0), src - 1)
        m[o, lo_c] += 1.0 - w
        m[o, hi_c] += w
    return m


def bilinear_upsample_x2(x: Tensor) -> Tensor:
    if x.data.ndim != 4:
        raise ShapeError(f"bilinear_upsample_x2 expects NCHW, got {x.data.shape}")
    _, _, h, w = x.data.shape
    mh = _upsample_matrix(h)
    mw = _upsample_matrix(w)
    out = np.einsum("ph,nchw,qw->ncpq", mh, x.data, mw, optimize=True)

    def vjp(g):
        return (np.einsum("ph,ncpq,qw->nchw", mh, g, mw, optimize=True),)

    return _make(out, (x,), vjp)


# --------------------------------------------------------------------------
# pooling suite
# --------------------------------------------------------------------------

def global_avg_pool(x: Tensor) -> Tensor:
    _, _, h, w = x.data.shape
    out = x.data.mean(axis=(2, 3), keepdims=True)
    return _make(out, (x,), lambda g: (np.broadcast_to(g / (h * w), x.data.shape).copy(),))


def global_max_pool(x: Tensor) -> Tensor:
    n, c, h, w = x.data.shape
    flat = x.data.reshape(n, c, h * w)
    idx = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, idx[..., None], axis=-1).reshape(n, c, 1, 1)

    def vjp(g):
        gx = np.zeros_like(flat)
        np.put_along_axis(gx, idx[..., None], g.reshape(n, c, 1), axis=-1)
        return (gx.reshape(x.data.shape),)

    return _make(out, (x,), vjp)


def directional_avg_pool_h(x: Tensor) -> Tensor:
    """Mean over the width axis; output (N,C,H,1)."""
    w = x.data.shape[3]
    out = x.data.mean(axis=3, keepdims=True)
    return _make(out, (x,), lambda g: (np.broadcast_to(g / w, x.data.shape).copy(),))


def directional_avg_pool_w(x: Tensor) -> Tensor:
    """Mean over the height axis; output (N,C,1,W)."""
    h = x.data.shape[2]
    out = x.data.mean(axis=2, keepdims=True)
    return _make(out, (x,), lambda g: (np.broadcast_to(g / h, x.data.shape).copy(),))


def max_pool2d(x: Tensor, kernel: int, stride: int, padding: int) -> Tensor:
    n, c, h, w = x.data.shape
    xp = np.pad(
        x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)),
        constant_values=-np.inf,
    )
    win = sliding_window_view(xp, (kernel, kernel), axis=(2, 3))[:, :, ::stride, ::stride]
    oh, ow = win.shape[2], win.shape[3]
    flat = win.reshape(n, c, oh, ow, kernel * kernel)
    am = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, am[..., None], axis=-1)[..., 0]

    def vjp(g):
        gp = np.zeros_like(xp)
        for k in range(kernel * kernel):
            i, j = divmod(k, kernel)
            contrib = g * (am == k)
            gp[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += contrib
        if padding:
            gp = gp[:, :, padding : padding + h, padding : padding + w]
        return (gp,)

    return _make(out, (x,), vjp)


# --------------------------------------------------------------------------
# convolution
# --------------------------------------------------------------------------

def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor | None = None,
    stride: int = 1,
    padding: int = 0,
) -> Tensor:
    """NCHW convolution (cross-correlation) with zero padding."""
    if x.data.ndim != 4 or weight.data.ndim != 4:
        raise ShapeError(f"conv2d expects NCHW input and OIHW kernel, got {x.data.shape} and {weight.data.shape}")
    n, c, h, w = x.data.shape
    co, ci, kh, kw = weight.data.shape
    if ci != c:
        raise ShapeError(f"conv2d: input has {c} channels but kernel expects {ci} (input {x.data.shape}, kernel {weight.data.shape})")
    if stride < 1 or padding < 0:
        raise ValueError(f"conv2d: invalid stride={stride} padding={padding}")
    hp, wp = h + 2 * padding, w + 2 * padding
    if kh > hp or kw > wp:
        raise ShapeError(f"conv2d: kernel {(kh, kw)} larger than padded input {(hp, wp)}")

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    oh, ow = win.shape[2], win.shape[3]
    cols = win.transpose(0, 1, 4, 5, 2, 3).reshape(n, c * kh * kw, oh * ow)
    wmat = weight.data.reshape(co, c * kh * kw)
    out = np.matmul(wmat, cols)  # (N, Co, OH*OW)
    if bias is not None:
        out = out + bias.data.reshape(1, co, 1)
    out = out.reshape(n, co, oh, ow)
    if _flop_counter is not None:
        _flop_counter.macs += n * co * oh * ow * c * kh * kw

    def vjp(g):
        gm = g.reshape(n, co, oh * ow)
        gw = gb = gx = None
        if weight.requires_grad:
            gw = np.matmul(gm, cols.transpose(0, 2, 1)).sum(axis=0).reshape(weight.data.shape)
        if bias is not None and bias.requires_grad:
            gb = gm.sum(axis=(0, 2)).reshape(bias.data.shape)
        if x.requires_grad:
            gcols = np.matmul(wmat.T, gm).reshape(n, c, kh, kw, oh, ow)
            gxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += gcols[:, :, i, j]
            gx = gxp[:, :, padding : padding + h, padding : padding + w] if padding else gxp
        return (gx, gw, gb) if bias is not None else (gx, gw)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _make(out, parents, vjp)


def conv3d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor | None = None,
    padding_spatial: int = 0,
) -> Tensor:
    """NCDHW convolution; depth runs valid-mode, H/W get zero padding."""
    if x.data.ndim != 5 or weight.data.ndim != 5:
        raise ShapeError(f"conv3d expects NCDHW input and OIDHW kernel, got {x.data.shape} and {weight.data.shape}")
    n, c, d, h, w = x.data.shape
    co, ci, kd, kh, kw = weight.data.shape
    if ci != c:
        raise ShapeError(f"conv3d: input has {c} channels but kernel expects {ci}")
    if kd > d:
        raise ShapeError(f"conv3d: temporal kernel {kd} exceeds input depth {d}")
    p = padding_spatial
    xp = np.pad(x.data, ((0, 0), (0, 0), (0, 0), (p, p), (p, p)))
    win = sliding_window_view(xp, (kd, kh, kw), axis=(2, 3, 4))
    od, oh, ow = win.shape[2], win.shape[3], win.shape[4]
    cols = win.transpose(0, 1, 5, 6, 7, 2, 3, 4).reshape(n, c * kd * kh * kw, od * oh * ow)
    wmat = weight.data.reshape(co, c * kd * kh * kw)
    out = np.matmul(wmat, cols)
    if bias is not None:
        out = out + bias.data.reshape(1, co, 1)
    out = out.reshape(n, co, od, oh, ow)
    if _flop_counter is not None:
        _flop_counter.macs += n * co * od * oh * ow * c * kd * kh * kw

    def vjp(g):
        gm = g.reshape(n, co, od * oh * ow)
        gw = gb = gx = None
        if weight.requires_grad:
            gw = np.matmul(gm, cols.transpose(0, 2, 1)).sum(axis=0).reshape(weight.data.shape)
        if bias is not None and bias.requires_grad:
            gb = gm.sum(axis=(0, 2)).reshape(bias.data.shape)
        if x.requires_grad:
            gcols = np.matmul(wmat.T, gm).reshape(n, c, kd, kh, kw, od, oh, ow)
            gxp = np.zeros_like(xp)
            for t in range(kd):
                for i in range(kh):
                    for j in range(kw):
                        gxp[:, :, t : t + od, i : i + oh, j : j + ow] += gcols[:, :, t, i, j]
            gx = gxp[:, :, :, p : p + h, p : p + w] if p else gxp
        return (gx, gw, gb) if bias is not None else (gx, gw)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _make(out, parents, vjp)


# --------------------------------------------------------------------------
# batch normalization (functional)
# --------------------------------------------------------------------------

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


def batch_norm2d(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    eps: float = BN_EPS,
    momentum: float = BN_MOMENTUM,
) -> Tensor:
    """Per-channel batch normalization over (N, H, W).

    Training mode normalizes by batch statistics and updates the running
    buffers in place (biased variance normalizes; unbiased feeds the running
    estimate).  Eval mode uses the running buffers.
    """
    n, c, h, w = x.data.shape
    if gamma.data.shape != (c,) or beta.data.shape != (c,):
        raise ShapeError(f"batch_norm2d: gamma/beta must have shape ({c},)")
    if training:
        count = n * h * w
        if count <= 1:
            raise ShapeError("batch_norm2d: a single value per channel has no batch variance")
        mu = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * var * count / (count - 1)
    else:
        mu = running_mean
        var = running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu.reshape(1, c, 1, 1)) * inv_std.reshape(1, c, 1, 1)
    out = gamma.data.reshape(1, c, 1, 1) * xhat + beta.data.reshape(1, c, 1, 1)

    def vjp(g):
        gg = (g * xhat).sum(axis=(0, 2, 3)) if gamma.requires_grad else None
        gb = g.sum(axis=(0, 2, 3)) if beta.requires_grad else None
        gx = None
        if x.requires_grad:
            scale = (gamma.data * inv_std).reshape(1, c, 1, 1)
            if training:
                m = n * h * w
                gsum = g.sum(axis=(0, 2, 3), keepdims=True)
                gxhat = (g * xhat).sum(axis=(0, 2, 3), keepdims=True)
                gx = scale * (g - gsum / m - xhat * gxhat / m)
            else:
                gx = scale * g
        return gx, gg, gb

    return _make(out, (x, gamma, beta), vjp)


# --------------------------------------------------------------------------
# gradient checking
# --------------------------------------------------------------------------

def grad_check(
    fn: Callable[[Tensor], Tensor],
    point: Tensor,
    eps: float = 1e-5,
    max_entries: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    `fn` must be a deterministic scalar-valued function of its argument.
    Relative error per component is |a - n| / max(|a|, |n|, 1e-8).  When
    `max_entries` is given, a random subset of coordinates is probed.
    """
    probe = Tensor(point.data.copy(), requires_grad=True)
    out = fn(probe)
    if out.data.size != 1:
        raise ShapeError("grad_check: fn must return a scalar tensor")
    backward(out)
    analytic = probe.grad if probe.grad is not None else np.zeros_like(probe.data)

    flat = point.data.reshape(-1)
    indices = np.arange(flat.size)
    if max_entries is not None and max_entries < flat.size:
        rng = rng or np.random.default_rng(0)
        indices = rng.choice(flat.size, size=max_entries, replace=False)

    worst = 0.0
    base = flat.copy()
    for i in indices:
        for sign in (+1.0, -1.0):
            base[i] = flat[i] + sign * eps
            with no_grad():
                val = fn(Tensor(base.reshape(point.data.shape))).item()
            if sign > 0:
                f_plus = val
            else:
                f_minus = val
        base[i] = flat[i]
        numeric = (f_plus - f_minus) / (2.0 * eps)
        a = analytic.reshape(-1)[i]
        err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
        worst = max(worst, err)
    return worst


# --------------------------------------------------------------------------
# binary serialization: magic "FSGT", u32 rank, u64 dims, f64 payload (LE)
# --------------------------------------------------------------------------

TENSOR_MAGIC = b"FSGT"


def write_tensor_record(f: BinaryIO, arr: np.ndarray) -> None:
    arr = np.asarray(arr, dtype=np.float64)
    f.write(TENSOR_MAGIC)
    f.write(struct.pack("<I", arr.ndim))
    if arr.ndim:
        f.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
    f.write(arr.astype("<f8", copy=False).tobytes(order="C"))


def read_tensor_record(f: BinaryIO) -> np.ndarray:
    magic = f.read(4)
    if magic != TENSOR_MAGIC:
        raise ValueError(f"bad tensor record magic {magic!r}")
    (rank,) = struct.unpack("<I", f.read(4))
    dims = struct.unpack(f"<{rank}Q", f.read(8 * rank)) if rank else ()
    count = int(np.prod(dims)) if dims else 1
    payload = f.read(8 * count)
    if len(payload) != 8 * count:
        raise ValueError("truncated tensor record")
    return np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(dims)


def save_tensor(path, tensor: Tensor) -> None:
    with open(path, "wb") as f:
        write_tensor_record(f, tensor.data)


def load_tensor(path) -> Tensor:
    with open(path, "rb") as f:
        return Tensor(read_tensor_record(f))
