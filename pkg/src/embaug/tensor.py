"""Reverse-mode automatic differentiation on flat numpy buffers.

The op set is exactly what the networks here need: conv2d, affine, relu,
2x2 max-pooling, flatten/reshape, mean-squared error and softmax
cross-entropy, plus SGD with momentum and a central-difference gradient
checker. Ops accept single samples or a leading batch axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _conv

DEFAULT_DTYPE = np.float32


class DimensionError(ValueError):
    """Shapes or dtypes of operands do not compose."""


class NumericError(RuntimeError):
    """Non-finite value detected, or gradients missing/invalid."""


class Tensor:
    """N-dimensional value, optionally tracked on a tape.

    `data` is a numpy array (float32 by default, float64 for checking).
    `grad` is filled by Tape.backward for tensors marked `is_param`.
    """

    __slots__ = ("data", "grad", "is_param", "node_id", "tape")

    def __init__(self, data, dtype=None, is_param=False):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.grad = None
        self.is_param = is_param
        self.node_id = None
        self.tape = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return self.data.item()

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype.name}, param={self.is_param})"


class _Node:
    __slots__ = ("op", "parents", "grad_fn", "tensor")

    def __init__(self, op, parents, grad_fn, tensor):
        self.op = op
        self.parents = parents
        self.grad_fn = grad_fn
        self.tensor = tensor


class Tape:
    """Ordered record of operations; inputs always precede consumers.

    A tape and its tensors belong to one thread. `check_finite=True`
    raises NumericError as soon as an op produces NaN/Inf.
    """

    def __init__(self, check_finite=False):
        self.nodes = []
        self.check_finite = check_finite

    def _ensure(self, t: Tensor) -> int:
        if t.tape is self and t.node_id is not None:
            return t.node_id
        t.tape = self
        t.node_id = len(self.nodes)
        self.nodes.append(_Node("leaf", (), None, t))
        return t.node_id

    def _record(self, op, in_tensors, out: Tensor, grad_fn):
        parents = tuple(self._ensure(t) for t in in_tensors)
        out.tape = self
        out.node_id = len(self.nodes)
        self.nodes.append(_Node(op, parents, grad_fn, out))
        if self.check_finite and not np.all(np.isfinite(out.data)):
            raise NumericError(f"non-finite output of {op}")
        return out

    def backward(self, loss: Tensor):
        """Accumulate d(loss)/d(param) into .grad of every param leaf."""
        if loss.tape is not self or loss.node_id is None:
            raise NumericError("loss tensor does not belong to this tape")
        if loss.data.size != 1:
            raise NumericError("backward requires a scalar terminal node")
        adjoints = [None] * len(self.nodes)
        adjoints[loss.node_id] = np.ones_like(loss.data)
        for nid in range(len(self.nodes) - 1, -1, -1):
            adj = adjoints[nid]
            if adj is None:
                continue
            node = self.nodes[nid]
            if node.grad_fn is not None:
                for pid, g in zip(node.parents, node.grad_fn(adj)):
                    if g is None:
                        continue
                    if adjoints[pid] is None:
                        adjoints[pid] = g
                    else:
                        adjoints[pid] = adjoints[pid] + g
            t = node.tensor
            if t.is_param:
                if t.grad is None:
                    t.grad = adj.reshape(t.data.shape).copy()
                else:
                    t.grad += adj.reshape(t.data.shape)


def _same_dtype(*tensors):
    dt = tensors[0].data.dtype
    for t in tensors[1:]:
        if t.data.dtype != dt:
            raise DimensionError(f"mixed dtypes {dt} vs {t.data.dtype}")
    return dt


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor, stride=1, padding=0, tape=None) -> Tensor:
    """Cross-correlation (no kernel flip) with zero padding.

    x: (Ci, H, W) or (N, Ci, H, W); kernel: (Co, Ci, Kh, Kw); bias: (Co,).
    Output spatial dims: floor((H + 2*padding - Kh)/stride) + 1.
    """
    dt = _same_dtype(x, kernel, bias)
    batched = x.data.ndim == 4
    xd = x.data if batched else x.data[None]
    n, ci, h, w = xd.shape
    co, kci, kh, kw = kernel.data.shape
    if kci != ci:
        raise DimensionError(f"kernel expects {kci} input channels, got {ci}")
    if bias.data.shape != (co,):
        raise DimensionError(f"bias shape {bias.data.shape} != ({co},)")
    if h + 2 * padding < kh or w + 2 * padding < kw:
        raise DimensionError("kernel larger than padded input")
    if stride < 1 or padding < 0:
        raise DimensionError("stride must be >= 1 and padding >= 0")
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    xp = np.zeros((n, ci, h + 2 * padding, w + 2 * padding), dtype=dt)
    xp[:, :, padding:padding + h, padding:padding + w] = xd
    out = np.empty((n, co, ho, wo), dtype=dt)
    _conv.conv_forward(xp, kernel.data, bias.data, stride, out)
    res = Tensor(out if batched else out[0])
    if tape is None:
        return res

    def grad_fn(gout):
        go = np.ascontiguousarray(gout if batched else gout[None])
        gxp = np.zeros_like(xp)
        _conv.conv_backward_input(go, kernel.data, stride, gxp)
        gx = gxp[:, :, padding:padding + h, padding:padding + w]
        gk = np.empty_like(kernel.data)
        _conv.conv_backward_kernel(go, xp, stride, gk)
        gb = go.sum(axis=(0, 2, 3))
        return (gx if batched else gx[0]), gk, gb

    return tape._record("conv2d", (x, kernel, bias), res, grad_fn)


def affine(x: Tensor, weight: Tensor, bias: Tensor, tape=None) -> Tensor:
    """out[k] = sum_j weight[k, j] * x[j] + bias[k]; x may carry a batch axis."""
    _same_dtype(x, weight, bias)
    d_out, d_in = weight.data.shape
    batched = x.data.ndim == 2
    if x.data.shape[-1] != d_in:
        raise DimensionError(f"affine expects input dim {d_in}, got {x.data.shape}")
    if bias.data.shape != (d_out,):
        raise DimensionError(f"bias shape {bias.data.shape} != ({d_out},)")
    if batched:
        out = x.data @ weight.data.T + bias.data
    else:
        out = weight.data @ x.data + bias.data
    res = Tensor(out)
    if tape is None:
        return res

    def grad_fn(gout):
        if batched:
            return gout @ weight.data, gout.T @ x.data, gout.sum(axis=0)
        return weight.data.T @ gout, np.outer(gout, x.data), gout

    return tape._record("affine", (x, weight, bias), res, grad_fn)


def relu(x: Tensor, tape=None) -> Tensor:
    res = Tensor(np.maximum(x.data, 0))
    if tape is None:
        return res

    def grad_fn(gout):
        return (gout * (x.data > 0).astype(x.data.dtype),)

    return tape._record("relu", (x,), res, grad_fn)


def maxpool2x2(x: Tensor, tape=None) -> Tensor:
    """2x2 window max with stride 2; odd trailing row/column is dropped."""
    if x.data.ndim not in (3, 4):
        raise DimensionError(f"maxpool2x2 expects rank 3 or 4, got {x.data.ndim}")
    batched = x.data.ndim == 4
    xd = x.data if batched else x.data[None]
    n, c, h, w = xd.shape
    he, we = (h // 2) * 2, (w // 2) * 2
    if he == 0 or we == 0:
        raise DimensionError("spatial dims too small for 2x2 pooling")
    xc = xd[:, :, :he, :we]
    win = xc.reshape(n, c, he // 2, 2, we // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    flat = win.reshape(n, c, he // 2, we // 2, 4)
    arg = flat.argmax(axis=-1)  # first max in row-major window order
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
    res = Tensor(out if batched else out[0])
    if tape is None:
        return res

    def grad_fn(gout):
        go = gout if batched else gout[None]
        gflat = np.zeros_like(flat)
        np.put_along_axis(gflat, arg[..., None], go[..., None], axis=-1)
        gwin = gflat.reshape(n, c, he // 2, we // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
        gx = np.zeros_like(xd)
        gx[:, :, :he, :we] = gwin.reshape(n, c, he, we)
        return (gx if batched else gx[0],)

    return tape._record("maxpool2x2", (x,), res, grad_fn)


def reshape(x: Tensor, shape, tape=None) -> Tensor:
    res = Tensor(x.data.reshape(shape))
    if tape is None:
        return res

    def grad_fn(gout):
        return (gout.reshape(x.data.shape),)

    return tape._record("reshape", (x,), res, grad_fn)


def flatten(x: Tensor, tape=None) -> Tensor:
    """Row-major reshape to 1-D."""
    return reshape(x, (-1,), tape=tape)


def activation_pool(x: Tensor, kind: str, tape=None) -> Tensor:
    """Dispatch for the elementwise/pooling/reshape layer kinds."""
    if kind == "relu":
        return relu(x, tape=tape)
    if kind == "maxpool2x2":
        return maxpool2x2(x, tape=tape)
    if kind == "flatten":
        return flatten(x, tape=tape)
    raise DimensionError(f"unknown activation/pool kind {kind!r}")


def mse(pred: Tensor, target: Tensor, tape=None) -> Tensor:
    """Mean of squared differences over every element (batch included)."""
    _same_dtype(pred, target)
    if pred.data.shape != target.data.shape:
        raise DimensionError(f"mse shapes differ: {pred.data.shape} vs {target.data.shape}")
    diff = pred.data - target.data
    res = Tensor(np.asarray(np.mean(diff * diff), dtype=pred.data.dtype))
    if tape is None:
        return res

    def grad_fn(gout):
        g = (2.0 / diff.size) * diff * gout
        return g.astype(pred.data.dtype, copy=False), (-g).astype(pred.data.dtype, copy=False)

    return tape._record("mse", (pred, target), res, grad_fn)


def softmax_xent(logits: Tensor, target, tape=None) -> Tensor:
    """-log softmax(logits)[target]; mean over the batch when batched.

    target: class index (int) for a 1-D logit vector, or an int array of
    shape (N,) for an (N, C) batch.
    """
    batched = logits.data.ndim == 2
    ld = logits.data if batched else logits.data[None]
    idx = np.asarray(target, dtype=np.int64).reshape(-1)
    if idx.shape[0] != ld.shape[0]:
        raise DimensionError(f"{idx.shape[0]} targets for batch of {ld.shape[0]}")
    if np.any(idx < 0) or np.any(idx >= ld.shape[1]):
        raise DimensionError("class index out of range")
    shifted = ld - ld.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    per_sample = lse - shifted[np.arange(ld.shape[0]), idx]
    res = Tensor(np.asarray(per_sample.mean(), dtype=ld.dtype))
    if tape is None:
        return res

    def grad_fn(gout):
        p = np.exp(shifted)
        p /= p.sum(axis=1, keepdims=True)
        p[np.arange(ld.shape[0]), idx] -= 1.0
        g = (p * (gout / ld.shape[0])).astype(ld.dtype, copy=False)
        return (g if batched else g[0],)

    return tape._record("softmax_xent", (logits,), res, grad_fn)


class SGD:
    """Plain SGD: v <- momentum*v + g; p <- p - lr*v.

    Velocity buffers exist only when momentum > 0.
    """

    def __init__(self, params: dict, lr: float, momentum: float = 0.0):
        if lr < 0:
            raise ValueError("learning rate must be non-negative")
        if not 0.0 <= momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        self.params = dict(params)
        self.lr = lr
        self.momentum = momentum
        self.velocity = (
            {name: np.zeros_like(p.data) for name, p in self.params.items()}
            if momentum > 0
            else None
        )

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def step(self):
        for name, p in self.params.items():
            if p.grad is None:
                raise NumericError(f"missing gradient for parameter {name!r}")
            if self.momentum > 0:
                v = self.velocity[name]
                v *= self.momentum
                v += p.grad
                p.data -= (self.lr * v).astype(p.data.dtype, copy=False)
            else:
                p.data -= (self.lr * p.grad).astype(p.data.dtype, copy=False)


@dataclass
class GradCheckResult:
    max_rel_error: float
    flagged: list = field(default_factory=list)  # (name, flat index) skipped near kinks


def grad_check(fn, params: dict, epsilon: float = 1e-5, kink_distance=None) -> GradCheckResult:
    """Compare tape gradients of fn against central finite differences.

    fn(tape) -> scalar Tensor, closing over `params` (float64 tensors).
    kink_distance(name, values) may return per-coordinate distances to the
    nearest non-differentiable point; coordinates closer than 2*epsilon are
    flagged and skipped rather than failed.
    """
    for name, p in params.items():
        if p.data.dtype != np.float64:
            raise NumericError(f"grad_check requires float64 parameters ({name!r} is {p.data.dtype})")
        p.grad = None
    tape = Tape()
    loss = fn(tape)
    tape.backward(loss)
    analytic = {name: np.array(p.grad, dtype=np.float64) for name, p in params.items()}

    result = GradCheckResult(0.0)
    for name, p in params.items():
        flat = p.data.reshape(-1)
        dist = None
        if kink_distance is not None:
            d = kink_distance(name, p.data)
            dist = None if d is None else np.asarray(d, dtype=np.float64).reshape(-1)
        for i in range(flat.size):
            if dist is not None and dist[i] < 2 * epsilon:
                result.flagged.append((name, i))
                continue
            saved = flat[i]
            flat[i] = saved + epsilon
            f_plus = fn(None).item()
            flat[i] = saved - epsilon
            f_minus = fn(None).item()
            flat[i] = saved
            numeric = (f_plus - f_minus) / (2 * epsilon)
            a = analytic[name].reshape(-1)[i]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            if rel > result.max_rel_error:
                result.max_rel_error = rel
    return result
