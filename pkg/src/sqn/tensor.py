"""Dense tensors with reverse-mode automatic differentiation.

Float32 by default; pass dtype=np.float64 at leaf creation for shadow-mode
gradient checking (every op follows its inputs' dtype). Graphs are rebuilt
per step and are confined to one thread during forward/backward.
"""

from __future__ import annotations

import struct

import numpy as np


class ShapeError(ValueError):
    pass


_GRAD_ENABLED = True


class no_grad:
    """Context manager that skips graph construction (inference paths)."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad=False, dtype=np.float32):
        self.data = np.asarray(data, dtype=dtype)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None
        self._op = "leaf"

    @classmethod
    def _result(cls, data, parents, backward, op):
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.requires_grad = _GRAD_ENABLED and any(p.requires_grad for p in parents)
        out._parents = tuple(parents) if out.requires_grad else ()
        out._backward = backward if out.requires_grad else None
        out._op = op
        return out

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, op={self._op}, grad={self.grad is not None})"


def _accum(t: Tensor, g, own=False):
    """Add a gradient contribution; `own=True` promises g is a freshly
    allocated array nothing else references, letting the first consumer
    adopt it without a copy."""
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = g if own else g.copy()
    else:
        t.grad += g


def _unbroadcast(g, shape):
    """Reduce a broadcasted gradient back to `shape`."""
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def backward(loss: Tensor) -> None:
    """Populate grads of everything reachable from a scalar loss."""
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    if not loss.requires_grad:
        raise ValueError("loss does not require grad")

    # iterative topological order; each node visited exactly once
    topo, visited, stack = [], set(), [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))

    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


# ---------------------------------------------------------------------------
# ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim < 2 or b.data.ndim != 2 or a.data.shape[-1] != b.data.shape[0]:
        raise ShapeError(f"matmul shapes {a.data.shape} x {b.data.shape}")
    m, p = b.data.shape
    if a.data.ndim == 2:
        out_data = np.matmul(a.data, b.data)
    else:
        # one flat GEMM instead of a stacked loop
        out_data = np.matmul(a.data.reshape(-1, m), b.data).reshape(*a.data.shape[:-1], p)

    def bwd(g):
        g2 = g.reshape(-1, p)
        _accum(a, np.matmul(g2, b.data.T).reshape(a.data.shape), own=True)
        _accum(b, np.matmul(a.data.reshape(-1, m).T, g2), own=True)

    return Tensor._result(out_data, (a, b), bwd, "matmul")


def add(a: Tensor, b: Tensor) -> Tensor:
    try:
        out_data = a.data + b.data
    except ValueError:
        raise ShapeError(f"add shapes {a.data.shape} + {b.data.shape}")

    def bwd(g):
        ga = _unbroadcast(g, a.data.shape)
        _accum(a, ga, own=ga is not g)
        gb = _unbroadcast(g, b.data.shape)
        _accum(b, gb, own=gb is not g)

    return Tensor._result(out_data, (a, b), bwd, "add")


def mul(a: Tensor, b: Tensor) -> Tensor:
    try:
        out_data = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul shapes {a.data.shape} * {b.data.shape}")

    def bwd(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape), own=True)
        _accum(b, _unbroadcast(g * a.data, b.data.shape), own=True)

    return Tensor._result(out_data, (a, b), bwd, "mul")


def neg(a: Tensor) -> Tensor:
    def bwd(g):
        _accum(a, -g, own=True)

    return Tensor._result(-a.data, (a,), bwd, "neg")


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)

    def bwd(g):
        _accum(a, g * s, own=True)

    return Tensor._result(a.data * np.asarray(s, dtype=a.data.dtype), (a,), bwd, "scale")


def concat(tensors, axis: int) -> Tensor:
    tensors = list(tensors)
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            _accum(t, g[tuple(sl)])

    return Tensor._result(out_data, tensors, bwd, "concat")


def gather(t: Tensor, idx) -> Tensor:
    """Rows t[idx]; idx may have any shape. Backward scatters additively, so
    rows never gathered receive exactly zero gradient."""
    idx = np.asarray(idx, dtype=np.int64)
    out_data = t.data[idx]

    def bwd(g):
        if not t.requires_grad:
            return
        if t.grad is None:
            t.grad = np.zeros_like(t.data)
        flat_idx = idx.reshape(-1)
        flat_g = g.reshape(-1, *t.data.shape[1:])
        if t.data.ndim == 2:
            # bincount per column: much faster than ufunc.at for K-NN gathers
            n = t.data.shape[0]
            for d in range(t.data.shape[1]):
                t.grad[:, d] += np.bincount(flat_idx, weights=flat_g[:, d], minlength=n)
        else:
            np.add.at(t.grad, flat_idx, flat_g)

    return Tensor._result(out_data, (t,), bwd, "gather")


def relu(a: Tensor) -> Tensor:
    out_data = np.maximum(a.data, 0)

    def bwd(g):
        _accum(a, g * (a.data > 0), own=True)

    return Tensor._result(out_data, (a,), bwd, "relu")


def leaky_relu(a: Tensor, alpha: float = 0.2) -> Tensor:
    mask = a.data > 0
    out_data = np.where(mask, a.data, a.data * a.data.dtype.type(alpha))

    slope = np.where(mask, a.data.dtype.type(1.0), a.data.dtype.type(alpha))

    def bwd(g):
        _accum(a, g * slope, own=True)

    return Tensor._result(out_data, (a,), bwd, "leaky_relu")


def softmax(a: Tensor, axis: int) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        dot = (g * out_data).sum(axis=axis, keepdims=True)
        _accum(a, out_data * (g - dot), own=True)

    return Tensor._result(out_data, (a,), bwd, "softmax")


def log_softmax(a: Tensor, axis: int) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out_data = shifted - lse

    def bwd(g):
        _accum(a, g - np.exp(out_data) * g.sum(axis=axis, keepdims=True), own=True)

    return Tensor._result(out_data, (a,), bwd, "log_softmax")


def reduce_sum(a: Tensor, axis=None, keepdims=False) -> Tensor:
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g, a.data.shape).copy(), own=True)

    return Tensor._result(out_data, (a,), bwd, "reduce_sum")


def reduce_mean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    count = a.data.size if axis is None else a.data.shape[axis]
    out = reduce_sum(a, axis=axis, keepdims=keepdims)
    return scale(out, 1.0 / count)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    out = matmul(x, w)
    if b is not None:
        out = add(out, b)
    return out


# ---------------------------------------------------------------------------
# parameters + optimizer


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None):
    a = np.sqrt(6.0 / (fan_in + fan_out))
    shape = shape if shape is not None else (fan_in, fan_out)
    return rng.uniform(-a, a, size=shape).astype(np.float32)


class Parameters:
    """Named trainable tensors plus per-parameter Adam moments."""

    def __init__(self):
        self._tensors: dict[str, Tensor] = {}
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self.step = 0

    def add(self, name: str, data) -> Tensor:
        if name in self._tensors:
            raise ValueError(f"duplicate parameter {name!r}")
        t = Tensor(data, requires_grad=True)
        self._tensors[name] = t
        self._m[name] = np.zeros_like(t.data)
        self._v[name] = np.zeros_like(t.data)
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name):
        return name in self._tensors

    def names(self):
        return list(self._tensors)

    def items(self):
        return self._tensors.items()

    def zero_grad(self):
        for t in self._tensors.values():
            t.grad = None

    def num_values(self):
        return sum(t.data.size for t in self._tensors.values())

    def clone_data(self):
        return {k: t.data.copy() for k, t in self._tensors.items()}


def adam_step(params: Parameters, lr: float, beta1=0.9, beta2=0.999, eps=1e-8) -> None:
    """Bias-corrected moment update; grads are zeroed afterwards."""
    params.step += 1
    t = params.step
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for name, p in params.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        m = params._m[name]
        v = params._v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        mhat = m / bc1
        vhat = v / bc2
        p.data -= (lr * mhat / (np.sqrt(vhat) + eps)).astype(p.data.dtype)
    params.zero_grad()


# ---------------------------------------------------------------------------
# checkpoints ("SQNW v1")

SQNW_MAGIC = b"SQNW"
SQNW_VERSION = 1


class CheckpointError(Exception):
    pass


def save_checkpoint(params: Parameters, path) -> None:
    with open(path, "wb") as f:
        f.write(SQNW_MAGIC)
        f.write(struct.pack("<BI", SQNW_VERSION, len(params._tensors)))
        for name, t in params.items():
            nb = name.encode("utf-8")
            f.write(struct.pack("<H", len(nb)))
            f.write(nb)
            f.write(struct.pack("<B", t.data.ndim))
            for d in t.data.shape:
                f.write(struct.pack("<Q", d))
            f.write(np.ascontiguousarray(t.data, dtype="<f4").tobytes())
        f.write(struct.pack("<Q", params.step))


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], int]:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != SQNW_MAGIC:
        raise CheckpointError(f"bad magic {raw[:4]!r}")
    version, count = struct.unpack("<BI", raw[4:9])
    if version != SQNW_VERSION:
        raise CheckpointError(f"unsupported version {version}")
    off = 9
    out = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", raw, off)
        off += 2
        name = raw[off : off + nlen].decode("utf-8")
        off += nlen
        (rank,) = struct.unpack_from("<B", raw, off)
        off += 1
        dims = struct.unpack_from(f"<{rank}Q", raw, off)
        off += 8 * rank
        size = int(np.prod(dims)) if rank else 1
        data = np.frombuffer(raw, dtype="<f4", count=size, offset=off).reshape(dims)
        off += 4 * size
        out[name] = data.copy()
    (step,) = struct.unpack_from("<Q", raw, off)
    return out, step


def restore_parameters(state: dict[str, np.ndarray], step: int = 0) -> Parameters:
    params = Parameters()
    for name, data in state.items():
        params.add(name, data)
    params.step = step
    return params
