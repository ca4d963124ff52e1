"""Deterministic float64 tensor algebra with a small reverse-mode tape.

Tensors are plain ``numpy.ndarray`` (float64, C-contiguous). Every primitive
here accepts either arrays or :class:`Var` nodes. When no argument is a
``Var`` the primitive is a pure numpy computation and returns an array; when
any argument is a ``Var`` the result is a ``Var`` recorded on that node's
:class:`GradientTape`.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class ShapeError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


class TapeError(RuntimeError):
    pass


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based 64-bit generator; identical streams for identical seeds."""
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass(eq=False)
class Parameter:
    name: str
    value: np.ndarray
    gradient: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.value = np.ascontiguousarray(self.value, dtype=np.float64)
        if self.gradient is None:
            self.gradient = np.zeros_like(self.value)
        if self.gradient.shape != self.value.shape:
            raise ShapeError(f"{self.name}: gradient shape {self.gradient.shape} != value shape {self.value.shape}")

    @property
    def shape(self):
        return self.value.shape

    @property
    def size(self) -> int:
        return self.value.size

    def zero_grad(self):
        self.gradient[...] = 0.0


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


# ---------------------------------------------------------------------------
# tape

class Var:
    __slots__ = ("value", "grad", "tape", "parents", "backward_fn", "param")

    def __init__(self, value, tape, parents=(), backward_fn=None, param=None):
        self.value = value
        self.grad = None
        self.tape = tape
        self.parents = parents
        self.backward_fn = backward_fn
        self.param = param

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return bmm(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def __repr__(self):
        return f"Var(shape={self.value.shape})"


class GradientTape:
    """Records primitives in creation order; replays them once in reverse."""

    def __init__(self):
        self.nodes: list[Var] = []
        self._watched: dict[int, Var] = {}
        self._consumed = False

    def watch(self, p: Parameter) -> Var:
        v = self._watched.get(id(p))
        if v is None:
            v = Var(p.value, self, param=p)
            self._watched[id(p)] = v
        return v

    def _record(self, value, parents, backward_fn) -> Var:
        if self._consumed:
            raise TapeError("tape already consumed by backward(); record a fresh forward pass")
        v = Var(value, self, parents, backward_fn)
        self.nodes.append(v)
        return v

    def backward(self, loss: Var):
        if self._consumed:
            raise TapeError("backward() called twice on the same tape")
        if not self.nodes:
            raise TapeError("backward() on an empty tape")
        if not isinstance(loss, Var) or loss.tape is not self:
            raise TapeError("loss was not recorded on this tape")
        if loss.value.size != 1:
            raise ShapeError(f"loss must be scalar, got shape {loss.value.shape}")
        self._consumed = True
        loss.grad = np.ones_like(loss.value)
        for node in reversed(self.nodes):
            if node.grad is None:
                continue
            grads = node.backward_fn(node.grad)
            for parent, g in zip(node.parents, grads):
                if g is None or not isinstance(parent, Var):
                    continue
                # out-of-place: g may alias another node's buffer
                parent.grad = g if parent.grad is None else parent.grad + g
        for leaf in self._watched.values():
            if leaf.grad is None:
                leaf.param.gradient[...] = 0.0
            else:
                leaf.param.gradient[...] = leaf.grad
        # drop references so intermediate arrays can be freed
        for node in self.nodes:
            node.grad = None
            node.backward_fn = None
            node.parents = ()


def record_and_backward(tape: GradientTape, loss: Var):
    tape.backward(loss)


def _val(x):
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=np.float64)


def _tape_of(*xs):
    tape = None
    for x in xs:
        if isinstance(x, Var):
            if tape is None:
                tape = x.tape
            elif x.tape is not tape:
                raise TapeError("operands recorded on different tapes")
    return tape


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# primitives

def add(a, b):
    av, bv = _val(a), _val(b)
    out = av + bv
    tape = _tape_of(a, b)
    if tape is None:
        return out
    return tape._record(out, (a, b), lambda g: (_unbroadcast(g, av.shape), _unbroadcast(g, bv.shape)))


def sub(a, b):
    av, bv = _val(a), _val(b)
    out = av - bv
    tape = _tape_of(a, b)
    if tape is None:
        return out
    return tape._record(out, (a, b), lambda g: (_unbroadcast(g, av.shape), -_unbroadcast(g, bv.shape)))


def mul(a, b):
    av, bv = _val(a), _val(b)
    out = av * bv
    tape = _tape_of(a, b)
    if tape is None:
        return out
    return tape._record(
        out, (a, b),
        lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)),
    )


def bmm(a, b):
    """Batched matrix product with numpy broadcasting over leading axes."""
    av, bv = _val(a), _val(b)
    if av.ndim < 2 or bv.ndim < 2 or av.shape[-1] != bv.shape[-2]:
        raise ShapeError(f"matmul shape mismatch: {av.shape} x {bv.shape}")
    out = _mm(av, bv)
    tape = _tape_of(a, b)
    if tape is None:
        return out

    def back(g):
        ga = _mm(g, np.swapaxes(bv, -1, -2)) if isinstance(a, Var) else None
        gb = np.swapaxes(av, -1, -2) @ g if isinstance(b, Var) else None
        return (
            None if ga is None else _unbroadcast(ga, av.shape),
            None if gb is None else _unbroadcast(gb, bv.shape),
        )

    return tape._record(out, (a, b), back)


def _mm(a, b):
    # one GEMM instead of a loop of small ones when the right operand is a matrix
    if b.ndim == 2 and a.ndim > 2:
        return (a.reshape(-1, a.shape[-1]) @ b).reshape(a.shape[:-1] + (b.shape[1],))
    return a @ b


def apply_along(x, M: np.ndarray, axis: int):
    """out[.., k, ..] = sum_f M[k, f] x[.., f, ..] for a constant matrix M."""
    xv = _val(x)
    axis = axis % xv.ndim
    if xv.shape[axis] != M.shape[1]:
        raise ShapeError(f"axis {axis} has length {xv.shape[axis]}, matrix expects {M.shape[1]}")
    out = np.moveaxis(np.tensordot(xv, M, axes=([axis], [1])), -1, axis)
    tape = _tape_of(x)
    if tape is None:
        return out
    return tape._record(
        out, (x,),
        lambda g: (np.moveaxis(np.tensordot(g, M, axes=([axis], [0])), -1, axis),),
    )


def matmul(a, b):
    """Plain 2-D product c[i, j] = sum_l a[i, l] b[l, j]."""
    av, bv = _val(a), _val(b)
    if av.ndim != 2 or bv.ndim != 2 or av.shape[1] != bv.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {av.shape} x {bv.shape}")
    return bmm(a, b)


def einsum(subscripts: str, a, b):
    """Two-operand einsum without repeated or ellipsis indices."""
    ins, out_s = subscripts.replace(" ", "").split("->")
    sa, sb = ins.split(",")
    av, bv = _val(a), _val(b)
    out = np.einsum(subscripts, av, bv, optimize=True)
    tape = _tape_of(a, b)
    if tape is None:
        return out
    sizes = dict(zip(sa, av.shape)) | dict(zip(sb, bv.shape))

    def grad_for(s_target, s_other, other, g):
        keep = "".join(c for c in s_target if c in out_s or c in s_other)
        r = np.einsum(f"{out_s},{s_other}->{keep}", g, other, optimize=True)
        if keep != s_target:
            # indices summed away in the forward pass broadcast back
            shape = [sizes[c] if c in keep else 1 for c in s_target]
            perm = [keep.index(c) for c in s_target if c in keep]
            r = np.transpose(r, perm).reshape(shape)
            r = np.broadcast_to(r, [sizes[c] for c in s_target])
        return r

    def back(g):
        ga = grad_for(sa, sb, bv, g) if isinstance(a, Var) else None
        gb = grad_for(sb, sa, av, g) if isinstance(b, Var) else None
        return ga, gb

    return tape._record(out, (a, b), back)


def relu(x):
    xv = _val(x)
    out = np.maximum(xv, 0.0)
    tape = _tape_of(x)
    if tape is None:
        return out
    return tape._record(out, (x,), lambda g: (g * (xv > 0),))


def sigmoid(x):
    xv = _val(x)
    out = 0.5 * (1.0 + np.tanh(0.5 * xv))
    tape = _tape_of(x)
    if tape is None:
        return out
    return tape._record(out, (x,), lambda g: (g * out * (1.0 - out),))


def softmax(x, axis: int = -1, scale: float = 1.0):
    """softmax(scale * x) along ``axis`` with max subtraction."""
    xv = _val(x)
    if not np.all(np.isfinite(xv)):
        raise NonFiniteError("softmax input contains non-finite values")
    z = scale * xv
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)
    tape = _tape_of(x)
    if tape is None:
        return out

    def back(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (scale * out * (g - dot),)

    return tape._record(out, (x,), back)


def scaled_softmax_rows(m, d: float):
    """Row softmax of m / sqrt(d)."""
    if not d > 0:
        raise ValueError(f"scaling width must be positive, got {d}")
    if _val(m).ndim < 2:
        raise ShapeError(f"expected a matrix, got shape {_val(m).shape}")
    return softmax(m, axis=-1, scale=1.0 / np.sqrt(d))


def sum_(x, axis=None, keepdims: bool = False):
    xv = _val(x)
    out = np.asarray(xv.sum(axis=axis, keepdims=keepdims))
    tape = _tape_of(x)
    if tape is None:
        return out

    def back(g):
        if not keepdims and axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, xv.shape),)

    return tape._record(out, (x,), back)


def mean(x, axis=None, keepdims: bool = False):
    xv = _val(x)
    axes = range(xv.ndim) if axis is None else np.atleast_1d(axis)
    n = int(np.prod([xv.shape[a] for a in axes]))
    return mul(sum_(x, axis=axis, keepdims=keepdims), 1.0 / n)


def amax(x, axis, keepdims: bool = False):
    """Max over ``axis``; the gradient goes to the first maximal entry."""
    xv = _val(x)
    axes = tuple(np.atleast_1d(axis) % xv.ndim)
    out = xv.max(axis=axes, keepdims=True)
    tape = _tape_of(x)
    res = out if keepdims else np.squeeze(out, axis=axes)
    if tape is None:
        return res
    # first-argmax mask over the flattened reduced axes
    rest = tuple(a for a in range(xv.ndim) if a not in axes)
    moved = np.transpose(xv, rest + axes)
    flat = moved.reshape(moved.shape[: len(rest)] + (-1,))
    idx = flat.argmax(axis=-1)
    mask_flat = np.zeros_like(flat)
    np.put_along_axis(mask_flat, idx[..., None], 1.0, axis=-1)
    mask = np.transpose(mask_flat.reshape(moved.shape), np.argsort(rest + axes))

    def back(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (mask * g,)

    return tape._record(res, (x,), back)


def reshape(x, shape):
    xv = _val(x)
    out = xv.reshape(shape)
    tape = _tape_of(x)
    if tape is None:
        return out
    return tape._record(out, (x,), lambda g: (g.reshape(xv.shape),))


def transpose(x, axes):
    xv = _val(x)
    out = np.transpose(xv, axes)
    tape = _tape_of(x)
    if tape is None:
        return out
    inv = np.argsort(axes)
    return tape._record(out, (x,), lambda g: (np.transpose(g, inv),))


def getitem(x, idx):
    xv = _val(x)
    out = xv[idx]
    tape = _tape_of(x)
    if tape is None:
        return out

    def back(g):
        full = np.zeros_like(xv)
        if _fancy(idx):
            np.add.at(full, idx, g)
        else:
            full[idx] = g
        return (full,)

    return tape._record(out, (x,), back)


def _fancy(idx):
    items = idx if isinstance(idx, tuple) else (idx,)
    return any(isinstance(i, (list, np.ndarray)) for i in items)


def concat(xs, axis: int):
    vals = [_val(x) for x in xs]
    out = np.concatenate(vals, axis=axis)
    tape = _tape_of(*xs)
    if tape is None:
        return out
    bounds = np.cumsum([v.shape[axis] for v in vals])[:-1]
    return tape._record(out, tuple(xs), lambda g: tuple(np.split(g, bounds, axis=axis)))


def stack(xs, axis: int):
    vals = [_val(x) for x in xs]
    out = np.stack(vals, axis=axis)
    tape = _tape_of(*xs)
    if tape is None:
        return out
    n = len(vals)
    return tape._record(
        out, tuple(xs),
        lambda g: tuple(np.take(g, i, axis=axis) for i in range(n)),
    )


def shift(x, offset: int, axis: int):
    """out[..., t, ...] = x[..., t + offset, ...], zero outside the range."""
    xv = _val(x)
    out = _shift(xv, offset, axis)
    tape = _tape_of(x)
    if tape is None:
        return out
    return tape._record(out, (x,), lambda g: (_shift(g, -offset, axis),))


def _shift(v, offset, axis):
    out = np.zeros_like(v)
    n = v.shape[axis]
    if abs(offset) >= n:
        return out
    dst = [slice(None)] * v.ndim
    src = [slice(None)] * v.ndim
    if offset >= 0:
        dst[axis] = slice(0, n - offset)
        src[axis] = slice(offset, n)
    else:
        dst[axis] = slice(-offset, n)
        src[axis] = slice(0, n + offset)
    out[tuple(dst)] = v[tuple(src)]
    return out


def cross_entropy(logits, labels):
    """Mean negative log-likelihood of integer ``labels`` under softmax(logits)."""
    lv = _val(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if lv.ndim != 2 or labels.shape != (lv.shape[0],):
        raise ShapeError(f"logits {lv.shape} incompatible with labels {labels.shape}")
    z = lv - lv.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    rows = np.arange(lv.shape[0])
    out = np.asarray(-logp[rows, labels].mean())
    tape = _tape_of(logits)
    if tape is None:
        return out

    def back(g):
        p = np.exp(logp)
        p[rows, labels] -= 1.0
        return (g * p / lv.shape[0],)

    return tape._record(out, (logits,), back)


def pooled_projection(x, w, b, pool: str = "avg", pool_axis: int = -1):
    """ReLU(pool(x, pool_axis) @ w + b).

    For a J x C' x F input pooled over frames this gives J x d per-joint
    tokens; the ``max`` variant picks the per-(joint, channel) maximum.
    """
    xv = _val(x)
    if not -xv.ndim <= pool_axis < xv.ndim:
        raise ShapeError(f"pool axis {pool_axis} out of range for shape {xv.shape}")
    if pool == "avg":
        pooled = mean(x, axis=pool_axis)
    elif pool == "max":
        pooled = amax(x, axis=pool_axis)
    else:
        raise ValueError(f"unknown pool {pool!r}")
    wv = _val(w)
    if _val(pooled).shape[-1] != wv.shape[0]:
        raise ShapeError(f"pooled width {_val(pooled).shape[-1]} does not match weight {wv.shape}")
    return relu(add(bmm(pooled, w), b))


def value_of(x) -> np.ndarray:
    return _val(x)


# ---------------------------------------------------------------------------
# optimizer

def sgd_step(params, lr: float, momentum: float = 0.9, weight_decay: float = 0.0,
             velocity: dict | None = None) -> dict:
    """One SGD update, in place; returns the velocity buffers keyed by name.

    v <- momentum * v + grad + weight_decay * value ; value <- value - lr * v
    """
    if not lr >= 0:
        raise ValueError(f"learning rate must be non-negative, got {lr}")
    velocity = {} if velocity is None else velocity
    for p in params:
        v = velocity.get(p.name)
        step = p.gradient + weight_decay * p.value
        if v is None:
            v = step.copy()
        else:
            v *= momentum
            v += step
        velocity[p.name] = v
        if lr != 0:
            p.value -= lr * v
        p.zero_grad()
    return velocity


def clip_gradients(params, max_norm: float) -> float:
    """Rescale all gradients so their joint L2 norm is at most max_norm; returns the pre-clip norm."""
    if not max_norm > 0:
        raise ValueError(f"max_norm must be positive, got {max_norm}")
    params = list(params)
    norm = float(np.sqrt(sum(float(np.vdot(p.gradient, p.gradient)) for p in params)))
    if norm > max_norm:
        scale = max_norm / norm
        for p in params:
            p.gradient *= scale
    return norm


class SGD:
    def __init__(self, params, momentum: float = 0.9, weight_decay: float = 0.0,
                 clip_norm: float | None = None):
        self.params = list(params)
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.clip_norm = clip_norm
        self.velocity: dict[str, np.ndarray] = {}

    def step(self, lr: float):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        if self.clip_norm is not None:
            clip_gradients(self.params, self.clip_norm)
        sgd_step(self.params, lr, self.momentum, self.weight_decay, self.velocity)


# ---------------------------------------------------------------------------
# checkpoints

CKPT_MAGIC = b"FMXC"
CKPT_VERSION = 1


class FormatError(ValueError):
    pass


def save_parameters(path, params) -> None:
    buf = bytearray(CKPT_MAGIC)
    buf += struct.pack("<BI", CKPT_VERSION, len(params))
    for p in params:
        name = p.name.encode("utf-8")
        buf += struct.pack("<H", len(name)) + name
        buf += struct.pack("<B", p.value.ndim)
        buf += struct.pack(f"<{p.value.ndim}I", *p.value.shape)
        buf += np.ascontiguousarray(p.value, dtype="<f8").tobytes()
    Path(path).write_bytes(bytes(buf))


def load_parameters(path) -> dict[str, np.ndarray]:
    data = Path(path).read_bytes()
    if data[:4] != CKPT_MAGIC:
        raise FormatError(f"{path}: bad checkpoint magic {data[:4]!r}")
    try:
        version, count = struct.unpack_from("<BI", data, 4)
        if version != CKPT_VERSION:
            raise FormatError(f"{path}: unsupported checkpoint version {version}")
        off = 9
        out = {}
        for _ in range(count):
            (n,) = struct.unpack_from("<H", data, off)
            off += 2
            name = data[off:off + n].decode("utf-8")
            off += n
            (ndim,) = struct.unpack_from("<B", data, off)
            off += 1
            shape = struct.unpack_from(f"<{ndim}I", data, off)
            off += 4 * ndim
            size = int(np.prod(shape)) * 8
            if off + size > len(data):
                raise FormatError(f"{path}: truncated payload for {name}")
            out[name] = np.frombuffer(data, dtype="<f8", count=size // 8, offset=off).reshape(shape).astype(np.float64)
            off += size
    except struct.error as e:
        raise FormatError(f"{path}: truncated checkpoint ({e})") from None
    if off != len(data):
        raise FormatError(f"{path}: {len(data) - off} trailing bytes")
    return out
