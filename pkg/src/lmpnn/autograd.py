"""A small reverse-mode differentiation engine over numpy float64 arrays.

Only the operations the network needs are provided.  Every op returns a new
:class:`Tensor`; when any input requires gradients the op records its parents
and a closure mapping the upstream gradient to parent gradients.  Calling
:func:`backward` walks that record once and then releases it, so a second
call on the same graph raises.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

LN2 = np.log(2.0)


class TapeConsumedError(RuntimeError):
    pass


class Tensor:
    __slots__ = ("value", "requires_grad", "grad", "name", "_parents", "_backward", "_consumed")

    def __init__(self, value, requires_grad: bool = False, name: str | None = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name
        self._parents = ()
        self._backward = None
        self._consumed = False

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __len__(self):
        return len(self.value)

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, requires_grad={self.requires_grad})"

    def numpy(self) -> np.ndarray:
        return self.value

    def item(self) -> float:
        return float(self.value)

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

    def __truediv__(self, other):
        return div(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None):
        return sum_(self, axis)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(value, name: str | None = None) -> Tensor:
    return Tensor(np.array(value, dtype=np.float64), requires_grad=True, name=name)


def _record(value, parents, backward) -> Tensor:
    out = Tensor(value)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _record(a.value + b.value, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _record(a.value - b.value, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _record(
        a.value * b.value,
        (a, b),
        lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)),
    )


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.value / b.value
    return _record(
        out,
        (a, b),
        lambda g: (_unbroadcast(g / b.value, a.shape), _unbroadcast(-g * out / b.value, b.shape)),
    )


def square(x) -> Tensor:
    x = as_tensor(x)
    return _record(x.value * x.value, (x,), lambda g: (2.0 * g * x.value,))


def sqrt(x) -> Tensor:
    x = as_tensor(x)
    out = np.sqrt(x.value)
    return _record(out, (x,), lambda g: (0.5 * g / out,))


def absolute(x) -> Tensor:
    x = as_tensor(x)
    return _record(np.abs(x.value), (x,), lambda g: (g * np.sign(x.value),))


def _softplus(z: np.ndarray, inplace: bool = False) -> np.ndarray:
    # max(z, 0) + log1p(exp(-|z|)): overflow-safe, and cheaper than np.logaddexp
    t = np.abs(z)
    np.negative(t, out=t)
    np.exp(t, out=t)
    np.log1p(t, out=t)
    out = z if inplace else np.empty_like(z)
    np.maximum(z, 0.0, out=out)
    out += t
    return out


def _ssp_grad(g: np.ndarray, ssp_out: np.ndarray) -> np.ndarray:
    """``g * sigmoid(z)`` from the shifted-softplus output, via sigmoid = 1 - exp(-softplus)."""
    s = np.add(ssp_out, LN2)
    np.negative(s, out=s)
    np.expm1(s, out=s)
    s *= g
    np.negative(s, out=s)
    return s


def shifted_softplus(x) -> Tensor:
    """ln(1 + e^x) - ln 2, zero at the origin."""
    x = as_tensor(x)
    out = _softplus(x.value)
    out -= LN2
    return _record(out, (x,), lambda g: (_ssp_grad(g, out),))


def scale_by_scalar(x, gamma: Tensor) -> Tensor:
    """``gamma * x`` for a trainable scalar ``gamma`` (shape ``()``)."""
    x = as_tensor(x)
    if gamma.value.size != 1:
        raise ValueError("gamma must be a scalar")
    return _record(
        gamma.value * x.value,
        (x, gamma),
        lambda g: (g * gamma.value, np.reshape(np.sum(g * x.value), gamma.shape)),
    )


# ------------------------------------------------------------------- linear


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _record(a.value @ b.value, (a, b), lambda g: (g @ b.value.T, a.value.T @ g))


ACTIVATIONS = ("shifted_softplus", "identity")


def dense(x, W: Tensor, b: Tensor | None = None, activation: str = "shifted_softplus") -> Tensor:
    """``act(x @ W + b)`` for ``x`` [B, F_in], ``W`` [F_in, F_out], ``b`` [F_out]."""
    x = as_tensor(x)
    if x.ndim != 2 or W.ndim != 2 or x.shape[1] != W.shape[0]:
        raise ValueError(f"dense: cannot apply weight {W.shape} to input {x.shape}")
    if b is not None and b.shape != (W.shape[1],):
        raise ValueError(f"dense: bias shape {b.shape} does not match output width {W.shape[1]}")
    if activation not in ACTIVATIONS:
        raise ValueError(f"unknown activation {activation!r}")
    out = x.value @ W.value
    if b is not None:
        out += b.value
    act = activation == "shifted_softplus"
    if act:
        _softplus(out, inplace=True)
        out -= LN2
    parents = (x, W) if b is None else (x, W, b)

    def backward(g):
        dz = _ssp_grad(g, out) if act else g
        grads = (dz @ W.value.T if x.requires_grad else None, x.value.T @ dz)
        return grads if b is None else grads + (dz.sum(axis=0),)

    return _record(out, parents, backward)


# ------------------------------------------------------------------ indexing


class SegmentIndex:
    """Validated segment ids with a lazily built sparse summation matrix.

    Reusing one instance across ops avoids rebuilding the matrix.
    """

    __slots__ = ("ids", "num_segments", "_matrix")

    def __init__(self, ids, num_segments: int):
        ids = np.asarray(ids, dtype=np.int64)
        if ids.ndim != 1:
            raise ValueError("segment ids must be one-dimensional")
        if len(ids) and (ids.min() < 0 or ids.max() >= num_segments):
            raise IndexError(f"segment id out of range [0, {num_segments})")
        self.ids = ids
        self.num_segments = int(num_segments)
        self._matrix = None

    def __len__(self):
        return len(self.ids)

    @property
    def matrix(self) -> sp.csr_matrix:
        if self._matrix is None:
            n = len(self.ids)
            self._matrix = sp.csr_matrix((np.ones(n), (self.ids, np.arange(n))), shape=(self.num_segments, n))
        return self._matrix

    def reduce(self, values: np.ndarray) -> np.ndarray:
        shape = (self.num_segments,) + values.shape[1:]
        if len(self.ids) == 0:
            return np.zeros(shape)
        flat = values.reshape(len(self.ids), -1)
        return np.asarray(self.matrix @ flat).reshape((self.num_segments,) + values.shape[1:])


def _segments(ids, num_segments) -> SegmentIndex:
    if isinstance(ids, SegmentIndex):
        if num_segments is not None and num_segments != ids.num_segments:
            raise ValueError("num_segments disagrees with the segment index")
        return ids
    if num_segments is None:
        raise ValueError("num_segments is required with raw segment ids")
    return SegmentIndex(ids, num_segments)


def segment_sum(values, segment_ids, num_segments: int | None = None) -> Tensor:
    """Row ``s`` of the result sums the rows of ``values`` whose id is ``s``.

    Empty segments give zero rows.  ``segment_ids`` may be an int array or a
    :class:`SegmentIndex`.
    """
    values = as_tensor(values)
    seg = _segments(segment_ids, num_segments)
    if len(seg) != values.shape[0]:
        raise ValueError("one segment id per row required")
    ids = seg.ids
    return _record(seg.reduce(values.value), (values,), lambda g: (g[ids],))


def gather(x, index) -> Tensor:
    """Rows ``x[index]``; the gradient scatters back with a segment sum."""
    x = as_tensor(x)
    seg = _segments(index, x.shape[0])
    return _record(x.value[seg.ids], (x,), lambda g: (seg.reduce(g),))


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]
    return _record(
        np.concatenate([t.value for t in tensors], axis=axis),
        tuple(tensors),
        lambda g: tuple(np.split(g, cuts, axis=axis)),
    )


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    return _record(x.value.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def sum_(x, axis=None) -> Tensor:
    x = as_tensor(x)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, x.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), x.shape).copy(),)

    return _record(np.sum(x.value, axis=axis), (x,), backward)


def mean(x) -> Tensor:
    x = as_tensor(x)
    n = x.value.size
    return _record(np.mean(x.value), (x,), lambda g: (np.full(x.shape, g / n),))


def rowwise_dot(a, b) -> Tensor:
    """Dot product of matching rows: [N, D], [N, D] -> [N]."""
    a, b = as_tensor(a), as_tensor(b)
    return _record(
        np.einsum("ij,ij->i", a.value, b.value),
        (a, b),
        lambda g: (g[:, None] * b.value, g[:, None] * a.value),
    )


def elementwise_expand(x, fn) -> Tensor:
    """Map a vector [N] to [N, K] with ``fn(x) -> (values, d values / dx)``."""
    x = as_tensor(x)
    vals, dvals = fn(x.value)
    return _record(vals, (x,), lambda g: (np.einsum("nk,nk->n", g, dvals),))


def clip(x, lo: float, hi: float) -> Tensor:
    """Clamp with zero gradient outside [lo, hi]."""
    x = as_tensor(x)
    inside = (x.value >= lo) & (x.value <= hi)
    return _record(np.clip(x.value, lo, hi), (x,), lambda g: (g * inside,))


def dropout(x, rate: float, training: bool, seed=None) -> Tensor:
    """Inverted dropout; ``seed`` may be an int or a numpy Generator."""
    if not 0 <= rate < 1:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    x = as_tensor(x)
    if not training or rate == 0:
        return x
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return _record(x.value * mask, (x,), lambda g: (g * mask,))


# ------------------------------------------------------------------ backward


def _topological(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack = [(root, False)]
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
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> dict:
    """Store d loss / d t in ``t.grad`` for every reachable leaf (overwriting).

    Returns ``{leaf_tensor: gradient}``.  The recorded graph is released
    afterwards; a second call raises :class:`TapeConsumedError`.
    """
    if loss._consumed:
        raise TapeConsumedError("backward already ran on this graph; run a fresh forward pass")
    if loss.value.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ValueError("loss does not depend on any tensor that requires gradients")
    order = _topological(loss)
    grads = {id(loss): np.ones_like(loss.value)}
    leaves = {}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if node._backward is None:
            if g is not None:
                node.grad = g
                leaves[node] = node.grad
            continue
        if g is not None:
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg
        node._parents = ()
        node._backward = None
        node._consumed = True
    return leaves
