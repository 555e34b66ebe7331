"""Dense f64 tensors with reverse-mode automatic differentiation.

Every model and loss in this package is built from the operations here.
Tensors wrap a row-major numpy float64 buffer; operations on tracked
tensors record their inputs and a backward closure, so calling
:func:`backward` on a scalar result fills in ``grad`` buffers for every
tracked tensor that contributed to it.

Any operation that produces NaN or Inf from finite inputs raises
:class:`~fairint.errors.NumericError` immediately; nothing non-finite is
ever propagated silently.
"""

import json
import struct
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DataError, DomainError, NumericError, ShapeError, UsageError

__all__ = [
    "Tensor",
    "Parameter",
    "tensor",
    "matmul",
    "relu",
    "sigmoid",
    "log",
    "softmax_lastdim",
    "concat_lastdim",
    "slice_lastdim",
    "sum_lastdim",
    "mean_all",
    "sum_all",
    "embedding_lookup",
    "dropout",
    "backward",
    "graph_nodes",
    "save_parameters",
    "load_parameters",
]


class Tensor:
    """A dense float64 array, optionally participating in a gradient graph.

    ``grad_tracked`` tensors remember the operation and inputs that made
    them; after :func:`backward` their ``grad`` holds d(root)/d(self).
    Untracked tensors are plain immutable values and record nothing.
    """

    __slots__ = ("values", "grad_tracked", "grad", "_parents", "_backward", "op")

    def __init__(self, values, grad_tracked: bool = False, _parents=(), _op: str = "leaf"):
        v = np.asarray(values, dtype=np.float64)
        if not v.flags["C_CONTIGUOUS"]:
            v = np.ascontiguousarray(v)
        self.values = v
        self.grad_tracked = bool(grad_tracked)
        self.grad = None
        self._parents = tuple(_parents)
        self._backward = None
        self.op = _op

    @property
    def shape(self) -> tuple:
        return self.values.shape

    def item(self) -> float:
        if self.values.size != 1:
            raise UsageError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.values.reshape(()))

    def _accum(self, g) -> None:
        if not self.grad_tracked:
            return
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64)
        else:
            self.grad += g

    def __repr__(self) -> str:
        return f"Tensor(shape={self.values.shape}, op={self.op!r}, tracked={self.grad_tracked})"

    # -- arithmetic sugar; scalars mean python floats ------------------------

    def __add__(self, other):
        return _add(self, other)

    def __radd__(self, other):
        return _add(self, other)

    def __mul__(self, other):
        return _mul(self, other)

    def __rmul__(self, other):
        return _mul(self, other)

    def __neg__(self):
        return _mul(self, -1.0)

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return _add(self, _mul(other, -1.0))
        return _add(self, -float(other))

    def __rsub__(self, other):
        return _add(_mul(self, -1.0), float(other))

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise UsageError("tensor/tensor division is not supported; divide by a scalar")
        return _mul(self, 1.0 / float(other))

    def __matmul__(self, other):
        return matmul(self, other)

    def abs(self):
        out = _result(np.abs(self.values), (self,), "abs")
        if out.grad_tracked:
            sign = np.sign(self.values)

            def _bw():
                self._accum(out.grad * sign)

            out._backward = _bw
        return out


@dataclass
class Parameter:
    """A named, trainable tensor. Names must be unique within a collection."""

    name: str
    tensor: Tensor

    def __post_init__(self):
        self.tensor.grad_tracked = True


def tensor(values, grad_tracked: bool = False) -> Tensor:
    """Wrap ``values`` as a Tensor (copying into a fresh f64 buffer)."""
    return Tensor(np.array(values, dtype=np.float64), grad_tracked=grad_tracked)


def _result(values, parents: tuple, op: str) -> Tensor:
    v = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise NumericError(f"operation {op!r} produced non-finite values")
    if any(p.grad_tracked for p in parents):
        return Tensor(v, grad_tracked=True, _parents=parents, _op=op)
    return Tensor(v, grad_tracked=False, _op=op)


def _add(a: Tensor, other):
    if not isinstance(other, Tensor):
        c = float(other)
        out = _result(a.values + c, (a,), "add_scalar")
        if out.grad_tracked:

            def _bw():
                a._accum(out.grad)

            out._backward = _bw
        return out

    b = other
    if a.values.shape == b.values.shape:
        out = _result(a.values + b.values, (a, b), "add")
        if out.grad_tracked:

            def _bw():
                a._accum(out.grad)
                b._accum(out.grad)

            out._backward = _bw
        return out

    # matrix + bias row: (m, n) + (n,)
    for mat, bias in ((a, b), (b, a)):
        if mat.values.ndim == 2 and bias.values.ndim == 1 and mat.values.shape[1] == bias.values.shape[0]:
            out = _result(mat.values + bias.values, (mat, bias), "add_bias")
            if out.grad_tracked:

                def _bw(mat=mat, bias=bias):
                    mat._accum(out.grad)
                    bias._accum(out.grad.sum(axis=0))

                out._backward = _bw
            return out
    raise ShapeError(f"cannot add shapes {a.values.shape} and {b.values.shape}")


def _mul(a: Tensor, other):
    if not isinstance(other, Tensor):
        c = float(other)
        out = _result(a.values * c, (a,), "mul_scalar")
        if out.grad_tracked:

            def _bw():
                a._accum(out.grad * c)

            out._backward = _bw
        return out

    b = other
    if a.values.shape == b.values.shape:
        out = _result(a.values * b.values, (a, b), "mul")
        if out.grad_tracked:

            def _bw():
                a._accum(out.grad * b.values)
                b._accum(out.grad * a.values)

            out._backward = _bw
        return out

    # column * matrix: (m, 1) * (m, n), either operand order
    for col, mat in ((a, b), (b, a)):
        if (
            col.values.ndim == 2
            and mat.values.ndim == 2
            and col.values.shape == (mat.values.shape[0], 1)
        ):
            out = _result(col.values * mat.values, (col, mat), "mul_col")
            if out.grad_tracked:

                def _bw(col=col, mat=mat):
                    col._accum((out.grad * mat.values).sum(axis=1, keepdims=True))
                    mat._accum(out.grad * col.values)

                out._backward = _bw
            return out
    raise ShapeError(f"cannot multiply shapes {a.values.shape} and {b.values.shape}")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of two 2-D tensors, (m,k) @ (k,n) -> (m,n)."""
    if a.values.ndim != 2 or b.values.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.values.shape} and {b.values.shape}")
    if a.values.shape[1] != b.values.shape[0]:
        raise ShapeError(f"matmul inner extents differ: {a.values.shape} vs {b.values.shape}")
    out = _result(a.values @ b.values, (a, b), "matmul")
    if out.grad_tracked:

        def _bw():
            a._accum(out.grad @ b.values.T)
            b._accum(a.values.T @ out.grad)

        out._backward = _bw
    return out


def relu(x: Tensor) -> Tensor:
    """Elementwise max(0, x); the derivative at exactly 0 is taken as 0."""
    out = _result(np.maximum(x.values, 0.0), (x,), "relu")
    if out.grad_tracked:
        mask = x.values > 0.0

        def _bw():
            x._accum(out.grad * mask)

        out._backward = _bw
    return out


def sigmoid(x: Tensor) -> Tensor:
    """Numerically stable logistic function."""
    v = x.values
    y = np.empty_like(v)
    pos = v >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    y[~pos] = ev / (1.0 + ev)
    out = _result(y, (x,), "sigmoid")
    if out.grad_tracked:

        def _bw():
            x._accum(out.grad * out.values * (1.0 - out.values))

        out._backward = _bw
    return out


def log(x: Tensor) -> Tensor:
    """Natural log; raises DomainError on any non-positive element."""
    if np.any(x.values <= 0.0):
        raise DomainError("log of a non-positive value")
    out = _result(np.log(x.values), (x,), "log")
    if out.grad_tracked:

        def _bw():
            x._accum(out.grad / x.values)

        out._backward = _bw
    return out


def softmax_lastdim(x: Tensor) -> Tensor:
    """Softmax over the last axis, stabilized by max subtraction."""
    if x.values.ndim < 1 or x.values.shape[-1] < 1:
        raise ShapeError(f"softmax needs a non-empty last axis, got shape {x.values.shape}")
    shifted = x.values - x.values.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)
    out = _result(y, (x,), "softmax")
    if out.grad_tracked:

        def _bw():
            y_ = out.values
            inner = (out.grad * y_).sum(axis=-1, keepdims=True)
            x._accum(y_ * (out.grad - inner))

        out._backward = _bw
    return out


def concat_lastdim(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate tensors along the last axis."""
    if not parts:
        raise ShapeError("concat of an empty sequence")
    out = _result(np.concatenate([p.values for p in parts], axis=-1), tuple(parts), "concat")
    if out.grad_tracked:
        widths = [p.values.shape[-1] for p in parts]

        def _bw():
            offset = 0
            for p, w in zip(parts, widths):
                p._accum(out.grad[..., offset : offset + w])
                offset += w

        out._backward = _bw
    return out


def slice_lastdim(x: Tensor, start: int, stop: int) -> Tensor:
    """Contiguous slice [start:stop] of the last axis."""
    if not (0 <= start < stop <= x.values.shape[-1]):
        raise ShapeError(f"slice [{start}:{stop}] out of range for shape {x.values.shape}")
    out = _result(x.values[..., start:stop], (x,), "slice")
    if out.grad_tracked:

        def _bw():
            g = np.zeros_like(x.values)
            g[..., start:stop] = out.grad
            x._accum(g)

        out._backward = _bw
    return out


def sum_lastdim(x: Tensor) -> Tensor:
    """Sum over the last axis, keeping it as an extent of 1."""
    out = _result(x.values.sum(axis=-1, keepdims=True), (x,), "sum_lastdim")
    if out.grad_tracked:

        def _bw():
            x._accum(np.broadcast_to(out.grad, x.values.shape))

        out._backward = _bw
    return out


def mean_all(x: Tensor) -> Tensor:
    """Mean of all elements, as a scalar tensor."""
    n = x.values.size
    if n == 0:
        raise UsageError("mean of an empty tensor")
    out = _result(x.values.mean(), (x,), "mean")
    if out.grad_tracked:

        def _bw():
            x._accum(np.full_like(x.values, float(out.grad) / n))

        out._backward = _bw
    return out


def sum_all(x: Tensor) -> Tensor:
    """Sum of all elements, as a scalar tensor."""
    out = _result(x.values.sum(), (x,), "sum")
    if out.grad_tracked:

        def _bw():
            x._accum(np.full_like(x.values, float(out.grad)))

        out._backward = _bw
    return out


def embedding_lookup(table: Tensor, indices) -> Tensor:
    """Gather columns of a (d, V) table for a batch of category ids.

    Returns a (len(indices), d) tensor; the backward pass scatters
    gradient only into the selected columns.
    """
    idx = np.asarray(indices)
    if idx.ndim != 1:
        raise ShapeError(f"indices must be 1-D, got shape {idx.shape}")
    if table.values.ndim != 2:
        raise ShapeError(f"embedding table must be 2-D, got shape {table.values.shape}")
    v = table.values.shape[1]
    if idx.size and (idx.min() < 0 or idx.max() >= v):
        raise DataError(f"category id out of range [0, {v}) in embedding lookup")
    out = _result(table.values[:, idx].T, (table,), "embed")
    if out.grad_tracked:

        def _bw():
            gt = np.zeros((v, table.values.shape[0]))
            np.add.at(gt, idx, out.grad)
            table._accum(gt.T)

        out._backward = _bw
    return out


def dropout(x: Tensor, rate: float, rng: np.random.Generator, training: bool) -> Tensor:
    """Inverted dropout: zero with probability ``rate``, scale survivors by 1/(1-rate).

    In eval mode (``training=False``) this is the identity and draws nothing
    from ``rng``.
    """
    if not (0.0 <= rate < 1.0):
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    keep = (rng.random(x.values.shape) >= rate) / (1.0 - rate)
    out = _result(x.values * keep, (x,), "dropout")
    if out.grad_tracked:

        def _bw():
            x._accum(out.grad * keep)

        out._backward = _bw
    return out


def graph_nodes(root: Tensor) -> list:
    """Tracked nodes reachable from ``root``, in topological order.

    Every node appears after all of its tracked inputs; the list is the
    evaluation order the backward pass walks in reverse.
    """
    topo = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in reversed(node._parents):
            if parent.grad_tracked and id(parent) not in visited:
                stack.append((parent, False))
    return topo


def backward(root: Tensor, params: Iterable[Parameter] | None = None) -> None:
    """Populate gradients of ``root`` w.r.t. every tracked tensor feeding it.

    ``root`` must hold a single element. If ``params`` is given, each
    listed parameter's grad buffer is reset first, so parameters the graph
    never touched end up with exact zeros.
    """
    if root.values.size != 1:
        raise UsageError(f"backward root must be scalar, got shape {root.values.shape}")
    if params is not None:
        for p in params:
            p.tensor.grad = np.zeros_like(p.tensor.values)
    if not root.grad_tracked:
        return
    order = graph_nodes(root)
    root.grad = np.ones_like(root.values)
    for node in reversed(order):
        if node._backward is not None:
            node._backward()


# -- parameter serialization -------------------------------------------------
#
# Binary model-file layout (all integers little-endian, version 1):
#
#   magic   8 bytes  b"FAIRINTM"
#   u32     format version (1)
#   u32     metadata length M
#   M bytes UTF-8 JSON metadata object
#   u32     record count R
#   then R records, each:
#     u32     name length L, then L bytes of UTF-8 name
#     u32     ndim, then ndim x u64 extents
#     f64 x prod(extents), little-endian, row-major
#
# Round-trips are bit-exact: buffers are written raw.

_MAGIC = b"FAIRINTM"
_VERSION = 1


def save_parameters(path, params, metadata: dict | None = None) -> None:
    """Write named f64 arrays plus a JSON metadata object to ``path``.

    ``params`` is a mapping name -> array, or an iterable of
    :class:`Parameter`. Duplicate names are rejected.
    """
    if isinstance(params, dict):
        items = [(str(k), np.asarray(v, dtype=np.float64)) for k, v in params.items()]
    else:
        items = [(p.name, p.tensor.values) for p in params]
    names = [n for n, _ in items]
    if len(set(names)) != len(names):
        raise UsageError("duplicate parameter names in collection")
    meta_bytes = json.dumps(metadata or {}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        fh.write(struct.pack("<I", len(meta_bytes)))
        fh.write(meta_bytes)
        fh.write(struct.pack("<I", len(items)))
        for name, arr in items:
            nb = name.encode("utf-8")
            fh.write(struct.pack("<I", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<I", arr.ndim))
            for extent in arr.shape:
                fh.write(struct.pack("<Q", extent))
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_parameters(path) -> tuple[dict, dict]:
    """Read a file written by :func:`save_parameters`.

    Returns ``(arrays, metadata)`` with arrays keyed by name in file order.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != _MAGIC:
        raise DataError(f"{path}: not a fairint model file")
    off = 8
    (version,) = struct.unpack_from("<I", raw, off)
    off += 4
    if version != _VERSION:
        raise DataError(f"{path}: unsupported model file version {version}")
    (mlen,) = struct.unpack_from("<I", raw, off)
    off += 4
    metadata = json.loads(raw[off : off + mlen].decode("utf-8"))
    off += mlen
    (count,) = struct.unpack_from("<I", raw, off)
    off += 4
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<I", raw, off)
        off += 4
        name = raw[off : off + nlen].decode("utf-8")
        off += nlen
        (ndim,) = struct.unpack_from("<I", raw, off)
        off += 4
        shape = struct.unpack_from(f"<{ndim}Q", raw, off) if ndim else ()
        off += 8 * ndim
        size = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(raw, dtype="<f8", count=size, offset=off).reshape(shape).copy()
        off += 8 * size
        arrays[name] = arr
    return arrays, metadata
