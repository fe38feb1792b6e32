"""Reverse-mode automatic differentiation on float64 numpy arrays.

The model code in this package never touches numpy gradients directly; it
builds values out of the ops defined here, and a Tape replays adjoints in
reverse recording order. Design points, all deliberate:

  * define-by-run: the tape is rebuilt on every forward pass,
  * float64 everywhere, no dtype negotiation,
  * broadcasting for binary ops is right-aligned extent-1 stretching only,
  * one output per op; structural ops (reshape, concat, slices) are ops too,
  * a tape and the tensors recorded on it belong to one thread.

Custom fused ops (the selective scan lives in ssm.py) register through
``record_op`` with a hand-derived backward closure; everything here and
there is validated against central finite differences via ``grad_check``.
"""

from __future__ import annotations

import threading
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DimensionError, DomainError

__all__ = [
    "Tensor", "Tape", "record_op", "grad_check",
    "add", "sub", "mul", "neg", "exp", "log", "power", "expm1_over",
    "silu", "softplus", "matmul", "reduce_sum", "mean", "reduce_max",
    "clamp_min", "softmax", "reshape", "transpose", "concat", "slice_axis",
    "gather_rows", "scatter_rows", "conv2d_depthwise", "causal_conv1d",
]

_EPS_GRADCHECK = 1e-8          # floor inside relative-error denominators
_SERIES_CUTOFF = 1e-8          # |u| below this takes the series branch of expm1(u)/u


# ---------------------------------------------------------------------------
# tensor + tape machinery
# ---------------------------------------------------------------------------

class Tensor:
    """A float64 array plus gradient bookkeeping.

    ``grad`` is only ever allocated for leaf tensors that were created with
    ``requires_grad=True`` (parameters); intermediates keep their adjoints in
    tape-local scratch during backward and never grow a ``grad`` buffer.
    """

    __slots__ = ("data", "requires_grad", "grad", "tape_id")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.tape_id: int | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() on tensor of shape {self.shape}")
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # arithmetic sugar; scalars are wrapped as constant tensors
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __sub__(self, other):
        return add(self, neg(_as_tensor(other)))

    def __rsub__(self, other):
        return add(_as_tensor(other), neg(self))

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return mul(self, 1.0 / other)
        return mul(self, power(other, -1.0))

    def __matmul__(self, other):
        return matmul(self, other)


class _Node:
    """One recorded op: who made the output and how to push adjoints back."""

    __slots__ = ("op", "inputs", "out", "backward", "replay")

    def __init__(self, op, inputs, out, backward, replay):
        self.op = op                # short op name, for debugging and replay reports
        self.inputs = inputs        # tuple[Tensor]
        self.out = out              # Tensor
        self.backward = backward    # Callable[[np.ndarray], tuple[np.ndarray | None, ...]]
        self.replay = replay        # Callable[[], np.ndarray], recomputes out.data


class _TapeStack(threading.local):
    def __init__(self):
        self.stack: list["Tape"] = []


_tapes = _TapeStack()


def _active_tape() -> "Tape | None":
    return _tapes.stack[-1] if _tapes.stack else None


class Tape:
    """Append-only op record for one forward pass.

    Use as a context manager around the forward computation, then call
    ``backward`` on the scalar result. Gradients of parameter leaves
    accumulate into their ``grad`` buffers (allocated on first use).
    """

    def __init__(self):
        self.nodes: list[_Node] = []

    def __enter__(self) -> "Tape":
        _tapes.stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        popped = _tapes.stack.pop()
        assert popped is self, "tape stack corrupted; tapes must nest"

    def _append(self, node: _Node) -> int:
        self.nodes.append(node)
        return len(self.nodes) - 1

    def backward(self, root: Tensor, seed: np.ndarray | None = None) -> None:
        """Accumulate d(root)/d(leaf) into every reachable parameter leaf.

        Traversal visits nodes in strictly decreasing append order, so every
        node sees its output's full adjoint before running.

        A non-scalar root needs an explicit seed (the adjoint to start from);
        defaulting it to ones would silently differentiate sum(root).
        """
        if seed is None:
            if root.size != 1:
                raise DimensionError(
                    f"backward on root of shape {root.shape} needs an explicit seed"
                )
            seed_arr = np.ones_like(root.data)
        else:
            seed_arr = np.asarray(seed, dtype=np.float64)
            if seed_arr.shape != root.data.shape:
                raise DimensionError(
                    f"seed shape {seed_arr.shape} != root shape {root.data.shape}"
                )
        if root.tape_id is None:
            if root.requires_grad:   # leaf root: gradient of itself
                _accumulate_leaf(root, seed_arr)
            return
        scratch: dict[int, np.ndarray] = {}
        scratch[root.tape_id] = seed_arr
        for idx in range(root.tape_id, -1, -1):
            g_out = scratch.pop(idx, None)
            if g_out is None:
                continue
            node = self.nodes[idx]
            grads = node.backward(g_out)
            for inp, g in zip(node.inputs, grads):
                if g is None or not inp.requires_grad:
                    continue
                if inp.tape_id is None:
                    _accumulate_leaf(inp, g)
                else:
                    prev = scratch.get(inp.tape_id)
                    scratch[inp.tape_id] = g if prev is None else prev + g

    def replay(self) -> list[str]:
        """Recompute every node from its recorded inputs; return mismatched op names.

        A clean define-by-run tape replays bitwise (pure numpy, no RNG inside
        ops), so a non-empty return signals a buggy or stateful op.
        """
        bad = []
        for node in self.nodes:
            fresh = node.replay()
            if not np.array_equal(fresh, node.out.data):
                bad.append(node.op)
        return bad


def _accumulate_leaf(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64, copy=True)
    else:
        t.grad += g


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def record_op(
    op: str,
    inputs: Sequence[Tensor],
    out_data: np.ndarray,
    backward: Callable[[np.ndarray], tuple],
    replay: Callable[[], np.ndarray],
) -> Tensor:
    """Create the output tensor for an op and register it on the active tape.

    Recording happens only when a tape is open and some input needs grad;
    otherwise this is a plain forward evaluation (eval mode stays cheap).
    """
    out = Tensor(out_data)
    out.requires_grad = any(t.requires_grad for t in inputs)
    tape = _active_tape()
    if tape is not None and out.requires_grad:
        out.tape_id = tape._append(_Node(op, tuple(inputs), out, backward, replay))
    return out


# ---------------------------------------------------------------------------
# broadcasting helpers
# ---------------------------------------------------------------------------

def _check_broadcast(sa: tuple[int, ...], sb: tuple[int, ...], op: str) -> None:
    # right-aligned; each aligned pair must match or contain a 1
    for da, db in zip(reversed(sa), reversed(sb)):
        if da != db and da != 1 and db != 1:
            raise DimensionError(f"{op}: shapes {sa} and {sb} do not broadcast")


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum an output-shaped gradient down to an input shape."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise ops
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a.shape, b.shape, "add")
    ad, bd = a.data, b.data

    def backward(g):
        return _unbroadcast(g, ad.shape), _unbroadcast(g, bd.shape)

    return record_op("add", (a, b), ad + bd, backward, lambda: a.data + b.data)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a.shape, b.shape, "mul")
    ad, bd = a.data, b.data

    def backward(g):
        return _unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)

    return record_op("mul", (a, b), ad * bd, backward, lambda: a.data * b.data)


def neg(x) -> Tensor:
    x = _as_tensor(x)
    return record_op("neg", (x,), -x.data, lambda g: (-g,), lambda: -x.data)


def sub(a, b) -> Tensor:
    return add(_as_tensor(a), neg(_as_tensor(b)))


def exp(x) -> Tensor:
    x = _as_tensor(x)
    out_data = np.exp(x.data)
    return record_op("exp", (x,), out_data, lambda g: (g * out_data,), lambda: np.exp(x.data))


def log(x) -> Tensor:
    x = _as_tensor(x)
    if np.any(x.data <= 0.0):
        raise DomainError("log: argument must be strictly positive everywhere")
    xd = x.data
    return record_op("log", (x,), np.log(xd), lambda g: (g / xd,), lambda: np.log(x.data))


def power(x, p: float) -> Tensor:
    """Elementwise x**p for a constant float exponent.

    Non-integer exponents demand strictly positive bases; the callers here
    use it for inverse square roots and reciprocals of positive quantities.
    """
    x = _as_tensor(x)
    p = float(p)
    if p != int(p) and np.any(x.data <= 0.0):
        raise DomainError("power: fractional exponent needs a strictly positive base")
    if p < 0 and np.any(x.data == 0.0):
        raise DomainError("power: negative exponent with a zero base")
    xd = x.data

    def backward(g):
        return (g * p * xd ** (p - 1.0),)

    return record_op("pow", (x,), xd ** p, backward, lambda: x.data ** p)


def expm1_over(x) -> Tensor:
    """phi(u) = (exp(u) - 1) / u, with the removable singularity filled in.

    For |u| below 1e-8 the quotient is replaced by its series 1 + u/2 (the
    next term is u^2/6 ~ 1e-17, beneath float64 resolution); the derivative
    uses the matching series 1/2 + u/3 on that branch.
    """
    x = _as_tensor(x)

    def forward(xd):
        small = np.abs(xd) < _SERIES_CUTOFF
        safe = np.where(small, 1.0, xd)
        out = np.where(small, 1.0 + 0.5 * xd, np.expm1(safe) / safe)
        return out

    xd = x.data

    def backward(g):
        small = np.abs(xd) < _SERIES_CUTOFF
        safe = np.where(small, 1.0, xd)
        dphi = np.where(
            small,
            0.5 + xd / 3.0,
            (np.exp(safe) * (safe - 1.0) + 1.0) / (safe * safe),
        )
        return (g * dphi,)

    return record_op("expm1_over", (x,), forward(xd), backward, lambda: forward(x.data))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # piecewise form avoids overflow warnings for large |z|
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def silu(x) -> Tensor:
    x = _as_tensor(x)
    xd = x.data
    sig = _sigmoid(xd)

    def backward(g):
        return (g * (sig * (1.0 + xd * (1.0 - sig))),)

    return record_op("silu", (x,), xd * sig, backward, lambda: x.data * _sigmoid(x.data))


def softplus(x) -> Tensor:
    """log(1 + exp(x)), computed as logaddexp(0, x) so large |x| stays exact."""
    x = _as_tensor(x)
    xd = x.data

    def backward(g):
        return (g * _sigmoid(xd),)

    return record_op(
        "softplus", (x,), np.logaddexp(0.0, xd), backward, lambda: np.logaddexp(0.0, x.data)
    )


def clamp_min(x, floor: float) -> Tensor:
    """Elementwise max(x, floor) for a constant floor.

    Gradient passes where x > floor and also exactly at the tie (the
    subgradient choice that keeps zero-initialized paths trainable).
    """
    x = _as_tensor(x)
    floor = float(floor)
    xd = x.data

    def backward(g):
        return (g * (xd >= floor),)

    return record_op(
        "clamp_min", (x,), np.maximum(xd, floor), backward, lambda: np.maximum(x.data, floor)
    )


# ---------------------------------------------------------------------------
# reductions and softmax
# ---------------------------------------------------------------------------

def reduce_sum(x, axis: int | None = None, keepdims: bool = False) -> Tensor:
    x = _as_tensor(x)
    xd = x.data

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, xd.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, xd.shape).copy(),)

    return record_op(
        "sum", (x,), xd.sum(axis=axis, keepdims=keepdims), backward,
        lambda: x.data.sum(axis=axis, keepdims=keepdims),
    )


def mean(x, axis: int | None = None, keepdims: bool = False) -> Tensor:
    x = _as_tensor(x)
    n = x.size if axis is None else x.shape[axis]
    if n == 0:
        raise DimensionError("mean: reduction over an empty axis")
    return mul(reduce_sum(x, axis=axis, keepdims=keepdims), 1.0 / n)


def reduce_max(x, axis: int, keepdims: bool = False) -> Tensor:
    """Max along one axis; gradient routes to the first maximal element."""
    x = _as_tensor(x)
    xd = x.data
    if xd.shape[axis] == 0:
        raise DimensionError("max: reduction over an empty axis")

    def backward(g):
        idx = np.expand_dims(np.argmax(xd, axis=axis), axis)
        mask = np.zeros_like(xd)
        np.put_along_axis(mask, idx, 1.0, axis=axis)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (mask * gg,)

    return record_op(
        "max", (x,), xd.max(axis=axis, keepdims=keepdims), backward,
        lambda: x.data.max(axis=axis, keepdims=keepdims),
    )


def softmax(x, axis: int = -1) -> Tensor:
    """Numerically stable softmax along one axis; rows sum to one."""
    x = _as_tensor(x)
    if x.shape[axis] == 0:
        raise DimensionError("softmax: empty axis")

    def forward(xd):
        shifted = xd - xd.max(axis=axis, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=axis, keepdims=True)

    y = forward(x.data)

    def backward(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return (y * (g - dot),)

    return record_op("softmax", (x,), y, backward, lambda: forward(x.data))


# ---------------------------------------------------------------------------
# linear algebra and structure
# ---------------------------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul: expects 2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data

    def backward(g):
        return g @ bd.T, ad.T @ g

    return record_op("matmul", (a, b), ad @ bd, backward, lambda: a.data @ b.data)


def reshape(x, shape: tuple[int, ...]) -> Tensor:
    x = _as_tensor(x)
    old = x.shape

    def backward(g):
        return (g.reshape(old),)

    try:
        out = x.data.reshape(shape)
    except ValueError as e:
        raise DimensionError(f"reshape: {old} -> {shape}: {e}") from None
    return record_op("reshape", (x,), out, backward, lambda: x.data.reshape(shape))


def transpose(x, axes: tuple[int, ...]) -> Tensor:
    x = _as_tensor(x)
    inv = tuple(np.argsort(axes))

    def backward(g):
        return (g.transpose(inv),)

    return record_op(
        "transpose", (x,), x.data.transpose(axes), backward, lambda: x.data.transpose(axes)
    )


def concat(parts: Iterable[Tensor], axis: int = 0) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    if not parts:
        raise DimensionError("concat: needs at least one part")
    sizes = [p.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    out = np.concatenate([p.data for p in parts], axis=axis)
    return record_op(
        "concat", tuple(parts), out, backward,
        lambda: np.concatenate([p.data for p in parts], axis=axis),
    )


def slice_axis(x, axis: int, start: int, stop: int) -> Tensor:
    """Contiguous slice [start:stop) along one axis."""
    x = _as_tensor(x)
    n = x.shape[axis]
    if not (0 <= start <= stop <= n):
        raise DimensionError(f"slice_axis: [{start}:{stop}) out of range for extent {n}")
    sel = tuple(slice(None) if i != axis else slice(start, stop) for i in range(x.ndim))
    xd = x.data

    def backward(g):
        gx = np.zeros_like(xd)
        gx[sel] = g
        return (gx,)

    return record_op("slice", (x,), xd[sel].copy(), backward, lambda: x.data[sel].copy())


def gather_rows(x, indices) -> Tensor:
    """Select rows (axis 0) at integer indices; duplicates allowed."""
    x = _as_tensor(x)
    idx = np.asarray(indices, dtype=np.intp)
    if idx.ndim != 1:
        raise DimensionError("gather_rows: indices must be 1-D")
    if idx.size and (idx.min() < 0 or idx.max() >= x.shape[0]):
        raise DimensionError("gather_rows: index out of range")
    xd = x.data

    def backward(g):
        gx = np.zeros_like(xd)
        np.add.at(gx, idx, g)
        return (gx,)

    return record_op("gather", (x,), xd[idx].copy(), backward, lambda: x.data[idx].copy())


def scatter_rows(rows, indices, n_rows: int) -> Tensor:
    """Place rows into a zero tensor of n_rows rows; inverse of gather_rows.

    Indices must be unique (each target row written at most once), which is
    all the overlay path needs and keeps the adjoint an exact gather.
    """
    rows = _as_tensor(rows)
    idx = np.asarray(indices, dtype=np.intp)
    if idx.ndim != 1 or idx.shape[0] != rows.shape[0]:
        raise DimensionError("scatter_rows: one index per row required")
    if idx.size and (idx.min() < 0 or idx.max() >= n_rows):
        raise DimensionError("scatter_rows: index out of range")
    if np.unique(idx).size != idx.size:
        raise DimensionError("scatter_rows: duplicate target rows")

    def forward(rd):
        out = np.zeros((n_rows,) + rd.shape[1:], dtype=np.float64)
        out[idx] = rd
        return out

    def backward(g):
        return (g[idx].copy(),)

    return record_op("scatter", (rows,), forward(rows.data), backward, lambda: forward(rows.data))


# ---------------------------------------------------------------------------
# convolutions
# ---------------------------------------------------------------------------

def conv2d_depthwise(x, kernel) -> Tensor:
    """Depthwise 3x3 convolution with same zero padding.

    x: [gh, gw, c] or batched [B, gh, gw, c]; kernel: [3, 3, c]. Each channel
    is convolved with its own 3x3 filter; channels never mix.
    """
    x, kernel = _as_tensor(x), _as_tensor(kernel)
    if kernel.ndim != 3 or kernel.shape[0] != 3 or kernel.shape[1] != 3:
        raise DimensionError(f"conv2d_depthwise: kernel must be [3,3,c], got {kernel.shape}")
    squeeze = x.ndim == 3
    if x.ndim not in (3, 4):
        raise DimensionError(f"conv2d_depthwise: input must be 3-D or 4-D, got {x.shape}")
    if x.shape[-1] != kernel.shape[2]:
        raise DimensionError(
            f"conv2d_depthwise: channel mismatch, input {x.shape} vs kernel {kernel.shape}"
        )

    def forward(xd, kd):
        x4 = xd[None] if squeeze else xd
        B, gh, gw, c = x4.shape
        xp = np.zeros((B, gh + 2, gw + 2, c), dtype=np.float64)
        xp[:, 1:-1, 1:-1, :] = x4
        out = np.zeros_like(x4)
        for dy in range(3):
            for dx in range(3):
                out += xp[:, dy:dy + gh, dx:dx + gw, :] * kd[dy, dx]
        return out[0] if squeeze else out

    xd, kd = x.data, kernel.data

    def backward(g):
        g4 = g[None] if squeeze else g
        x4 = xd[None] if squeeze else xd
        B, gh, gw, c = x4.shape
        xp = np.zeros((B, gh + 2, gw + 2, c), dtype=np.float64)
        xp[:, 1:-1, 1:-1, :] = x4
        gxp = np.zeros_like(xp)
        gk = np.zeros_like(kd)
        for dy in range(3):
            for dx in range(3):
                gxp[:, dy:dy + gh, dx:dx + gw, :] += g4 * kd[dy, dx]
                gk[dy, dx] = (xp[:, dy:dy + gh, dx:dx + gw, :] * g4).sum(axis=(0, 1, 2))
        gx = gxp[:, 1:-1, 1:-1, :]
        return (gx[0] if squeeze else gx), gk

    return record_op(
        "conv2d_dw", (x, kernel), forward(xd, kd), backward,
        lambda: forward(x.data, kernel.data),
    )


def causal_conv1d(x, kernel, bias=None) -> Tensor:
    """Depthwise causal 1-D convolution along the sequence axis.

    x: [S, d]; kernel: [K, d]; optional bias [d]. Position i sees inputs
    i-K+1 .. i (zero padded on the left), so information never flows from
    later positions to earlier ones.
    """
    x, kernel = _as_tensor(x), _as_tensor(kernel)
    if x.ndim != 2 or kernel.ndim != 2 or x.shape[1] != kernel.shape[1]:
        raise DimensionError(
            f"causal_conv1d: want x [S,d] and kernel [K,d], got {x.shape}, {kernel.shape}"
        )
    K = kernel.shape[0]
    inputs = (x, kernel) if bias is None else (x, kernel, _as_tensor(bias))

    def forward(xd, kd, bd):
        S, d = xd.shape
        xp = np.zeros((S + K - 1, d), dtype=np.float64)
        xp[K - 1:] = xd
        out = np.zeros_like(xd)
        for j in range(K):
            out += xp[j:j + S] * kd[j]
        if bd is not None:
            out += bd
        return out

    xd, kd = x.data, kernel.data
    bd = inputs[2].data if bias is not None else None

    def backward(g):
        S, d = xd.shape
        xp = np.zeros((S + K - 1, d), dtype=np.float64)
        xp[K - 1:] = xd
        gxp = np.zeros_like(xp)
        gk = np.zeros_like(kd)
        for j in range(K):
            gxp[j:j + S] += g * kd[j]
            gk[j] = (xp[j:j + S] * g).sum(axis=0)
        grads = [gxp[K - 1:], gk]
        if bd is not None:
            grads.append(g.sum(axis=0))
        return tuple(grads)

    return record_op(
        "causal_conv1d", inputs, forward(xd, kd, bd), backward,
        lambda: forward(x.data, kernel.data, inputs[2].data if bias is not None else None),
    )


# ---------------------------------------------------------------------------
# finite differences
# ---------------------------------------------------------------------------

def grad_check(
    f: Callable[[], Tensor],
    wrt: Tensor | Sequence[Tensor],
    step: float = 1e-5,
    order: int = 2,
) -> float:
    """Compare reverse-mode gradients of a scalar function with finite differences.

    ``f`` must rebuild its computation from the current ``wrt`` values on
    every call. Returns the worst elementwise relative error
    |g_ad - g_fd| / max(|g_ad|, |g_fd|, 1e-8) across all checked tensors.

    ``order`` picks the stencil: 2 = central difference (truncation O(h^2)),
    4 = five-point (O(h^4)). The higher order tolerates a step large enough
    to keep roundoff small on near-zero gradient components while staying
    accurate on strongly curved ones.
    """
    if order not in (2, 4):
        raise DomainError(f"grad_check: order must be 2 or 4, got {order}")
    tensors = [wrt] if isinstance(wrt, Tensor) else list(wrt)
    for t in tensors:
        t.grad = None
    with Tape() as tape:
        out = f()
        if out.size != 1:
            raise DimensionError("grad_check: f must return a scalar")
        tape.backward(out)
    ad = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]
    for t in tensors:
        t.grad = None

    def eval_at(flat, i, x) -> float:
        keep = flat[i]
        flat[i] = x
        y = float(f().data)
        flat[i] = keep
        return y

    worst = 0.0
    for t, g_ad in zip(tensors, ad):
        flat = t.data.reshape(-1)
        g_fd = np.zeros_like(flat)
        for i in range(flat.size):
            x = flat[i]
            if order == 2:
                g_fd[i] = (eval_at(flat, i, x + step)
                           - eval_at(flat, i, x - step)) / (2.0 * step)
            else:
                g_fd[i] = (eval_at(flat, i, x - 2 * step)
                           - 8.0 * eval_at(flat, i, x - step)
                           + 8.0 * eval_at(flat, i, x + step)
                           - eval_at(flat, i, x + 2 * step)) / (12.0 * step)
        g_fd = g_fd.reshape(t.data.shape)
        denom = np.maximum(np.maximum(np.abs(g_ad), np.abs(g_fd)), _EPS_GRADCHECK)
        worst = max(worst, float(np.max(np.abs(g_ad - g_fd) / denom)))
    return worst
