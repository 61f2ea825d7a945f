"""Dense tensors with reverse-mode automatic differentiation.

Every op returns a new :class:`Tensor` that remembers its parents and a
closure mapping the output gradient to parent gradients. :func:`backward`
walks the recorded graph in reverse topological order.

Discrete choices made inside differentiable code (argmax of a max-pool, the
active branch of a leaky ReLU, neighbour tables computed from learned
features) go through :func:`decide`. Inside :func:`record_decisions` they are
logged; inside :func:`replay_decisions` the logged values are reused, which
pins the network to one smooth piece for finite-difference checks.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterator, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "DimensionError",
    "NonFiniteError",
    "ContractError",
    "default_dtype",
    "precision",
    "as_tensor",
    "linear",
    "leaky_relu",
    "softmax",
    "softmax_lastdim",
    "max_over_neighbors",
    "gather_rows",
    "concat_lastdim",
    "row_norm",
    "expand_neighbors",
    "reshape",
    "backward",
    "decide",
    "grad_enabled",
    "no_grad",
    "record_decisions",
    "replay_decisions",
]


class DimensionError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


class ContractError(ValueError):
    pass


_DTYPE = [np.dtype(np.float32)]


def default_dtype() -> np.dtype:
    return _DTYPE[-1]


@contextlib.contextmanager
def precision(dtype) -> Iterator[None]:
    """Temporarily switch the dtype used for new tensors (``float64`` for gradient checks)."""
    _DTYPE.append(np.dtype(dtype))
    try:
        yield
    finally:
        _DTYPE.pop()


_GRAD = [True]


def grad_enabled() -> bool:
    return _GRAD[-1]


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Build no graph: outputs keep no parents, so intermediates are freed early."""
    _GRAD.append(False)
    try:
        yield
    finally:
        _GRAD.pop()


# --- decision log -----------------------------------------------------------

_DECISIONS: list = []  # stack of (mode, log, cursor)


class _Replay:
    def __init__(self, log: list):
        self.log = log
        self.pos = 0


def decide(compute: Callable[[], np.ndarray]) -> np.ndarray:
    """Evaluate a discrete choice, honouring an active record/replay context."""
    if not _DECISIONS:
        return compute()
    mode, state = _DECISIONS[-1]
    if mode == "record":
        value = compute()
        state.append(value)
        return value
    if state.pos >= len(state.log):
        raise ContractError("decision replay ran past the recorded trace")
    value = state.log[state.pos]
    state.pos += 1
    return value


@contextlib.contextmanager
def record_decisions() -> Iterator[list]:
    log: list = []
    _DECISIONS.append(("record", log))
    try:
        yield log
    finally:
        _DECISIONS.pop()


@contextlib.contextmanager
def replay_decisions(log: list) -> Iterator[None]:
    _DECISIONS.append(("replay", _Replay(log)))
    try:
        yield
    finally:
        _DECISIONS.pop()


# --- tensor -----------------------------------------------------------------


class Tensor:
    """An n-d array plus the bookkeeping needed for reverse-mode gradients."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data)
        if arr.dtype.kind != "f":
            arr = arr.astype(default_dtype())
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{tag})"

    # arithmetic sugar; all of it funnels into the primitives below
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return sum_(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=default_dtype()))


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"non-finite values produced (shape {data.shape})")
    out = Tensor(data)
    if _GRAD[-1] and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# --- elementwise ------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data + b.data
    except ValueError as exc:
        raise DimensionError(str(exc)) from None
    return _make(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data - b.data
    except ValueError as exc:
        raise DimensionError(str(exc)) from None
    return _make(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data * b.data
    except ValueError as exc:
        raise DimensionError(str(exc)) from None
    return _make(
        out,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def sum_(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _make(np.asarray(out), (x,), back)


def reshape(x: Tensor, shape) -> Tensor:
    out = x.data.reshape(shape)
    return _make(out, (x,), lambda g: (g.reshape(x.shape),))


def expand_neighbors(x: Tensor, k: int) -> Tensor:
    """Repeat ``[n, c]`` rows along a new neighbour axis: ``[n, k, c]``."""
    out = np.broadcast_to(x.data[:, None, :], (x.shape[0], k, x.shape[1])).copy()
    return _make(out, (x,), lambda g: (g.sum(axis=1),))


# --- network primitives -----------------------------------------------------


def linear(x: Tensor, W: Tensor, b: Tensor | None = None) -> Tensor:
    """``x @ W + b`` over the last axis of ``x``."""
    if W.ndim != 2 or x.shape[-1] != W.shape[0]:
        raise DimensionError(f"linear: input width {x.shape[-1:]} vs weight {W.shape}")
    if b is not None and b.shape != (W.shape[1],):
        raise DimensionError(f"linear: bias {b.shape} vs weight {W.shape}")
    lead = x.shape[:-1]
    x2 = x.data.reshape(-1, W.shape[0])
    out = x2 @ W.data
    if b is not None:
        out = out + b.data
    out = out.reshape(lead + (W.shape[1],))

    def back(g):
        g2 = g.reshape(-1, W.shape[1])
        gx = (g2 @ W.data.T).reshape(x.shape) if x.requires_grad else None
        gW = x2.T @ g2 if W.requires_grad else None
        gb = g2.sum(axis=0) if b is not None and b.requires_grad else None
        return (gx, gW, gb) if b is not None else (gx, gW)

    parents = (x, W, b) if b is not None else (x, W)
    return _make(out, parents, back)


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    if not 0.0 <= slope < 1.0:
        raise ContractError(f"leaky_relu slope must lie in [0, 1), got {slope}")
    pos = decide(lambda: x.data > 0)
    scale = np.where(pos, 1.0, slope).astype(x.dtype)
    return _make(x.data * scale, (x,), lambda g: (g * scale,))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    if x.shape[axis] < 1:
        raise ContractError("softmax over an empty axis")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _make(y, (x,), back)


def softmax_lastdim(x: Tensor) -> Tensor:
    return softmax(x, axis=-1)


def max_over_neighbors(x: Tensor) -> Tensor:
    """Channel-wise max over axis 1 of an ``[n, k, c]`` tensor.

    The gradient goes to the first maximal entry along the neighbour axis.
    """
    if x.ndim != 3:
        raise DimensionError(f"max_over_neighbors expects [n, k, c], got {x.shape}")
    if x.shape[1] == 0:
        raise ContractError("max over an empty neighbourhood")
    arg = decide(lambda: x.data.argmax(axis=1))
    out = np.take_along_axis(x.data, arg[:, None, :], axis=1)[:, 0, :]

    def back(g):
        gx = np.zeros_like(x.data)
        np.put_along_axis(gx, arg[:, None, :], g[:, None, :], axis=1)
        return (gx,)

    return _make(out, (x,), back)


def gather_rows(x: Tensor, idx) -> Tensor:
    """``out[..., :] = x[idx[...], :]``; backward scatter-adds into ``x``."""
    idx = np.asarray(idx)
    if idx.dtype.kind not in "iu":
        raise ContractError("gather_rows needs integer indices")
    m = x.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= m):
        raise IndexError(f"gather index out of range for {m} rows")
    out = x.data[idx]

    def back(g):
        flat = idx.reshape(-1)
        g2 = g.reshape(flat.size, -1)
        gx = np.zeros((m, g2.shape[1]), dtype=g.dtype)
        np.add.at(gx, flat, g2)
        return (gx.reshape(x.shape),)

    return _make(out, (x,), back)


def concat_lastdim(xs: Sequence[Tensor]) -> Tensor:
    xs = [as_tensor(t) for t in xs]
    if not xs:
        raise ContractError("concat of nothing")
    lead = xs[0].shape[:-1]
    for t in xs[1:]:
        if t.shape[:-1] != lead:
            raise DimensionError(f"concat leading dims {t.shape[:-1]} != {lead}")
    if len(xs) == 1:
        return xs[0]
    out = np.concatenate([t.data for t in xs], axis=-1)
    cuts = np.cumsum([t.shape[-1] for t in xs])[:-1]

    def back(g):
        return tuple(np.split(g, cuts, axis=-1))

    return _make(out, tuple(xs), back)


def row_norm(x: Tensor) -> Tensor:
    """Euclidean norm over the last axis; the subgradient at 0 is taken as 0."""
    n = np.sqrt((x.data * x.data).sum(axis=-1))

    def back(g):
        safe = np.where(n > 0, n, 1.0)
        unit = np.where((n > 0)[..., None], x.data / safe[..., None], 0.0)
        return (g[..., None] * unit,)

    return _make(n, (x,), back)


# --- reverse pass -----------------------------------------------------------


class Tape:
    """The recorded computation behind a scalar, in topological order."""

    def __init__(self, root: Tensor):
        self.root = root
        self.nodes = _toposort(root)

    def __len__(self) -> int:
        return len(self.nodes)

    def backward(self) -> None:
        root = self.root
        if root.data.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {root.shape}")
        grads: dict[int, np.ndarray] = {id(root): np.ones_like(root.data)}
        for node in reversed(self.nodes):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg


def _toposort(root: Tensor) -> list[Tensor]:
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
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor, params=None) -> Tape:
    """Accumulate ``d loss / d leaf`` into ``leaf.grad`` for every reachable leaf.

    When ``params`` (a ParamStore) is given, parameters the loss never touched
    get an explicit zero gradient.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    tape = Tape(loss)
    if loss.requires_grad:
        tape.backward()
    if params is not None:
        for _, p in params.items():
            if p.requires_grad and p.grad is None:
                p.grad = np.zeros_like(p.data)
    return tape
