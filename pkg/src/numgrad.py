"""Dense tensors with reverse-mode automatic differentiation.

Each Tensor wraps a numpy array. Operations on tensors that require grad
record their parents plus a backward rule `rule(g) -> tuple of parent grads`.
`backward(loss)` traces the recorded graph into topological order and runs
the rules exactly once each, in reverse.

Payloads are float32 for training. Building a graph from float64 leaves gives
the 64-bit shadow path used by finite-difference gradient checks — no op
downcasts its inputs.

Graph recording is per thread: `no_grad()` only affects the calling thread,
so pure evaluation can run concurrently with other forwards.
"""

from __future__ import annotations

import contextlib
import logging
import math
import threading
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf

from .errors import ConfigError, DomainError, GraphError, ShapeError

logger = logging.getLogger(__name__)

DEFAULT_DTYPE = np.float32

# LayerNorm epsilon (standard transformer value)
LAYERNORM_EPS = 1e-5

# Adam defaults
ADAM_LR = 1e-4
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

_SQRT_HALF = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

_state = threading.local()

BackwardRule = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


def grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording for the calling thread."""
    prev = grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class Tensor:
    """A dense row-major array with an optional gradient."""

    __array_priority__ = 100  # numpy defers to Tensor operators

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif not isinstance(data, np.ndarray) or not np.issubdtype(arr.dtype, np.floating):
            # python scalars/lists and integer arrays default to float32
            arr = arr.astype(DEFAULT_DTYPE)
        self.data: np.ndarray = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name: str = ""
        self._parents: tuple[Tensor, ...] = ()
        self._rule: BackwardRule | None = None
        self._op = "leaf"
        self._consumed = False

    # --- properties ---

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dims(self) -> list[int]:
        return list(self.data.shape)

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._rule is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def astype(self, dtype, requires_grad: bool | None = None) -> Tensor:
        """Copy to another dtype as a fresh leaf (used for the 64-bit shadow path)."""
        rg = self.requires_grad if requires_grad is None else requires_grad
        return Tensor(self.data.astype(dtype), requires_grad=rg)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(dims={self.dims}, dtype={self.dtype}, op={self._op}{flag})"

    # --- operators ---

    def __add__(self, other): return add(self, other)
    def __radd__(self, other): return add(other, self)
    def __sub__(self, other): return sub(self, other)
    def __rsub__(self, other): return sub(other, self)
    def __mul__(self, other): return mul(self, other)
    def __rmul__(self, other): return mul(other, self)
    def __truediv__(self, other): return div(self, other)
    def __rtruediv__(self, other): return div(other, self)
    def __neg__(self): return scale(self, -1.0)
    def __pow__(self, exponent: float): return power(self, exponent)
    def __matmul__(self, other): return matmul(self, other)
    def __rmatmul__(self, other): return matmul(other, self)
    def __getitem__(self, index): return getitem(self, index)

    def sum(self, axis=None, keepdims: bool = False) -> Tensor:
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> Tensor:
        return reduce_mean(self, axis, keepdims)

    def reshape(self, *dims) -> Tensor:
        if len(dims) == 1 and isinstance(dims[0], (tuple, list)):
            dims = tuple(dims[0])
        return reshape(self, dims)

    def transpose(self, *axes) -> Tensor:
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)


def _as_tensor(value, like: Tensor | None = None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype if like is not None else DEFAULT_DTYPE
    return Tensor(np.asarray(value, dtype=dtype))


def _result(data: np.ndarray, parents: tuple[Tensor, ...], op: str, rule: BackwardRule) -> Tensor:
    """Wrap an op result, recording the node only when some parent needs grad."""
    out = Tensor(data)
    if grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._rule = rule
        out._op = op
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: dims {a.dims} and {b.dims} are not broadcastable") from None


# --- ComputeGraph ---

class ComputeGraph:
    """Topologically ordered view of everything a tensor depends on."""

    def __init__(self, tensors: list[Tensor]):
        self.tensors = tensors

    @classmethod
    def trace(cls, root: Tensor) -> ComputeGraph:
        """Iterative post-order DFS; every tensor appears once, after its inputs."""
        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
        return cls(order)

    def __len__(self) -> int:
        return len(self.tensors)


def backward(loss: Tensor) -> ComputeGraph:
    """Populate `.grad` on every leaf the scalar `loss` depends on.

    Leaf gradients accumulate across calls on different losses; calling
    backward twice on the same loss raises GraphError.
    """
    if loss.data.size != 1:
        raise GraphError(f"backward needs a scalar loss, got dims {loss.dims}")
    if not loss.requires_grad:
        raise GraphError("backward on a tensor that was not recorded (no input requires grad)")
    if loss._consumed:
        raise GraphError("backward already ran on this loss; run a fresh forward pass first")

    graph = ComputeGraph.trace(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(graph.tensors):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._rule(g)):
            if pg is None or not parent.requires_grad:
                continue
            prev = grads.get(id(parent))
            grads[id(parent)] = pg if prev is None else prev + pg
    loss._consumed = True
    return graph


def zero_grad(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None


# --- elementwise ---

def add(a, b) -> Tensor:
    a, b = _as_tensor(a, b if isinstance(b, Tensor) else None), _as_tensor(b, a if isinstance(a, Tensor) else None)
    _check_broadcast("add", a, b)
    return _result(a.data + b.data, (a, b), "add",
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a, b if isinstance(b, Tensor) else None), _as_tensor(b, a if isinstance(a, Tensor) else None)
    _check_broadcast("sub", a, b)
    return _result(a.data - b.data, (a, b), "sub",
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a, b if isinstance(b, Tensor) else None), _as_tensor(b, a if isinstance(a, Tensor) else None)
    _check_broadcast("mul", a, b)
    return _result(a.data * b.data, (a, b), "mul",
                   lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def div(a, b) -> Tensor:
    a, b = _as_tensor(a, b if isinstance(b, Tensor) else None), _as_tensor(b, a if isinstance(a, Tensor) else None)
    _check_broadcast("div", a, b)
    out = a.data / b.data
    return _result(out, (a, b), "div",
                   lambda g: (_unbroadcast(g / b.data, a.shape),
                              _unbroadcast(-g * out / b.data, b.shape)))


def scale(x: Tensor, factor: float) -> Tensor:
    factor = float(factor)
    return _result(x.data * x.dtype.type(factor), (x,), "scale",
                   lambda g: (g * g.dtype.type(factor),))


def power(x: Tensor, exponent: float) -> Tensor:
    exponent = float(exponent)
    if exponent != int(exponent) and np.any(x.data < 0):
        raise DomainError(f"power: non-integer exponent {exponent} of a negative input")
    out = x.data ** x.dtype.type(exponent)
    return _result(out, (x,), "pow",
                   lambda g: (g * x.dtype.type(exponent) * x.data ** x.dtype.type(exponent - 1),))


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return _result(out, (x,), "exp", lambda g: (g * out,))


def log(x: Tensor) -> Tensor:
    if np.any(x.data < 0):
        raise DomainError(f"log of negative input (min {float(x.data.min()):.4g})")
    return _result(np.log(x.data), (x,), "log", lambda g: (g / x.data,))


def sqrt(x: Tensor) -> Tensor:
    if np.any(x.data < 0):
        raise DomainError(f"sqrt of negative input (min {float(x.data.min()):.4g})")
    out = np.sqrt(x.data)
    return _result(out, (x,), "sqrt", lambda g: (g * 0.5 / out,))


def gelu(x: Tensor) -> Tensor:
    """Exact GELU: x·Φ(x)."""
    cdf = 0.5 * (1.0 + erf(x.data * _SQRT_HALF))
    cdf = cdf.astype(x.dtype, copy=False)
    pdf = (np.exp(-0.5 * x.data * x.data) * _INV_SQRT_2PI).astype(x.dtype, copy=False)
    return _result(x.data * cdf, (x,), "gelu", lambda g: (g * (cdf + x.data * pdf),))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _result(np.where(mask, x.data, 0).astype(x.dtype), (x,), "relu",
                   lambda g: (g * mask,))


_ELEMENTWISE = {
    "add": add, "sub": sub, "mul": mul, "gelu": gelu, "exp": exp,
    "log": log, "sqrt": sqrt, "scale": scale, "relu": relu, "div": div,
}


def elementwise(op: str, *operands) -> Tensor:
    """Dispatch a pointwise op by name: elementwise("add", a, b), ("scale", x, 2.0)."""
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ShapeError(f"unknown elementwise op {op!r}; known: {sorted(_ELEMENTWISE)}") from None
    return fn(*operands)


# --- reductions and shape ops ---

def _norm_axes(axis, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    return tuple(a % ndim for a in axes)


def reduce_sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axis, x.ndim)
    out = x.data.sum(axis=axes, keepdims=keepdims)

    def rule(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _result(np.asarray(out, dtype=x.dtype), (x,), "sum", rule)


def reduce_mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    return scale(reduce_sum(x, axes, keepdims), 1.0 / count)


def reshape(x: Tensor, dims) -> Tensor:
    dims = tuple(dims)
    try:
        out = x.data.reshape(dims)
    except ValueError:
        raise ShapeError(f"reshape: cannot view dims {x.dims} as {list(dims)}") from None
    return _result(out, (x,), "reshape", lambda g: (g.reshape(x.shape),))


def transpose(x: Tensor, axes=None) -> Tensor:
    axes = tuple(reversed(range(x.ndim))) if axes is None else tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _result(np.transpose(x.data, axes), (x,), "transpose",
                   lambda g: (np.transpose(g, inverse),))


def swapaxes(x: Tensor, a: int, b: int) -> Tensor:
    axes = list(range(x.ndim))
    axes[a], axes[b] = axes[b], axes[a]
    return transpose(x, axes)


def getitem(x: Tensor, index) -> Tensor:
    if isinstance(index, Tensor):
        index = index.data.astype(np.intp)

    def rule(g):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g)
        return (full,)

    return _result(np.asarray(x.data[index]), (x,), "getitem", rule)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    axis = axis % tensors[0].ndim
    sizes = [t.shape[axis] for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError(f"concat on axis {axis}: dims {[t.dims for t in tensors]}") from None
    splits = np.cumsum(sizes)[:-1]
    return _result(out, tuple(tensors), "concat",
                   lambda g: tuple(np.split(g, splits, axis=axis)))


# --- linear algebra ---

def matmul(a, b) -> Tensor:
    """Batched contraction a[..., m, k] @ b[..., k, n] with broadcast batch dims."""
    a, b = _as_tensor(a, b if isinstance(b, Tensor) else None), _as_tensor(b, a if isinstance(a, Tensor) else None)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: dims {a.dims} @ {b.dims} — inner extents must agree")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError(f"matmul: batch dims of {a.dims} and {b.dims} are not broadcastable") from None

    def rule(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _result(a.data @ b.data, (a, b), "matmul", rule)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """x[..., in] @ weight[in, out] (+ bias[out])."""
    out = matmul(x, weight)
    return out if bias is None else add(out, bias)


# --- normalization and softmax ---

def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Max-subtracted softmax; rows sum to one along `axis`."""
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)
    return _result(out, (x,), "softmax",
                   lambda g: (out * (g - (g * out).sum(axis=axis, keepdims=True)),))


def logsumexp(x: Tensor, axis: int = -1, where: np.ndarray | None = None) -> Tensor:
    """Stable log Σ exp(x) along `axis`, optionally over the `where` mask only."""
    mask = np.ones(x.shape, dtype=bool) if where is None else np.broadcast_to(where, x.shape)
    masked = np.where(mask, x.data, -np.inf)
    peak = masked.max(axis=axis, keepdims=True)
    peak = np.where(np.isfinite(peak), peak, 0).astype(x.dtype)
    e = np.where(mask, np.exp(x.data - peak), 0).astype(x.dtype)
    total = e.sum(axis=axis, keepdims=True)
    out = (np.log(total) + peak).squeeze(axis)
    weights = e / total

    def rule(g):
        return (np.expand_dims(g, axis) * weights,)

    return _result(out.astype(x.dtype), (x,), "logsumexp", rule)


def layernorm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = LAYERNORM_EPS) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine.

    A constant row has zero centered values, so it maps to `beta`.
    """
    if gamma.shape != (x.shape[-1],) or beta.shape != (x.shape[-1],):
        raise ShapeError(f"layernorm: gamma {gamma.dims} / beta {beta.dims} vs last dim of {x.dims}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + x.dtype.type(eps))
    xhat = xc * inv
    out = xhat * gamma.data + beta.data
    lead = tuple(range(x.ndim - 1))

    def rule(g):
        gxhat = g * gamma.data
        gx = inv * (gxhat - gxhat.mean(axis=-1, keepdims=True)
                    - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True))
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return _result(out, (x, gamma, beta), "layernorm", rule)


def l2_normalize(x: Tensor, axis: int = -1, eps: float = 1e-8) -> Tensor:
    norm = sqrt(reduce_sum(mul(x, x), axis=axis, keepdims=True))
    return div(x, add(norm, eps))


# --- convolution ---

def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """NHWC convolution. weight is (kh, kw, c_in, c_out)."""
    if x.ndim != 4 or weight.ndim != 4 or x.shape[-1] != weight.shape[2]:
        raise ShapeError(f"conv2d: input {x.dims} vs weight {weight.dims} (NHWC, kh×kw×in×out)")
    kh, kw, cin, cout = weight.shape
    xp = np.pad(x.data, ((0, 0), (padding, padding), (padding, padding), (0, 0)))
    windows = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    b, ho, wo = windows.shape[:3]
    cols = np.ascontiguousarray(windows.transpose(0, 1, 2, 4, 5, 3)).reshape(b, ho, wo, kh * kw * cin)
    w2 = weight.data.reshape(kh * kw * cin, cout)
    out = cols @ w2
    if bias is not None:
        out = out + bias.data

    def rule(g):
        gw = np.tensordot(cols, g, axes=([0, 1, 2], [0, 1, 2])).reshape(weight.shape)
        gcols = (g @ w2.T).reshape(b, ho, wo, kh, kw, cin)
        gxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                gxp[:, i:i + stride * ho:stride, j:j + stride * wo:stride, :] += gcols[:, :, :, i, j, :]
        h, w = x.shape[1], x.shape[2]
        gx = gxp[:, padding:padding + h, padding:padding + w, :]
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 1, 2)))
        return tuple(grads)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _result(out, parents, "conv2d", rule)


# --- losses shared by heads ---

def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean softmax cross-entropy over rows of `logits` (B, C)."""
    labels = np.asarray(labels, dtype=np.intp)
    lse = logsumexp(logits, axis=-1)
    picked = getitem(logits, (np.arange(len(labels)), labels))
    return reduce_mean(sub(lse, picked))


# --- optimizer ---

def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    moments: dict[str, tuple[np.ndarray, np.ndarray]],
    lr: float = ADAM_LR,
    beta1: float = ADAM_BETA1,
    beta2: float = ADAM_BETA2,
    eps: float = ADAM_EPS,
    step: int = 1,
) -> tuple[dict[str, np.ndarray], dict[str, tuple[np.ndarray, np.ndarray]]]:
    """One bias-corrected Adam update. Returns new params and new (m, v) moments.

    Parameters missing from `grads` are carried over unchanged.
    """
    if step < 1:
        raise ConfigError(f"adam_step: step must be ≥ 1, got {step}")
    bc1 = 1.0 - beta1 ** step
    bc2 = 1.0 - beta2 ** step
    new_params: dict[str, np.ndarray] = {}
    new_moments: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    for name, value in params.items():
        g = grads.get(name)
        m, v = moments.get(name, (np.zeros_like(value), np.zeros_like(value)))
        if g is None:
            new_params[name], new_moments[name] = value, (m, v)
            continue
        if g.shape != value.shape:
            raise ShapeError(f"adam_step: grad dims {list(g.shape)} vs param {name} {list(value.shape)}")
        t = value.dtype.type
        m = t(beta1) * m + t(1.0 - beta1) * g
        v = t(beta2) * v + t(1.0 - beta2) * (g * g)
        denom = np.sqrt(v / t(bc2)) + t(eps)
        new_params[name] = (value - t(lr / bc1) * m / denom).astype(value.dtype, copy=False)
        new_moments[name] = (m, v)
    return new_params, new_moments


class Adam:
    """Stateful wrapper over adam_step for a named parameter dict."""

    def __init__(self, params: dict[str, Tensor], lr: float = ADAM_LR,
                 beta1: float = ADAM_BETA1, beta2: float = ADAM_BETA2, eps: float = ADAM_EPS):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.moments: dict[str, tuple[np.ndarray, np.ndarray]] = {}

    def step(self) -> None:
        self.step_count += 1
        values = {k: p.data for k, p in self.params.items()}
        grads = {k: p.grad for k, p in self.params.items() if p.grad is not None}
        new_values, self.moments = adam_step(
            values, grads, self.moments, self.lr, self.beta1, self.beta2, self.eps, self.step_count
        )
        for k, p in self.params.items():
            p.data = new_values[k]

    def zero_grad(self) -> None:
        zero_grad(self.params.values())

    def state_dict(self) -> dict:
        """Step count and (m, v) moments, enough to resume training bit-for-bit."""
        return {"step": self.step_count, "moments": {k: (m.copy(), v.copy()) for k, (m, v) in self.moments.items()}}

    def load_state_dict(self, state: dict) -> None:
        moments = state.get("moments", {})
        unknown = set(moments) - set(self.params)
        if unknown:
            raise ConfigError(f"Adam state has moments for unknown parameters {sorted(unknown)}")
        for name, (m, v) in moments.items():
            shape = self.params[name].data.shape
            if m.shape != shape or v.shape != shape:
                raise ShapeError(f"Adam moments for {name} have dims {list(m.shape)}, param is {list(shape)}")
        self.step_count = int(state.get("step", 0))
        self.moments = {k: (m.copy(), v.copy()) for k, (m, v) in moments.items()}
