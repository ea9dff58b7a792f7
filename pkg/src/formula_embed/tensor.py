"""A small dense tensor library with tape-based reverse-mode differentiation.

Values are plain numpy arrays.  An operation records itself on the active
:class:`Tape` when any input needs a gradient; :func:`backward` walks that
tape once in reverse.  Every primitive needed by the graph networks lives
here, including the fused normalization layers, segment reductions over node
sets and the per-edge-label matrix product.
"""

from __future__ import annotations

import threading

import numpy as np


class ShapeMismatchError(ValueError):
    def __init__(self, op, *shapes):
        self.op = op
        self.shapes = shapes
        super().__init__(f"{op}: incompatible shapes " + " and ".join(str(tuple(s)) for s in shapes))


class TapeConsumedError(RuntimeError):
    pass


class NonScalarLossError(ValueError):
    pass


_local = threading.local()


def _active_tape():
    stack = getattr(_local, "tapes", None)
    return stack[-1] if stack else None


class Tape:
    """Ordered record of primitive applications.  Use as a context manager."""

    def __init__(self):
        self.records: list = []
        self.consumed = False

    def __enter__(self):
        if not hasattr(_local, "tapes"):
            _local.tapes = []
        _local.tapes.append(self)
        return self

    def __exit__(self, *exc):
        _local.tapes.pop()
        return False

    def __len__(self):
        return len(self.records)


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_rec", "_tape")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = None
        self._rec = None
        self._tape = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self):
        return self.data

    def item(self):
        return self.data.item()

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

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

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return index(self, key)


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


def _tracked(t: Tensor) -> bool:
    return t.requires_grad or t._rec is not None


def _result(data, inputs, backward_fn) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out._rec = None
    out._tape = None
    out.requires_grad = False
    tape = _active_tape()
    if tape is not None and any(_tracked(t) for t in inputs):
        out._rec = len(tape.records)
        out._tape = tape
        out.requires_grad = True
        tape.records.append((inputs, backward_fn))
    return out


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every leaf that requires a gradient."""
    if loss.data.size != 1 or loss.data.ndim != 0:
        raise NonScalarLossError(f"loss must be a scalar, got shape {loss.shape}")
    tape = loss._tape
    if tape is None:
        raise RuntimeError("loss is not on a differentiation tape")
    if tape.consumed:
        raise TapeConsumedError("this tape was already used for a backward pass")
    tape.consumed = True
    grads: list = [None] * len(tape.records)
    grads[loss._rec] = np.ones_like(loss.data)
    for i in range(loss._rec, -1, -1):
        g = grads[i]
        if g is None:
            continue
        grads[i] = None
        inputs, fn = tape.records[i]
        for inp, gi in zip(inputs, fn(g)):
            if gi is None:
                continue
            if inp._rec is not None and inp._tape is tape:
                j = inp._rec
                grads[j] = gi if grads[j] is None else grads[j] + gi
            elif inp.requires_grad:
                if inp.grad is None:
                    inp.grad = np.array(gi, dtype=inp.dtype, copy=True)
                else:
                    inp.grad += gi
    tape.records.clear()


def _unbroadcast(g, shape):
    if g.shape == tuple(shape):
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _broadcast_check(op, a, b):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatchError(op, a.shape, b.shape) from None


# ---------------------------------------------------------------------------
# elementwise


def add(a, b) -> Tensor:
    a = as_tensor(a, b if isinstance(b, Tensor) else None)
    b = as_tensor(b, a)
    _broadcast_check("add", a, b)
    sa, sb = a.shape, b.shape
    return _result(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a = as_tensor(a, b if isinstance(b, Tensor) else None)
    b = as_tensor(b, a)
    _broadcast_check("sub", a, b)
    sa, sb = a.shape, b.shape
    return _result(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    a = as_tensor(a, b if isinstance(b, Tensor) else None)
    b = as_tensor(b, a)
    _broadcast_check("mul", a, b)
    ad, bd = a.data, b.data
    return _result(
        ad * bd, (a, b), lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape))
    )


def div(a, b) -> Tensor:
    a = as_tensor(a, b if isinstance(b, Tensor) else None)
    b = as_tensor(b, a)
    _broadcast_check("div", a, b)
    ad, bd = a.data, b.data
    out = ad / bd
    return _result(
        out,
        (a, b),
        lambda g: (_unbroadcast(g / bd, ad.shape), _unbroadcast(-g * out / bd, bd.shape)),
    )


def neg(a: Tensor) -> Tensor:
    return _result(-a.data, (a,), lambda g: (-g,))


def _sigmoid(x):
    z = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z)).astype(x.dtype, copy=False)


def sigmoid(a: Tensor) -> Tensor:
    out = _sigmoid(a.data)
    return _result(out, (a,), lambda g: (g * out * (1.0 - out),))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _result(out, (a,), lambda g: (g * (1.0 - out * out),))


class KinkMonitor:
    """Track how close ReLU inputs and max-reductions come to a kink.

    Inside ``with KinkMonitor() as km:`` every :func:`relu` records its
    smallest ``|x|`` and every :func:`segment_max` the smallest nonzero gap
    between a bucket's maximum and its runner-up; ``km.margin`` is the
    minimum seen.  Finite differences are trustworthy when the margin is
    large compared with the perturbation.
    """

    def __init__(self):
        self.margin = np.inf

    def note(self, value):
        self.margin = min(self.margin, float(value))

    def __enter__(self):
        self._prev = getattr(_local, "kinks", None)
        _local.kinks = self
        return self

    def __exit__(self, *exc):
        _local.kinks = self._prev
        return False


def _kink_monitor():
    return getattr(_local, "kinks", None)


def relu(a: Tensor) -> Tensor:
    km = _kink_monitor()
    if km is not None and a.data.size:
        km.note(np.abs(a.data).min())
    mask = a.data > 0
    return _result(np.where(mask, a.data, 0).astype(a.dtype, copy=False), (a,), lambda g: (g * mask,))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _result(out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    x = a.data
    return _result(np.log(x), (a,), lambda g: (g / x,))


# ---------------------------------------------------------------------------
# linear algebra and shape


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatchError("matmul", a.shape, b.shape)
    ad, bd = a.data, b.data
    return _result(ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g))


def label_matvec(h: Tensor, table: Tensor, labels) -> Tensor:
    """Row ``e`` of the result is ``h[e] @ table[labels[e]]``."""
    labels = np.asarray(labels, dtype=np.int64)
    if h.ndim != 2 or table.ndim != 3 or h.shape[1] != table.shape[1] or len(labels) != h.shape[0]:
        raise ShapeMismatchError("label_matvec", h.shape, table.shape)
    hd, td = h.data, table.data
    mats = td[labels]
    out = np.matmul(hd[:, None, :], mats)[:, 0, :]

    def back(g):
        gh = np.matmul(g[:, None, :], mats.transpose(0, 2, 1))[:, 0, :]
        gt = np.zeros_like(td)
        np.add.at(gt, labels, hd[:, :, None] * g[:, None, :])
        return gh, gt

    return _result(out, (h, table), back)


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeMismatchError("reshape", old, shape) from None
    return _result(out, (a,), lambda g: (g.reshape(old),))


def index(a: Tensor, key) -> Tensor:
    out = a.data[key]

    def back(g):
        full = np.zeros_like(a.data)
        np.add.at(full, key, g)
        return (full,)

    return _result(np.array(out, copy=True), (a,), back)


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = list(tensors)
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeMismatchError("concat", *[t.shape for t in tensors]) from None
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _result(out, tuple(tensors), lambda g: tuple(np.split(g, sizes, axis=axis)))


def take_rows(parts, idx) -> Tensor:
    """Gather rows ``idx`` from the row-wise concatenation of ``parts``."""
    if isinstance(parts, Tensor):
        parts = [parts]
    parts = list(parts)
    idx = np.asarray(idx, dtype=np.int64)
    if len(parts) == 1:
        src = parts[0].data
    else:
        try:
            src = np.concatenate([p.data for p in parts], axis=0)
        except ValueError:
            raise ShapeMismatchError("take_rows", *[p.shape for p in parts]) from None
    if idx.size and (idx.min() < -src.shape[0] or idx.max() >= src.shape[0]):
        raise IndexError(f"take_rows: index out of range for {src.shape[0]} rows")
    sizes = np.cumsum([p.shape[0] for p in parts])[:-1]
    shape = src.shape

    def back(g):
        full = np.zeros(shape, dtype=g.dtype)
        np.add.at(full, idx, g)
        return tuple(np.split(full, sizes, axis=0)) if len(parts) > 1 else (full,)

    return _result(src[idx], tuple(parts), back)


def embedding(table: Tensor, ids) -> Tensor:
    return take_rows(table, ids)


# ---------------------------------------------------------------------------
# reductions


def sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    shape = a.shape
    out = np.asarray(a.data.sum(axis=axis, keepdims=keepdims))

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _result(out, (a,), back)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = a.data.size if axis is None else a.shape[axis]
    return div(sum(a, axis, keepdims), float(n))


def segment_sum(x: Tensor, seg, n: int) -> Tensor:
    """Sum rows of ``x`` into ``n`` buckets; rows are added in index order."""
    seg = np.asarray(seg, dtype=np.int64)
    if len(seg) != x.shape[0]:
        raise ShapeMismatchError("segment_sum", x.shape, seg.shape)
    out = np.zeros((n,) + x.shape[1:], dtype=x.dtype)
    np.add.at(out, seg, x.data)
    return _result(out, (x,), lambda g: (g[seg],))


def segment_max(x: Tensor, seg, n: int) -> Tensor:
    """Per-bucket columnwise max; the gradient goes to the lowest row index."""
    seg = np.asarray(seg, dtype=np.int64)
    if len(seg) != x.shape[0] or x.ndim != 2:
        raise ShapeMismatchError("segment_max", x.shape, seg.shape)
    xd = x.data
    out = np.full((n, xd.shape[1]), -np.inf, dtype=xd.dtype)
    np.maximum.at(out, seg, xd)
    rows = np.arange(xd.shape[0])[:, None]
    big = xd.shape[0]
    cand = np.where(xd == out[seg], rows, big)
    arg = np.full(out.shape, big, dtype=np.int64)
    np.minimum.at(arg, seg, cand)
    empty = arg == big
    km = _kink_monitor()
    if km is not None:
        below = np.where(xd < out[seg], xd, -np.inf)
        second = np.full(out.shape, -np.inf, dtype=xd.dtype)
        np.maximum.at(second, seg, below)
        gap = (out - second)[np.isfinite(second) & ~empty]
        if gap.size:
            km.note(gap.min())
    out[empty] = 0

    def back(g):
        gx = np.zeros_like(xd)
        s, c = np.nonzero(~empty)
        gx[arg[s, c], c] += g[s, c]
        return (gx,)

    return _result(out, (x,), back)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)
    return _result(y, (x,), lambda g: (y * (g - (g * y).sum(axis=axis, keepdims=True)),))


def segment_softmax(scores: Tensor, seg, n: int) -> Tensor:
    """Softmax over rows that share a bucket id (columns are independent)."""
    seg = np.asarray(seg, dtype=np.int64)
    s = scores.data
    if len(seg) != s.shape[0]:
        raise ShapeMismatchError("segment_softmax", s.shape, seg.shape)
    mx = np.full((n,) + s.shape[1:], -np.inf, dtype=s.dtype)
    np.maximum.at(mx, seg, s)
    e = np.exp(s - mx[seg])
    tot = np.zeros_like(mx)
    np.add.at(tot, seg, e)
    y = e / tot[seg]

    def back(g):
        gy = g * y
        acc = np.zeros_like(mx)
        np.add.at(acc, seg, gy)
        return (gy - y * acc[seg],)

    return _result(y, (scores,), back)


# ---------------------------------------------------------------------------
# normalization


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    if gamma.shape[-1] != x.shape[-1] or beta.shape != gamma.shape:
        raise ShapeMismatchError("layer_norm", x.shape, gamma.shape)
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    gd = gamma.data
    out = xhat * gd + beta.data
    d = xd.shape[-1]

    def back(g):
        dxhat = g * gd
        dx = inv / d * (d * dxhat - dxhat.sum(-1, keepdims=True) - xhat * (dxhat * xhat).sum(-1, keepdims=True))
        return dx, _unbroadcast(g * xhat, gd.shape), _unbroadcast(g, gd.shape)

    return _result(out, (x, gamma, beta), back)


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
    update_stats: bool = True,
) -> Tensor:
    """Per-feature normalization over axis 0.

    Training mode uses the batch statistics and, when ``update_stats`` is
    set, folds them into the running buffers in place.
    """
    if x.ndim != 2 or gamma.shape != (x.shape[1],):
        raise ShapeMismatchError("batch_norm", x.shape, gamma.shape)
    xd, gd = x.data, gamma.data
    n = xd.shape[0]
    if n == 0:
        return _result(xd.copy(), (x, gamma, beta), lambda g: (g, np.zeros_like(gd), np.zeros_like(gd)))
    if not training:
        inv = 1.0 / np.sqrt(running_var + eps)
        xhat = (xd - running_mean) * inv
        out = (xhat * gd + beta.data).astype(xd.dtype, copy=False)
        return _result(out, (x, gamma, beta), lambda g: (g * gd * inv, (g * xhat).sum(0), g.sum(0)))
    mu = xd.mean(axis=0)
    xc = xd - mu
    var = (xc * xc).mean(axis=0)
    if update_stats:
        unbiased = var * (n / (n - 1)) if n > 1 else var
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * unbiased
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gd + beta.data

    def back(g):
        dxhat = g * gd
        dx = inv / n * (n * dxhat - dxhat.sum(0) - xhat * (dxhat * xhat).sum(0))
        return dx, (g * xhat).sum(0), g.sum(0)

    return _result(out, (x, gamma, beta), back)


# ---------------------------------------------------------------------------
# loss


def bce(p: Tensor, y, clamp: float = 1e-7) -> Tensor:
    """Mean binary cross-entropy with probabilities clamped to [c, 1-c]."""
    y = np.asarray(y, dtype=p.dtype)
    if y.shape != p.shape:
        raise ShapeMismatchError("bce", p.shape, y.shape)
    pd = p.data
    inside = (pd >= clamp) & (pd <= 1.0 - clamp)
    pc = np.clip(pd, clamp, 1.0 - clamp)
    n = max(pd.size, 1)
    loss = -(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc)).sum() / n

    def back(g):
        d = (-(y / pc) + (1.0 - y) / (1.0 - pc)) / n
        return (g * d * inside,)

    return _result(np.asarray(loss, dtype=pd.dtype), (p,), back)


# ---------------------------------------------------------------------------
# verification


def finite_difference(f, params, eps: float = 1e-5, coords=None):
    """Central-difference gradient of scalar ``f()`` w.r.t. arrays in ``params``.

    ``params`` are perturbed in place and restored.  With ``coords`` (a list
    of ``(param_index, flat_index)``) only those entries are evaluated and a
    1-D array is returned; otherwise one gradient array per parameter.
    """
    arrays = [p.data if isinstance(p, Tensor) else p for p in params]
    if coords is None:
        coords = [(k, i) for k, a in enumerate(arrays) for i in range(a.size)]
        full = True
    else:
        full = False
    vals = np.empty(len(coords))
    for n, (k, i) in enumerate(coords):
        flat = arrays[k].reshape(-1)
        old = flat[i]
        flat[i] = old + eps
        hi = float(f())
        flat[i] = old - eps
        lo = float(f())
        flat[i] = old
        vals[n] = (hi - lo) / (2.0 * eps)
    if not full:
        return vals
    out = [np.zeros(a.shape) for a in arrays]
    for n, (k, i) in enumerate(coords):
        out[k].reshape(-1)[i] = vals[n]
    return out


def relative_error(analytic, numeric, floor: float = 1e-6):
    """``|a - n| / max(|a|, |n|, floor)`` elementwise."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
