"""Tape-based reverse-mode differentiation over numpy float64 arrays.

Usage::

    tape = Tape()
    w = tape.variable(np.zeros((3, 2)))
    loss = sum_(tanh(matmul(x, w)))
    tape.backward(loss)
    w.grad  # dloss/dw

Operations on tensors that are not (transitively) variables of a tape are
evaluated eagerly and not recorded, which is how inference runs.
"""

import numpy as np

from .errors import IndexOutOfVocab, NonFiniteGradient, NonScalarLoss, ShapeMismatch

DTYPE = np.float64


class Tensor:
    __slots__ = ("value", "grad", "tape", "name")

    def __init__(self, value, tape=None, name=None):
        self.value = value
        self.grad = None
        self.tape = tape
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    @property
    def requires_grad(self):
        return self.tape is not None

    def __repr__(self):
        kind = "variable" if self.tape is not None else "constant"
        return f"Tensor({kind}, shape={self.shape}, name={self.name!r})"

    __add__ = lambda self, other: add(self, other)  # noqa: E731
    __sub__ = lambda self, other: sub(self, other)  # noqa: E731
    __mul__ = lambda self, other: mul(self, other)  # noqa: E731
    __matmul__ = lambda self, other: matmul(self, other)  # noqa: E731
    __getitem__ = lambda self, key: index(self, key)  # noqa: E731


def constant(value):
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=DTYPE))


class Tape:
    """Ordered record of primitive applications for one forward pass."""

    def __init__(self):
        self.records = []
        self.variables = []

    def variable(self, value, name=None):
        t = Tensor(np.asarray(value, dtype=DTYPE), self, name)
        self.variables.append(t)
        return t

    def backward(self, loss, seed=None):
        """Accumulate d(loss)/d(node) into ``.grad`` for every recorded node.

        Returns the gradients of this tape's variables in creation order;
        variables the loss does not depend on get zero arrays.
        """
        if seed is None:
            if loss.value.size != 1:
                raise NonScalarLoss(f"loss has shape {loss.shape}; pass an explicit seed")
            seed = np.ones_like(loss.value)
        else:
            seed = np.asarray(seed, dtype=DTYPE)
            if seed.shape != loss.shape:
                raise ShapeMismatch(f"seed shape {seed.shape} != loss shape {loss.shape}")
        for out, _, _ in self.records:
            out.grad = None
        for v in self.variables:
            v.grad = None
        loss.grad = seed.copy()
        for out, parents, backward in reversed(self.records):
            if out.grad is None:
                continue
            grads = backward(out.grad)
            for parent, g in zip(parents, grads):
                if g is None or parent.tape is None:
                    continue
                if parent.grad is None:
                    parent.grad = g
                else:
                    parent.grad = parent.grad + g
        for v in self.variables:
            if v.grad is None:
                v.grad = np.zeros_like(v.value)
        return [v.grad for v in self.variables]


def _record(value, parents, backward):
    tape = None
    for p in parents:
        if p.tape is not None:
            if tape is not None and p.tape is not tape:
                raise ValueError("operands belong to different tapes")
            tape = p.tape
    out = Tensor(value, tape)
    if tape is not None:
        tape.records.append((out, parents, backward))
    return out


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _broadcast_shape(a, b, op):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatch(f"{op}: shapes {a.shape} and {b.shape} are incompatible") from None


# -- elementwise -------------------------------------------------------------


def add(a, b):
    a, b = constant(a), constant(b)
    _broadcast_shape(a, b, "add")
    sa, sb = a.shape, b.shape
    return _record(a.value + b.value, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b):
    a, b = constant(a), constant(b)
    _broadcast_shape(a, b, "sub")
    sa, sb = a.shape, b.shape
    return _record(a.value - b.value, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b):
    a, b = constant(a), constant(b)
    _broadcast_shape(a, b, "mul")
    av, bv = a.value, b.value
    return _record(
        av * bv,
        (a, b),
        lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)),
    )


def tanh(a):
    y = np.tanh(a.value)
    return _record(y, (a,), lambda g: (g * (1.0 - y * y),))


def sigmoid(a):
    y = 0.5 * (np.tanh(0.5 * a.value) + 1.0)
    return _record(y, (a,), lambda g: (g * y * (1.0 - y),))


def exp(a):
    y = np.exp(a.value)
    return _record(y, (a,), lambda g: (g * y,))


def log(a):
    x = a.value
    return _record(np.log(x), (a,), lambda g: (g / x,))


# -- linear algebra and shape ------------------------------------------------


def matmul(a, b):
    """Matrix product; leading (batch) dimensions broadcast as in numpy."""
    a, b = constant(a), constant(b)
    if a.value.ndim < 2 or b.value.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeMismatch(f"matmul: shapes {a.shape} and {b.shape} are incompatible")
    av, bv = a.value, b.value

    if bv.ndim == 2 and av.ndim > 2:
        # shared weight: fold leading dims so the weight gradient is one product
        def backward(g):
            gb = av.reshape(-1, av.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            return g @ bv.T, gb

        return _record(av @ bv, (a, b), backward)

    def backward(g):
        ga = _unbroadcast(g @ np.swapaxes(bv, -1, -2), av.shape)
        gb = _unbroadcast(np.swapaxes(av, -1, -2) @ g, bv.shape)
        return ga, gb

    return _record(av @ bv, (a, b), backward)


def concat(tensors, axis=-1):
    tensors = [constant(t) for t in tensors]
    try:
        value = np.concatenate([t.value for t in tensors], axis=axis)
    except ValueError:
        shapes = [t.shape for t in tensors]
        raise ShapeMismatch(f"concat along axis {axis}: shapes {shapes}") from None
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _record(value, tuple(tensors), lambda g: tuple(np.split(g, sizes, axis=axis)))


def stack(tensors, axis=0):
    tensors = [constant(t) for t in tensors]
    shapes = {t.shape for t in tensors}
    if len(shapes) != 1:
        raise ShapeMismatch(f"stack: shapes {sorted(shapes)} differ")
    value = np.stack([t.value for t in tensors], axis=axis)
    n = len(tensors)
    return _record(
        value,
        tuple(tensors),
        lambda g: tuple(np.take(g, i, axis=axis) for i in range(n)),
    )


def index(a, key):
    """Basic or integer-array indexing (``a[key]``)."""
    shape = a.shape

    basic = isinstance(key, (int, np.integer, slice))

    def backward(g):
        full = np.zeros(shape, dtype=DTYPE)
        if basic:
            full[key] = g  # no repeated positions possible
        else:
            np.add.at(full, key, g)
        return (full,)

    return _record(a.value[key], (a,), backward)


def slice_(a, start, stop, axis=-1):
    key = [slice(None)] * a.value.ndim
    key[axis] = slice(start, stop)
    key = tuple(key)
    shape = a.shape

    def backward(g):
        full = np.zeros(shape, dtype=DTYPE)
        full[key] = g
        return (full,)

    return _record(a.value[key], (a,), backward)


def reshape(a, shape):
    old = a.shape
    try:
        value = a.value.reshape(shape)
    except ValueError:
        raise ShapeMismatch(f"reshape: cannot view {old} as {shape}") from None
    return _record(value, (a,), lambda g: (g.reshape(old),))


def swapaxes(a, ax1, ax2):
    return _record(
        np.swapaxes(a.value, ax1, ax2), (a,), lambda g: (np.swapaxes(g, ax1, ax2),)
    )


def sum_(a, axis=None):
    shape = a.shape

    def backward(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _record(np.asarray(a.value.sum(axis=axis)), (a,), backward)


def mean(a, axis=None):
    n = a.value.size if axis is None else a.shape[axis]
    return mul(sum_(a, axis), 1.0 / n)


# -- normalisation, embedding, dropout ---------------------------------------


def softmax(a, axis=-1, mask=None):
    """Softmax along ``axis``; positions where ``mask`` is False get weight 0."""
    x = a.value
    if mask is not None:
        x = np.where(mask, x, -np.inf)
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _record(y, (a,), backward)


def embedding(table, indices):
    """Row lookup ``table[indices]`` for an integer index array."""
    indices = np.asarray(indices)
    if indices.size and (indices.min() < 0 or indices.max() >= table.shape[0]):
        raise IndexOutOfVocab(
            f"index range [{indices.min()}, {indices.max()}] outside table of {table.shape[0]} rows"
        )
    shape = table.shape

    def backward(g):
        full = np.zeros(shape, dtype=DTYPE)
        np.add.at(full, indices, g)
        return (full,)

    return _record(table.value[indices], (table,), backward)


def dropout_mask(shape, rate, rng):
    """Inverted-dropout mask: zeros with probability ``rate``, else 1/(1-rate)."""
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


def dropout(a, rate, rng, training=True):
    if not training or rate == 0.0:
        return a
    return mul(a, Tensor(dropout_mask(a.shape, rate, rng)))


def flip(a, axis=0):
    return _record(np.flip(a.value, axis).copy(), (a,), lambda g: (np.flip(g, axis).copy(),))


def lstm_layer(xproj, w_hh, h0, c0, mask=None):
    """Unidirectional LSTM over a whole sequence.

    ``xproj`` is the time-major (T, B, 4H) input projection (bias included)
    with gates ordered input, forget, cell, output. ``mask`` (T, B) marks real
    steps; at masked steps the previous state is carried through unchanged.
    Returns a (T, B, 2H) tensor holding ``[h_t, c_t]`` for every step.
    """
    xs = xproj.value
    whh = w_hh.value
    steps, batch, four_h = xs.shape
    hidden = four_h // 4
    if whh.shape != (hidden, four_h) or h0.shape != (batch, hidden) or c0.shape != (batch, hidden):
        raise ShapeMismatch(
            f"lstm_layer: xproj {xs.shape}, w_hh {whh.shape}, h0 {h0.shape}, c0 {c0.shape}"
        )
    m = np.ones((steps, batch, 1)) if mask is None else np.asarray(mask, dtype=DTYPE)[:, :, None]
    out = np.empty((steps, batch, 2 * hidden))
    h_prev = np.empty((steps, batch, hidden))
    cache = []
    h, c = h0.value, c0.value
    for t in range(steps):
        h_prev[t] = h
        a = xs[t] + h @ whh
        i = 0.5 * (np.tanh(0.5 * a[:, :hidden]) + 1.0)
        f = 0.5 * (np.tanh(0.5 * a[:, hidden : 2 * hidden]) + 1.0)
        g = np.tanh(a[:, 2 * hidden : 3 * hidden])
        o = 0.5 * (np.tanh(0.5 * a[:, 3 * hidden :]) + 1.0)
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        mt = m[t]
        cache.append((c, i, f, g, o, tc))
        h = mt * h_new + (1.0 - mt) * h
        c = mt * c_new + (1.0 - mt) * c
        out[t, :, :hidden] = h
        out[t, :, hidden:] = c

    def backward(grad):
        dxs = np.empty_like(xs)
        dh = np.zeros((batch, hidden))
        dc = np.zeros((batch, hidden))
        for t in range(steps - 1, -1, -1):
            c_prev, i, f, g, o, tc = cache[t]
            mt = m[t]
            dh = dh + grad[t, :, :hidden]
            dc = dc + grad[t, :, hidden:]
            dh_new = mt * dh
            dc_new = mt * dc + dh_new * o * (1.0 - tc * tc)
            da = np.empty((batch, four_h))
            da[:, :hidden] = dc_new * g * i * (1.0 - i)
            da[:, hidden : 2 * hidden] = dc_new * c_prev * f * (1.0 - f)
            da[:, 2 * hidden : 3 * hidden] = dc_new * i * (1.0 - g * g)
            da[:, 3 * hidden :] = dh_new * tc * o * (1.0 - o)
            dxs[t] = da
            dh = da @ whh.T + (1.0 - mt) * dh
            dc = dc_new * f + (1.0 - mt) * dc
        # one product for the recurrent weight instead of one per step
        dwhh = h_prev.reshape(-1, hidden).T @ dxs.reshape(-1, four_h)
        return dxs, dwhh, dh, dc

    return _record(out, (xproj, w_hh, h0, c0), backward)


# -- loss --------------------------------------------------------------------


def nll_loss(logits, targets, pad_index=0):
    """Mean negative log-likelihood over rows whose target is not ``pad_index``.

    ``logits`` is (N, V) unnormalised scores, ``targets`` an (N,) index array.
    """
    targets = np.asarray(targets)
    if logits.value.ndim != 2 or targets.shape != logits.shape[:1]:
        raise ShapeMismatch(f"nll_loss: logits {logits.shape} vs targets {targets.shape}")
    n, v = logits.shape
    if targets.size and (targets.min() < 0 or targets.max() >= v):
        raise IndexOutOfVocab(f"target index outside vocabulary of size {v}")
    keep = targets != pad_index
    count = int(keep.sum())
    x = logits.value
    shifted = x - x.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(n)
    nll = logz - shifted[rows, targets]
    loss = np.asarray(nll[keep].sum() / count if count else 0.0)

    def backward(g):
        if not count:
            return (np.zeros_like(x),)
        probs = np.exp(shifted - logz[:, None])
        probs[rows, targets] -= 1.0
        probs *= keep[:, None] * (g / count)
        return (probs,)

    return _record(loss, (logits,), backward)


# -- optimisation ------------------------------------------------------------


def global_norm(grads):
    return float(np.sqrt(sum(float(np.vdot(g, g)) for g in grads)))


def clip_by_global_norm(grads, clip_norm):
    """Scale gradients so their joint L2 norm is at most ``clip_norm``."""
    norm = global_norm(grads)
    if not np.isfinite(norm):
        raise NonFiniteGradient("gradient contains NaN or Inf")
    if clip_norm is None or not np.isfinite(clip_norm) or norm <= clip_norm:
        return list(grads), norm
    scale = clip_norm / norm
    return [g * scale for g in grads], norm


class Adam:
    """Adam with bias correction and global-norm gradient clipping."""

    def __init__(self, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8, clip_norm=None):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.clip_norm = clip_norm
        self.t = 0
        self.m = {}
        self.v = {}
        self._tmp = {}

    def step(self, params, grads):
        """Update the arrays in ``params`` in place from ``grads`` (same keys)."""
        names = list(params)
        for name in names:
            if grads[name].shape != params[name].shape:
                raise ShapeMismatch(
                    f"{name}: gradient {grads[name].shape} vs parameter {params[name].shape}"
                )
        norm = global_norm([grads[n] for n in names])
        if not np.isfinite(norm):
            raise NonFiniteGradient("gradient contains NaN or Inf")
        clip = self.clip_norm
        scale = clip / norm if clip is not None and np.isfinite(clip) and norm > clip else 1.0
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        # everything below is in place: fresh temporaries of this size cost more than the arithmetic
        for name in names:
            g = grads[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
                self._tmp[name] = np.empty_like(g)
            m, v, tmp = self.m[name], self.v[name], self._tmp[name]
            np.multiply(g, (1.0 - b1) * scale, out=tmp)
            m *= b1
            m += tmp
            np.multiply(g, g, out=tmp)
            tmp *= (1.0 - b2) * scale * scale
            v *= b2
            v += tmp
            np.divide(v, c2, out=tmp)
            np.sqrt(tmp, out=tmp)
            tmp += self.eps
            np.divide(m, tmp, out=tmp)
            tmp *= self.lr / c1
            params[name] -= tmp
        return norm

    def state_dict(self):
        return {"t": self.t, "m": self.m, "v": self.v}
