"""Reverse-mode autodiff over dense numpy tensors.

The graph is built define-by-run: calling ops on Tensor values records
the tape, ``backward()`` walks it in reverse topological order. Forward
evaluation is a pure function of the inputs (dropout takes an explicit
mask produced from a seeded generator), so repeated runs are
bit-identical. Every public op checks its output for NaN/Inf.

f32 is the training dtype; build the same graph in f64 to run
``finite_diff_check`` against analytic gradients.
"""

from __future__ import annotations

import math

import numpy as np

CHECK_FINITE = True

_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


def _finite(arr, op):
    if CHECK_FINITE and not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"non-finite values produced by {op}")
    return arr


def _unbroadcast(grad, shape):
    """Sum a gradient back down to the shape it was broadcast from."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"

    # -- graph construction -------------------------------------------------

    def _make(self, data, parents, backward, op):
        out = Tensor(_finite(data, op))
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward
        return out

    def _acc(self, g):
        if self.requires_grad:
            self.grad = g if self.grad is None else self.grad + g

    # -- arithmetic ----------------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other, self.dtype)
        out_data = self.data + other.data

        def backward(g):
            self._acc(_unbroadcast(g, self.data.shape))
            other._acc(_unbroadcast(g, other.data.shape))

        return self._make(out_data, (self, other), backward, "add")

    __radd__ = __add__

    def __neg__(self):
        def backward(g):
            self._acc(-g)

        return self._make(-self.data, (self,), backward, "neg")

    def __sub__(self, other):
        return self + (-as_tensor(other, self.dtype))

    def __rsub__(self, other):
        return as_tensor(other, self.dtype) + (-self)

    def __mul__(self, other):
        other = as_tensor(other, self.dtype)
        out_data = self.data * other.data

        def backward(g):
            self._acc(_unbroadcast(g * other.data, self.data.shape))
            other._acc(_unbroadcast(g * self.data, other.data.shape))

        return self._make(out_data, (self, other), backward, "mul")

    __rmul__ = __mul__

    def __matmul__(self, other):
        if self.data.ndim < 2 or other.data.ndim < 2:
            raise ValueError("matmul requires tensors with ndim >= 2")
        out_data = self.data @ other.data

        def backward(g):
            self._acc(
                _unbroadcast(g @ other.data.swapaxes(-1, -2), self.data.shape)
            )
            other._acc(
                _unbroadcast(self.data.swapaxes(-1, -2) @ g, other.data.shape)
            )

        return self._make(out_data, (self, other), backward, "matmul")

    # -- shape ops -----------------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.data.shape

        def backward(g):
            self._acc(g.reshape(old))

        return self._make(self.data.reshape(shape), (self,), backward, "reshape")

    def transpose(self, axes):
        inverse = np.argsort(axes)

        def backward(g):
            self._acc(g.transpose(inverse))

        return self._make(self.data.transpose(axes), (self,), backward, "transpose")

    # -- reductions ----------------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        out_data = self.data.sum(axis=axis, keepdims=keepdims)

        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self._acc(np.broadcast_to(g, self.data.shape).copy())

        return self._make(out_data, (self,), backward, "sum")

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    # -- pointwise nonlinearities ---------------------------------------------

    def abs(self):
        sign = np.sign(self.data)  # subgradient at 0 is 0

        def backward(g):
            self._acc(g * sign)

        return self._make(np.abs(self.data), (self,), backward, "abs")

    def tanh(self):
        y = np.tanh(self.data)

        def backward(g):
            self._acc(g * (1.0 - y * y))

        return self._make(y, (self,), backward, "tanh")

    def gelu(self):
        x = self.data
        u = _GELU_C * (x + _GELU_A * x**3)
        t = np.tanh(u)
        y = 0.5 * x * (1.0 + t)

        def backward(g):
            du = _GELU_C * (1.0 + 3.0 * _GELU_A * x * x)
            dy = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
            self._acc(g * dy)

        return self._make(y, (self,), backward, "gelu")

    def softmax(self):
        """Softmax over the last axis."""
        shifted = self.data - self.data.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        y = e / e.sum(axis=-1, keepdims=True)

        def backward(g):
            dot = (g * y).sum(axis=-1, keepdims=True)
            self._acc(y * (g - dot))

        return self._make(y, (self,), backward, "softmax")

    def layer_norm(self, eps):
        """Normalize the last axis to zero mean, unit variance (pre-affine)."""
        mu = self.data.mean(axis=-1, keepdims=True)
        var = self.data.var(axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(var + eps)
        y = (self.data - mu) * inv

        def backward(g):
            gm = g.mean(axis=-1, keepdims=True)
            gy = (g * y).mean(axis=-1, keepdims=True)
            self._acc((g - gm - y * gy) * inv)

        return self._make(y, (self,), backward, "layer_norm")

    # -- indexing -------------------------------------------------------------

    def take_rows(self, idx):
        """Gather rows of a 2D tensor; gradient scatter-adds."""
        idx = np.asarray(idx)

        def backward(g):
            acc = np.zeros_like(self.data)
            np.add.at(acc, idx, g)
            self._acc(acc)

        return self._make(self.data[idx], (self,), backward, "take_rows")

    # -- autodiff -------------------------------------------------------------

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar loss")
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def as_tensor(value, dtype=None):
    if isinstance(value, Tensor):
        return value
    arr = np.asarray(value, dtype=dtype)
    return Tensor(arr)


def embedding(weight, ids):
    """Row lookup into a [V, H] table; ids may have any shape."""
    ids = np.asarray(ids)
    out_data = weight.data[ids]

    def backward(g):
        acc = np.zeros_like(weight.data)
        np.add.at(acc, ids.reshape(-1), g.reshape(-1, weight.data.shape[-1]))
        weight._acc(acc)

    return weight._make(out_data, (weight,), backward, "embedding")


def cross_entropy(logits, targets):
    """Mean cross-entropy of [N, C] logits against integer targets [N]."""
    targets = np.asarray(targets)
    n = logits.data.shape[0]
    shifted = logits.data - logits.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1))
    picked = shifted[np.arange(n), targets]
    out_data = np.asarray((lse - picked).mean(), dtype=logits.dtype)

    def backward(g):
        p = np.exp(shifted - lse[:, None])
        p[np.arange(n), targets] -= 1.0
        logits._acc(g * p / n)

    return logits._make(out_data, (logits,), backward, "cross_entropy")


def dropout_mask(shape, rate, rng, dtype=np.float32):
    """Inverted-dropout mask from an explicit generator; rate 0 keeps all."""
    if rate <= 0.0:
        return None
    keep = (rng.random(shape) >= rate).astype(dtype)
    return Tensor(keep / np.asarray(1.0 - rate, dtype=dtype))


def apply_dropout(x, mask):
    return x if mask is None else x * mask


def gradients(loss, params):
    """Reverse-mode gradients of a scalar loss for named parameters.

    Parameters not reachable from the loss get explicit zeros.
    """
    loss.backward()
    return {
        name: (p.grad if p.grad is not None else np.zeros_like(p.data))
        for name, p in params.items()
    }


def finite_diff_check(loss_fn, params, epsilon=1e-5, n_coords=200, seed=0):
    """Max relative error of analytic vs central-difference gradients.

    loss_fn maps {name: Tensor} to a scalar Tensor and must be pure.
    params are f64 arrays; n_coords coordinates are sampled across all
    parameters. Relative error uses denominator max(|a|, |fd|, 1e-8).
    """
    if not 1e-7 <= epsilon <= 1e-4:
        raise ValueError("epsilon must lie in [1e-7, 1e-4]")
    for name, arr in params.items():
        if arr.dtype != np.float64:
            raise ValueError(f"finite_diff_check requires f64 params ({name})")

    leaves = {k: Tensor(v.copy(), requires_grad=True) for k, v in params.items()}
    analytic = gradients(loss_fn(leaves), leaves)

    sizes = {k: v.size for k, v in params.items()}
    total = sum(sizes.values())
    rng = np.random.Generator(np.random.PCG64(seed))
    flat_idx = (
        np.arange(total)
        if total <= n_coords
        else np.sort(rng.choice(total, size=n_coords, replace=False))
    )

    bounds = []
    offset = 0
    for name in params:
        bounds.append((offset, offset + sizes[name], name))
        offset += sizes[name]

    def eval_at(perturbed):
        frozen = {k: Tensor(v) for k, v in perturbed.items()}
        return float(loss_fn(frozen).data)

    max_err = 0.0
    work = {k: v.copy() for k, v in params.items()}
    for gidx in flat_idx:
        name = next(n for lo, hi, n in bounds if lo <= gidx < hi)
        lo = next(l for l, hi, n in bounds if n == name)
        local = int(gidx - lo)
        flat = work[name].reshape(-1)
        keep = flat[local]
        flat[local] = keep + epsilon
        up = eval_at(work)
        flat[local] = keep - epsilon
        down = eval_at(work)
        flat[local] = keep
        fd = (up - down) / (2.0 * epsilon)
        an = float(analytic[name].reshape(-1)[local])
        err = abs(fd - an) / max(abs(fd), abs(an), 1e-8)
        max_err = max(max_err, err)
    return max_err
