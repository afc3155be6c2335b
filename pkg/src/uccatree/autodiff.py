"""Reverse-mode automatic differentiation over numpy arrays.

A :class:`Var` wraps a numpy array and remembers how it was computed;
calling :meth:`Var.backward` on a scalar result accumulates gradients
into every reachable input.  The op set is exactly what the encoder,
span scorer and biaffine classifier need — nothing more.

Gradients are checked against central finite differences by
:func:`gradcheck`; that numeric route is kept strictly independent of
the analytic rules here.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Var:
    """A node in the computation graph."""

    __slots__ = ("value", "grad", "_parents", "_bw")

    def __init__(
        self,
        value,
        _parents: tuple["Var", ...] = (),
        _bw: Callable[[np.ndarray], None] | None = None,
    ):
        self.value = np.asarray(value, dtype=np.float64 if not isinstance(value, np.ndarray) else value.dtype)
        self.grad: np.ndarray | None = None
        self._parents = _parents
        self._bw = _bw

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        self.grad += grad

    def backward(self) -> None:
        """Backpropagate from this scalar through the whole graph."""
        if self.value.ndim != 0:
            raise ValueError("backward() requires a scalar root")
        order: list[Var] = []
        seen: set[int] = set()
        stack: list[tuple[Var, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self._accumulate(np.ones_like(self.value))
        for node in reversed(order):
            if node._bw is not None and node.grad is not None:
                node._bw(node.grad)

    # -- operator sugar -------------------------------------------------

    def __add__(self, other):
        return add(self, _wrap(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, _wrap(-1.0))

    def __matmul__(self, other):
        return matmul(self, _wrap(other))


def _wrap(x) -> Var:
    return x if isinstance(x, Var) else Var(np.asarray(x, dtype=np.float64))


# -- arithmetic ---------------------------------------------------------


def add(a: Var, b: Var) -> Var:
    out = Var(a.value + b.value, (a, b))

    def bw(g: np.ndarray) -> None:
        a._accumulate(_unbroadcast(g, a.value.shape))
        b._accumulate(_unbroadcast(g, b.value.shape))

    out._bw = bw
    return out


def sub(a: Var, b: Var) -> Var:
    out = Var(a.value - b.value, (a, b))

    def bw(g: np.ndarray) -> None:
        a._accumulate(_unbroadcast(g, a.value.shape))
        b._accumulate(-_unbroadcast(g, b.value.shape))

    out._bw = bw
    return out


def mul(a: Var, b: Var) -> Var:
    out = Var(a.value * b.value, (a, b))

    def bw(g: np.ndarray) -> None:
        a._accumulate(_unbroadcast(g * b.value, a.value.shape))
        b._accumulate(_unbroadcast(g * a.value, b.value.shape))

    out._bw = bw
    return out


def add_n(vars_: Sequence[Var]) -> Var:
    """Sum of same-shaped (or scalar) terms."""
    if not vars_:
        return Var(np.float64(0.0))
    total = vars_[0].value
    for v in vars_[1:]:
        total = total + v.value
    out = Var(total, tuple(vars_))

    def bw(g: np.ndarray) -> None:
        for v in vars_:
            v._accumulate(_unbroadcast(g, v.value.shape))

    out._bw = bw
    return out


def matmul(a: Var, b: Var) -> Var:
    """Matrix product for the 2D@2D, 2D@1D and 1D@2D cases."""
    out = Var(a.value @ b.value, (a, b))
    an, bn = a.value.ndim, b.value.ndim

    def bw(g: np.ndarray) -> None:
        if an == 2 and bn == 2:
            a._accumulate(g @ b.value.T)
            b._accumulate(a.value.T @ g)
        elif an == 2 and bn == 1:
            a._accumulate(np.outer(g, b.value))
            b._accumulate(a.value.T @ g)
        elif an == 1 and bn == 2:
            a._accumulate(b.value @ g)
            b._accumulate(np.outer(a.value, g))
        else:  # 1D @ 1D -> scalar
            a._accumulate(g * b.value)
            b._accumulate(g * a.value)

    out._bw = bw
    return out


# -- shape ops ----------------------------------------------------------


def concat(vars_: Sequence[Var], axis: int = -1) -> Var:
    out = Var(np.concatenate([v.value for v in vars_], axis=axis), tuple(vars_))
    sizes = [v.value.shape[axis] for v in vars_]

    def bw(g: np.ndarray) -> None:
        offset = 0
        for v, size in zip(vars_, sizes):
            index = [slice(None)] * g.ndim
            index[axis] = slice(offset, offset + size)
            v._accumulate(g[tuple(index)])
            offset += size

    out._bw = bw
    return out


def stack_rows(vars_: Sequence[Var]) -> Var:
    """Stack 1-D vectors into a matrix, one per row."""
    out = Var(np.stack([v.value for v in vars_]), tuple(vars_))

    def bw(g: np.ndarray) -> None:
        for i, v in enumerate(vars_):
            v._accumulate(g[i])

    out._bw = bw
    return out


def take_rows(a: Var, idx) -> Var:
    """Gather rows of a matrix; duplicate indices accumulate gradient."""
    idx = np.asarray(idx, dtype=np.intp)
    out = Var(a.value[idx], (a,))

    def bw(g: np.ndarray) -> None:
        if a.grad is None:
            a.grad = np.zeros_like(a.value)
        np.add.at(a.grad, idx, g)

    out._bw = bw
    return out


def row(a: Var, i: int) -> Var:
    """One row of a matrix as a vector."""
    out = Var(a.value[i], (a,))

    def bw(g: np.ndarray) -> None:
        if a.grad is None:
            a.grad = np.zeros_like(a.value)
        a.grad[i] += g

    out._bw = bw
    return out


def slice0(a: Var, start: int, stop: int) -> Var:
    """Contiguous slice along the first axis."""
    out = Var(a.value[start:stop], (a,))

    def bw(g: np.ndarray) -> None:
        if a.grad is None:
            a.grad = np.zeros_like(a.value)
        a.grad[start:stop] += g

    out._bw = bw
    return out


def pick(a: Var, i: int) -> Var:
    """Scalar element of a vector."""
    out = Var(a.value[i], (a,))

    def bw(g: np.ndarray) -> None:
        if a.grad is None:
            a.grad = np.zeros_like(a.value)
        a.grad[i] += g

    out._bw = bw
    return out


def at(a: Var, i: int, j: int) -> Var:
    """Scalar element of a matrix."""
    out = Var(a.value[i, j], (a,))

    def bw(g: np.ndarray) -> None:
        if a.grad is None:
            a.grad = np.zeros_like(a.value)
        a.grad[i, j] += g

    out._bw = bw
    return out


# -- nonlinearities -----------------------------------------------------


def tanh(a: Var) -> Var:
    value = np.tanh(a.value)
    out = Var(value, (a,))

    def bw(g: np.ndarray) -> None:
        a._accumulate(g * (1.0 - value * value))

    out._bw = bw
    return out


def sigmoid(a: Var) -> Var:
    value = 1.0 / (1.0 + np.exp(-a.value))
    out = Var(value, (a,))

    def bw(g: np.ndarray) -> None:
        a._accumulate(g * value * (1.0 - value))

    out._bw = bw
    return out


def relu(a: Var) -> Var:
    value = np.maximum(a.value, 0.0)
    out = Var(value, (a,))

    def bw(g: np.ndarray) -> None:
        a._accumulate(g * (a.value > 0.0))

    out._bw = bw
    return out


def vsum(a: Var) -> Var:
    """Sum of all elements."""
    out = Var(a.value.sum(), (a,))

    def bw(g: np.ndarray) -> None:
        a._accumulate(np.full_like(a.value, float(g)))

    out._bw = bw
    return out


# -- losses -------------------------------------------------------------


def cross_entropy_logits(scores: Var, gold: int) -> Var:
    """Negative log softmax probability of ``gold``, numerically stable."""
    s = scores.value
    m = s.max()
    exp = np.exp(s - m)
    z = exp.sum()
    softmax = exp / z
    out = Var(np.log(z) + m - s[gold], (scores,))

    def bw(g: np.ndarray) -> None:
        grad = softmax * float(g)
        grad[gold] -= float(g)
        scores._accumulate(grad)

    out._bw = bw
    return out


def bilinear_vec(u: Var, w: Var, v: Var) -> Var:
    """``out[l] = u . W[:, l, :] . v`` for a 3-D weight tensor."""
    out = Var(np.einsum("i,ilj,j->l", u.value, w.value, v.value), (u, w, v))

    def bw(g: np.ndarray) -> None:
        u._accumulate(np.einsum("ilj,l,j->i", w.value, g, v.value))
        w._accumulate(np.einsum("i,l,j->ilj", u.value, g, v.value))
        v._accumulate(np.einsum("i,ilj,l->j", u.value, w.value, g))

    out._bw = bw
    return out


# -- finite differences -------------------------------------------------


def analytic_grads(
    build_loss: Callable[[dict[str, Var]], Var], tensors: dict[str, np.ndarray]
) -> dict[str, np.ndarray]:
    leaves = {name: Var(arr) for name, arr in tensors.items()}
    loss = build_loss(leaves)
    loss.backward()
    return {
        name: (leaf.grad if leaf.grad is not None else np.zeros_like(leaf.value))
        for name, leaf in leaves.items()
    }


def numeric_grads(
    build_loss: Callable[[dict[str, Var]], Var],
    tensors: dict[str, np.ndarray],
    eps: float = 1e-5,
) -> dict[str, np.ndarray]:
    """Central finite differences of the loss w.r.t. every coordinate."""

    def loss_value(arrays: dict[str, np.ndarray]) -> float:
        return float(build_loss({k: Var(v) for k, v in arrays.items()}).value)

    grads: dict[str, np.ndarray] = {}
    for name, arr in tensors.items():
        grad = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = loss_value(tensors)
            flat[i] = orig - eps
            down = loss_value(tensors)
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * eps)
        grads[name] = grad
    return grads


def max_relative_error(
    analytic: dict[str, np.ndarray], numeric: dict[str, np.ndarray]
) -> float:
    """Worst-case per-coordinate error, relative above unit magnitude."""
    worst = 0.0
    for name in analytic:
        a, n = analytic[name], numeric[name]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1.0)
        err = np.abs(a - n) / denom
        if err.size:
            worst = max(worst, float(err.max()))
    return worst


def gradcheck(
    build_loss: Callable[[dict[str, Var]], Var],
    tensors: dict[str, np.ndarray],
    eps: float = 1e-5,
) -> float:
    """Max relative error between analytic and central-difference grads."""
    return max_relative_error(
        analytic_grads(build_loss, tensors), numeric_grads(build_loss, tensors, eps=eps)
    )
