"""A small dense-tensor engine with reverse-mode differentiation.

Only the operations needed by the GNN layers are provided. Each op returns a
new :class:`Tensor` that remembers its parents and a closure that pushes the
output gradient back to them; :meth:`Tensor.backward` replays these closures
in reverse topological order.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None,
                 _parents: tuple = (), _backward=None):
        self.data = np.asarray(data, dtype=dtype if dtype is not None else None)
        if self.data.dtype.kind != "f":
            self.data = self.data.astype(np.float32)
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = _parents
        self._backward = _backward
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self, grad=None) -> None:
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order: list[Tensor] = []
        seen: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self._accumulate(grad)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"


def _wrap(x, dtype=None) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=dtype))


def _result(data, parents, backward) -> Tensor:
    req = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=req, _parents=parents if req else (),
                  _backward=backward if req else None)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b, a.dtype if isinstance(a, Tensor) else None)

    def back(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _result(a.data + b.data, (a, b), back)


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)

    def back(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _result(a.data * b.data, (a, b), back)


def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)

    # promote 1-D operands to matrices so one pair of rules covers every case
    A = a.data[None, :] if a.data.ndim == 1 else a.data
    B = b.data[:, None] if b.data.ndim == 1 else b.data

    def back(g):
        G = np.asarray(g).reshape(A.shape[0], B.shape[1])
        if a.requires_grad:
            a._accumulate((G @ B.T).reshape(a.shape))
        if b.requires_grad:
            b._accumulate((A.T @ G).reshape(b.shape))

    return _result(a.data @ b.data, (a, b), back)


def linear(x, w) -> Tensor:
    """``x @ w.T`` with ``w`` stored as (out, in)."""
    x, w = _wrap(x), _wrap(w)

    def back(g):
        if x.requires_grad:
            x._accumulate(g @ w.data)
        if w.requires_grad:
            w._accumulate(g.T @ x.data)

    return _result(x.data @ w.data.T, (x, w), back)


def relu(x) -> Tensor:
    x = _wrap(x)
    mask = x.data > 0

    def back(g):
        x._accumulate(g * mask)

    return _result(np.where(mask, x.data, 0).astype(x.dtype), (x,), back)


def leaky_relu(x, slope: float = 0.2) -> Tensor:
    x = _wrap(x)
    mask = x.data > 0
    factor = np.where(mask, 1.0, slope).astype(x.dtype)

    def back(g):
        x._accumulate(g * factor)

    return _result(x.data * factor, (x,), back)


def elu(x, alpha: float = 1.0) -> Tensor:
    x = _wrap(x)
    neg = alpha * np.expm1(np.minimum(x.data, 0))
    out = np.where(x.data > 0, x.data, neg).astype(x.dtype)

    def back(g):
        x._accumulate(g * np.where(x.data > 0, 1.0, neg + alpha).astype(x.dtype))

    return _result(out, (x,), back)


def identity(x) -> Tensor:
    return _wrap(x)


ACTIVATIONS = {"relu": relu, "elu": elu, "identity": identity}


def gather(x, index: np.ndarray) -> Tensor:
    """Rows ``x[index]``; gradients scatter-add back."""
    x = _wrap(x)
    index = np.asarray(index)

    def back(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, index, g)
        x._accumulate(gx)

    return _result(x.data[index], (x,), back)


def spmm(matrix: sp.csr_matrix, x) -> Tensor:
    """Constant sparse matrix times dense tensor."""
    x = _wrap(x)
    mt = matrix.T.tocsr()

    def back(g):
        x._accumulate(np.asarray(mt @ g, dtype=x.dtype))

    return _result(np.asarray(matrix @ x.data, dtype=x.dtype), (x,), back)


def segment_softmax(scores, indptr: np.ndarray, seg: np.ndarray) -> Tensor:
    """Softmax of per-edge ``scores`` within each destination segment.

    Edges must be sorted by segment, ``seg[e]`` is the segment of edge ``e``
    and every segment is non-empty.
    """
    scores = _wrap(scores)
    starts = indptr[:-1]
    s = scores.data
    mx = np.maximum.reduceat(s, starts)
    ex = np.exp(s - mx[seg])
    den = np.add.reduceat(ex, starts)
    alpha = (ex / den[seg]).astype(s.dtype)

    def back(g):
        dot = np.add.reduceat(alpha * g, starts)
        scores._accumulate(alpha * (g - dot[seg]))

    return _result(alpha, (scores,), back)


def edge_aggregate(alpha, x, src: np.ndarray, dst: np.ndarray, n: int) -> Tensor:
    """``out[v] = sum over edges e with dst[e] == v of alpha[e] * x[src[e]]``."""
    alpha, x = _wrap(alpha), _wrap(x)
    mat = sp.csr_matrix((alpha.data, (dst, src)), shape=(n, x.shape[0]))

    def back(g):
        if x.requires_grad:
            x._accumulate(np.asarray(mat.T @ g, dtype=x.dtype))
        if alpha.requires_grad:
            alpha._accumulate(np.einsum("ij,ij->i", g[dst], x.data[src]).astype(alpha.dtype))

    return _result(np.asarray(mat @ x.data, dtype=x.dtype), (alpha, x), back)


def log_softmax(x) -> Tensor:
    x = _wrap(x)
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    out = shifted - lse
    sm = np.exp(out)

    def back(g):
        x._accumulate(g - sm * g.sum(axis=1, keepdims=True))

    return _result(out, (x,), back)


def weighted_nll(logp, rows: np.ndarray, targets: np.ndarray, class_weight=None) -> Tensor:
    """Weighted mean negative log-likelihood over ``rows``.

    The loss is ``sum_i w[y_i] * -logp[r_i, y_i] / sum_i w[y_i]``.
    """
    logp = _wrap(logp)
    rows = np.asarray(rows)
    targets = np.asarray(targets)
    if class_weight is None:
        w = np.ones(len(rows), dtype=logp.dtype)
    else:
        w = np.asarray(class_weight, dtype=logp.dtype)[targets]
    total = w.sum()
    picked = logp.data[rows, targets]
    loss = -(w * picked).sum() / total

    def back(g):
        gx = np.zeros_like(logp.data)
        np.add.at(gx, (rows, targets), -w / total * g)
        logp._accumulate(gx)

    return _result(np.asarray(loss, dtype=logp.dtype), (logp,), back)
