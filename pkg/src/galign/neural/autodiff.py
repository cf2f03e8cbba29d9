"""Tape-based reverse-mode differentiation over float64 numpy arrays.

Operations executed while a :class:`Tape` is active append a record
``(output, inputs, vjp)`` to it; :meth:`Tape.backward` replays the records
in reverse. Outside a tape the same functions just compute values.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from galign import kernels

_ACTIVE: list = []

DEBUG_FINITE = False


class NumericError(ArithmeticError):
    pass


class TapeError(RuntimeError):
    pass


class Tensor:
    __slots__ = ("value", "name")

    def __init__(self, value, name=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}{self.value.shape}"

    def __add__(self, other):
        return add(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


class Tape:
    def __init__(self):
        self.records = []
        self._ids = set()

    def __enter__(self):
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc):
        _ACTIVE.remove(self)

    def record(self, out, inputs, vjp):
        self.records.append((out, inputs, vjp))
        self._ids.add(id(out))

    def backward(self, output: Tensor, upstream=None, wrt=None) -> dict:
        """Gradients of ``sum(upstream * output)`` wrt the leaf tensors in ``wrt``.

        ``wrt`` is a list of tensors (default: every leaf that received a
        gradient). Returns ``{id(tensor): grad}`` keyed like ``wrt``.
        """
        if id(output) not in self._ids:
            raise TapeError("output was not produced on this tape")
        if upstream is None:
            if output.value.size != 1:
                raise TapeError("upstream gradient required for non-scalar output")
            upstream = np.ones_like(output.value)
        upstream = np.asarray(upstream, dtype=np.float64)
        if upstream.shape != output.shape:
            raise TapeError(f"upstream shape {upstream.shape} != output shape {output.shape}")
        grads = {id(output): upstream}
        for out, inputs, vjp in reversed(self.records):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            for t, gi in zip(inputs, vjp(g)):
                if gi is None or not isinstance(t, Tensor):
                    continue
                prev = grads.get(id(t))
                grads[id(t)] = gi if prev is None else prev + gi
        if wrt is None:
            return grads
        return {id(t): grads.get(id(t), np.zeros_like(t.value)) for t in wrt}


def _emit(value, inputs, vjp):
    if DEBUG_FINITE and not np.isfinite(value).all():
        raise NumericError("non-finite value produced")
    out = Tensor(value)
    if _ACTIVE:
        _ACTIVE[-1].record(out, inputs, vjp)
    return out


def _val(x):
    return x.value if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a, b):
    av, bv = _val(a), _val(b)
    return _emit(av + bv, (a, b), lambda g: (_unbroadcast(g, av.shape), _unbroadcast(g, bv.shape)))


def mul(a, b):
    av, bv = _val(a), _val(b)
    return _emit(av * bv, (a, b), lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)))


def matmul(a, b):
    av, bv = _val(a), _val(b)
    return _emit(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


def linear(x, w, b):
    """``x @ w + b`` as one record."""
    xv, wv, bv = _val(x), _val(w), _val(b)
    return _emit(xv @ wv + bv, (x, w, b), lambda g: (g @ wv.T, xv.T @ g, g.sum(axis=0, keepdims=True)))


def relu(x):
    xv = _val(x)
    mask = xv > 0
    return _emit(np.where(mask, xv, 0.0), (x,), lambda g: (g * mask,))


def broadcast_rows(row, n: int):
    """Stack ``n`` copies of a ``(1, f)`` row."""
    rv = _val(row)
    return _emit(np.repeat(rv, n, axis=0), (row,), lambda g: (g.sum(axis=0, keepdims=True),))


def spmm(a: sp.csr_matrix, x):
    """Sparse (constant) times dense."""
    xv = _val(x)
    at = a.T.tocsr()
    return _emit(np.asarray(a @ xv), (x,), lambda g: (np.asarray(at @ g),))


def gated_aggregate(a, b, v, src, dst, normalize=False, eps=1e-6):
    """``out[i] = sum_{j->i} sigmoid(a[i] + b[j]) * v[j]`` (optionally gate-normalized)."""
    av = np.ascontiguousarray(_val(a))
    bv = np.ascontiguousarray(_val(b))
    vv = np.ascontiguousarray(_val(v))
    out, gates, denom = kernels.gated_forward(av, bv, vv, src, dst, normalize, eps)

    def vjp(g):
        return kernels.gated_backward(np.ascontiguousarray(g), vv, gates, out, denom, src, dst)

    return _emit(out, (a, b, v), vjp)


def graph_norm(x, gamma, beta, alpha, segments, counts, eps=1e-5):
    """Per-graph feature normalization with learnable scale, shift and mean weight.

    ``segments[i]`` is the graph of row ``i``; ``counts[k]`` the row count
    of graph ``k``. For each graph and feature: ``c = x - alpha * mean(x)``,
    ``y = gamma * c / sqrt(mean(c**2) + eps) + beta``.
    """
    xv, gv, bv, av = _val(x), _val(gamma), _val(beta), _val(alpha)
    k = len(counts)
    inv_n = (1.0 / counts)[:, None]
    mu = kernels.segment_sum(np.ascontiguousarray(xv), segments, k) * inv_n
    c = xv - av * mu[segments]
    var = kernels.segment_sum(c * c, segments, k) * inv_n
    r = 1.0 / np.sqrt(var + eps)
    chat = c * r[segments]
    y = gv * chat + bv

    def vjp(g):
        dgamma = (g * chat).sum(axis=0, keepdims=True)
        dbeta = g.sum(axis=0, keepdims=True)
        dchat = g * gv
        dvar = kernels.segment_sum(dchat * c, segments, k) * (-0.5 * r ** 3)
        dc = dchat * r[segments] + c * (2.0 * dvar * inv_n)[segments]
        sdc = kernels.segment_sum(dc, segments, k)
        dx = dc - av * (sdc * inv_n)[segments]
        dalpha = -(sdc * mu).sum(axis=0, keepdims=True)
        return dx, dgamma, dbeta, dalpha

    return _emit(y, (x, gamma, beta, alpha), vjp)


def custom(value, inputs, vjp):
    """Record an op whose value and vector-Jacobian product are computed elsewhere."""
    return _emit(np.asarray(value, dtype=np.float64), tuple(inputs), vjp)
