"""Exact linear assignment and alignment accuracy."""

from __future__ import annotations

import numpy as np

from galign import kernels
from galign.graph import Permutation


def _reward(r) -> np.ndarray:
    r = np.ascontiguousarray(r, dtype=np.float64)
    if r.ndim != 2 or r.shape[0] != r.shape[1]:
        raise ValueError(f"reward matrix must be square, got shape {r.shape}")
    if r.shape[0] == 0:
        raise ValueError("empty reward matrix")
    if not np.isfinite(r).all():
        raise ValueError("reward matrix has non-finite entries")
    return r


def hungarian(r, backend=None) -> Permutation:
    """Permutation ``pi`` maximizing ``sum_i r[i, pi(i)]``.

    O(n^3) shortest-augmenting-path Hungarian method. Deterministic; among
    co-optimal assignments the one reached by the fixed column scan order
    is returned. ``backend`` is ``"cython"``, ``"python"`` or ``None`` for
    the default selected at import.
    """
    r = _reward(r)
    if backend is None:
        impl = kernels
    elif backend in ("cython", "python"):
        impl = kernels.compiled if backend == "cython" else kernels.python
        if impl is None:
            raise RuntimeError("compiled kernels are not available")
    else:
        raise ValueError(f"unknown backend {backend!r}")
    return Permutation(impl.lap_maximize(r))


def assignment_value(r, p: Permutation) -> float:
    r = np.asarray(r)
    return float(r[np.arange(p.n), p.map].sum())


def alignment_accuracy(predicted: Permutation, truth: Permutation) -> float:
    """Fraction of vertices ``i`` with ``predicted(i) == truth(i)``."""
    if predicted.n != truth.n:
        raise ValueError(f"size mismatch: {predicted.n} vs {truth.n}")
    return float(np.mean(predicted.map == truth.map))


def decode(x, x_tilde) -> Permutation:
    """LAP on the similarity matrix ``x @ x_tilde.T``."""
    x = np.asarray(x, dtype=np.float64)
    x_tilde = np.asarray(x_tilde, dtype=np.float64)
    if x.shape != x_tilde.shape or x.ndim != 2:
        raise ValueError(f"embedding shapes differ: {x.shape} vs {x_tilde.shape}")
    return hungarian(x @ x_tilde.T)
