"""Laplacian eigenvector embeddings and the training-free alignment baseline."""

from __future__ import annotations

import numpy as np

from galign.assign import alignment_accuracy, decode
from galign.graph import Graph

SYMMETRY_RTOL = 1e-12

LAPLACIANS = ("normalized", "combinatorial")
SIGNS = ("max", "abs")
ORDERS = ("smallest", "largest")

# Variant used by the training-free baseline. See README, "Laplacian baseline".
BASELINE_VARIANT = {"laplacian": "combinatorial", "sign": "abs", "order": "largest"}


class EigenError(ArithmeticError):
    pass


def eig_symmetric(m):
    """Eigenvalues (ascending) and orthonormal eigenvectors (columns) of a symmetric matrix.

    Backed by LAPACK ``syevd`` through ``numpy.linalg.eigh``.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise ValueError(f"expected a non-empty square matrix, got shape {m.shape}")
    scale = max(np.abs(m).max(), np.finfo(float).tiny)
    if np.abs(m - m.T).max() > SYMMETRY_RTOL * scale:
        raise ValueError("matrix is not symmetric")
    if not np.isfinite(m).all():
        raise ValueError("matrix has non-finite entries")
    try:
        w, v = np.linalg.eigh(m)
    except np.linalg.LinAlgError as err:
        raise EigenError(f"eigensolver did not converge: {err}") from None
    return w, v


def laplacian(g: Graph, kind: str = "normalized") -> np.ndarray:
    a = g.adjacency()
    deg = a.sum(axis=1)
    if kind == "combinatorial":
        return np.diag(deg) - a
    if kind != "normalized":
        raise ValueError(f"unknown laplacian {kind!r}")
    # isolated vertices get D^{-1/2} = 0, hence a unit diagonal entry
    inv_sqrt = np.zeros_like(deg)
    nz = deg > 0
    inv_sqrt[nz] = 1.0 / np.sqrt(deg[nz])
    return np.eye(g.n) - inv_sqrt[:, None] * a * inv_sqrt[None, :]


def _fix_signs(vecs):
    if vecs.shape[1] == 0:
        return vecs
    idx = np.argmax(np.abs(vecs), axis=0)  # first index wins ties
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def laplacian_pe(g: Graph, d: int, laplacian_kind: str = "normalized", sign: str = "max",
                 order: str = "smallest") -> np.ndarray:
    """``n x d`` Laplacian eigenvector embedding.

    The eigenvector of the smallest eigenvalue is always dropped. ``order``
    picks the ``d`` eigenvectors of smallest (or largest) remaining
    eigenvalues; missing columns are zero. ``sign="max"`` flips each vector
    so its largest-magnitude entry (lowest index on ties) is positive;
    ``sign="abs"`` takes entrywise absolute values.
    """
    if d < 1:
        raise ValueError(f"embedding dimension must be positive, got {d}")
    if g.n < 1:
        raise ValueError("empty graph")
    if sign not in SIGNS or order not in ORDERS:
        raise ValueError(f"unknown sign/order {sign!r}/{order!r}")
    _, vecs = eig_symmetric(laplacian(g, laplacian_kind))
    vecs = vecs[:, 1:]
    if order == "largest":
        vecs = vecs[:, ::-1]
    vecs = vecs[:, :d]
    vecs = np.abs(vecs) if sign == "abs" else _fix_signs(vecs)
    out = np.zeros((g.n, d))
    out[:, :vecs.shape[1]] = vecs
    return out


def baseline_accuracy(ds, d: int = 64, **variant):
    """Mean and per-sample alignment accuracy of decoding Laplacian embeddings.

    ``variant`` is forwarded to ``laplacian_pe``; it defaults to
    ``BASELINE_VARIANT``.
    """
    opts = dict(BASELINE_VARIANT)
    opts.update(variant)
    kind = opts.pop("laplacian")
    accs = np.array([
        alignment_accuracy(decode(laplacian_pe(s.base, d, kind, **opts),
                                  laplacian_pe(s.noisy, d, kind, **opts)), s.truth)
        for s in ds
    ])
    mean = float(accs.mean()) if len(accs) else float("nan")
    return mean, accs
