"""Simple undirected graphs, vertex permutations and the alignment objective.

Conventions used throughout the package:

* vertices are ``0..n-1``;
* ``permute(g, p)`` sends vertex ``i`` of ``g`` to vertex ``p[i]`` of the result;
* ``compose(p, q)`` is ``p o q``, i.e. ``i -> p[q[i]]``;
* ``overlap`` counts ordered vertex pairs, so one matched undirected edge
  contributes 2.
"""

from __future__ import annotations

import itertools
from typing import Iterable

import numpy as np

MAX_BRUTEFORCE_N = 10


def _frozen(arr):
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


class Graph:
    """Immutable simple undirected graph.

    Edges are stored as an ``(m, 2)`` int64 array with ``u < v`` in strictly
    increasing lexicographic order; adjacency is kept in CSR form
    (``indptr``, ``indices``) with sorted neighbour lists.
    """

    __slots__ = ("n", "edges", "indptr", "indices", "_keys")

    def __init__(self, n: int, edges: Iterable = ()):
        n = int(n)
        if n < 1:
            raise ValueError(f"graph needs at least one vertex, got n={n}")
        e = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges, dtype=np.int64)
        if e.size == 0:
            e = np.zeros((0, 2), dtype=np.int64)
        if e.ndim != 2 or e.shape[1] != 2:
            raise ValueError(f"edges must be pairs, got array of shape {e.shape}")
        if e.size and (e.min() < 0 or e.max() >= n):
            raise ValueError(f"edge endpoint out of range [0, {n})")
        if np.any(e[:, 0] == e[:, 1]):
            bad = e[e[:, 0] == e[:, 1]][0]
            raise ValueError(f"self-loop at vertex {bad[0]}")
        e = np.sort(e, axis=1)
        keys = e[:, 0] * n + e[:, 1]
        order = np.argsort(keys, kind="stable")
        keys = keys[order]
        if keys.size > 1 and np.any(keys[1:] == keys[:-1]):
            k = keys[1:][keys[1:] == keys[:-1]][0]
            raise ValueError(f"duplicate edge ({k // n}, {k % n})")
        e = e[order]

        both = np.concatenate([e, e[:, ::-1]])
        both = both[np.lexsort((both[:, 1], both[:, 0]))]
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(both[:, 0], minlength=n), out=indptr[1:])

        self.n = n
        self.edges = _frozen(e)
        self.indptr = _frozen(indptr)
        self.indices = _frozen(both[:, 1])
        self._keys = _frozen(keys)

    @property
    def m(self) -> int:
        """Number of undirected edges."""
        return len(self.edges)

    def neighbors(self, u: int) -> np.ndarray:
        return self.indices[self.indptr[u]:self.indptr[u + 1]]

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def has_edge(self, u: int, v: int) -> bool:
        if u == v:
            return False
        a, b = (u, v) if u < v else (v, u)
        k = a * self.n + b
        i = np.searchsorted(self._keys, k)
        return bool(i < len(self._keys) and self._keys[i] == k)

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        a[self.edges[:, 0], self.edges[:, 1]] = 1.0
        a[self.edges[:, 1], self.edges[:, 0]] = 1.0
        return a

    def directed_edges(self):
        """``(src, dst)`` arrays with both orientations, sorted by ``dst``."""
        dst = np.repeat(np.arange(self.n, dtype=np.int64), np.diff(self.indptr))
        return self.indices.copy(), dst

    def edge_keys(self) -> np.ndarray:
        return self._keys

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return self.n == other.n and np.array_equal(self.edges, other.edges)

    def __hash__(self):
        return hash((self.n, self._keys.tobytes()))

    def __repr__(self):
        return f"Graph(n={self.n}, m={self.m})"


class Permutation:
    """Bijection on ``0..n-1`` stored as ``map[i] = pi(i)``."""

    __slots__ = ("map",)

    def __init__(self, mapping):
        arr = np.asarray(mapping, dtype=np.int64).reshape(-1)
        n = len(arr)
        if n == 0:
            raise ValueError("permutation of an empty set")
        seen = np.zeros(n, dtype=bool)
        if arr.min() < 0 or arr.max() >= n:
            raise ValueError("permutation values out of range")
        seen[arr] = True
        if not seen.all():
            raise ValueError("not a bijection: repeated image")
        self.map = _frozen(arr)

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(np.arange(n))

    @classmethod
    def random(cls, n: int, rng: np.random.Generator) -> "Permutation":
        return cls(rng.permutation(n))

    @property
    def n(self) -> int:
        return len(self.map)

    def inverse(self) -> "Permutation":
        inv = np.empty_like(self.map)
        inv[self.map] = np.arange(self.n)
        return Permutation(inv)

    def matrix(self) -> np.ndarray:
        """``P`` with ``P[i, j] = 1`` iff ``pi(i) = j``."""
        p = np.zeros((self.n, self.n))
        p[np.arange(self.n), self.map] = 1.0
        return p

    def __call__(self, i):
        return self.map[i]

    def __len__(self):
        return self.n

    def __eq__(self, other):
        if not isinstance(other, Permutation):
            return NotImplemented
        return np.array_equal(self.map, other.map)

    def __hash__(self):
        return hash(self.map.tobytes())

    def __repr__(self):
        if self.n <= 12:
            return f"Permutation({self.map.tolist()})"
        return f"Permutation(n={self.n})"


def compose(p: Permutation, q: Permutation) -> Permutation:
    """``p o q``: first apply ``q``, then ``p``."""
    if p.n != q.n:
        raise ValueError(f"size mismatch: {p.n} vs {q.n}")
    return Permutation(p.map[q.map])


def inverse(p: Permutation) -> Permutation:
    return p.inverse()


def permute(g: Graph, p: Permutation) -> Graph:
    """Relabel ``g`` so that vertex ``i`` becomes vertex ``p(i)``."""
    if p.n != g.n:
        raise ValueError(f"size mismatch: graph has {g.n} vertices, permutation {p.n}")
    return Graph(g.n, p.map[g.edges])


def row_permute(x: np.ndarray, p: Permutation) -> np.ndarray:
    """Rows of ``x`` moved the way ``permute`` moves vertices: ``out[p(i)] = x[i]``."""
    x = np.asarray(x)
    if x.shape[0] != p.n:
        raise ValueError(f"size mismatch: {x.shape[0]} rows vs permutation of {p.n}")
    out = np.empty_like(x)
    out[p.map] = x
    return out


def overlap(g: Graph, h: Graph, p: Permutation) -> int:
    """``sum_ij A[i,j] * B[p(i), p(j)]`` for adjacency matrices ``A`` of ``g``, ``B`` of ``h``."""
    if not (g.n == h.n == p.n):
        raise ValueError(f"size mismatch: g.n={g.n}, h.n={h.n}, p.n={p.n}")
    if g.m == 0 or h.m == 0:
        return 0
    img = p.map[g.edges]
    img.sort(axis=1)
    keys = img[:, 0] * h.n + img[:, 1]
    return 2 * int(np.isin(keys, h.edge_keys(), assume_unique=True).sum())


def solve_alignment_bruteforce(g: Graph, h: Graph, chunk: int = 20000):
    """Exhaustive maximizer of ``overlap(g, h, p)``.

    Scans permutations in lexicographic order and keeps the first maximum,
    so ties resolve to the lexicographically smallest map. Returns
    ``(Permutation, overlap)``.
    """
    if g.n != h.n:
        raise ValueError(f"size mismatch: {g.n} vs {h.n}")
    n = g.n
    if n > MAX_BRUTEFORCE_N:
        raise ValueError(f"brute force refused for n={n} > {MAX_BRUTEFORCE_N} ({n}! permutations)")
    a = g.adjacency()
    b = h.adjacency().astype(np.int64)
    rows, cols = np.nonzero(a)
    best_score, best = -1, None
    it = itertools.permutations(range(n))
    while True:
        block = np.array(list(itertools.islice(it, chunk)), dtype=np.int64)
        if block.size == 0:
            break
        scores = b[block[:, rows], block[:, cols]].sum(axis=1) if len(rows) else np.zeros(len(block), dtype=np.int64)
        k = int(np.argmax(scores))
        if scores[k] > best_score:
            best_score, best = int(scores[k]), block[k]
    return Permutation(best), best_score
