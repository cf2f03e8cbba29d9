"""Random graphs, correlated noise, BFS subsampling and alignment datasets."""

from __future__ import annotations

import enum
import hashlib
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from galign.graph import Graph, Permutation, permute

FORMAT_VERSION = 1


class NoiseConfigError(ValueError):
    """Noise level incompatible with a graph (``p_add`` would exceed 1)."""


class SmallComponentWarning(UserWarning):
    """BFS ran out of reachable vertices before hitting the target size."""


class NoiseMode(str, enum.Enum):
    ADD_REMOVE = "add_remove"
    ADD_ONLY = "add_only"

    @classmethod
    def parse(cls, value) -> "NoiseMode":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_").replace("+", "_")
        aliases = {"addremove": "add_remove", "add_remove": "add_remove", "add": "add_only",
                   "addonly": "add_only", "add_only": "add_only"}
        if key not in aliases:
            raise ValueError(f"unknown noise mode {value!r}")
        return cls(aliases[key])


@dataclass(frozen=True)
class NoiseConfig:
    eta: float
    mode: NoiseMode = NoiseMode.ADD_REMOVE

    def __post_init__(self):
        object.__setattr__(self, "mode", NoiseMode.parse(self.mode))
        if not (0.0 <= self.eta < 1.0):
            raise NoiseConfigError(f"noise level must satisfy 0 <= eta < 1, got {self.eta}")


@dataclass(frozen=True)
class BfsConfig:
    target_size: int
    count: int = 1

    def __post_init__(self):
        if self.target_size < 1 or self.count < 0:
            raise ValueError(f"invalid BFS config {self}")


@dataclass(frozen=True, eq=False)
class AlignmentSample:
    base: Graph
    noisy: Graph
    truth: Permutation
    eta: float
    seed: int

    def __post_init__(self):
        if not (self.base.n == self.noisy.n == self.truth.n):
            raise ValueError(
                f"sample sizes disagree: base {self.base.n}, noisy {self.noisy.n}, truth {self.truth.n}")

    def __eq__(self, other):
        if not isinstance(other, AlignmentSample):
            return NotImplemented
        return (self.base == other.base and self.noisy == other.noisy and self.truth == other.truth
                and self.eta == other.eta and self.seed == other.seed)


@dataclass(eq=False)
class AlignmentDataset:
    samples: list
    name: str
    eta: float
    mode: NoiseMode
    master_seed: int
    split: str
    version: int = FORMAT_VERSION
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.mode = NoiseMode.parse(self.mode)
        for k, s in enumerate(self.samples):
            if s.eta != self.eta:
                raise ValueError(f"sample {k} has eta={s.eta}, dataset eta={self.eta}")

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __getitem__(self, k):
        return self.samples[k]

    def __eq__(self, other):
        if not isinstance(other, AlignmentDataset):
            return NotImplemented
        return (self.name == other.name and self.eta == other.eta and self.mode == other.mode
                and self.master_seed == other.master_seed and self.split == other.split
                and self.version == other.version and self.samples == other.samples)


def stable_seed(*parts) -> int:
    """64-bit seed from a stable hash of ``parts`` (independent of process and platform)."""
    text = "\x1f".join(str(p) for p in parts).encode()
    return int.from_bytes(hashlib.blake2b(text, digest_size=8).digest(), "little")


def erdos_renyi(n: int, avg_degree: float, rng: np.random.Generator) -> Graph:
    """G(n, p) with ``p = avg_degree / (n - 1)``; pairs drawn in row-major upper-triangle order."""
    if n < 2:
        raise ValueError(f"erdos_renyi needs n >= 2, got {n}")
    if not (0 < avg_degree <= n - 1):
        raise ValueError(f"average degree must lie in (0, {n - 1}], got {avg_degree}")
    p = avg_degree / (n - 1)
    iu, ju = np.triu_indices(n, 1)
    keep = rng.random(len(iu)) < p
    return Graph(n, np.stack([iu[keep], ju[keep]], axis=1))


def derive_probs(cfg: NoiseConfig, g: Graph):
    """``(p_add, p_remove)`` keeping the expected number of added edges at ``eta * m``."""
    m = g.m
    pairs = g.n * (g.n - 1) // 2
    if cfg.eta == 0.0:
        return 0.0, 0.0
    if m == 0:
        p_add = 0.0
    else:
        bound = pairs / m - 1.0
        if m >= pairs or cfg.eta > bound:
            raise NoiseConfigError(
                f"eta={cfg.eta} exceeds N(N-1)/|E| - 1 = {bound:.6g} for a graph with "
                f"n={g.n}, m={m}; p_add would exceed 1")
        p_add = cfg.eta * m / (pairs - m)
    p_remove = cfg.eta if cfg.mode is NoiseMode.ADD_REMOVE else 0.0
    return p_add, p_remove


def correlate(g: Graph, cfg: NoiseConfig, rng: np.random.Generator) -> Graph:
    """Noisy copy of ``g``: drop each edge w.p. ``p_remove``, add each non-edge w.p. ``p_add``.

    Draws ``m`` uniforms for the removal mask (canonical edge order) then
    ``n(n-1)/2`` uniforms for the addition mask (upper-triangle order).
    """
    p_add, p_remove = derive_probs(cfg, g)
    n = g.n
    kept = g.edges[~(rng.random(g.m) < p_remove)]
    iu, ju = np.triu_indices(n, 1)
    add = rng.random(len(iu)) < p_add
    if add.any():
        add_keys = iu[add] * n + ju[add]
        add_keys = add_keys[~np.isin(add_keys, g.edge_keys(), assume_unique=True)]
        added = np.stack([add_keys // n, add_keys % n], axis=1)
        kept = np.concatenate([kept, added])
    return Graph(n, kept)


def plant_sample(g: Graph, cfg: NoiseConfig, rng: np.random.Generator, seed: int = 0) -> AlignmentSample:
    """``(g, permute(correlate(g), pi), pi)`` with ``pi`` uniform over permutations."""
    noisy = correlate(g, cfg, rng)
    truth = Permutation(rng.permutation(g.n))
    return AlignmentSample(g, permute(noisy, truth), truth, float(cfg.eta), int(seed))


def induced_subgraph(g: Graph, vertices) -> Graph:
    """Subgraph on ``vertices`` relabelled ``0..k-1`` in ascending original order."""
    verts = np.unique(np.asarray(vertices, dtype=np.int64))
    relabel = np.full(g.n, -1, dtype=np.int64)
    relabel[verts] = np.arange(len(verts))
    e = relabel[g.edges]
    e = e[(e >= 0).all(axis=1)]
    return Graph(len(verts), e)


def bfs_sample(g: Graph, cfg: BfsConfig, rng: np.random.Generator, start: int | None = None) -> Graph:
    """Breadth-first subgraph with ``cfg.target_size`` vertices.

    Starting from a uniform random vertex (or ``start``), the whole
    frontier of unvisited neighbours is added each round; the last round
    keeps a uniform random subset so the total is exactly the target.
    If the start vertex's component is too small the component is
    returned and a ``SmallComponentWarning`` is issued.
    """
    target = cfg.target_size
    if target > g.n:
        raise ValueError(f"target size {target} exceeds graph order {g.n}")
    if start is None:
        start = int(rng.integers(g.n))
    inside = np.zeros(g.n, dtype=bool)
    inside[start] = True
    frontier_src = np.array([start], dtype=np.int64)
    size = 1
    while size < target:
        nbrs = np.concatenate([g.neighbors(int(i)) for i in frontier_src]) if len(frontier_src) else np.zeros(0, np.int64)
        new = np.unique(nbrs[~inside[nbrs]])
        if len(new) == 0:
            warnings.warn(
                f"component of vertex {start} has only {size} vertices (< {target})",
                SmallComponentWarning, stacklevel=2)
            break
        if size + len(new) > target:
            new = np.sort(rng.choice(new, size=target - size, replace=False))
        inside[new] = True
        size += len(new)
        frontier_src = new
    return induced_subgraph(g, np.flatnonzero(inside))


def bfs_corpus(g: Graph, cfg: BfsConfig, rng: np.random.Generator) -> list:
    """``cfg.count`` BFS subgraphs; samples may overlap."""
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", SmallComponentWarning)
        out = [bfs_sample(g, cfg, rng) for _ in range(cfg.count)]
    if caught:
        warnings.warn(f"{len(caught)} of {cfg.count} BFS samples are smaller than {cfg.target_size}",
                      SmallComponentWarning, stacklevel=2)
    return out


def erdos_renyi_corpus(count: int, n: int, avg_degree: float, master_seed: int, tag: str = "base") -> list:
    """``count`` ER graphs, graph ``k`` seeded by ``stable_seed(master_seed, tag, k)``."""
    return [erdos_renyi(n, avg_degree, np.random.default_rng(stable_seed(master_seed, tag, k)))
            for k in range(count)]


def _plant_one(args):
    g, eta, mode, seed = args
    return plant_sample(g, NoiseConfig(eta, mode), np.random.default_rng(seed), seed=seed)


def build_split(base: Sequence[Graph], eta: float, mode, master_seed: int, split: str,
                name: str = "custom", workers: int = 1) -> AlignmentDataset:
    """One planted sample per base graph; sample ``k`` uses ``stable_seed(master_seed, split, k)``."""
    cfg = NoiseConfig(eta, mode)
    for k, g in enumerate(base):
        try:
            derive_probs(cfg, g)
        except NoiseConfigError as err:
            raise NoiseConfigError(f"{split} base graph {k}: {err}") from None
    jobs = [(g, cfg.eta, cfg.mode, stable_seed(master_seed, split, k)) for k, g in enumerate(base)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            samples = list(pool.map(_plant_one, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        samples = [_plant_one(j) for j in jobs]
    return AlignmentDataset(samples, name, float(eta), cfg.mode, int(master_seed), split)


def build_dataset(base: Sequence[Graph], eta: float, mode, master_seed: int, splits: dict,
                  name: str = "custom", workers: int = 1) -> dict:
    """Split ``base`` by index into consecutive blocks (e.g. ``{"train": 5000, "val": 500}``)
    and plant one sample per graph in each block."""
    total = sum(splits.values())
    if total > len(base):
        raise ValueError(f"splits need {total} base graphs, got {len(base)}")
    out, start = {}, 0
    for split, size in splits.items():
        out[split] = build_split(base[start:start + size], eta, mode, master_seed, split, name, workers)
        start += size
    return out
