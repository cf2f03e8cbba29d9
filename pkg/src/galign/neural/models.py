"""GCN and GatedGCN encoders for constant-feature graphs.

Both map a graph to an ``n x d_out`` node embedding:

    h = broadcast(embed)                                  # constant input
    repeat ``layers`` times:
        GCN:       h = h + relu(norm(A_hat @ h @ W + b))
        GatedGCN:  h = h + relu(norm(h @ U + agg))
                   agg_i = sum_{j ~ i} sigmoid(h_i @ A1 + h_j @ A2) * (h_j @ V)
    out = h @ W_out + b_out

``A_hat = D^{-1/2} (A + I) D^{-1/2}``; ``norm`` is GraphNorm; every
affine map carries a bias. Graphs in a batch are processed as a disjoint
union with per-graph normalization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from galign.graph import Graph
from galign.neural import autodiff as ad

ARCHITECTURES = ("gcn", "gatedgcn")

# reference widths (see README on the parameter budget); 4 layers, 64-dim output
DEFAULT_WIDTH = {"gcn": 128, "gatedgcn": 48}
DEFAULT_LAYERS = 4
DEFAULT_DOUT = 64
GATE_EPS = 1e-6
NORM_EPS = 1e-5


class Batch:
    """Disjoint union of graphs with the index arrays the layers need."""

    def __init__(self, graphs):
        graphs = list(graphs)
        if not graphs:
            raise ValueError("empty batch")
        sizes = np.array([g.n for g in graphs], dtype=np.int64)
        offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]])
        self.graphs = graphs
        self.sizes = sizes
        self.offsets = offsets
        self.n = int(sizes.sum())
        self.segments = np.repeat(np.arange(len(graphs), dtype=np.int64), sizes)
        self.counts = sizes.astype(np.float64)
        srcs, dsts = [], []
        for g, off in zip(graphs, offsets):
            s, d = g.directed_edges()
            srcs.append(s + off)
            dsts.append(d + off)
        self.src = np.ascontiguousarray(np.concatenate(srcs), dtype=np.int64)
        self.dst = np.ascontiguousarray(np.concatenate(dsts), dtype=np.int64)
        self._a_hat = None

    @property
    def a_hat(self) -> sp.csr_matrix:
        if self._a_hat is None:
            deg = np.bincount(self.dst, minlength=self.n).astype(np.float64) + 1.0
            inv = 1.0 / np.sqrt(deg)
            loops = np.arange(self.n)
            rows = np.concatenate([self.dst, loops])
            cols = np.concatenate([self.src, loops])
            vals = inv[rows] * inv[cols]
            self._a_hat = sp.csr_matrix((vals, (rows, cols)), shape=(self.n, self.n))
        return self._a_hat

    def split(self, x: np.ndarray) -> list:
        return [x[o:o + n] for o, n in zip(self.offsets, self.sizes)]


@dataclass
class Model:
    """Parameters of one encoder, kept in canonical order."""

    arch: str
    width: int
    layers: int
    d_out: int
    params: dict
    normalize_gates: bool = False

    @classmethod
    def init(cls, arch: str, rng: np.random.Generator, width: int | None = None,
             layers: int = DEFAULT_LAYERS, d_out: int = DEFAULT_DOUT, normalize_gates: bool = False):
        arch = arch.lower()
        if arch not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {arch!r}; implemented: {', '.join(ARCHITECTURES)}")
        width = width or DEFAULT_WIDTH[arch]
        if width < 1 or layers < 0 or d_out < 1:
            raise ValueError("width, d_out must be positive and layers non-negative")
        params = {}

        def affine(name, fan_in, fan_out):
            bound = 1.0 / np.sqrt(fan_in)
            params[f"{name}.weight"] = rng.uniform(-bound, bound, (fan_in, fan_out))
            params[f"{name}.bias"] = rng.uniform(-bound, bound, (1, fan_out))

        params["embed"] = rng.standard_normal((1, width))
        for k in range(layers):
            pre = f"layers.{k}"
            if arch == "gcn":
                affine(f"{pre}.lin", width, width)
            else:
                for part in ("U", "V", "A1", "A2"):
                    affine(f"{pre}.{part}", width, width)
            params[f"{pre}.norm.gamma"] = np.ones((1, width))
            params[f"{pre}.norm.beta"] = np.zeros((1, width))
            params[f"{pre}.norm.alpha"] = np.ones((1, width))
        affine("out", width, d_out)
        return cls(arch, width, layers, d_out, {k: ad.Tensor(v, k) for k, v in params.items()},
                   normalize_gates)

    @property
    def n_params(self) -> int:
        return int(sum(t.value.size for t in self.params.values()))

    def tensors(self) -> list:
        return list(self.params.values())

    def flat(self) -> np.ndarray:
        return np.concatenate([t.value.ravel() for t in self.params.values()])

    def set_flat(self, flat: np.ndarray) -> None:
        off = 0
        for t in self.params.values():
            size = t.value.size
            t.value = np.array(flat[off:off + size], dtype=np.float64).reshape(t.value.shape)
            off += size
        if off != len(flat):
            raise ValueError(f"flat vector has {len(flat)} entries, model needs {off}")

    def copy(self) -> "Model":
        return Model(self.arch, self.width, self.layers, self.d_out,
                     {k: ad.Tensor(t.value.copy(), k) for k, t in self.params.items()},
                     self.normalize_gates)

    def __call__(self, batch: Batch):
        return encode(self, batch)


def _layer(model: Model, k: int, h, batch: Batch):
    p = model.params
    pre = f"layers.{k}"
    if model.arch == "gcn":
        z = ad.add(ad.spmm(batch.a_hat, ad.matmul(h, p[f"{pre}.lin.weight"])), p[f"{pre}.lin.bias"])
    else:
        lin = {part: ad.linear(h, p[f"{pre}.{part}.weight"], p[f"{pre}.{part}.bias"])
               for part in ("U", "V", "A1", "A2")}
        agg = ad.gated_aggregate(lin["A1"], lin["A2"], lin["V"], batch.src, batch.dst,
                                 normalize=model.normalize_gates, eps=GATE_EPS)
        z = ad.add(lin["U"], agg)
    z = ad.graph_norm(z, p[f"{pre}.norm.gamma"], p[f"{pre}.norm.beta"], p[f"{pre}.norm.alpha"],
                      batch.segments, batch.counts, eps=NORM_EPS)
    return ad.add(h, ad.relu(z))


def encode(model: Model, batch: Batch):
    """Embeddings of every node in ``batch`` as one ``(batch.n, d_out)`` tensor."""
    h = ad.broadcast_rows(model.params["embed"], batch.n)
    for k in range(model.layers):
        h = _layer(model, k, h, batch)
    return ad.linear(h, model.params["out.weight"], model.params["out.bias"])


def forward(model: Model, g: Graph) -> np.ndarray:
    """``n x d_out`` embedding of a single graph."""
    out = encode(model, Batch([g])).value
    if not np.isfinite(out).all():
        raise ad.NumericError("non-finite embedding")
    return out


def backward(model: Model, g: Graph, upstream) -> dict:
    """Gradients of ``sum(upstream * forward(model, g))`` wrt every parameter, by name."""
    with ad.Tape() as tape:
        out = encode(model, Batch([g]))
    grads = tape.backward(out, upstream, wrt=model.tensors())
    return {name: grads[id(t)] for name, t in model.params.items()}
