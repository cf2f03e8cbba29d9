"""On-disk formats: graph corpora, alignment datasets and embedding files.

Graph corpus (text)::

    # comment
    graph <n> <m>
    <u> <v>          (m lines)
    ...              (more blocks)

Alignment dataset (text, optionally gzip-compressed when the path ends in
``.gz``)::

    galign-dataset 1
    name <name>
    eta <float repr>
    mode add_remove|add_only
    master_seed <int>
    split <tag>
    count <k>
    sample <index> <n> <seed>
    base <m> <u0> <v0> <u1> <v1> ...
    noisy <m> ...
    truth <pi(0)> <pi(1)> ...
    ...              (k sample records)

Edges are written in canonical order and lines carry no trailing
whitespace, so two datasets are equal iff their files are byte-equal.

Embedding file, binary variant (little-endian)::

    b"GAPE" | u32 version=1 | u64 count | u64 d
    per graph: u64 n | n*d float64, row-major

Text variant (paths ending in ``.txt``)::

    gape 1 <count> <d>
    graph <n>
    <d floats, repr>  (n lines)
"""

from __future__ import annotations

import gzip
import io
import os
import struct
import warnings

import numpy as np

from galign.generate import FORMAT_VERSION, AlignmentDataset, AlignmentSample, NoiseMode
from galign.graph import Graph, Permutation

DATASET_MAGIC = "galign-dataset"
GAPE_MAGIC = b"GAPE"
GAPE_VERSION = 1


class ParseError(ValueError):
    def __init__(self, message, line=None, path=None):
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)
        self.line = line


class ValidationError(ValueError):
    """A file parsed but violates a type invariant."""


class DuplicateEdgeWarning(UserWarning):
    pass


def _open_text(path, mode):
    path = os.fspath(path)
    if path.endswith(".gz"):
        if "w" in mode:
            raw = open(path, "wb")
            gz = gzip.GzipFile(filename="", mode="wb", fileobj=raw, mtime=0)
            return _ClosingWrapper(io.TextIOWrapper(gz, encoding="ascii", newline="\n"), raw)
        return io.TextIOWrapper(gzip.open(path, "rb"), encoding="ascii", newline="\n")
    return open(path, mode, encoding="ascii", newline="\n")


class _ClosingWrapper:
    def __init__(self, text, raw):
        self._text, self._raw = text, raw

    def __enter__(self):
        return self._text

    def __exit__(self, *exc):
        self._text.close()
        self._raw.close()


def read_bytes(path) -> bytes:
    with open(path, "rb") as f:
        data = f.read()
    if data[:2] == b"\x1f\x8b":
        data = gzip.decompress(data)
    return data


# ---------------------------------------------------------------- corpora

def import_edgelist(path, strict: bool = False) -> list:
    """Read a graph corpus. Duplicate edges are dropped with a warning unless ``strict``."""
    graphs = []
    with _open_text(path, "r") as f:
        lines = f.read().split("\n")
    header = None
    pending = []
    expect = 0

    def finish(lineno):
        n, m, start = header
        if len(pending) != m:
            raise ParseError(f"graph block declares {m} edges, found {len(pending)}", start, path)
        seen, edges = set(), []
        for ln, u, v in pending:
            if u == v:
                raise ParseError(f"self-loop on vertex {u}", ln, path)
            if not (0 <= u < n and 0 <= v < n):
                raise ParseError(f"vertex out of range [0, {n})", ln, path)
            key = (min(u, v), max(u, v))
            if key in seen:
                if strict:
                    raise ParseError(f"duplicate edge {key}", ln, path)
                warnings.warn(f"{path}:{ln}: duplicate edge {key} dropped", DuplicateEdgeWarning, stacklevel=3)
                continue
            seen.add(key)
            edges.append(key)
        graphs.append(Graph(n, edges))

    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        if tok[0] == "graph":
            if header is not None:
                finish(lineno)
            if len(tok) != 3:
                raise ParseError("expected 'graph <n> <m>'", lineno, path)
            try:
                n, m = int(tok[1]), int(tok[2])
            except ValueError:
                raise ParseError("non-integer graph header", lineno, path) from None
            if n < 1 or m < 0:
                raise ParseError(f"invalid graph header n={n} m={m}", lineno, path)
            header, pending, expect = (n, m, lineno), [], m
            continue
        if header is None:
            raise ParseError("edge line before any 'graph' header", lineno, path)
        if len(tok) != 2:
            raise ParseError(f"expected 'u v', got {line!r}", lineno, path)
        try:
            pending.append((lineno, int(tok[0]), int(tok[1])))
        except ValueError:
            raise ParseError(f"non-integer vertex in {line!r}", lineno, path) from None
        if len(pending) > expect:
            raise ParseError(f"more than {expect} edges in block", lineno, path)
    if header is not None:
        finish(len(lines))
    return graphs


def export_edgelist(graphs, path) -> None:
    with _open_text(path, "w") as f:
        for g in graphs:
            f.write(f"graph {g.n} {g.m}\n")
            for u, v in g.edges:
                f.write(f"{u} {v}\n")


# ---------------------------------------------------------------- datasets

def _ints(values) -> str:
    return " ".join(map(str, np.asarray(values).reshape(-1).tolist()))


def dumps_dataset(ds: AlignmentDataset) -> str:
    name = "".join(ch if not ch.isspace() else "_" for ch in ds.name) or "unnamed"
    out = [
        f"{DATASET_MAGIC} {ds.version}",
        f"name {name}",
        f"eta {ds.eta!r}",
        f"mode {ds.mode.value}",
        f"master_seed {ds.master_seed}",
        f"split {ds.split}",
        f"count {len(ds.samples)}",
    ]
    for k, s in enumerate(ds.samples):
        out.append(f"sample {k} {s.base.n} {s.seed}")
        out.append(f"base {s.base.m} {_ints(s.base.edges)}".rstrip())
        out.append(f"noisy {s.noisy.m} {_ints(s.noisy.edges)}".rstrip())
        out.append(f"truth {_ints(s.truth.map)}")
    return "\n".join(out) + "\n"


def save_dataset(ds: AlignmentDataset, path) -> None:
    with _open_text(path, "w") as f:
        f.write(dumps_dataset(ds))


def _field(lines, i, key, path):
    if i >= len(lines):
        raise ParseError(f"unexpected end of file, expected '{key}'", i + 1, path)
    tok = lines[i].split(" ")
    if tok[0] != key:
        raise ParseError(f"expected '{key}', got {lines[i][:40]!r}", i + 1, path)
    return tok[1:]


def _edge_block(tok, lineno, path, label):
    try:
        vals = [int(t) for t in tok]
    except ValueError:
        raise ParseError(f"non-integer in {label} edge list", lineno, path) from None
    if not vals:
        raise ParseError(f"missing edge count in {label}", lineno, path)
    m, flat = vals[0], vals[1:]
    if len(flat) != 2 * m:
        raise ParseError(f"{label} declares {m} edges but lists {len(flat) / 2:g}", lineno, path)
    return np.array(flat, dtype=np.int64).reshape(m, 2)


def loads_dataset(text: str, path=None) -> AlignmentDataset:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    head = _field(lines, 0, DATASET_MAGIC, path)
    if head != [str(FORMAT_VERSION)]:
        raise ParseError(f"unsupported dataset version {' '.join(head)}", 1, path)
    meta = {}
    for i, key in enumerate(["name", "eta", "mode", "master_seed", "split", "count"], start=1):
        tok = _field(lines, i, key, path)
        if len(tok) != 1:
            raise ParseError(f"malformed '{key}' line", i + 1, path)
        meta[key] = tok[0]
    try:
        eta = float(meta["eta"])
        mode = NoiseMode.parse(meta["mode"])
        master_seed = int(meta["master_seed"])
        count = int(meta["count"])
    except ValueError as err:
        raise ParseError(f"bad header value: {err}", None, path) from None
    samples = []
    i = 7
    for k in range(count):
        tok = _field(lines, i, "sample", path)
        try:
            idx, n, seed = (int(t) for t in tok)
        except ValueError:
            raise ParseError("expected 'sample <index> <n> <seed>'", i + 1, path) from None
        if idx != k:
            raise ParseError(f"sample index {idx}, expected {k}", i + 1, path)
        base_e = _edge_block(_field(lines, i + 1, "base", path), i + 2, path, "base")
        noisy_e = _edge_block(_field(lines, i + 2, "noisy", path), i + 3, path, "noisy")
        try:
            truth = [int(t) for t in _field(lines, i + 3, "truth", path)]
        except ValueError:
            raise ParseError("non-integer in truth", i + 4, path) from None
        try:
            base = Graph(n, base_e)
            noisy = Graph(n, noisy_e)
            perm = Permutation(truth)
            if not np.array_equal(base.edges, base_e) or not np.array_equal(noisy.edges, noisy_e):
                raise ValueError("edges not in canonical sorted order")
            samples.append(AlignmentSample(base, noisy, perm, eta, seed))
        except ValueError as err:
            raise ValidationError(f"sample {k} (line {i + 1}): {err}") from None
        i += 4
    if i != len(lines):
        raise ParseError(f"{len(lines) - i} trailing lines after {count} samples", i + 1, path)
    return AlignmentDataset(samples, meta["name"], eta, mode, master_seed, meta["split"])


def load_dataset(path) -> AlignmentDataset:
    return loads_dataset(read_bytes(path).decode("ascii"), path=os.fspath(path))


# ---------------------------------------------------------------- embeddings

def save_embeddings(mats, path) -> None:
    mats = [np.ascontiguousarray(m, dtype=np.float64) for m in mats]
    dims = {m.shape[1] for m in mats}
    if len(dims) > 1:
        raise ValueError(f"embedding widths differ: {sorted(dims)}")
    d = dims.pop() if dims else 0
    if os.fspath(path).endswith(".txt"):
        with _open_text(path, "w") as f:
            f.write(f"gape {GAPE_VERSION} {len(mats)} {d}\n")
            for m in mats:
                f.write(f"graph {m.shape[0]}\n")
                for row in m:
                    f.write(" ".join(repr(float(x)) for x in row) + "\n")
        return
    with open(path, "wb") as f:
        f.write(GAPE_MAGIC + struct.pack("<IQQ", GAPE_VERSION, len(mats), d))
        for m in mats:
            f.write(struct.pack("<Q", m.shape[0]))
            f.write(m.astype("<f8").tobytes())


def load_embeddings(path) -> list:
    data = read_bytes(path)
    if data[:4] == GAPE_MAGIC:
        version, count, d = struct.unpack_from("<IQQ", data, 4)
        if version != GAPE_VERSION:
            raise ParseError(f"unsupported embedding version {version}", path=path)
        off, out = 4 + struct.calcsize("<IQQ"), []
        for k in range(count):
            if off + 8 > len(data):
                raise ParseError(f"truncated before graph {k}", path=path)
            (n,) = struct.unpack_from("<Q", data, off)
            off += 8
            size = n * d * 8
            if off + size > len(data):
                raise ParseError(f"truncated inside graph {k}", path=path)
            out.append(np.frombuffer(data, dtype="<f8", count=n * d, offset=off).reshape(n, d).astype(np.float64))
            off += size
        if off != len(data):
            raise ParseError(f"{len(data) - off} trailing bytes", path=path)
        return out
    lines = data.decode("ascii").split("\n")
    tok = lines[0].split()
    if len(tok) != 4 or tok[0] != "gape":
        raise ParseError("not an embedding file", 1, path)
    if int(tok[1]) != GAPE_VERSION:
        raise ParseError(f"unsupported embedding version {tok[1]}", 1, path)
    count, d = int(tok[2]), int(tok[3])
    i, out = 1, []
    for k in range(count):
        head = lines[i].split()
        if len(head) != 2 or head[0] != "graph":
            raise ParseError("expected 'graph <n>'", i + 1, path)
        n = int(head[1])
        rows = [[float(x) for x in lines[i + 1 + r].split()] for r in range(n)]
        m = np.array(rows, dtype=np.float64).reshape(n, d)
        out.append(m)
        i += n + 1
    return out


# ---------------------------------------------------------------- sniffing

def sniff(path) -> str:
    """Format name of ``path``: dataset, corpus, checkpoint or embeddings."""
    head = read_bytes(path)[:64]
    if head.startswith(GAPE_MAGIC) or head.startswith(b"gape "):
        return "embeddings"
    if head.startswith(b"GALIGN-CKPT"):
        return "checkpoint"
    if head.startswith(DATASET_MAGIC.encode()):
        return "dataset"
    text = head.decode("ascii", errors="replace").lstrip()
    if text.startswith("graph ") or text.startswith("#") or not text:
        return "corpus"
    raise ParseError("unrecognised file format", path=path)
