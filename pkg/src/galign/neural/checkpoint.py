"""Checkpoint files.

Layout::

    b"GALIGN-CKPT\\n"
    <header: one line of JSON, sorted keys, no spaces>\\n
    <float64 little-endian parameters, canonical order>
    [<float64 Adam first moments> <float64 Adam second moments>]

The header holds ``version``, ``arch``, ``width``, ``layers``, ``d_out``,
``normalize_gates``, the ordered ``params`` list of ``[name, shape]`` and
``optimizer`` (``null`` or ``{"t": step}``).
"""

from __future__ import annotations

import json

import numpy as np

from galign.neural.autodiff import Tensor
from galign.neural.models import Model

MAGIC = b"GALIGN-CKPT\n"
VERSION = 1


def dumps(model: Model, optimizer_state: dict | None = None) -> bytes:
    header = {
        "version": VERSION,
        "arch": model.arch,
        "width": model.width,
        "layers": model.layers,
        "d_out": model.d_out,
        "normalize_gates": model.normalize_gates,
        "params": [[k, list(t.value.shape)] for k, t in model.params.items()],
        "optimizer": None if optimizer_state is None else {"t": int(optimizer_state["t"])},
    }
    parts = [MAGIC, json.dumps(header, sort_keys=True, separators=(",", ":")).encode(), b"\n",
             model.flat().astype("<f8").tobytes()]
    if optimizer_state is not None:
        for key in ("m", "v"):
            parts.append(np.concatenate([x.ravel() for x in optimizer_state[key]]).astype("<f8").tobytes())
    return b"".join(parts)


def loads(data: bytes):
    """Returns ``(model, optimizer_state or None)``."""
    if not data.startswith(MAGIC):
        raise ValueError("not a checkpoint file")
    end = data.index(b"\n", len(MAGIC))
    header = json.loads(data[len(MAGIC):end])
    if header.get("version") != VERSION:
        raise ValueError(f"unsupported checkpoint version {header.get('version')}")
    body = np.frombuffer(data, dtype="<f8", offset=end + 1).astype(np.float64)
    shapes = [(name, tuple(shape)) for name, shape in header["params"]]
    size = sum(int(np.prod(s)) for _, s in shapes)
    has_opt = header["optimizer"] is not None
    if len(body) != size * (3 if has_opt else 1):
        raise ValueError(f"checkpoint body has {len(body)} values, header implies {size * (3 if has_opt else 1)}")
    if not np.isfinite(body).all():
        raise ValueError("checkpoint contains non-finite values")

    def unflatten(flat):
        out, off = [], 0
        for _, shape in shapes:
            k = int(np.prod(shape))
            out.append(flat[off:off + k].reshape(shape).copy())
            off += k
        return out

    params = {name: Tensor(v, name) for (name, _), v in zip(shapes, unflatten(body[:size]))}
    model = Model(header["arch"], header["width"], header["layers"], header["d_out"], params,
                  header["normalize_gates"])
    state = None
    if has_opt:
        state = {"t": header["optimizer"]["t"], "m": unflatten(body[size:2 * size]),
                 "v": unflatten(body[2 * size:])}
    return model, state


def save(model: Model, path, optimizer_state: dict | None = None) -> None:
    with open(path, "wb") as f:
        f.write(dumps(model, optimizer_state))


def load(path):
    with open(path, "rb") as f:
        return loads(f.read())
