"""Siamese training and evaluation on alignment datasets.

Both graphs of a sample go through the same encoder; ``X @ X_tilde.T`` is
scored against the planted permutation with a row-wise softmax
cross-entropy during training and decoded with the Hungarian method
during evaluation.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from galign.assign import alignment_accuracy, decode
from galign.formats import save_embeddings
from galign.generate import stable_seed
from galign.graph import Permutation
from galign.neural import autodiff as ad
from galign.neural.models import Batch, Model, encode
from galign.neural.optim import AdamW, clip_gradients, global_norm, one_cycle_lr

log = logging.getLogger(__name__)

MAX_NODES = 10_000


class TrainingDiverged(RuntimeError):
    def __init__(self, message, model, report):
        super().__init__(message)
        self.model = model
        self.report = report


def similarity(x, x_tilde) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    x_tilde = np.asarray(x_tilde, dtype=np.float64)
    if x.ndim != 2 or x_tilde.ndim != 2 or x.shape[1] != x_tilde.shape[1]:
        raise ValueError(f"embedding shapes incompatible: {x.shape} vs {x_tilde.shape}")
    return x @ x_tilde.T


def _log_softmax_rows(sigma):
    top = sigma.max(axis=1, keepdims=True)
    shifted = sigma - top
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def bce_loss(sigma, truth: Permutation) -> float:
    """``-sum_i log softmax(sigma[i])[truth(i)]`` (a sum over rows, not a mean)."""
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1] or sigma.shape[0] != truth.n:
        raise ValueError(f"similarity shape {sigma.shape} does not match permutation of {truth.n}")
    if not np.isfinite(sigma).all():
        raise ValueError("similarity matrix has non-finite entries")
    logp = _log_softmax_rows(sigma)
    return float(-logp[np.arange(truth.n), truth.map].sum())


def bce_loss_grad(sigma, truth: Permutation) -> np.ndarray:
    """Gradient of :func:`bce_loss` wrt ``sigma``: softmax minus the one-hot truth."""
    grad = np.exp(_log_softmax_rows(np.asarray(sigma, dtype=np.float64)))
    grad[np.arange(truth.n), truth.map] -= 1.0
    return grad


def siamese_loss(out, batch: Batch, n_pairs: int, truths) -> ad.Tensor:
    """Mean per-sample loss; graphs ``0..n_pairs-1`` of ``batch`` are bases, the rest noisy copies."""
    x = out.value
    blocks = [(o, n) for o, n in zip(batch.offsets, batch.sizes)]
    total, cache = 0.0, []
    for s in range(n_pairs):
        (ob, nb), (on, nn) = blocks[s], blocks[n_pairs + s]
        xb, xn = x[ob:ob + nb], x[on:on + nn]
        sigma = xb @ xn.T
        total += bce_loss(sigma, truths[s])
        cache.append((ob, nb, on, nn, bce_loss_grad(sigma, truths[s])))

    def vjp(g):
        dx = np.zeros_like(x)
        scale = float(g) / n_pairs
        for ob, nb, on, nn, dsig in cache:
            xb, xn = x[ob:ob + nb], x[on:on + nn]
            dx[ob:ob + nb] += scale * (dsig @ xn)
            dx[on:on + nn] += scale * (dsig.T @ xb)
        return (dx,)

    return ad.custom(np.array(total / n_pairs), (out,), vjp)


@dataclass
class TrainConfig:
    epochs: int = 300
    batch_size: int = 32
    max_lr: float = 3e-3
    warmup: int = 30
    weight_decay: float = 1e-2
    clip: float = 0.1
    seed: int = 0
    eval_every: int = 10

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.warmup < 0:
            raise ValueError(f"invalid training config {self}")
        if self.max_lr < 0 or self.weight_decay < 0 or self.clip <= 0:
            raise ValueError(f"invalid optimizer settings {self}")


@dataclass
class TrainReport:
    seed: int
    config: dict
    epoch_loss: list = field(default_factory=list)
    evals: list = field(default_factory=list)  # (epoch, mean, std)
    wall_clock: float = 0.0
    steps: int = 0

    @property
    def final_accuracy(self):
        return self.evals[-1][1] if self.evals else None

    def to_dict(self) -> dict:
        return asdict(self)


def init_model(arch: str, seed: int, **kwargs) -> Model:
    return Model.init(arch, np.random.default_rng(stable_seed(seed, "init")), **kwargs)


def _check_sizes(ds):
    for k, s in enumerate(ds):
        if s.base.n > MAX_NODES:
            raise ValueError(f"sample {k} has {s.base.n} vertices; subsample graphs above {MAX_NODES}")


def train(model: Model, train_ds, val_ds, cfg: TrainConfig, on_epoch=None):
    """Train ``model`` in place; returns ``(model, TrainReport)``.

    Each optimizer step encodes the bases and noisy copies of a batch in one
    pass, averages the per-sample losses, clips the global gradient norm
    and applies AdamW with the one-cycle learning rate. Shuffling is driven
    by ``cfg.seed`` only.
    """
    _check_sizes(train_ds)
    if val_ds is not None:
        _check_sizes(val_ds)
    samples = list(train_ds)
    rng = np.random.default_rng(stable_seed(cfg.seed, "shuffle"))
    steps_per_epoch = math.ceil(len(samples) / cfg.batch_size) if samples else 0
    total = cfg.epochs * steps_per_epoch
    opt = AdamW(model.tensors())
    report = TrainReport(cfg.seed, asdict(cfg))
    params = model.tensors()
    last_good = model.copy()
    start = time.perf_counter()
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(samples))
        losses = []
        for b in range(steps_per_epoch):
            chosen = [samples[i] for i in order[b * cfg.batch_size:(b + 1) * cfg.batch_size]]
            batch = Batch([s.base for s in chosen] + [s.noisy for s in chosen])
            with ad.Tape() as tape:
                out = encode(model, batch)
                loss = siamese_loss(out, batch, len(chosen), [s.truth for s in chosen])
            value = float(loss.value)
            if not math.isfinite(value):
                report.wall_clock = time.perf_counter() - start
                raise TrainingDiverged(f"loss became {value} at epoch {epoch}, step {step}", last_good, report)
            grads = tape.backward(loss, wrt=params)
            grads = clip_gradients([grads[id(t)] for t in params], cfg.clip)
            opt.step(grads, one_cycle_lr(step, total, cfg.warmup, cfg.max_lr), cfg.weight_decay)
            step += 1
            losses.append(value)
        report.epoch_loss.append(float(np.mean(losses)) if losses else float("nan"))
        if epoch % max(cfg.eval_every, 1) == 0 or epoch == cfg.epochs:
            last_good = model.copy()
            if val_ds is not None and len(val_ds):
                mean, std, _ = evaluate(model, val_ds)
                report.evals.append((epoch, mean, std))
                log.info("epoch %d loss %.4f val %.4f", epoch, report.epoch_loss[-1], mean)
        if on_epoch is not None:
            on_epoch(epoch, report)
    report.steps = step
    report.wall_clock = time.perf_counter() - start
    return model, report


def embed_graphs(model: Model, graphs, chunk: int = 64) -> list:
    out = []
    for k in range(0, len(graphs), chunk):
        batch = Batch(graphs[k:k + chunk])
        out.extend(m.copy() for m in batch.split(encode(model, batch).value))
    return out


def score_embeddings(xs, xts, truths) -> np.ndarray:
    return np.array([alignment_accuracy(decode(x, xt), t) for x, xt, t in zip(xs, xts, truths)])


def evaluate(model: Model, ds):
    """``(mean, std, per-sample accuracies)`` of LAP-decoded embeddings."""
    samples = list(ds)
    xs = embed_graphs(model, [s.base for s in samples])
    xts = embed_graphs(model, [s.noisy for s in samples])
    accs = score_embeddings(xs, xts, [s.truth for s in samples])
    if len(accs) == 0:
        return float("nan"), float("nan"), accs
    return float(accs.mean()), float(accs.std()), accs


def export_gape(model: Model, graphs, path=None) -> list:
    """Final-layer embeddings (rows in vertex order); written to ``path`` when given."""
    mats = embed_graphs(model, list(graphs))
    if path is not None:
        save_embeddings(mats, path)
    return mats


__all__ = ["TrainConfig", "TrainReport", "TrainingDiverged", "bce_loss", "bce_loss_grad", "evaluate",
           "export_gape", "global_norm", "init_model", "score_embeddings", "siamese_loss", "similarity",
           "train"]
