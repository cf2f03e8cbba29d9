"""Noise sweeps: datasets per noise level, runs per (model, eta, seed), reports.

Sweep spec files are INI text::

    [sweep]
    name = er
    output = results/er
    etas = 0.04, 0.06, 0.08, 0.12, 0.15, 0.18, 0.24, 0.3
    mode = add_remove
    seeds = 0, 1, 2
    models = laplacian, gcn, gatedgcn
    workers = 1

    [data]
    source = er            ; or "corpus", then ``corpus = path``
    n = 100
    avg_degree = 8
    train = 5000
    val = 500
    master_seed = 1

    [train]                ; TrainConfig fields, seed comes from the run
    epochs = 300
    batch_size = 32

    [model.gatedgcn]       ; optional: width, layers, d_out, normalize_gates
    width = 48

    [model.laplacian]      ; optional: d
    d = 64

:meth:`SweepSpec.dumps` writes the canonical form: sections in the order
above (model sections sorted), keys sorted, every field explicit.

Output directory layout::

    data/<key>/{train,val}.ds.gz     planted datasets, one directory per noise level
    runs/<key>/record.json           one finished run (plus checkpoint.ckpt, report.json)
    table.csv                        model x eta, cells "mean±std (median)" in percent
    aggregate.json                   full-precision aggregates
    gap.csv                          plot data: model, eta, mean accuracy, gap

Keys are the first 16 hex digits of the sha256 of the canonical text of
the spec slice a directory depends on, so editing unrelated fields keeps
finished runs and datasets reusable.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import io
import json
import logging
import math
import os
import re
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from galign.formats import import_edgelist, load_dataset, save_dataset
from galign.generate import NoiseConfig, NoiseMode, build_dataset, erdos_renyi_corpus
from galign.neural import checkpoint
from galign.neural.models import ARCHITECTURES
from galign.siamese import TrainConfig, evaluate, init_model, train
from galign.spectral import baseline_accuracy

log = logging.getLogger(__name__)

REFERENCE_ETAS = (0.04, 0.06, 0.08, 0.12, 0.15, 0.18, 0.24, 0.30)
MODELS = ("laplacian",) + ARCHITECTURES
MODEL_KEYS = {"laplacian": {"d": int},
              **{a: {"width": int, "layers": int, "d_out": int, "normalize_gates": bool} for a in ARCHITECTURES}}
DATA_KEYS = {"source": str, "n": int, "avg_degree": float, "train": int, "val": int, "master_seed": int,
             "corpus": str}


class SpecError(ValueError):
    pass


class RunFailedWarning(UserWarning):
    pass


def _floats(text):
    return tuple(float(x) for x in text.replace(",", " ").split())


def _ints(text):
    return tuple(int(x) for x in text.replace(",", " ").split())


def _names(text):
    return tuple(x.strip().lower() for x in text.replace(",", " ").split())


def _convert(kind, value, where):
    try:
        if kind is bool:
            low = value.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(value)
            return low in ("true", "1", "yes")
        return kind(value.strip())
    except ValueError:
        raise SpecError(f"{where}: cannot read {value!r} as {kind.__name__}") from None


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (tuple, list)):
        return ", ".join(_fmt(x) for x in v)
    return str(v)


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class SweepSpec:
    name: str
    output: str
    etas: tuple = REFERENCE_ETAS
    mode: str = "add_remove"
    seeds: tuple = (0,)
    models: tuple = ("laplacian",)
    data: dict = field(default_factory=lambda: {"source": "er", "n": 100, "avg_degree": 8.0,
                                                 "train": 5000, "val": 500, "master_seed": 1})
    train: dict = field(default_factory=dict)
    model_options: dict = field(default_factory=dict)
    workers: int = 1

    def __post_init__(self):
        if not self.models:
            raise SpecError("model list is empty")
        for m in self.models:
            if m not in MODELS:
                raise SpecError(f"unknown model {m!r}; known: {', '.join(MODELS)}")
        if len(set(self.models)) != len(self.models):
            raise SpecError("duplicate model in list")
        if not self.seeds:
            raise SpecError("at least one seed is required")
        if not self.etas:
            raise SpecError("at least one noise level is required")
        object.__setattr__(self, "mode", NoiseMode.parse(self.mode).value)
        for eta in self.etas:
            NoiseConfig(eta, self.mode)
        src = self.data.get("source", "er")
        if src not in ("er", "corpus"):
            raise SpecError(f"data source must be 'er' or 'corpus', got {src!r}")
        need = ("n", "avg_degree") if src == "er" else ("corpus",)
        for key in need + ("train", "val", "master_seed"):
            if key not in self.data:
                raise SpecError(f"[data] is missing {key!r}")
        names = {f.name for f in fields(TrainConfig)} - {"seed"}
        for key in self.train:
            if key not in names:
                raise SpecError(f"[train] has unknown key {key!r}")
        full = asdict(TrainConfig(**self.train))
        object.__setattr__(self, "train", {k: v for k, v in full.items() if k != "seed"})
        object.__setattr__(self, "data", dict({"source": "er"}, **self.data))
        for model, opts in self.model_options.items():
            if model not in MODEL_KEYS:
                raise SpecError(f"options for unknown model {model!r}")
            for key in opts:
                if key not in MODEL_KEYS[model]:
                    raise SpecError(f"[model.{model}] has unknown key {key!r}")
        if self.workers < 1:
            raise SpecError("workers must be >= 1")

    @property
    def train_config(self) -> dict:
        return asdict(TrainConfig(**self.train))

    def options(self, model: str) -> dict:
        out = {"d": 64} if model == "laplacian" else {}
        out.update(self.model_options.get(model, {}))
        return out

    @classmethod
    def loads(cls, text: str, base_dir=None) -> "SweepSpec":
        cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
        try:
            cp.read_string(text)
        except configparser.Error as err:
            raise SpecError(f"malformed spec: {err}") from None
        if not cp.has_section("sweep"):
            raise SpecError("spec has no [sweep] section")
        for sec in cp.sections():
            if sec not in ("sweep", "data", "train") and not sec.startswith("model."):
                raise SpecError(f"unknown section [{sec}]")
        sw = cp["sweep"]
        allowed = {"name", "output", "etas", "mode", "seeds", "models", "workers"}
        for key in sw:
            if key not in allowed:
                raise SpecError(f"[sweep] has unknown key {key!r}")
        try:
            kw = {"name": sw.get("name", "sweep"), "output": sw["output"]}
        except KeyError:
            raise SpecError("[sweep] needs an output directory") from None
        try:
            if "etas" in sw:
                kw["etas"] = _floats(sw["etas"])
            if "seeds" in sw:
                kw["seeds"] = _ints(sw["seeds"])
            if "workers" in sw:
                kw["workers"] = int(sw["workers"])
        except ValueError as err:
            raise SpecError(f"[sweep]: {err}") from None
        if "models" in sw:
            kw["models"] = _names(sw["models"])
        if "mode" in sw:
            kw["mode"] = sw["mode"].strip()
        if base_dir is not None and not os.path.isabs(kw["output"]):
            kw["output"] = str(Path(base_dir) / kw["output"])
        if cp.has_section("data"):
            data = {}
            for key, value in cp["data"].items():
                if key not in DATA_KEYS:
                    raise SpecError(f"[data] has unknown key {key!r}")
                data[key] = _convert(DATA_KEYS[key], value, f"[data] {key}")
            if data.get("source") == "corpus" and base_dir is not None and not os.path.isabs(data["corpus"]):
                data["corpus"] = str(Path(base_dir) / data["corpus"])
            kw["data"] = data
        if cp.has_section("train"):
            types = {f.name: f.type for f in fields(TrainConfig)}
            conv = {"int": int, "float": float}
            kw["train"] = {k: _convert(conv.get(str(types.get(k)), str), v, f"[train] {k}")
                           for k, v in cp["train"].items()}
        opts = {}
        for sec in cp.sections():
            if sec.startswith("model."):
                model = sec[len("model."):]
                spec = MODEL_KEYS.get(model)
                if spec is None:
                    raise SpecError(f"options for unknown model {model!r}")
                opts[model] = {}
                for k, v in cp[sec].items():
                    if k not in spec:
                        raise SpecError(f"[{sec}] has unknown key {k!r}")
                    opts[model][k] = _convert(spec[k], v, f"[{sec}] {k}")
        kw["model_options"] = opts
        try:
            return cls(**kw)
        except (TypeError, ValueError) as err:
            if isinstance(err, SpecError):
                raise
            raise SpecError(str(err)) from None

    @classmethod
    def load(cls, path) -> "SweepSpec":
        path = Path(path)
        return cls.loads(path.read_text(), base_dir=path.parent)

    def dumps(self) -> str:
        lines = ["[sweep]"]
        for key in ("name", "output", "etas", "mode", "seeds", "models", "workers"):
            lines.append(f"{key} = {_fmt(getattr(self, key))}")
        lines += ["", "[data]"] + [f"{k} = {_fmt(v)}" for k, v in sorted(self.data.items())]
        lines += ["", "[train]"] + [f"{k} = {_fmt(v)}" for k, v in sorted(self.train.items())]
        for model in sorted(self.model_options):
            lines += ["", f"[model.{model}]"]
            lines += [f"{k} = {_fmt(v)}" for k, v in sorted(self.model_options[model].items())]
        return "\n".join(lines) + "\n"

    # content keys ----------------------------------------------------------

    def data_key(self, eta: float) -> str:
        data = "\n".join(f"{k}={_fmt(v)}" for k, v in sorted(self.data.items()))
        return _digest(f"data\n{data}\neta={eta!r}\nmode={self.mode}")

    def run_key(self, model: str, eta: float, seed: int) -> str:
        opts = "\n".join(f"{k}={_fmt(v)}" for k, v in sorted(self.options(model).items()))
        text = f"run\n{self.data_key(eta)}\nmodel={model}\n{opts}\nseed={seed}"
        if model != "laplacian":
            cfg = dict(self.train_config, seed=seed)
            text += "\n" + "\n".join(f"{k}={_fmt(v)}" for k, v in sorted(cfg.items()))
        return _digest(text)


@dataclass
class BenchResult:
    """Per-run accuracies (fractions) and their aggregates per (model, eta)."""

    models: tuple
    etas: tuple
    seeds: tuple
    runs: dict  # (model, eta, seed) -> accuracy, successful runs only
    failures: dict = field(default_factory=dict)  # (model, eta, seed) -> message
    executed: int = 0
    train_steps: int = 0

    def accuracies(self, model, eta) -> list:
        return [self.runs[(model, eta, s)] for s in self.seeds if (model, eta, s) in self.runs]

    def aggregate(self, model, eta) -> dict:
        accs = np.array(self.accuracies(model, eta), dtype=np.float64)
        if len(accs) == 0:
            return {"n": 0, "mean": math.nan, "median": math.nan, "std": math.nan}
        return {"n": int(len(accs)), "mean": float(accs.mean()), "median": float(np.median(accs)),
                "std": float(accs.std())}

    def gap(self, model, eta) -> float:
        """Mean accuracy minus the worst model's mean at ``eta`` (nan when the cell is empty)."""
        means = {m: self.aggregate(m, eta)["mean"] for m in self.models}
        ok = [v for v in means.values() if not math.isnan(v)]
        if math.isnan(means[model]) or not ok:
            return math.nan
        return means[model] - min(ok)

    def to_dict(self) -> dict:
        cells = []
        for model in self.models:
            for eta in self.etas:
                agg = self.aggregate(model, eta)
                cells.append({"model": model, "eta": eta, **agg, "gap": self.gap(model, eta),
                              "accuracies": self.accuracies(model, eta),
                              "failed": sum(1 for s in self.seeds if (model, eta, s) in self.failures)})
        return {"models": list(self.models), "etas": list(self.etas), "seeds": list(self.seeds),
                "cells": cells}


# datasets -----------------------------------------------------------------

def _base_graphs(spec: SweepSpec) -> list:
    d = spec.data
    total = d["train"] + d["val"]
    if d.get("source", "er") == "er":
        return erdos_renyi_corpus(total, d["n"], d["avg_degree"], d["master_seed"])
    graphs = import_edgelist(d["corpus"])
    if len(graphs) < total:
        raise SpecError(f"corpus {d['corpus']} has {len(graphs)} graphs, spec needs {total}")
    return graphs[:total]


def materialize(spec: SweepSpec, eta: float, base=None) -> dict:
    """Paths of the train and val files for ``eta``, generating them if absent."""
    root = Path(spec.output) / "data" / spec.data_key(eta)
    paths = {"train": root / "train.ds.gz", "val": root / "val.ds.gz"}
    if all(p.exists() for p in paths.values()):
        return paths
    if base is None:
        base = _base_graphs(spec)
    root.mkdir(parents=True, exist_ok=True)
    splits = build_dataset(base, eta, spec.mode, spec.data["master_seed"],
                           {"train": spec.data["train"], "val": spec.data["val"]},
                           name=spec.name, workers=spec.workers)
    for split, ds in splits.items():
        tmp = paths[split].with_name(f".{paths[split].name}.tmp")
        save_dataset(ds, tmp)
        os.replace(tmp, paths[split])
    return paths


# runs ---------------------------------------------------------------------

def _write_json(path: Path, obj) -> None:
    tmp = path.with_name(f".{path.name}.tmp")
    tmp.write_text(json.dumps(obj, sort_keys=True, indent=1))
    os.replace(tmp, path)


def _execute(job) -> dict:
    """One (model, eta, seed) run; never raises, failures become records."""
    model, eta, seed, options, train_cfg, paths, run_dir = job
    run_dir = Path(run_dir)
    start = time.perf_counter()
    record = {"model": model, "eta": eta, "seed": seed, "options": options}
    try:
        val = load_dataset(paths["val"])
        if model == "laplacian":
            acc, _ = baseline_accuracy(val, d=options["d"])
            record.update(status="ok", accuracy=acc, steps=0)
        else:
            train_ds = load_dataset(paths["train"])
            net = init_model(model, seed, **options)
            cfg = TrainConfig(**dict(train_cfg, seed=seed))
            net, report = train(net, train_ds, val, cfg)
            acc, std, _ = evaluate(net, val)
            checkpoint.save(net, run_dir / "checkpoint.ckpt")
            _write_json(run_dir / "report.json", report.to_dict())
            record.update(status="ok", accuracy=acc, std_over_samples=std, steps=report.steps)
    except Exception as err:  # recorded, excluded from aggregates
        record.update(status="failed", error=f"{type(err).__name__}: {err}", steps=0)
    record["wall_clock"] = time.perf_counter() - start
    _write_json(run_dir / "record.json", record)
    return record


def run_sweep(spec: SweepSpec, workers: int | None = None, max_runs: int | None = None) -> BenchResult:
    """Execute every missing run of ``spec`` and aggregate all finished ones.

    Finished runs (a ``record.json`` under their content key) are reused.
    ``max_runs`` caps how many new runs start, which leaves the sweep
    partially done exactly like an interruption would.
    """
    workers = workers or spec.workers
    out = Path(spec.output)
    (out / "runs").mkdir(parents=True, exist_ok=True)
    (out / "spec.ini").write_text(spec.dumps())

    pending = []
    for eta in spec.etas:
        for model in spec.models:
            for seed in spec.seeds:
                run_dir = out / "runs" / spec.run_key(model, eta, seed)
                if not (run_dir / "record.json").exists():
                    pending.append((model, eta, seed, run_dir))
    if max_runs is not None:
        pending = pending[:max_runs]

    if pending:
        base = None
        paths = {}
        for eta in sorted({p[1] for p in pending}):
            if base is None and not all((out / "data" / spec.data_key(eta) / f"{s}.ds.gz").exists()
                                        for s in ("train", "val")):
                base = _base_graphs(spec)
            paths[eta] = {k: str(v) for k, v in materialize(spec, eta, base).items()}
        jobs = []
        for model, eta, seed, run_dir in pending:
            run_dir.mkdir(parents=True, exist_ok=True)
            jobs.append((model, eta, seed, spec.options(model), spec.train, paths[eta], str(run_dir)))
        if workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                fresh = list(pool.map(_execute, jobs))
        else:
            fresh = [_execute(j) for j in jobs]
    else:
        fresh = []

    result = collect(spec)
    result.executed = len(fresh)
    result.train_steps = int(sum(r.get("steps", 0) for r in fresh))
    return result


def collect(spec: SweepSpec) -> BenchResult:
    """Reduce the persisted records of ``spec`` into a :class:`BenchResult`."""
    runs, failures = {}, {}
    for eta in spec.etas:
        for model in spec.models:
            for seed in spec.seeds:
                path = Path(spec.output) / "runs" / spec.run_key(model, eta, seed) / "record.json"
                if not path.exists():
                    continue
                rec = json.loads(path.read_text())
                if rec["status"] == "ok" and math.isfinite(rec["accuracy"]):
                    runs[(model, eta, seed)] = float(rec["accuracy"])
                else:
                    msg = rec.get("error", "non-finite accuracy")
                    failures[(model, eta, seed)] = msg
                    warnings.warn(f"run {model} eta={eta} seed={seed} failed: {msg}", RunFailedWarning,
                                  stacklevel=2)
    return BenchResult(tuple(spec.models), tuple(spec.etas), tuple(spec.seeds), runs, failures)


# reports ------------------------------------------------------------------

CELL = re.compile(r"^\s*(-?[\d.]+|nan)±(-?[\d.]+|nan) \((-?[\d.]+|nan)\)\s*$")


def _pct(x: float) -> str:
    return "nan" if math.isnan(x) else f"{100.0 * x:.1f}"


def eta_label(eta: float) -> str:
    return f"{100.0 * eta:g}%"


def dumps_table(result: BenchResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model"] + [eta_label(e) for e in result.etas])
    for model in result.models:
        row = [model]
        for eta in result.etas:
            a = result.aggregate(model, eta)
            row.append(f"{_pct(a['mean'])}±{_pct(a['std'])} ({_pct(a['median'])})")
        w.writerow(row)
    return buf.getvalue()


def parse_table(text: str) -> dict:
    """``{(model, eta): (mean, std, median)}`` in percent from :func:`dumps_table` output."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0][0] != "model":
        raise ValueError("not a sweep table")
    etas = [float(h.rstrip("%")) / 100.0 for h in rows[0][1:]]
    out = {}
    for row in rows[1:]:
        for eta, cell in zip(etas, row[1:]):
            m = CELL.match(cell)
            if m is None:
                raise ValueError(f"bad table cell {cell!r}")
            out[(row[0], eta)] = tuple(float(x) for x in m.groups())
    return out


def dumps_gap(result: BenchResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", "eta", "mean", "gap"])
    for model in result.models:
        for eta in result.etas:
            w.writerow([model, repr(eta), _pct(result.aggregate(model, eta)["mean"]),
                        _pct(result.gap(model, eta))])
    return buf.getvalue()


def report(result: BenchResult, directory) -> dict:
    """Write ``table.csv``, ``aggregate.json`` and ``gap.csv``; returns their paths."""
    if not result.models or not result.etas:
        raise ValueError("empty result")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {"table": directory / "table.csv", "aggregate": directory / "aggregate.json",
             "gap": directory / "gap.csv"}
    paths["table"].write_text(dumps_table(result))
    _write_json(paths["aggregate"], result.to_dict())
    paths["gap"].write_text(dumps_gap(result))
    return paths


__all__ = ["BenchResult", "REFERENCE_ETAS", "RunFailedWarning", "SpecError", "SweepSpec", "collect", "dumps_gap",
           "dumps_table", "materialize", "parse_table", "report", "run_sweep"]
