"""Command-line entry point: ``galign <command> ...``.

Failures print one line ``error: <Kind>: <message>`` to stderr and exit 1;
malformed arguments or sweep specs exit 2.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from galign import bench, formats
from galign.generate import (BfsConfig, NoiseMode, bfs_corpus, build_dataset, erdos_renyi_corpus,
                             stable_seed)
from galign.neural import checkpoint
from galign.neural.models import ARCHITECTURES
from galign.siamese import TrainConfig, TrainingDiverged, evaluate, export_gape, init_model, train
from galign.spectral import BASELINE_VARIANT, LAPLACIANS, ORDERS, SIGNS, baseline_accuracy


class UsageError(Exception):
    pass


def _eta(text: str) -> float:
    try:
        return float(text[:-1]) / 100.0 if text.endswith("%") else float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid noise level {text!r}") from None


def _er_params(items) -> dict:
    out = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or key not in ("n", "deg"):
            raise UsageError(f"--er expects n=<int> deg=<float>, got {item!r}")
        try:
            out[key] = int(value) if key == "n" else float(value)
        except ValueError:
            raise UsageError(f"--er {key}: not a number: {value!r}") from None
    if set(out) != {"n", "deg"}:
        raise UsageError("--er needs both n= and deg=")
    return out


def dataset_path(out, name: str, eta: float, split: str, gz: bool) -> Path:
    return Path(out) / f"{name}-eta{eta!r}-{split}.ds{'.gz' if gz else ''}"


# commands ---------------------------------------------------------------------

def cmd_generate(args) -> int:
    splits = {k: v for k, v in (("train", args.train), ("val", args.val)) if v}
    if not splits:
        raise UsageError("nothing to generate: give --train and/or --val")
    total = sum(splits.values())
    if args.er:
        er = _er_params(args.er)
        base = erdos_renyi_corpus(total, er["n"], er["deg"], args.seed)
        name = args.name or f"er-n{er['n']}-deg{er['deg']:g}"
    else:
        base = formats.import_edgelist(args.corpus)
        name = args.name or Path(args.corpus).name.split(".")[0]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for eta in args.eta:
        for split, ds in build_dataset(base, eta, args.mode, args.seed, splits, name, args.workers).items():
            path = dataset_path(out, name, eta, split, args.gzip)
            formats.save_dataset(ds, path)
            print(path)
    return 0


def cmd_bfs_sample(args) -> int:
    graphs = formats.import_edgelist(args.corpus)
    cfg = BfsConfig(args.size, args.count)
    out = []
    for k, g in enumerate(graphs):
        out.extend(bfs_corpus(g, cfg, np.random.default_rng(stable_seed(args.seed, "bfs", k))))
    formats.export_edgelist(out, args.out)
    print(f"{len(out)} graphs -> {args.out}")
    return 0


def cmd_baseline(args) -> int:
    variant = dict(BASELINE_VARIANT)
    for key in ("laplacian", "sign", "order"):
        if getattr(args, key) is not None:
            variant[key] = getattr(args, key)
    for path in args.datasets:
        ds = formats.load_dataset(path)
        mean, accs = baseline_accuracy(ds, d=args.d, **variant)
        rec = {"path": str(path), "eta": ds.eta, "mean": mean, "std": float(accs.std()) if len(accs) else None,
               "n": len(accs)}
        if args.json:
            print(json.dumps(rec))
        else:
            print(f"{path}\teta={ds.eta!r}\tmean={mean:.6f}\t({100 * mean:.1f}%)")
    return 0


def cmd_train(args) -> int:
    train_ds = formats.load_dataset(args.train)
    val_ds = formats.load_dataset(args.val) if args.val else None
    opts = {k: v for k, v in (("width", args.width), ("layers", args.layers), ("d_out", args.d_out))
            if v is not None}
    model = init_model(args.model, args.seed, normalize_gates=args.normalize_gates, **opts)
    cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch_size, max_lr=args.max_lr, warmup=args.warmup,
                      weight_decay=args.weight_decay, clip=args.clip, seed=args.seed,
                      eval_every=args.eval_every)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def progress(epoch, report):
        if args.verbose:
            print(f"epoch {epoch} loss {report.epoch_loss[-1]:.6f}", file=sys.stderr)

    try:
        model, report = train(model, train_ds, val_ds, cfg, on_epoch=progress)
    except TrainingDiverged as err:
        checkpoint.save(err.model, out / "checkpoint.ckpt")
        (out / "report.json").write_text(json.dumps(err.report.to_dict(), indent=1))
        raise
    checkpoint.save(model, out / "checkpoint.ckpt")
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=1))
    acc = report.final_accuracy
    print(f"{out / 'checkpoint.ckpt'}\tsteps={report.steps}\tval={'n/a' if acc is None else f'{acc:.6f}'}")
    return 0


def cmd_evaluate(args) -> int:
    model, _ = checkpoint.load(args.checkpoint)
    for path in args.datasets:
        ds = formats.load_dataset(path)
        mean, std, _ = evaluate(model, ds)
        print(f"{path}\teta={ds.eta!r}\tmean={mean:.6f}\tstd={std:.6f}\t({100 * mean:.1f}%)")
    return 0


def cmd_sweep(args) -> int:
    try:
        spec = bench.SweepSpec.load(args.spec)
    except bench.SpecError as err:
        raise UsageError(str(err)) from None
    if args.output:
        spec = bench.SweepSpec(**{**spec.__dict__, "output": args.output})
    result = bench.run_sweep(spec, workers=args.workers, max_runs=args.max_runs)
    paths = bench.report(result, spec.output)
    sys.stdout.write(bench.dumps_table(result))
    print(f"runs executed: {result.executed}, failed: {len(result.failures)}, reports in {paths['table'].parent}",
          file=sys.stderr)
    return 0


def cmd_export_pe(args) -> int:
    model, _ = checkpoint.load(args.checkpoint)
    graphs = formats.import_edgelist(args.corpus)
    mats = export_gape(model, graphs, args.out)
    print(f"{len(mats)} embeddings (d={model.d_out}) -> {args.out}")
    return 0


def _validate_one(path) -> str:
    kind = formats.sniff(path)
    if kind == "dataset":
        ds = formats.load_dataset(path)
        return f"dataset with {len(ds)} samples, eta={ds.eta!r}, mode={ds.mode.value}"
    if kind == "corpus":
        with warnings.catch_warnings():
            warnings.simplefilter("error", formats.DuplicateEdgeWarning)
            graphs = formats.import_edgelist(path, strict=True)
        return f"corpus with {len(graphs)} graphs"
    if kind == "checkpoint":
        model, state = checkpoint.load(path)
        return f"checkpoint {model.arch} with {model.n_params} parameters{'' if state is None else ' + optimizer'}"
    mats = formats.load_embeddings(path)
    if any(not np.isfinite(m).all() for m in mats):
        raise formats.ValidationError("embedding file contains non-finite values")
    return f"embeddings for {len(mats)} graphs"


def cmd_validate(args) -> int:
    status = 0
    for path in args.files:
        try:
            print(f"ok\t{path}\t{_validate_one(path)}")
        except (ValueError, IndexError, OSError, EOFError) as err:
            print(f"error: {type(err).__name__}: {path}: {err}", file=sys.stderr)
            status = 1
    return status


# parser -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="galign", description="Graph alignment benchmarks and encoders.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="plant alignment datasets")
    src = g.add_mutually_exclusive_group(required=True)
    src.add_argument("--er", nargs="+", metavar="KEY=VALUE", help="Erdős–Rényi base graphs, e.g. n=100 deg=8")
    src.add_argument("--corpus", help="graph corpus file with the base graphs")
    g.add_argument("--eta", nargs="+", type=_eta, required=True, help="noise levels, 0.04 or 4%%")
    g.add_argument("--train", type=int, default=0)
    g.add_argument("--val", type=int, default=0)
    g.add_argument("--mode", default="add_remove", choices=[m.value for m in NoiseMode])
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--name")
    g.add_argument("--out", default=".")
    g.add_argument("--workers", type=int, default=1)
    g.add_argument("--gzip", action="store_true")
    g.set_defaults(func=cmd_generate)

    b = sub.add_parser("bfs-sample", help="BFS subgraphs of every graph in a corpus")
    b.add_argument("corpus")
    b.add_argument("--size", type=int, required=True, help="target vertex count")
    b.add_argument("--count", type=int, required=True, help="samples per input graph")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_bfs_sample)

    bl = sub.add_parser("baseline", help="Laplacian eigenvector baseline")
    bl.add_argument("datasets", nargs="+")
    bl.add_argument("--d", type=int, default=64)
    bl.add_argument("--laplacian", choices=LAPLACIANS)
    bl.add_argument("--sign", choices=SIGNS)
    bl.add_argument("--order", choices=ORDERS)
    bl.add_argument("--json", action="store_true")
    bl.set_defaults(func=cmd_baseline)

    defaults = TrainConfig()
    t = sub.add_parser("train", help="train a siamese encoder")
    t.add_argument("--train", required=True)
    t.add_argument("--val")
    t.add_argument("--model", choices=ARCHITECTURES, default="gatedgcn")
    t.add_argument("--width", type=int)
    t.add_argument("--layers", type=int)
    t.add_argument("--d-out", type=int)
    t.add_argument("--normalize-gates", action="store_true")
    t.add_argument("--epochs", type=int, default=defaults.epochs)
    t.add_argument("--batch-size", type=int, default=defaults.batch_size)
    t.add_argument("--max-lr", type=float, default=defaults.max_lr)
    t.add_argument("--warmup", type=int, default=defaults.warmup)
    t.add_argument("--weight-decay", type=float, default=defaults.weight_decay)
    t.add_argument("--clip", type=float, default=defaults.clip)
    t.add_argument("--eval-every", type=int, default=defaults.eval_every)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", required=True, help="directory for checkpoint.ckpt and report.json")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="accuracy of a checkpoint on datasets")
    e.add_argument("checkpoint")
    e.add_argument("datasets", nargs="+")
    e.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("sweep", help="run a sweep spec and write reports")
    s.add_argument("spec")
    s.add_argument("--workers", type=int)
    s.add_argument("--max-runs", type=int, help="start at most this many new runs")
    s.add_argument("--output", help="override the spec's output directory")
    s.set_defaults(func=cmd_sweep)

    x = sub.add_parser("export-pe", help="write node embeddings of a corpus")
    x.add_argument("checkpoint")
    x.add_argument("corpus")
    x.add_argument("--out", required=True, help="binary unless the name ends in .txt")
    x.set_defaults(func=cmd_export_pe)

    v = sub.add_parser("validate", help="parse and check any galign file")
    v.add_argument("files", nargs="+")
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except UsageError as err:
        parser.print_usage(sys.stderr)
        print(f"error: UsageError: {err}", file=sys.stderr)
        return 2
    except (ValueError, OSError, ArithmeticError, RuntimeError) as err:
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
