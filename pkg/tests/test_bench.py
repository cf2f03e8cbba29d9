import json
import shutil
import warnings

import pytest

from galign.bench import (BenchResult, RunFailedWarning, SpecError, SweepSpec, collect, dumps_table, parse_table,
                          report, run_sweep)
from galign.formats import export_edgelist
from galign.generate import erdos_renyi_corpus

TINY = """
[sweep]
name = tiny
output = {out}
etas = 0.04, 0.3
seeds = 0, 1
models = {models}

[data]
n = 12
avg_degree = 3
train = 4
val = 3
master_seed = 5

[train]
epochs = 2
batch_size = 2
warmup = 1

[model.gcn]
width = 4
layers = 1
d_out = 4

[model.gatedgcn]
width = 4
layers = 1
d_out = 4
"""


def tiny(tmp_path, models="laplacian, gcn", sub="out"):
    return SweepSpec.loads(TINY.format(out=tmp_path / sub, models=models))


def test_spec_canonical_roundtrip(tmp_path):
    spec = tiny(tmp_path)
    text = spec.dumps()
    again = SweepSpec.loads(text)
    assert again == spec and again.dumps() == text
    assert "epochs = 2" in text and "max_lr = 0.003" in text


def test_spec_relative_output(tmp_path):
    (tmp_path / "s.ini").write_text("[sweep]\noutput = res\nmodels = laplacian\n[data]\nn=10\navg_degree=2\n"
                                    "train=0\nval=2\nmaster_seed=0\n")
    assert SweepSpec.load(tmp_path / "s.ini").output == str(tmp_path / "res")


@pytest.mark.parametrize("patch,match", [
    (("models = laplacian, gcn", "models ="), "empty"),
    (("models = laplacian, gcn", "models = gat"), "unknown model"),
    (("seeds = 0, 1", "seeds ="), "seed"),
    (("etas = 0.04, 0.3", "etas = 1.5"), "eta"),
    (("epochs = 2", "epochz = 2"), "unknown key"),
    (("[data]", "[dataz]"), "section"),
    (("width = 4", "width = four"), "int"),
    (("[sweep]", "sweep"), "malformed"),
])
def test_spec_errors(tmp_path, patch, match):
    text = TINY.format(out=tmp_path, models="laplacian, gcn").replace(*patch, 1)
    with pytest.raises(ValueError, match=match):
        SweepSpec.loads(text)


def test_single_cell(tmp_path):
    spec = SweepSpec.loads(TINY.format(out=tmp_path / "o", models="laplacian").replace("etas = 0.04, 0.3",
                                                                                     "etas = 0.04")
                           .replace("seeds = 0, 1", "seeds = 0"))
    res = run_sweep(spec)
    assert list(res.runs) == [("laplacian", 0.04, 0)]
    assert res.gap("laplacian", 0.04) == 0.0


def test_gap_definition_and_cache(tmp_path):
    spec = tiny(tmp_path)
    res = run_sweep(spec)
    assert res.executed == 8 and res.train_steps == 2 * 2 * 2 * 2
    for eta in spec.etas:
        means = {m: res.aggregate(m, eta)["mean"] for m in spec.models}
        worst = min(means.values())
        for m in spec.models:
            assert res.gap(m, eta) == means[m] - worst >= 0
        assert min(res.gap(m, eta) for m in spec.models) == 0
    again = run_sweep(spec)
    assert again.executed == 0 and again.train_steps == 0
    assert again.to_dict() == res.to_dict()


def test_resume_is_bit_identical(tmp_path):
    full = run_sweep(tiny(tmp_path, sub="a"))
    spec = tiny(tmp_path, sub="b")
    part = run_sweep(spec, max_runs=3)
    assert part.executed == 3 and len(part.runs) == 3
    rest = run_sweep(spec)
    assert rest.executed == 5
    assert json.dumps(rest.to_dict()) == json.dumps(full.to_dict())


def test_workers_do_not_change_results(tmp_path):
    one = run_sweep(tiny(tmp_path, sub="w1"))
    two = run_sweep(tiny(tmp_path, sub="w2"), workers=2)
    assert json.dumps(one.to_dict()) == json.dumps(two.to_dict())


def test_failed_runs_are_recorded_and_excluded(tmp_path):
    spec = SweepSpec.loads(TINY.format(out=tmp_path / "f", models="laplacian, gcn")
                           .replace("layers = 1\nd_out = 4\n\n[model.gatedgcn]", "layers = -1\nd_out = 4\n\n"
                                    "[model.gatedgcn]"))
    with pytest.warns(RunFailedWarning):
        res = run_sweep(spec)
    assert len(res.failures) == 4 and all(k[0] == "gcn" for k in res.failures)
    assert res.aggregate("gcn", 0.04)["n"] == 0
    assert res.gap("laplacian", 0.04) == 0.0
    paths = report(res, tmp_path / "f")
    assert "nan" in paths["table"].read_text()


def test_corpus_source(tmp_path):
    export_edgelist(erdos_renyi_corpus(8, 10, 3, 1), tmp_path / "c.txt")
    (tmp_path / "s.ini").write_text("[sweep]\noutput = o\nmodels = laplacian\netas = 0.1\n[data]\nsource = corpus\n"
                                    "corpus = c.txt\ntrain = 0\nval = 8\nmaster_seed = 2\n")
    res = run_sweep(SweepSpec.load(tmp_path / "s.ini"))
    assert res.aggregate("laplacian", 0.1)["n"] == 1


def test_report_roundtrip(tmp_path):
    spec = tiny(tmp_path)
    res = run_sweep(spec)
    paths = report(res, tmp_path / "rep")
    parsed = parse_table(paths["table"].read_text())
    for (model, eta), (mean, std, median) in parsed.items():
        agg = res.aggregate(model, eta)
        assert abs(mean - 100 * agg["mean"]) <= 0.05 + 1e-9
        assert abs(std - 100 * agg["std"]) <= 0.05 + 1e-9
        assert abs(median - 100 * agg["median"]) <= 0.05 + 1e-9
    assert set(parsed) == {(m, e) for m in spec.models for e in spec.etas}
    agg = json.loads(paths["aggregate"].read_text())
    assert agg["etas"] == [0.04, 0.3] and len(agg["cells"]) == 4
    gap_lines = paths["gap"].read_text().splitlines()
    assert gap_lines[0] == "model,eta,mean,gap" and len(gap_lines) == 5


def test_table_layout_matches_reference_row():
    res = BenchResult(("laplacian",), (0.04, 0.3), (0,), {("laplacian", 0.04, 0): 0.167,
                                                           ("laplacian", 0.3, 0): 0.041})
    assert dumps_table(res) == "model,4%,30%\nlaplacian,16.7±0.0 (16.7),4.1±0.0 (4.1)\n"


def test_report_refuses_empty(tmp_path):
    with pytest.raises(ValueError):
        report(BenchResult((), (), (0,), {}), tmp_path)
