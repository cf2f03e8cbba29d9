import math
import warnings

import numpy as np
import pytest
from conftest import path, random_graph

from galign.formats import dumps_dataset
from galign.generate import (BfsConfig, NoiseConfig, NoiseConfigError, NoiseMode, SmallComponentWarning,
                             bfs_corpus, bfs_sample, build_dataset, build_split, correlate, derive_probs,
                             erdos_renyi, erdos_renyi_corpus, induced_subgraph, plant_sample, stable_seed)
from galign.graph import Graph, Permutation, overlap, permute


def graph_with_m(n, m, rng):
    iu, ju = np.triu_indices(n, 1)
    pick = rng.choice(len(iu), size=m, replace=False)
    return Graph(n, np.stack([iu[pick], ju[pick]], axis=1))


def star(leaves):
    return Graph(leaves + 1, [(0, k) for k in range(1, leaves + 1)])


def test_erdos_renyi_forced_edge(rng):
    assert erdos_renyi(2, 1.0, rng).edges.tolist() == [[0, 1]]


def test_erdos_renyi_edge_count_statistics(rng):
    counts = [erdos_renyi(100, 8, rng).m for _ in range(200)]
    p = 8 / 99
    sigma = math.sqrt(4950 * p * (1 - p))
    assert abs(np.mean(counts) - 400) < 3 * sigma


@pytest.mark.parametrize("n,deg", [(1, 0.5), (10, 0), (10, -1), (10, 10)])
def test_erdos_renyi_rejects(n, deg, rng):
    with pytest.raises(ValueError):
        erdos_renyi(n, deg, rng)


def test_stable_seed_is_stable():
    assert stable_seed(1, "val", 3) == stable_seed(1, "val", 3)
    assert stable_seed(1, "val", 3) != stable_seed(1, "train", 3)
    assert 0 <= stable_seed("x") < 2 ** 64


def test_derive_probs_worked_example(rng):
    g = graph_with_m(100, 400, rng)
    p_add, p_remove = derive_probs(NoiseConfig(0.15, "add_remove"), g)
    assert p_add == pytest.approx(60 / 4550, rel=1e-12)
    assert p_remove == 0.15


def test_derive_probs_zero_and_add_only(rng):
    g = graph_with_m(20, 30, rng)
    assert derive_probs(NoiseConfig(0.0), g) == (0.0, 0.0)
    assert derive_probs(NoiseConfig(0.3, NoiseMode.ADD_ONLY), g)[1] == 0.0


def test_derive_probs_dense_bound():
    k5 = Graph(5, [(i, j) for i in range(5) for j in range(i + 1, 5) if (i, j) != (3, 4)])
    with pytest.raises(NoiseConfigError, match="N\\(N-1\\)/\\|E\\| - 1"):
        derive_probs(NoiseConfig(0.2), k5)


@pytest.mark.parametrize("eta", [-0.1, 1.0, 1.5])
def test_noise_config_range(eta):
    with pytest.raises(NoiseConfigError):
        NoiseConfig(eta)


def test_correlate_zero_noise_identity(rng):
    g = random_graph(rng, 12)
    assert correlate(g, NoiseConfig(0.0), rng) == g


def test_correlate_add_only_monotone_exhaustive(rng):
    for _ in range(300):
        g = random_graph(rng, int(rng.integers(3, 15)), 0.3)
        pairs = g.n * (g.n - 1) // 2
        if g.m == 0 or 0.3 > pairs / g.m - 1:
            continue
        out = correlate(g, NoiseConfig(0.3, "add_only"), rng)
        assert set(map(tuple, g.edges.tolist())) <= set(map(tuple, out.edges.tolist()))


def test_correlate_statistics(rng):
    g = graph_with_m(100, 400, rng)
    base = set(map(tuple, g.edges.tolist()))
    added, removed = [], []
    for _ in range(500):
        out = set(map(tuple, correlate(g, NoiseConfig(0.15), rng).edges.tolist()))
        added.append(len(out - base))
        removed.append(len(base - out))
    sigma = math.sqrt(400 * 0.15 * 0.85)
    assert abs(np.mean(removed) - 60) < 3 * sigma
    assert abs(np.mean(added) - 60) < 3 * sigma


def test_plant_sample_validity(rng):
    for k in range(200):
        g = random_graph(rng, 12, 0.3)
        if g.m == 0:
            continue
        cfg = NoiseConfig(float(rng.choice([0.0, 0.1, 0.3])), str(rng.choice(["add_remove", "add_only"])))
        seed = stable_seed("plant", k)
        s = plant_sample(g, cfg, np.random.default_rng(seed), seed)
        tilde = correlate(g, cfg, np.random.default_rng(seed))
        assert overlap(s.base, s.noisy, s.truth) == overlap(g, tilde, Permutation.identity(g.n))
        assert permute(tilde, s.truth) == s.noisy
        if cfg.eta == 0:
            assert overlap(s.base, s.noisy, s.truth) == 2 * g.m


def test_plant_sample_determinism():
    cfg = NoiseConfig(0.3, "add_only")
    a = plant_sample(path(10), cfg, np.random.default_rng(42), 42)
    b = plant_sample(path(10), cfg, np.random.default_rng(42), 42)
    assert a == b


def test_bfs_path_hand_trace(rng):
    out = bfs_sample(path(5), BfsConfig(3), rng, start=2)
    assert out.n == 3 and out.edges.tolist() == [[0, 1], [1, 2]]


def test_bfs_whole_graph(rng):
    assert bfs_sample(path(6), BfsConfig(6), rng) == path(6)


def test_induced_subgraph_relabels_ascending():
    g = Graph(5, [(0, 4), (1, 4), (2, 3)])
    assert induced_subgraph(g, [4, 1, 0]).edges.tolist() == [[0, 2], [1, 2]]


def test_bfs_star_trim(rng):
    out = bfs_sample(star(10), BfsConfig(4), rng, start=0)
    assert out.n == 4 and out.m == 3 and out.degrees().max() == 3


def test_bfs_small_component_warns(rng):
    g = Graph(6, [(0, 1), (2, 3), (3, 4), (4, 5)])
    with pytest.warns(SmallComponentWarning):
        out = bfs_sample(g, BfsConfig(4), rng, start=0)
    assert out.n == 2


def test_bfs_target_too_large(rng):
    with pytest.raises(ValueError):
        bfs_sample(path(3), BfsConfig(4), rng)


def _connected(g):
    seen, stack = {0}, [0]
    while stack:
        u = stack.pop()
        for v in g.neighbors(u):
            if int(v) not in seen:
                seen.add(int(v))
                stack.append(int(v))
    return len(seen) == g.n


def test_bfs_connected_on_connected_graph(rng):
    g = erdos_renyi(200, 6, rng)
    with warnings.catch_warnings(record=True):
        warnings.simplefilter("always", SmallComponentWarning)
        outs = bfs_corpus(g, BfsConfig(30, 20), rng)
    full = [out for out in outs if out.n == 30]
    assert full and all(_connected(out) for out in full)


def test_build_dataset_splits_and_seeds():
    base = erdos_renyi_corpus(7, 20, 4, 3)
    out = build_dataset(base, 0.1, "add_remove", 3, {"train": 5, "val": 2})
    assert len(out["train"]) == 5 and len(out["val"]) == 2
    assert out["val"][1].base == base[6]
    assert out["val"][1].seed == stable_seed(3, "val", 1)


def test_build_dataset_empty():
    ds = build_split([], 0.1, "add_only", 0, "val")
    assert len(ds) == 0 and ds.mode is NoiseMode.ADD_ONLY


def test_build_dataset_names_bad_graph():
    dense = Graph(4, [(i, j) for i in range(4) for j in range(i + 1, 4) if (i, j) != (2, 3)])
    with pytest.raises(NoiseConfigError, match="graph 1"):
        build_split([path(4), dense], 0.5, "add_remove", 0, "train")


def test_build_dataset_worker_invariant():
    base = erdos_renyi_corpus(12, 25, 4, 9)
    a = build_split(base, 0.12, "add_remove", 9, "train", workers=1)
    b = build_split(base, 0.12, "add_remove", 9, "train", workers=3)
    assert dumps_dataset(a) == dumps_dataset(b)
