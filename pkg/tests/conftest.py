import numpy as np
import pytest

from galign.generate import erdos_renyi
from galign.graph import Graph, Permutation


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def path(n):
    return Graph(n, [(i, i + 1) for i in range(n - 1)])


def triangle():
    return Graph(3, [(0, 1), (0, 2), (1, 2)])


def random_graph(rng, n, p=0.4):
    iu, ju = np.triu_indices(n, 1)
    keep = rng.random(len(iu)) < p
    return Graph(n, np.stack([iu[keep], ju[keep]], axis=1))


def random_instance(rng, n_max=8):
    n = int(rng.integers(2, n_max + 1))
    return n, random_graph(rng, n), random_graph(rng, n), Permutation.random(n, rng), Permutation.random(n, rng)


def er(seed, n=30, deg=4.0):
    return erdos_renyi(n, deg, np.random.default_rng(seed))


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = list(getattr(mod, "RESULTS", []))
    names = {f"criterion {k}" for k in range(1, 10)}
    seen = {line.split(":")[0].split(" ", 1)[1] for line in lines}
    for skipped in sorted(names - seen, key=lambda s: int(s.split()[1])):
        if mod is not None:
            lines.append(f"SKIP {skipped}: not run in this session")
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split(":")[0].split()[-1])):
            terminalreporter.write_line(line)
