import warnings
import sys

import numpy as np
import pytest
from hypothesis import settings

from azwhite import GraphSignal, validate
from azwhite.graph import DynamicGraph
from azwhite.stats import SmallSampleWarning

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")


@pytest.fixture(autouse=True)
def _quiet_small_samples():
    # Tiny hand-built graphs trip the asymptotic-regime advisory on purpose.
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SmallSampleWarning)
        yield


def random_dynamic_instance(rng, max_nodes=15, max_T=10, F=1):
    """Random dynamic graph with random presence and weights, plus a matching signal.

    Returns ``(dg, X, snapshots, x)`` where the last two feed the pure-Python oracle.
    """
    n = int(rng.integers(2, max_nodes + 1))
    T = int(rng.integers(1, max_T + 1))
    snaps, raw = [], []
    for _ in range(T):
        present = [v for v in range(n) if rng.random() < 0.8]
        if len(present) < 2:
            present = list(range(2))
        edges = []
        for i, u in enumerate(present):
            for v in present[i + 1 :]:
                if rng.random() < 0.35:
                    edges.append((u, v, float(rng.uniform(0.1, 3.0))))
        snaps.append(validate(edges, nodes=present))
        raw.append((present, edges))
    dg = DynamicGraph(tuple(snaps))
    values = np.full((T, n, F), np.nan)
    mask = np.zeros((T, n), dtype=bool)
    x = {}
    for t, (present, _) in enumerate(raw, start=1):
        for v in present:
            vec = rng.standard_normal(F)
            values[t - 1, v] = vec
            mask[t - 1, v] = True
            x[v, t] = [float(a) for a in vec]
    X = GraphSignal(tuple(range(n)), values, mask)
    return dg, X, raw, x


def multiplex_signal(m, X):
    """Single-step signal on the materialised multiplex of ``X``'s graph."""
    values = np.array([X.get(v, t) for v, t in m.nodes])
    return GraphSignal(m.nodes, values[None], np.ones((1, len(m.nodes)), dtype=bool))


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
