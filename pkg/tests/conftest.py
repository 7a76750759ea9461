import threading

import numpy as np
import pytest

from sqp.data import EffectivenessMatrix

TOY_ROWS = {
    "c1": [0.4, 0.6, 0.4, 0.9, 0.6, 0.6, 0.5],
    "c2": [0.6, 0.7, 0.5, 0.2, 0.8, 0.7, 0.6],
    "c3": [0.4, 0.5, 0.6, 0.2, 0.5, 0.6, 0.5],
}
TOY_QUERIES = [f"q{i}" for i in range(1, 8)]


@pytest.fixture
def toy():
    return EffectivenessMatrix.from_rows(TOY_ROWS, TOY_QUERIES, "p@10")


def random_matrix(rng, n_configs, n_queries, grid=None):
    """Random matrix; ``grid`` draws from multiples of 1/grid (exact in binary when a power of 2)."""
    if grid:
        scores = rng.integers(0, grid + 1, size=(n_configs, n_queries)) / grid
    else:
        scores = rng.random((n_configs, n_queries))
    configs = [f"c{i}" for i in range(n_configs)]
    queries = [f"q{j}" for j in range(n_queries)]
    return EffectivenessMatrix(configs, queries, scores)


class TracingMatrix(EffectivenessMatrix):
    """Matrix that records every query whose cells are read while ``guard`` is set."""

    def __init__(self, base):
        super().__init__(base.configs, base.queries, base.cells(base.configs, base.queries),
                         base.metric_name, base.metadata)
        self._lock = threading.Lock()
        self.allowed = None
        self.violations = []
        self.reads = 0

    def cells(self, configs, queries):
        with self._lock:
            self.reads += 1
            if self.allowed is not None:
                bad = [q for q in queries if q not in self.allowed]
                if bad:
                    self.violations.append(tuple(bad))
        return super().cells(configs, queries)

    def restrict(self, configs=None, queries=None):
        # keep tracing through restricted views
        view = TracingMatrix(super().restrict(configs, queries))
        view._lock, view.violations = self._lock, self.violations
        view.allowed = self.allowed
        return view


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
