import numpy as np
import pytest

from conftest import TracingMatrix
from sqp import harness
from sqp.errors import ContractError
from sqp.harness import ExperimentParams, run_experiment, split_folds
from sqp.synth import SynthSpec, synth_generate

ALL = list(harness.METHODS)


@pytest.fixture(scope="module")
def landscape():
    return synth_generate(SynthSpec(seed=7))


def run(data, methods=ALL, **kw):
    params = ExperimentParams(**{"k": 5, **kw})
    plan = split_folds(data.matrix.queries, 3, params.seed)
    return run_experiment(data.matrix, data.features, methods, plan, params, data.descriptors)


class TestFolds:
    def test_sizes_and_swap(self):
        qs = [f"q{i}" for i in range(1, 8)]
        plan = split_folds(qs, draws=3, seed=42)
        assert len(plan.pairs) == 6
        for i in range(0, 6, 2):
            (a, b), (b2, a2) = plan.pairs[i], plan.pairs[i + 1]
            assert (len(a), len(b)) == (4, 3)
            assert a == a2 and b == b2
            assert sorted(a + b) == sorted(qs)
            assert not set(a) & set(b)
        assert [plan.draw_of(i) for i in range(6)] == [0, 0, 1, 1, 2, 2]

    def test_deterministic_and_order_free(self):
        qs = [f"q{i}" for i in range(20)]
        assert split_folds(qs, 3, 5) == split_folds(list(reversed(qs)), 3, 5)
        assert split_folds(qs, 3, 5) != split_folds(qs, 3, 6)

    def test_draws_differ(self):
        plan = split_folds([f"q{i}" for i in range(20)], 3, 1)
        assert len({plan.pairs[i][0] for i in (0, 2, 4)}) == 3

    def test_errors(self):
        with pytest.raises(ContractError):
            split_folds(["q1"])
        with pytest.raises(ContractError):
            split_folds(["q1", "q1", "q2"])
        with pytest.raises(ContractError):
            split_folds(["q1", "q2"], draws=0)


class TestExperiment:
    def test_report_shape(self, landscape):
        rep = run(landscape)
        assert list(rep.methods) == ALL
        for r in rep.methods.values():
            assert len(r.measurements) == 6
            assert r.first_split == r.measurements[0]
            assert list(r.per_query) == sorted(landscape.matrix.queries)
        tsv = rep.to_tsv().splitlines()
        assert tsv[1].split("\t")[:4] == ["method", "mean", "sd", "first_split"]
        assert len(tsv) == 2 + len(ALL)

    def test_oracle_dominance(self, landscape):
        rep = run(landscape)
        for m in ALL:
            assert rep.mean("oracle_full") >= rep.mean(m)
        for i in range(6):
            assert rep.methods["oracle_full"].measurements[i] >= rep.methods["oracle_k"].measurements[i]

    def test_method_order_irrelevant(self, landscape):
        a = run(landscape, ALL)
        b = run(landscape, list(reversed(ALL)))
        for m in ALL:
            assert a.methods[m].measurements == b.methods[m].measurements

    def test_workers_do_not_change_results(self, landscape):
        a = run(landscape, workers=1)
        b = run(landscape, workers=4)
        assert a.to_tsv() == b.to_tsv()

    def test_significance_and_counts(self, landscape):
        rep = run(landscape, references=("best_trained",), reference_method="best_trained")
        sig = {s.method: s for s in rep.significance}
        assert set(sig) == set(ALL) - {"best_trained"}
        assert all(s.p_adjusted == min(1.0, s.p * (len(ALL) - 1)) for s in sig.values())
        assert sig["erisk_cosine"].significant and sig["erisk_cosine"].t > 0
        assert rep.counts["best_trained"] == (0, 0)
        imp, deg = rep.counts["oracle_full"]
        assert deg == 0 and imp > 0
        md = rep.to_markdown()
        assert "△" in md and "Improved / degraded vs best_trained" in md

    def test_fixed_baseline(self, landscape):
        rep = run(landscape, ["erisk_cosine"], baseline="cfg001")
        assert rep.mean("erisk_cosine") > 0

    def test_missing_features(self, landscape):
        plan = split_folds(landscape.matrix.queries, 1)
        partial = dict(list(landscape.features.items())[:-1])
        with pytest.raises(ContractError, match="no features"):
            run_experiment(landscape.matrix, partial, ["erisk_cosine"], plan, ExperimentParams(k=3))
        with pytest.raises(ContractError):
            run_experiment(landscape.matrix, None, ["erisk_cosine"], plan, ExperimentParams(k=3))
        # non-matching methods do not need features
        run_experiment(landscape.matrix, None, ["best_trained", "oracle_full"], plan)

    def test_argument_errors(self, landscape):
        plan = split_folds(landscape.matrix.queries, 1)
        m, f = landscape.matrix, landscape.features
        with pytest.raises(ContractError, match="unknown"):
            run_experiment(m, f, ["magic"], plan)
        with pytest.raises(ContractError, match="duplicate"):
            run_experiment(m, f, ["best_trained", "best_trained"], plan)
        with pytest.raises(ContractError, match="descriptors"):
            run_experiment(m, f, ["trained_sqe"], plan, ExperimentParams(k=3))
        with pytest.raises(ContractError, match="reference"):
            run_experiment(m, f, ["best_trained"], plan, ExperimentParams(references=("oracle_full",)))
        with pytest.raises(ContractError, match="absent"):
            run_experiment(m, f, ["best_trained"], split_folds(["x1", "x2"], 1))


def test_protocol_isolation(landscape, monkeypatch):
    """Fitting must read matrix cells of training queries only."""
    traced = TracingMatrix(landscape.matrix)
    real_fit = harness.fit_method
    fits = []

    def guarded(method, matrix, train, *args, **kwargs):
        matrix.allowed = set(train)
        try:
            return real_fit(method, matrix, train, *args, **kwargs)
        finally:
            matrix.allowed = None
            fits.append(method)

    monkeypatch.setattr(harness, "fit_method", guarded)
    plan = split_folds(traced.queries, 3, 42)
    params = ExperimentParams(k=5)
    run_experiment(traced, landscape.features, ALL, plan, params, landscape.descriptors)
    assert len(fits) == 6 * len(ALL)
    assert traced.reads > 0
    assert traced.violations == []


def test_tracing_detects_leak(landscape):
    traced = TracingMatrix(landscape.matrix)
    traced.allowed = {"q000"}
    traced.cells(["cfg000"], ["q001"])
    assert traced.violations == [("q001",)]


def test_test_queries_do_not_affect_training(landscape):
    """Perturbing test cells leaves every fitted pool unchanged."""
    plan = split_folds(landscape.matrix.queries, 1, 3)
    train, test = plan.pairs[0]
    m = landscape.matrix
    block = m.cells(m.configs, m.queries).copy()
    cols = [m.queries.index(q) for q in test]
    block[:, cols] = np.random.default_rng(0).random((len(m.configs), len(cols)))
    from sqp.data import EffectivenessMatrix
    noisy = EffectivenessMatrix(m.configs, m.queries, block)
    params = ExperimentParams(k=5)
    for method in ALL:
        a = harness.fit_method(method, m, train, landscape.features, params, landscape.descriptors, 1)
        b = harness.fit_method(method, noisy, train, landscape.features, params, landscape.descriptors, 1)
        assert a.pool == b.pool
