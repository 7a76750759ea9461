"""Cross-validation experiment driver and report assembly.

Protocol: queries are split into two halves per draw; each half trains once
and tests once. Every method sees the same plan. Training only ever reads
matrix cells of training queries; test cells are read solely to score the
resulting assignments.
"""

from __future__ import annotations

import io
import logging
import math
from collections.abc import Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import baselines
from .data import ConfigurationDescriptor, ConfigurationId, EffectivenessMatrix, QueryFeatureVector, QueryId
from .errors import ContractError
from .matcher import TrainedModel, best_match_configuration, train_model
from .selection import RiskParams, select_configurations
from .stats import bonferroni, paired_t_test

logger = logging.getLogger(__name__)

MATCHING_METHODS = ("erisk_cosine", "nrisk_cosine", "randomk_cosine", "trained_sqe")
ORACLE_METHODS = ("oracle_full", "oracle_k")
METHODS = ("best_trained",) + MATCHING_METHODS + ORACLE_METHODS
SIGNIFICANCE_MARKS = ("△", "↑", "*", "§")


@dataclass(frozen=True)
class FoldPlan:
    """Train/test splits: two (train, test) pairs per draw, halves swapped."""

    pairs: tuple[tuple[tuple[QueryId, ...], tuple[QueryId, ...]], ...]
    n_draws: int
    seed: int

    def draw_of(self, pair_index: int) -> int:
        return pair_index // 2


def split_folds(queries: Sequence[QueryId], draws: int = 3, seed: int = 42) -> FoldPlan:
    """Seeded two-fold splits.

    Queries are first put in sorted order, so the plan depends only on the
    query *set*. Draw ``d`` permutes them with a generator seeded from
    ``(seed, d)``; the first ``ceil(n/2)`` shuffled queries form one half.
    """
    qs = sorted(set(queries))
    if len(qs) != len(queries):
        raise ContractError("duplicate query ids in fold input")
    if len(qs) < 2:
        raise ContractError("need at least 2 queries to split into folds")
    if draws < 1:
        raise ContractError("draws must be >= 1")
    if seed < 0:
        raise ContractError("seed must be non-negative")
    pairs = []
    half = (len(qs) + 1) // 2
    for d in range(draws):
        perm = np.random.default_rng([seed, d]).permutation(len(qs))
        shuffled = [qs[i] for i in perm]
        a, b = tuple(shuffled[:half]), tuple(shuffled[half:])
        pairs += [(a, b), (b, a)]
    return FoldPlan(tuple(pairs), draws, seed)


@dataclass(frozen=True)
class ExperimentParams:
    k: int = 20
    objective: str = "E"
    beta: float = 0.0
    baseline: ConfigurationId | None = None
    zscore: bool = False
    seed: int = 42
    references: tuple[str, ...] = ()
    reference_method: str | None = None
    alpha: float = 0.05
    workers: int = 1


@dataclass(frozen=True)
class Fitted:
    """A trained method, ready to be scored on test queries."""

    method: str
    pool: tuple[ConfigurationId, ...]
    model: TrainedModel | None = None
    single: ConfigurationId | None = None
    is_oracle: bool = False


def _derived_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def fit_method(
    method: str,
    matrix: EffectivenessMatrix,
    train: Sequence[QueryId],
    features: Mapping[QueryId, QueryFeatureVector] | None,
    params: ExperimentParams,
    descriptors: Sequence[ConfigurationDescriptor] | None = None,
    fold_seed: int = 0,
) -> Fitted:
    """Train ``method`` on the ``train`` queries only."""
    train = list(train)
    configs = list(matrix.configs)

    def risk_pool(objective: str) -> tuple[ConfigurationId, ...]:
        baseline = params.baseline or baselines.best_trained(matrix, train)
        rp = RiskParams(objective, params.beta, params.k, baseline)
        return select_configurations(train, configs, matrix, rp).config_ids

    def matched(pool: Sequence[ConfigurationId]) -> Fitted:
        model = train_model(matrix, pool, features, train, zscore=params.zscore)
        return Fitted(method, tuple(pool), model=model)

    if method == "best_trained":
        best = baselines.best_trained(matrix, train)
        return Fitted(method, (best,), single=best)
    if method == "erisk_cosine":
        return matched(risk_pool("E"))
    if method == "nrisk_cosine":
        return matched(risk_pool("N"))
    if method == "randomk_cosine":
        return matched(baselines.random_k(configs, params.k, fold_seed))
    if method == "trained_sqe":
        if descriptors is None:
            raise ContractError("trained_sqe requires configuration descriptors")
        return matched(baselines.trained_sqe(descriptors, matrix.restrict(queries=train)))
    if method == "oracle_full":
        return Fitted(method, tuple(configs), is_oracle=True)
    if method == "oracle_k":
        return Fitted(method, risk_pool(params.objective), is_oracle=True)
    raise ContractError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")


def score_fold(
    fitted: Fitted,
    matrix: EffectivenessMatrix,
    test: Sequence[QueryId],
    features: Mapping[QueryId, QueryFeatureVector] | None,
) -> dict[QueryId, float]:
    """Per-test-query effectiveness of a fitted method."""
    test = list(test)
    if fitted.is_oracle:
        return dict(baselines.oracle(matrix, fitted.pool, test).per_query)
    if fitted.single is not None:
        return {q: s for q, s in zip(test, matrix.row(fitted.single, test))}
    out = {}
    for q in test:
        match = best_match_configuration(fitted.model, features[q])
        out[q] = matrix.score(match.config_id, q)
    return out


@dataclass(frozen=True)
class MethodResult:
    name: str
    measurements: tuple[float, ...]
    per_query: Mapping[QueryId, float] = field(repr=False)

    @property
    def mean(self) -> float:
        return float(np.mean(self.measurements))

    @property
    def sd(self) -> float:
        if len(self.measurements) < 2:
            return 0.0
        return float(np.std(self.measurements, ddof=1))

    @property
    def first_split(self) -> float:
        return self.measurements[0]


@dataclass(frozen=True)
class Significance:
    method: str
    reference: str
    t: float
    p: float
    p_adjusted: float
    significant: bool


@dataclass(frozen=True)
class ExperimentReport:
    metric_name: str
    n_draws: int
    seed: int
    methods: Mapping[str, MethodResult]
    significance: tuple[Significance, ...] = ()
    counts: Mapping[str, tuple[int, int]] = field(default_factory=dict)
    reference_method: str | None = None
    references: tuple[str, ...] = ()

    def mean(self, method: str) -> float:
        return self.methods[method].mean

    def to_tsv(self) -> str:
        buf = io.StringIO()
        n = max(len(r.measurements) for r in self.methods.values())
        buf.write(f"# metric={self.metric_name}\tdraws={self.n_draws}\tseed={self.seed}\n")
        cols = ["method", "mean", "sd", "first_split"] + [f"m{i + 1}" for i in range(n)]
        if self.reference_method:
            cols += [f"improved_vs_{self.reference_method}", f"degraded_vs_{self.reference_method}"]
        buf.write("\t".join(cols) + "\n")
        for name, r in self.methods.items():
            row = [name, _fmt(r.mean), _fmt(r.sd), _fmt(r.first_split)]
            row += [_fmt(x) for x in r.measurements]
            if self.reference_method:
                imp, deg = self.counts.get(name, (0, 0))
                row += [str(imp), str(deg)]
            buf.write("\t".join(row) + "\n")
        if self.significance:
            buf.write("\nmethod\treference\tt\tp\tp_bonferroni\tsignificant\n")
            for s in self.significance:
                buf.write(f"{s.method}\t{s.reference}\t{_fmt(s.t)}\t{_fmt(s.p)}\t"
                          f"{_fmt(s.p_adjusted)}\t{int(s.significant)}\n")
        return buf.getvalue()

    def to_markdown(self) -> str:
        marks = {ref: SIGNIFICANCE_MARKS[i % len(SIGNIFICANCE_MARKS)]
                 for i, ref in enumerate(self.references)}
        sig = {(s.method, s.reference) for s in self.significance if s.significant}
        lines = [
            f"Metric: `{self.metric_name}`, {self.n_draws} draws x 2 folds, seed {self.seed}.",
            "",
        ]
        header = "| Method | Mean (sd) | First split |"
        rule = "|---|---|---|"
        if self.reference_method:
            header += f" Improved / degraded vs {self.reference_method} |"
            rule += "---|"
        lines += [header, rule]
        for name, r in self.methods.items():
            tag = "".join(marks[ref] for ref in self.references if (name, ref) in sig)
            line = f"| {name} | {r.mean:.4f}{tag} ({r.sd:.4f}) | {r.first_split:.4f} |"
            if self.reference_method:
                imp, deg = self.counts.get(name, (0, 0))
                line += f" {imp} / {deg} |"
            lines.append(line)
        if marks:
            lines.append("")
            lines += [f"{m} significantly different from {ref} (paired t-test, Bonferroni)"
                      for ref, m in marks.items()]
        return "\n".join(lines) + "\n"


def _fmt(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.6f}"


def _run_pair(i, train, test, plan, matrix, features, methods, params, descriptors):
    fold_seed = _derived_seed(params.seed, plan.draw_of(i), i % 2)
    out = {}
    for m in methods:
        fitted = fit_method(m, matrix, train, features, params, descriptors, fold_seed)
        out[m] = score_fold(fitted, matrix, test, features)
    return out


def run_experiment(
    matrix: EffectivenessMatrix,
    features: Mapping[QueryId, QueryFeatureVector] | None,
    methods: Sequence[str],
    plan: FoldPlan,
    params: ExperimentParams = ExperimentParams(),
    descriptors: Sequence[ConfigurationDescriptor] | None = None,
) -> ExperimentReport:
    """Run every method on every (train, test) pair of ``plan``."""
    methods = list(methods)
    if not methods:
        raise ContractError("no methods requested")
    if len(set(methods)) != len(methods):
        raise ContractError("duplicate method names")
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ContractError(f"unknown methods {unknown}; choose from {', '.join(METHODS)}")
    if any(m in MATCHING_METHODS for m in methods):
        if features is None:
            raise ContractError("feature-matching methods require query features")
        missing = [q for q in matrix.queries if q not in features]
        if missing:
            raise ContractError(f"no features for queries: {', '.join(missing[:10])}")
    if "trained_sqe" in methods and descriptors is None:
        raise ContractError("trained_sqe requires configuration descriptors")
    for ref in params.references + ((params.reference_method,) if params.reference_method else ()):
        if ref not in methods:
            raise ContractError(f"reference {ref!r} is not among the requested methods")
    planned = {q for tr, te in plan.pairs for q in tr + te}
    if not planned <= set(matrix.queries):
        raise ContractError("fold plan contains queries absent from the matrix")

    jobs = [(i, tr, te) for i, (tr, te) in enumerate(plan.pairs)]
    args = (plan, matrix, features, methods, params, descriptors)
    if params.workers > 1:
        with ThreadPoolExecutor(max_workers=params.workers) as ex:
            results = list(ex.map(lambda j: _run_pair(*j, *args), jobs))
    else:
        results = [_run_pair(*j, *args) for j in jobs]

    method_results = {}
    for m in methods:
        measurements = tuple(float(np.mean(list(res[m].values()))) for res in results)
        by_query: dict[str, list[float]] = {}
        for res in results:
            for q, s in res[m].items():
                by_query.setdefault(q, []).append(s)
        per_query = {q: float(np.mean(by_query[q])) for q in sorted(by_query)}
        method_results[m] = MethodResult(m, measurements, per_query)

    significance = []
    for ref in params.references:
        others = [m for m in methods if m != ref]
        ref_scores = list(method_results[ref].per_query.values())
        for m in others:
            t, p = paired_t_test(list(method_results[m].per_query.values()), ref_scores)
            p_adj = bonferroni(p, len(others))
            significance.append(Significance(m, ref, t, p, p_adj, p_adj < params.alpha))

    counts = {}
    if params.reference_method:
        ref_pq = method_results[params.reference_method].per_query
        for m in methods:
            pq = method_results[m].per_query
            counts[m] = (sum(pq[q] > ref_pq[q] for q in pq), sum(pq[q] < ref_pq[q] for q in pq))

    return ExperimentReport(
        matrix.metric_name, plan.n_draws, plan.seed, method_results, tuple(significance),
        counts, params.reference_method, tuple(params.references),
    )
