"""Reference systems: best-trained, random pools, oracles, CombSUM and SQE."""

from __future__ import annotations

import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from .data import ConfigurationDescriptor, ConfigurationId, EffectivenessMatrix, QueryId, RunList
from .errors import ContractError

logger = logging.getLogger(__name__)

NORMALIZATIONS = ("minmax", "none")


def _mean_scores(
    M: EffectivenessMatrix, configs: Sequence[ConfigurationId], queries: Sequence[QueryId]
) -> dict[ConfigurationId, float]:
    block = M.cells(list(configs), list(queries))
    return {c: float(v) for c, v in zip(configs, block.mean(axis=1))}


def best_trained(
    M: EffectivenessMatrix,
    queries: Sequence[QueryId] | None = None,
    configs: Sequence[ConfigurationId] | None = None,
) -> ConfigurationId:
    """Configuration with the highest mean over ``queries``; smallest id on ties."""
    configs = sorted(M.configs if configs is None else configs)
    queries = list(M.queries if queries is None else queries)
    if not configs:
        raise ContractError("no configurations to choose from")
    if not queries:
        raise ContractError("no training queries")
    means = _mean_scores(M, configs, queries)
    best = configs[0]
    for c in configs[1:]:
        if means[c] > means[best]:
            best = c
    return best


def random_k(pool: Sequence[ConfigurationId], k: int, seed: int) -> tuple[ConfigurationId, ...]:
    """``k`` distinct configurations drawn uniformly without replacement.

    The draw is a function of the *set* of pool ids and the seed only; the
    result is returned sorted.
    """
    ordered = sorted(set(pool))
    if len(ordered) != len(pool):
        raise ContractError("pool contains duplicate ids")
    if not 1 <= k <= len(ordered):
        raise ContractError(f"k={k} must be between 1 and the pool size {len(ordered)}")
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(ordered), size=k, replace=False)
    return tuple(sorted(ordered[i] for i in picks))


@dataclass(frozen=True)
class OracleResult:
    best: Mapping[QueryId, ConfigurationId]
    per_query: Mapping[QueryId, float]
    mean: float


def oracle(
    M: EffectivenessMatrix,
    S: Sequence[ConfigurationId] | None = None,
    queries: Sequence[QueryId] | None = None,
) -> OracleResult:
    """Perfect per-query chooser restricted to ``S`` (default: every configuration)."""
    S = sorted(M.configs if S is None else set(S))
    queries = list(M.queries if queries is None else queries)
    if not S:
        raise ContractError("oracle over an empty configuration set")
    if not queries:
        raise ContractError("oracle over an empty query set")
    block = M.cells(S, queries)
    idx = block.argmax(axis=0)
    env = block.max(axis=0)
    return OracleResult(
        {q: S[i] for q, i in zip(queries, idx)},
        {q: float(v) for q, v in zip(queries, env)},
        float(env.mean()),
    )


@dataclass(frozen=True)
class FusedRun:
    query_id: QueryId
    entries: tuple[tuple[str, float], ...]
    sources: tuple[str, ...]
    normalization: str = "minmax"

    def to_runlist(self, tag: str = "combsum") -> RunList:
        return RunList.from_scores(self.query_id, self.entries, tag)


def _normalized(run: RunList, normalization: str) -> dict[str, float]:
    scores = {e.doc_id: e.score for e in run.entries}
    if normalization == "none" or not scores:
        return scores
    lo, hi = min(scores.values()), max(scores.values())
    if hi == lo:
        logger.warning("run %s for query %s has a constant score; normalized to 1.0",
                       run.tag, run.query_id)
        return dict.fromkeys(scores, 1.0)
    return {d: (s - lo) / (hi - lo) for d, s in scores.items()}


def comb_sum(runs: Sequence[RunList], normalization: str = "minmax") -> FusedRun:
    """CombSUM fusion of several runs for the same query.

    Scores are optionally min-max normalized per run, then summed per
    document (absent counts as 0). Output is sorted by score descending,
    doc_id ascending.
    """
    if not runs:
        raise ContractError("comb_sum needs at least one run")
    if normalization not in NORMALIZATIONS:
        raise ContractError(f"normalization must be one of {NORMALIZATIONS}")
    qids = {r.query_id for r in runs}
    if len(qids) != 1:
        raise ContractError(f"runs cover different queries: {sorted(qids)}")
    fused: dict[str, float] = {}
    for run in runs:
        for d, s in _normalized(run, normalization).items():
            fused[d] = fused.get(d, 0.0) + s
    entries = tuple(sorted(fused.items(), key=lambda ds: (-ds[1], ds[0])))
    return FusedRun(runs[0].query_id, entries, tuple(r.tag for r in runs), normalization)


def trained_sqe(
    descriptors: Sequence[ConfigurationDescriptor] | Mapping[ConfigurationId, ConfigurationDescriptor],
    M_train: EffectivenessMatrix,
    queries: Sequence[QueryId] | None = None,
) -> tuple[ConfigurationId, ConfigurationId]:
    """Best-trained configuration and its query-expansion counterpart.

    The counterpart is the best-trained configuration with the same retrieval
    model and the opposite expansion setting if one exists, otherwise the
    best-trained configuration of the opposite expansion class overall.
    """
    if not isinstance(descriptors, Mapping):
        descriptors = {d.config_id: d for d in descriptors}
    missing = [c for c in M_train.configs if c not in descriptors]
    if missing:
        raise ContractError(f"no descriptor for configurations: {', '.join(missing[:10])}")
    configs = list(M_train.configs)
    first = best_trained(M_train, queries, configs)
    head = descriptors[first]
    opposite = [c for c in configs if descriptors[c].uses_qe != head.uses_qe]
    if not opposite:
        raise ContractError("all configurations share the same query-expansion class; SQE undefined")
    same_model = [c for c in opposite if descriptors[c].retrieval_model == head.retrieval_model]
    second = best_trained(M_train, queries, same_model or opposite)
    logger.info("SQE pair: %s + %s (%s counterpart)", first, second,
                "same-model" if same_model else "best opposite-class")
    return first, second
