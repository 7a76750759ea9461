"""Per-query effectiveness metrics over (RunList, Qrels).

Binary metrics (P@k, AP, RR, RBP) treat a document as relevant iff its grade
is > 0. nDCG uses the exponential gain ``2**grade - 1``.
"""

from __future__ import annotations

import logging
import math
import os
from collections.abc import Mapping, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from .data import ConfigurationId, EffectivenessMatrix, Qrels, QueryId, RunList
from .errors import ContractError, FormatError

logger = logging.getLogger(__name__)

RBP_MAX_DEPTH = 1000
NDCG_GAIN = "exp2"

KINDS = ("p", "ap", "ndcg", "rr", "rbp")


@dataclass(frozen=True)
class MetricSpec:
    """Which metric to compute, plus its cut-off / persistence parameters."""

    kind: str
    k: int | None = None
    persistence: float | None = None
    depth: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ContractError(f"unknown metric kind {self.kind!r}")
        needs_k = self.kind in ("p", "ndcg")
        if needs_k != (self.k is not None):
            raise ContractError(f"cut-off k is required exactly for p@k and ndcg@k, got {self}")
        if self.k is not None and self.k < 1:
            raise ContractError("k must be >= 1")
        if (self.kind == "rbp") != (self.persistence is not None):
            raise ContractError("persistence is required exactly for rbp")
        if self.persistence is not None and not 0.0 < self.persistence < 1.0:
            raise ContractError("RBP persistence must lie in (0, 1)")
        if self.depth is not None and (self.kind != "rbp" or self.depth < 1):
            raise ContractError("depth applies to rbp only and must be >= 1")

    @property
    def name(self) -> str:
        if self.k is not None:
            return f"{self.kind}@{self.k}"
        if self.kind == "rbp":
            tail = "" if self.depth is None else f":{self.depth}"
            return f"rbp:{self.persistence!r}{tail}"
        return self.kind

    def metadata(self) -> dict[str, str]:
        if self.kind == "ndcg":
            return {"ndcg_gain": NDCG_GAIN, "ndcg_discount": "log2(rank+1)"}
        if self.kind == "rbp":
            return {"rbp_relevance": "binary"}
        return {}


def parse_metric(text: str) -> MetricSpec:
    """Parse ``p@10``, ``ap``, ``ndcg@10``, ``rr`` or ``rbp:0.5[:1000]``."""
    s = text.strip().lower()
    try:
        if s in ("ap", "rr"):
            return MetricSpec(s)
        if "@" in s:
            kind, _, k = s.partition("@")
            return MetricSpec(kind, k=int(k))
        if s.startswith("rbp:"):
            parts = s.split(":")
            if len(parts) not in (2, 3):
                raise ValueError(s)
            depth = int(parts[2]) if len(parts) == 3 else None
            return MetricSpec("rbp", persistence=float(parts[1]), depth=depth)
    except ValueError:
        pass
    raise FormatError(f"cannot parse metric spec {text!r}")


def _grades(run: RunList, qrels: Qrels) -> list[int | None]:
    judged = qrels.for_query(run.query_id)
    return [judged.get(d) for d in run.doc_ids]


def precision_at_k(run: RunList, qrels: Qrels, k: int) -> float:
    if k < 1:
        raise ContractError("k must be >= 1")
    top = _grades(run, qrels)[:k]
    return sum(1 for g in top if g is not None and g > 0) / k


def average_precision(run: RunList, qrels: Qrels) -> float:
    n_rel = qrels.n_relevant(run.query_id)
    if n_rel == 0:
        logger.warning("query %s has no relevant documents; AP = 0", run.query_id)
        return 0.0
    hits = 0
    total = 0.0
    for rank, g in enumerate(_grades(run, qrels), start=1):
        if g is not None and g > 0:
            hits += 1
            total += hits / rank
    return total / n_rel


def _dcg(gains: Sequence[int]) -> float:
    return sum((2.0**g - 1.0) / math.log2(i + 1) for i, g in enumerate(gains, start=1) if g > 0)


def ndcg_at_k(run: RunList, qrels: Qrels, k: int) -> float:
    if k < 1:
        raise ContractError("k must be >= 1")
    ideal = sorted((g for g in qrels.for_query(run.query_id).values() if g > 0), reverse=True)
    idcg = _dcg(ideal[:k])
    if idcg == 0.0:
        logger.warning("query %s has no relevant documents; nDCG = 0", run.query_id)
        return 0.0
    gains = [g if g is not None else 0 for g in _grades(run, qrels)[:k]]
    return _dcg(gains) / idcg


def reciprocal_rank(run: RunList, qrels: Qrels) -> float:
    for rank, g in enumerate(_grades(run, qrels), start=1):
        if g is not None and g > 0:
            return 1.0 / rank
    return 0.0


def rbp(
    run: RunList, qrels: Qrels, persistence: float, depth: int | None = None
) -> tuple[float, float]:
    """Rank-biased precision and its residual.

    Returns ``(base, residual)``. Positions up to ``depth`` holding an
    unjudged document, or lying past the end of the run, add their weight to
    the residual, as does the tail mass ``p**depth`` beyond the evaluation
    depth. ``depth`` defaults to the run length capped at 1000 (minimum 1).
    """
    p = persistence
    if not 0.0 < p < 1.0:
        raise ContractError("RBP persistence must lie in (0, 1)")
    if depth is None:
        depth = max(1, min(len(run), RBP_MAX_DEPTH))
    if depth < 1:
        raise ContractError("RBP depth must be >= 1")
    grades = _grades(run, qrels)
    base = 0.0
    unknown = 0.0
    weight = 1.0
    for i in range(depth):
        g = grades[i] if i < len(grades) else None
        if g is None:
            unknown += weight
        elif g > 0:
            base += weight
        weight *= p
    residual = (1.0 - p) * unknown + p**depth
    # the geometric weights sum to 1 exactly; only rounding can overshoot
    return min((1.0 - p) * base, 1.0 - residual), residual


def evaluate(run: RunList, qrels: Qrels, spec: MetricSpec) -> float:
    """Score one run with ``spec``; for RBP this is the base value."""
    if spec.kind == "p":
        return precision_at_k(run, qrels, spec.k)
    if spec.kind == "ap":
        return average_precision(run, qrels)
    if spec.kind == "ndcg":
        return ndcg_at_k(run, qrels, spec.k)
    if spec.kind == "rr":
        return reciprocal_rank(run, qrels)
    return rbp(run, qrels, spec.persistence, spec.depth)[0]


def _score_row(
    runs: Mapping[QueryId, RunList], queries: Sequence[QueryId], qrels: Qrels, spec: MetricSpec
) -> tuple[list[float], list[float]]:
    values, residuals = [], []
    for q in queries:
        if spec.kind == "rbp":
            base, res = rbp(runs[q], qrels, spec.persistence, spec.depth)
            values.append(base)
            residuals.append(res)
        else:
            values.append(evaluate(runs[q], qrels, spec))
    return values, residuals


def build_matrix(
    runs: Mapping[ConfigurationId, Sequence[RunList] | Mapping[QueryId, RunList]],
    qrels: Qrels,
    spec: MetricSpec,
    workers: int = 1,
) -> tuple[EffectivenessMatrix, dict[tuple[ConfigurationId, QueryId], float]]:
    """Evaluate every configuration's run on every judged query.

    Returns the matrix plus a ``(config, query) -> residual`` mapping, which
    is empty unless ``spec`` is RBP. Rows may be computed in worker processes;
    the result does not depend on ``workers``.
    """
    queries = qrels.queries
    if not queries:
        raise ContractError("qrels contain no queries")
    by_config: dict[str, dict[str, RunList]] = {}
    for c, rs in runs.items():
        table = dict(rs) if isinstance(rs, Mapping) else {r.query_id: r for r in rs}
        missing = [q for q in queries if q not in table]
        if missing:
            raise ContractError(f"configuration {c} has no run for queries: {', '.join(missing)}")
        by_config[c] = {q: table[q] for q in queries}
    if not by_config:
        raise ContractError("no configurations to evaluate")

    configs = list(by_config)
    if workers > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(configs), os.cpu_count() or 1)) as ex:
            rows = list(ex.map(_score_row, (by_config[c] for c in configs),
                               [queries] * len(configs), [qrels] * len(configs),
                               [spec] * len(configs)))
    else:
        rows = [_score_row(by_config[c], queries, qrels, spec) for c in configs]

    matrix = EffectivenessMatrix(
        configs, queries, [v for v, _ in rows], spec.name, spec.metadata()
    )
    residuals: dict[tuple[str, str], float] = {}
    if spec.kind == "rbp":
        for c, (_, res) in zip(configs, rows):
            residuals.update({(c, q): r for q, r in zip(queries, res)})
    return matrix, residuals
