"""Per-query configuration assignment by nearest training query.

Training maps every training query to its best configuration within the
selected pool. At prediction time, a test query receives the configuration
of the training query whose aggregated feature vector has the highest cosine
similarity with its own (first-nearest-neighbour).
"""

from __future__ import annotations

import json
import logging
from collections import defaultdict
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import (
    ConfigurationId,
    EffectivenessMatrix,
    FeatureRecord,
    PathLike,
    QueryFeatureVector,
    QueryId,
    RunList,
)
from .errors import ContractError, FormatError
from .selection import SelectedPool

logger = logging.getLogger(__name__)

DEFAULT_DEPTH = 10
AGGREGATORS = {
    "mean": np.mean,
    "std": np.std,  # population standard deviation (ddof=0)
    "max": np.max,
}
DEFAULT_AGGREGATORS = ("mean", "std", "max")


def aggregate_features(
    records: Iterable[FeatureRecord],
    depth: int = DEFAULT_DEPTH,
    aggregators: Sequence[str] = DEFAULT_AGGREGATORS,
    doc_order: Sequence[str] | None = None,
) -> QueryFeatureVector:
    """Summarize one query's document-level features over its top documents.

    Documents are ranked by ``doc_order`` (typically the reference run) when
    given, otherwise by first appearance in ``records``. Only the top
    ``depth`` documents that carry features are used; fewer is fine. Output
    names are ``<feature>.<aggregator>``, features sorted by name.
    """
    records = list(records)
    if not records:
        raise ContractError("no feature records to aggregate")
    qids = {r.query_id for r in records}
    if len(qids) != 1:
        raise ContractError(f"records span several queries: {sorted(qids)}")
    if depth < 1:
        raise ContractError("depth must be >= 1")
    unknown = [a for a in aggregators if a not in AGGREGATORS]
    if unknown:
        raise ContractError(f"unknown aggregators: {unknown}")

    by_doc: dict[str, dict[str, float]] = {}
    for r in records:
        by_doc.setdefault(r.doc_id, {})[r.feature_name] = r.value
    names = sorted({r.feature_name for r in records})
    for doc, feats in by_doc.items():
        if len(feats) != len(names):
            absent = [n for n in names if n not in feats]
            raise FormatError(f"query {records[0].query_id}, doc {doc}: missing features {absent}")

    if doc_order is None:
        docs = list(by_doc)
    else:
        docs = [d for d in doc_order if d in by_doc]
        if not docs:
            raise ContractError(f"query {records[0].query_id}: no featured documents in the reference run")
    docs = docs[:depth]

    table = np.array([[by_doc[d][n] for n in names] for d in docs], dtype=float)
    out_names, out_values = [], []
    for j, n in enumerate(names):
        for a in aggregators:
            out_names.append(f"{n}.{a}")
            out_values.append(float(AGGREGATORS[a](table[:, j])))
    return QueryFeatureVector(records[0].query_id, tuple(out_names), np.array(out_values))


def aggregate_all(
    records: Iterable[FeatureRecord],
    depth: int = DEFAULT_DEPTH,
    aggregators: Sequence[str] = DEFAULT_AGGREGATORS,
    reference_runs: Mapping[QueryId, RunList] | None = None,
) -> dict[QueryId, QueryFeatureVector]:
    """Aggregate a whole feature file into one vector per query (file order)."""
    grouped: dict[str, list[FeatureRecord]] = defaultdict(list)
    for r in records:
        grouped[r.query_id].append(r)
    out = {}
    for q, recs in grouped.items():
        order = None
        if reference_runs is not None:
            if q not in reference_runs:
                raise ContractError(f"reference run has no entry for query {q}")
            order = reference_runs[q].doc_ids
        out[q] = aggregate_features(recs, depth, aggregators, order)
    _check_schema(out.values())
    return out


def _check_schema(vectors: Iterable[QueryFeatureVector]) -> tuple[str, ...]:
    schema = None
    for v in vectors:
        if schema is None:
            schema = v.names
        elif v.names != schema:
            raise FormatError(f"query {v.query_id}: feature schema differs from other queries")
    if schema is None:
        raise ContractError("no feature vectors")
    return schema


def cosine(u: QueryFeatureVector | np.ndarray, v: QueryFeatureVector | np.ndarray) -> float:
    """Cosine similarity; 0.0 (with a warning) when either vector has zero norm."""
    if isinstance(u, QueryFeatureVector) and isinstance(v, QueryFeatureVector):
        if u.names != v.names:
            raise ContractError(f"feature schemas differ ({u.query_id} vs {v.query_id})")
    a = np.asarray(getattr(u, "values", u), dtype=float)
    b = np.asarray(getattr(v, "values", v), dtype=float)
    if a.shape != b.shape:
        raise ContractError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        logger.warning("cosine with a zero-norm vector; similarity set to 0")
        return 0.0
    return float(np.dot(a, b) / (na * nb))


# ---------------------------------------------------------------------------
# index and model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QueryConfigIndex:
    mapping: Mapping[QueryId, ConfigurationId]
    pool: tuple[ConfigurationId, ...]
    metric_name: str = "unknown"

    def __getitem__(self, q: QueryId) -> ConfigurationId:
        return self.mapping[q]

    def __len__(self) -> int:
        return len(self.mapping)


def _pool_ids(S: SelectedPool | Sequence[ConfigurationId]) -> tuple[ConfigurationId, ...]:
    return S.config_ids if isinstance(S, SelectedPool) else tuple(S)


def build_best_config_index(
    Q_train: Sequence[QueryId],
    S: SelectedPool | Sequence[ConfigurationId],
    M: EffectivenessMatrix,
) -> QueryConfigIndex:
    """Map each training query to its best pool member (smallest id on ties)."""
    pool = _pool_ids(S)
    if not pool:
        raise ContractError("selected pool is empty")
    absent = [q for q in Q_train if not M.has_query(q)]
    if absent:
        raise ContractError(f"training queries missing from matrix: {', '.join(absent)}")
    ordered = sorted(pool)
    block = M.cells(ordered, list(Q_train))
    # argmax returns the first maximum, i.e. the smallest id
    best = block.argmax(axis=0)
    mapping = {q: ordered[i] for q, i in zip(Q_train, best)}
    return QueryConfigIndex(mapping, pool, M.metric_name)


@dataclass(frozen=True)
class Match:
    config_id: ConfigurationId
    query_id: QueryId
    similarity: float


@dataclass(frozen=True, eq=False)
class TrainedModel:
    """Training vectors plus the query -> configuration index."""

    schema: tuple[str, ...]
    train_queries: tuple[QueryId, ...]
    vectors: np.ndarray = field(repr=False)
    index: QueryConfigIndex
    zscore: bool = False
    center: np.ndarray | None = field(default=None, repr=False)
    scale: np.ndarray | None = field(default=None, repr=False)
    reference: str | None = None
    depth: int = DEFAULT_DEPTH

    def transform(self, values: np.ndarray) -> np.ndarray:
        if not self.zscore:
            return np.asarray(values, dtype=float)
        return (np.asarray(values, dtype=float) - self.center) / self.scale

    def to_dict(self) -> dict:
        return {
            "schema": list(self.schema),
            "depth": self.depth,
            "reference": self.reference,
            "zscore": self.zscore,
            "center": None if self.center is None else [float(x) for x in self.center],
            "scale": None if self.scale is None else [float(x) for x in self.scale],
            "pool": list(self.index.pool),
            "metric": self.index.metric_name,
            "train": [
                {"query_id": q, "config_id": self.index[q], "vector": [float(x) for x in row]}
                for q, row in zip(self.train_queries, self.vectors)
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> TrainedModel:
        try:
            train = doc["train"]
            queries = tuple(str(t["query_id"]) for t in train)
            index = QueryConfigIndex(
                {str(t["query_id"]): str(t["config_id"]) for t in train},
                tuple(doc["pool"]), str(doc.get("metric", "unknown")),
            )
            vectors = np.array([t["vector"] for t in train], dtype=float)
            center = None if doc.get("center") is None else np.array(doc["center"], dtype=float)
            scale = None if doc.get("scale") is None else np.array(doc["scale"], dtype=float)
            return cls(tuple(doc["schema"]), queries, vectors, index, bool(doc["zscore"]),
                       center, scale, doc.get("reference"), int(doc.get("depth", DEFAULT_DEPTH)))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"malformed model document: {exc}") from None


def train_model(
    M: EffectivenessMatrix,
    S: SelectedPool | Sequence[ConfigurationId],
    vectors: Mapping[QueryId, QueryFeatureVector],
    train_queries: Sequence[QueryId] | None = None,
    zscore: bool = False,
    reference: str | None = None,
    depth: int = DEFAULT_DEPTH,
) -> TrainedModel:
    """Fit the matcher on ``train_queries`` (default: every query in ``M``).

    With ``zscore`` the per-dimension mean and standard deviation of the
    training vectors are stored and applied to both sides before matching.
    """
    queries = list(M.queries if train_queries is None else train_queries)
    if not queries:
        raise ContractError("training set is empty")
    missing = [q for q in queries if q not in vectors]
    if missing:
        raise ContractError(f"no features for training queries: {', '.join(missing[:10])}")
    schema = _check_schema(vectors[q] for q in queries)
    index = build_best_config_index(queries, S, M)
    # canonical order makes matching independent of the caller's ordering
    queries = sorted(queries)
    raw = np.array([vectors[q].values for q in queries], dtype=float)
    center = scale = None
    if zscore:
        center = raw.mean(axis=0)
        scale = raw.std(axis=0)
        scale[scale == 0.0] = 1.0
        raw = (raw - center) / scale
    return TrainedModel(schema, tuple(queries), raw, index, zscore, center, scale, reference, depth)


def best_match_configuration(model: TrainedModel, test_features: QueryFeatureVector) -> Match:
    """Configuration of the most cosine-similar training query.

    Ties go to the lexicographically smallest training query id.
    """
    if not model.train_queries:
        raise ContractError("model has no training queries")
    if test_features.names != model.schema:
        raise ContractError(f"query {test_features.query_id}: feature schema does not match the model")
    t = model.transform(test_features.values)
    best_q, best_sim = None, -np.inf
    for q, row in zip(model.train_queries, model.vectors):
        sim = cosine(row, t)
        if sim > best_sim:
            best_q, best_sim = q, sim
    return Match(model.index[best_q], best_q, float(best_sim))


def save_model(model: TrainedModel, path: PathLike) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), indent=2) + "\n", encoding="utf-8")


def load_model(path: PathLike) -> TrainedModel:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from None
    return TrainedModel.from_dict(doc)


def save_assignments(matches: Mapping[QueryId, Match], path: PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for q, m in matches.items():
            fh.write(f"{q}\t{m.config_id}\t{m.query_id}\t{m.similarity!r}\n")
