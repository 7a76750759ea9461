"""Domain types and file ingestion/serialization.

Every value here is immutable once constructed. Loaders raise
:class:`~sqp.errors.FormatError` with the offending line number on malformed
input; nothing is silently clamped or dropped.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

from .errors import FormatError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
ConfigurationId = str
QueryId = str

NO_QE = "No"
ABSENT = "-"


def _check_token(value: str, what: str) -> None:
    if not isinstance(value, str) or not value or any(ch.isspace() for ch in value):
        raise FormatError(f"{what} must be a non-empty token without whitespace, got {value!r}")


def _format_float(x: float) -> str:
    # shortest repr that round-trips exactly
    return repr(float(x))


def _iter_lines(path: PathLike) -> Iterator[tuple[int, str]]:
    """Yield (line number, stripped line), skipping blanks and ``#`` comments."""
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            yield lineno, line


# ---------------------------------------------------------------------------
# Configuration descriptors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConfigurationDescriptor:
    """Component and hyperparameter settings of one search configuration."""

    config_id: ConfigurationId
    retrieval_model: str
    qe_model: str = NO_QE
    qe_docs: int | None = None
    qe_terms: int | None = None
    qe_min_docs: int | None = None

    def __post_init__(self) -> None:
        _check_token(self.config_id, "config_id")
        _check_token(self.retrieval_model, "retrieval_model")
        _check_token(self.qe_model, "qe_model")
        params = (self.qe_docs, self.qe_terms, self.qe_min_docs)
        if self.qe_model == NO_QE:
            if any(p is not None for p in params):
                raise FormatError(
                    f"{self.config_id}: qe_model 'No' requires qe_docs/qe_terms/qe_min_docs absent"
                )
        else:
            if any(p is None or p <= 0 for p in params):
                raise FormatError(
                    f"{self.config_id}: qe_model {self.qe_model!r} requires positive "
                    "qe_docs, qe_terms and qe_min_docs"
                )

    @property
    def uses_qe(self) -> bool:
        return self.qe_model != NO_QE


def load_descriptors(path: PathLike) -> list[ConfigurationDescriptor]:
    out: list[ConfigurationDescriptor] = []
    seen: set[str] = set()
    for lineno, line in _iter_lines(path):
        parts = line.split("\t")
        if len(parts) != 6:
            raise FormatError(f"{path}:{lineno}: expected 6 tab-separated fields, got {len(parts)}")
        cid, model, qe, *nums = (p.strip() for p in parts)
        try:
            values = [None if n == ABSENT else int(n) for n in nums]
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: bad integer field ({exc})") from None
        if cid in seen:
            raise FormatError(f"{path}:{lineno}: duplicate config_id {cid!r}")
        seen.add(cid)
        try:
            out.append(ConfigurationDescriptor(cid, model, qe, *values))
        except FormatError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from None
    return out


def save_descriptors(descriptors: Iterable[ConfigurationDescriptor], path: PathLike) -> None:
    def fmt(v: int | None) -> str:
        return ABSENT if v is None else str(v)

    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for d in descriptors:
            fh.write(
                f"{d.config_id}\t{d.retrieval_model}\t{d.qe_model}\t"
                f"{fmt(d.qe_docs)}\t{fmt(d.qe_terms)}\t{fmt(d.qe_min_docs)}\n"
            )


# ---------------------------------------------------------------------------
# Effectiveness matrix
# ---------------------------------------------------------------------------


class EffectivenessMatrix:
    """Dense per-(configuration, query) effectiveness scores in ``[0, 1]``.

    All reads of score values go through :meth:`cells`; the other accessors
    are thin wrappers around it.

    Parameters
    ----------
    configs, queries:
        Row and column identifiers, in order. Each must be distinct.
    scores:
        Array-like of shape ``(len(configs), len(queries))``.
    metric_name:
        Name of the metric the cells hold (e.g. ``"p@10"``).
    metadata:
        Free-form string annotations carried through serialization.
    """

    def __init__(
        self,
        configs: Sequence[ConfigurationId],
        queries: Sequence[QueryId],
        scores,
        metric_name: str = "unknown",
        metadata: Mapping[str, str] | None = None,
    ) -> None:
        configs = tuple(configs)
        queries = tuple(queries)
        for c in configs:
            _check_token(c, "config id")
        for q in queries:
            _check_token(q, "query id")
        if len(set(configs)) != len(configs):
            raise FormatError("duplicate configuration ids in matrix")
        if len(set(queries)) != len(queries):
            raise FormatError("duplicate query ids in matrix")
        arr = np.array(scores, dtype=float)
        if arr.shape != (len(configs), len(queries)):
            raise FormatError(
                f"score array shape {arr.shape} does not match "
                f"({len(configs)}, {len(queries)})"
            )
        if not np.all(np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
            raise FormatError("matrix scores must be finite and within [0, 1]")
        arr.flags.writeable = False
        self._configs = configs
        self._queries = queries
        self._scores = arr
        self._cidx = {c: i for i, c in enumerate(configs)}
        self._qidx = {q: j for j, q in enumerate(queries)}
        self.metric_name = metric_name
        self.metadata = dict(metadata or {})

    @classmethod
    def from_rows(
        cls,
        rows: Mapping[ConfigurationId, Sequence[float]],
        queries: Sequence[QueryId],
        metric_name: str = "unknown",
    ) -> EffectivenessMatrix:
        return cls(list(rows), queries, [list(v) for v in rows.values()], metric_name)

    @property
    def configs(self) -> tuple[ConfigurationId, ...]:
        return self._configs

    @property
    def queries(self) -> tuple[QueryId, ...]:
        return self._queries

    @property
    def shape(self) -> tuple[int, int]:
        return self._scores.shape

    def has_config(self, c: ConfigurationId) -> bool:
        return c in self._cidx

    def has_query(self, q: QueryId) -> bool:
        return q in self._qidx

    def _config_index(self, c: ConfigurationId) -> int:
        try:
            return self._cidx[c]
        except KeyError:
            raise KeyError(f"configuration {c!r} not in matrix") from None

    def _query_index(self, q: QueryId) -> int:
        try:
            return self._qidx[q]
        except KeyError:
            raise KeyError(f"query {q!r} not in matrix") from None

    def cells(
        self, configs: Sequence[ConfigurationId], queries: Sequence[QueryId]
    ) -> np.ndarray:
        """Return the ``(len(configs), len(queries))`` block of scores (a copy)."""
        ri = [self._config_index(c) for c in configs]
        ci = [self._query_index(q) for q in queries]
        return self._scores[np.ix_(ri, ci)].copy()

    def score(self, c: ConfigurationId, q: QueryId) -> float:
        return float(self.cells([c], [q])[0, 0])

    def row(self, c: ConfigurationId, queries: Sequence[QueryId] | None = None) -> np.ndarray:
        return self.cells([c], self._queries if queries is None else queries)[0]

    def restrict(
        self,
        configs: Sequence[ConfigurationId] | None = None,
        queries: Sequence[QueryId] | None = None,
    ) -> EffectivenessMatrix:
        configs = self._configs if configs is None else tuple(configs)
        queries = self._queries if queries is None else tuple(queries)
        return EffectivenessMatrix(
            configs, queries, self.cells(configs, queries), self.metric_name, self.metadata
        )

    def cell_equal(self, other: EffectivenessMatrix) -> bool:
        return (
            self._configs == other.configs
            and self._queries == other.queries
            and bool(np.array_equal(self._scores, other.cells(other.configs, other.queries)))
        )

    def __repr__(self) -> str:
        return (
            f"EffectivenessMatrix({len(self._configs)} configs x {len(self._queries)} queries, "
            f"metric={self.metric_name!r})"
        )


def load_matrix(path: PathLike) -> EffectivenessMatrix:
    """Read a long-format ``config_id<TAB>query_id<TAB>score`` file.

    Row and column order follow first appearance in the file. Comment lines of
    the form ``# key=value`` are kept as metadata; ``metric`` sets the
    matrix's metric name.
    """
    metadata: dict[str, str] = {}
    configs: dict[str, None] = {}
    queries: dict[str, None] = {}
    cells: dict[tuple[str, str], float] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            stripped = line.strip()
            if not stripped:
                continue
            if stripped.startswith("#"):
                body = stripped[1:].strip()
                if "=" in body:
                    key, _, value = body.partition("=")
                    metadata[key.strip()] = value.strip()
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise FormatError(f"{path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}")
            c, q, s = (p.strip() for p in parts)
            try:
                value = float(s)
            except ValueError:
                raise FormatError(f"{path}:{lineno}: score {s!r} is not a number") from None
            if not (0.0 <= value <= 1.0):
                raise FormatError(f"{path}:{lineno}: score {s} outside [0, 1] for ({c}, {q})")
            if (c, q) in cells:
                raise FormatError(f"{path}:{lineno}: duplicate cell ({c}, {q})")
            cells[(c, q)] = value
            configs.setdefault(c)
            queries.setdefault(q)
    if not cells:
        raise FormatError(f"{path}: no cells")
    missing = [(c, q) for c in configs for q in queries if (c, q) not in cells]
    if missing:
        shown = ", ".join(f"({c}, {q})" for c, q in missing[:10])
        more = f" and {len(missing) - 10} more" if len(missing) > 10 else ""
        raise FormatError(f"{path}: {len(missing)} missing cell(s): {shown}{more}")
    scores = [[cells[(c, q)] for q in queries] for c in configs]
    metric = metadata.pop("metric", "unknown")
    return EffectivenessMatrix(list(configs), list(queries), scores, metric, metadata)


def save_matrix(matrix: EffectivenessMatrix, path: PathLike) -> None:
    block = matrix.cells(matrix.configs, matrix.queries)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# metric={matrix.metric_name}\n")
        for key in sorted(matrix.metadata):
            fh.write(f"# {key}={matrix.metadata[key]}\n")
        for i, c in enumerate(matrix.configs):
            for j, q in enumerate(matrix.queries):
                fh.write(f"{c}\t{q}\t{_format_float(block[i, j])}\n")


# ---------------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunEntry:
    doc_id: str
    rank: int
    score: float


@dataclass(frozen=True)
class RunList:
    """Ranked documents retrieved for one query by one system."""

    query_id: QueryId
    entries: tuple[RunEntry, ...]
    tag: str = "run"

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", tuple(self.entries))
        docs = [e.doc_id for e in self.entries]
        if len(set(docs)) != len(docs):
            raise FormatError(f"duplicate document in run for query {self.query_id}")
        for i, e in enumerate(self.entries, start=1):
            if e.rank != i:
                raise FormatError(f"run for query {self.query_id}: ranks must be 1..n in order")
            if i > 1 and e.score > self.entries[i - 2].score:
                raise FormatError(f"run for query {self.query_id}: scores increase with rank")

    @classmethod
    def from_scores(
        cls, query_id: QueryId, scored: Iterable[tuple[str, float]], tag: str = "run"
    ) -> RunList:
        """Build a canonically ordered run: score descending, doc_id ascending."""
        ordered = sorted(scored, key=lambda ds: (-ds[1], ds[0]))
        return cls(
            query_id,
            tuple(RunEntry(d, i, float(s)) for i, (d, s) in enumerate(ordered, start=1)),
            tag,
        )

    @property
    def doc_ids(self) -> tuple[str, ...]:
        return tuple(e.doc_id for e in self.entries)

    def __len__(self) -> int:
        return len(self.entries)


def load_runs(path: PathLike) -> list[RunList]:
    """Read a TREC run file (``qid Q0 docid rank score tag``).

    The rank column is advisory: entries are re-sorted by (score desc,
    doc_id asc) and re-numbered. A warning is logged for every query whose
    input ordering needed repair.
    """
    per_query: dict[str, list[tuple[int, int, str, float]]] = {}
    seen: dict[str, set[str]] = {}
    tags: dict[str, str] = {}
    for lineno, line in _iter_lines(path):
        parts = line.split()
        if len(parts) != 6:
            raise FormatError(f"{path}:{lineno}: expected 6 whitespace-separated fields, got {len(parts)}")
        qid, _, doc, rank_s, score_s, tag = parts
        try:
            rank = int(rank_s)
            score = float(score_s)
        except ValueError:
            raise FormatError(f"{path}:{lineno}: bad rank or score") from None
        if not math.isfinite(score):
            raise FormatError(f"{path}:{lineno}: non-finite score")
        docs = seen.setdefault(qid, set())
        if doc in docs:
            raise FormatError(f"{path}:{lineno}: duplicate document {doc!r} for query {qid!r}")
        docs.add(doc)
        per_query.setdefault(qid, []).append((rank, lineno, doc, score))
        tags.setdefault(qid, tag)

    runs = []
    for qid, rows in per_query.items():
        run = RunList.from_scores(qid, ((d, s) for _, _, d, s in rows), tags[qid])
        as_given = [d for _, _, d, _ in sorted(rows)]
        given_ranks = sorted(r for r, _, _, _ in rows)
        if as_given != list(run.doc_ids) or given_ranks != list(range(1, len(rows) + 1)):
            logger.warning("%s: query %s ranks inconsistent with scores; re-ranked", path, qid)
        runs.append(run)
    return runs


def save_runs(runs: Iterable[RunList], path: PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for run in runs:
            for e in run.entries:
                fh.write(f"{run.query_id} Q0 {e.doc_id} {e.rank} {_format_float(e.score)} {run.tag}\n")


# ---------------------------------------------------------------------------
# Qrels
# ---------------------------------------------------------------------------


class Qrels(Mapping):
    """Graded relevance judgments keyed by ``(query_id, doc_id)``.

    A document is relevant iff its grade is > 0; negative grades are kept as-is.
    """

    def __init__(self, judgments: Mapping[tuple[QueryId, str], int]) -> None:
        self._data: dict[tuple[str, str], int] = {}
        self._by_query: dict[str, dict[str, int]] = {}
        for (q, d), g in judgments.items():
            self._data[(q, d)] = int(g)
            self._by_query.setdefault(q, {})[d] = int(g)

    def __getitem__(self, key: tuple[QueryId, str]) -> int:
        return self._data[key]

    def __iter__(self):
        return iter(self._data)

    def __len__(self) -> int:
        return len(self._data)

    @property
    def queries(self) -> tuple[QueryId, ...]:
        return tuple(self._by_query)

    def for_query(self, q: QueryId) -> Mapping[str, int]:
        return self._by_query.get(q, {})

    def n_relevant(self, q: QueryId) -> int:
        return sum(1 for g in self.for_query(q).values() if g > 0)


def load_qrels(path: PathLike) -> Qrels:
    judgments: dict[tuple[str, str], int] = {}
    for lineno, line in _iter_lines(path):
        parts = line.split()
        if len(parts) != 4:
            raise FormatError(f"{path}:{lineno}: expected 4 fields (qid iter docid grade), got {len(parts)}")
        qid, _, doc, grade_s = parts
        try:
            grade = int(grade_s)
        except ValueError:
            raise FormatError(f"{path}:{lineno}: grade {grade_s!r} is not an integer") from None
        if (qid, doc) in judgments:
            raise FormatError(f"{path}:{lineno}: duplicate judgment ({qid}, {doc})")
        judgments[(qid, doc)] = grade
    return Qrels(judgments)


def save_qrels(qrels: Qrels, path: PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for (q, d), g in qrels.items():
            fh.write(f"{q} 0 {d} {g}\n")


# ---------------------------------------------------------------------------
# Features
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FeatureRecord:
    query_id: QueryId
    doc_id: str
    feature_name: str
    value: float


def load_features(path: PathLike) -> list[FeatureRecord]:
    records: list[FeatureRecord] = []
    seen: set[tuple[str, str, str]] = set()
    for lineno, line in _iter_lines(path):
        parts = line.split("\t")
        if len(parts) != 4:
            raise FormatError(f"{path}:{lineno}: expected 4 tab-separated fields, got {len(parts)}")
        q, d, name, v = (p.strip() for p in parts)
        try:
            value = float(v)
        except ValueError:
            raise FormatError(f"{path}:{lineno}: feature value {v!r} is not a number") from None
        if not math.isfinite(value):
            raise FormatError(f"{path}:{lineno}: non-finite feature value")
        key = (q, d, name)
        if key in seen:
            raise FormatError(f"{path}:{lineno}: duplicate feature record {key}")
        seen.add(key)
        records.append(FeatureRecord(q, d, name, value))
    return records


def save_features(records: Iterable[FeatureRecord], path: PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(f"{r.query_id}\t{r.doc_id}\t{r.feature_name}\t{_format_float(r.value)}\n")


@dataclass(frozen=True, eq=False)
class QueryFeatureVector:
    """Aggregated, fixed-schema feature representation of one query."""

    query_id: QueryId
    names: tuple[str, ...]
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        names = tuple(self.names)
        values = np.array(self.values, dtype=float).reshape(-1)
        if len(names) != values.size:
            raise FormatError(f"query {self.query_id}: {len(names)} names but {values.size} values")
        if len(set(names)) != len(names):
            raise FormatError(f"query {self.query_id}: duplicate feature names")
        if not np.all(np.isfinite(values)):
            raise FormatError(f"query {self.query_id}: feature values must be finite")
        values.flags.writeable = False
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "values", values)

    @property
    def dimension(self) -> int:
        return len(self.names)
