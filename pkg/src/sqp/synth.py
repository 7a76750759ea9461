"""Synthetic effectiveness landscapes with planted query clusters.

Each query cluster has one *specialist* configuration that scores
``base + gap`` on that cluster's queries and ``base`` elsewhere. One
*generalist* scores ``base + gap / 2`` everywhere, and every other
configuration scores ``base``. Cells get Gaussian noise (clipped to [0, 1]).
Query features are the cluster's one-hot vector plus Gaussian jitter with
the same standard deviation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import (
    ConfigurationDescriptor,
    EffectivenessMatrix,
    FeatureRecord,
    QueryFeatureVector,
)
from .errors import ContractError

RETRIEVAL_MODELS = (
    "BB2", "BM25", "DFRee", "DirichletLM", "HiemstraLM", "InB2", "InL2", "JsKLs", "PL2",
    "DFI0", "XSqrAM", "DLH13", "DLH", "DPH", "IFB2", "TFIDF", "InexpB2", "DFRBM25", "LGD",
    "LemurTFIDF", "InexpC2",
)
QE_MODELS = ("KL", "Bo1", "Bo2", "KLCorrect", "Information", "KLComplete")
QE_DOCS = (2, 5, 10, 20, 50, 100)
QE_TERMS = (2, 5, 10, 15, 20)
QE_MIN_DOCS = (2, 5, 10, 20, 50)


@dataclass(frozen=True)
class SynthSpec:
    n_clusters: int = 4
    configs_per_cluster: int = 3
    queries_per_cluster: int = 10
    base_effectiveness: float = 0.4
    planted_gap: float = 0.3
    noise_sd: float = 0.02
    feature_dim: int | None = None
    seed: int = 1

    def __post_init__(self) -> None:
        for name in ("n_clusters", "configs_per_cluster", "queries_per_cluster"):
            if getattr(self, name) < 1:
                raise ContractError(f"{name} must be >= 1")
        if self.base_effectiveness < 0 or self.planted_gap < 0 or self.noise_sd < 0:
            raise ContractError("base, gap and noise must be non-negative")
        if self.base_effectiveness + self.planted_gap + 3 * self.noise_sd > 1.0:
            raise ContractError("base + gap + 3*noise_sd must not exceed 1")
        if self.feature_dim is not None and self.feature_dim < self.n_clusters:
            raise ContractError("feature_dim must be at least n_clusters")

    @property
    def dim(self) -> int:
        return self.n_clusters if self.feature_dim is None else self.feature_dim


@dataclass(frozen=True)
class SynthData:
    matrix: EffectivenessMatrix
    features: dict[str, QueryFeatureVector]
    descriptors: tuple[ConfigurationDescriptor, ...]
    query_cluster: dict[str, int]
    roles: dict[str, str]


def _descriptor(i: int, config_id: str) -> ConfigurationDescriptor:
    model = RETRIEVAL_MODELS[i % len(RETRIEVAL_MODELS)]
    if i % 2 == 0:
        return ConfigurationDescriptor(config_id, model)
    j = i // 2
    return ConfigurationDescriptor(
        config_id, model, QE_MODELS[j % len(QE_MODELS)],
        QE_DOCS[j % len(QE_DOCS)], QE_TERMS[j % len(QE_TERMS)], QE_MIN_DOCS[j % len(QE_MIN_DOCS)],
    )


def synth_generate(spec: SynthSpec) -> SynthData:
    rng = np.random.default_rng(spec.seed)
    k, cpc, qpc = spec.n_clusters, spec.configs_per_cluster, spec.queries_per_cluster
    n_cfg = k * cpc + (1 if cpc == 1 else 0)
    configs = [f"cfg{i:03d}" for i in range(n_cfg)]
    queries = [f"q{i:03d}" for i in range(k * qpc)]
    cluster_of = np.repeat(np.arange(k), qpc)

    roles = dict.fromkeys(configs, "filler")
    mean = np.full((n_cfg, len(queries)), spec.base_effectiveness)
    for c in range(k):
        roles[configs[c * cpc]] = f"specialist:{c}"
        mean[c * cpc, cluster_of == c] += spec.planted_gap
    generalist = 1 if cpc > 1 else n_cfg - 1
    roles[configs[generalist]] = "generalist"
    mean[generalist, :] += spec.planted_gap / 2

    scores = np.clip(mean + rng.normal(0.0, spec.noise_sd, size=mean.shape), 0.0, 1.0)
    matrix = EffectivenessMatrix(configs, queries, scores, "synthetic", {"synth_seed": str(spec.seed)})

    names = tuple(f"f{j:02d}" for j in range(spec.dim))
    jitter = rng.normal(0.0, spec.noise_sd, size=(len(queries), spec.dim))
    features = {}
    for i, q in enumerate(queries):
        v = jitter[i].copy()
        v[cluster_of[i]] += 1.0
        features[q] = QueryFeatureVector(q, names, v)

    descriptors = tuple(_descriptor(i, c) for i, c in enumerate(configs))
    return SynthData(
        matrix, features, descriptors,
        {q: int(c) for q, c in zip(queries, cluster_of)}, roles,
    )


def feature_records(features: dict[str, QueryFeatureVector], doc_id: str = "d0") -> list[FeatureRecord]:
    """Flatten vectors into single-document feature records for file output."""
    return [
        FeatureRecord(q, doc_id, name, float(x))
        for q, v in features.items()
        for name, x in zip(v.names, v.values)
    ]
