"""Greedy risk-sensitive pre-selection of a small configuration pool.

A candidate configuration is scored against the per-query *envelope* of the
already selected set, i.e. the best effectiveness any selected configuration
reaches on that query. Two objectives are supported:

``E``  risk/reward are the mean per-query effectiveness lost/gained
       relative to the envelope.
``N``  risk/reward are the fraction of queries strictly degraded/improved
       relative to the envelope (ties count for neither).

In both cases ``gain = reward - (1 + beta) * risk`` and the greedy step picks
the highest gain, breaking exact ties by the lexicographically smallest id.
"""

from __future__ import annotations

import json
from collections.abc import Sequence
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .data import ConfigurationId, EffectivenessMatrix, PathLike, QueryId
from .errors import ContractError, FormatError

OBJECTIVES = ("E", "N")


def _normalize_objective(objective: str) -> str:
    obj = str(objective).upper()
    if obj not in OBJECTIVES:
        raise ContractError(f"objective must be 'E' or 'N', got {objective!r}")
    return obj


@dataclass(frozen=True)
class RiskParams:
    objective: str = "E"
    beta: float = 0.0
    k: int = 20
    baseline_id: ConfigurationId | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "objective", _normalize_objective(self.objective))
        if not self.beta >= 0.0:
            raise ContractError(f"beta must be >= 0, got {self.beta}")
        if self.k < 1:
            raise ContractError(f"K must be >= 1, got {self.k}")


@dataclass(frozen=True)
class GainBreakdown:
    config_id: ConfigurationId
    risk: float
    reward: float
    gain: float


@dataclass(frozen=True)
class SelectionStep:
    config_id: ConfigurationId
    risk: float
    reward: float
    gain: float
    envelope_mean_after: float


@dataclass(frozen=True)
class SelectedPool:
    """Ordered outcome of greedy selection, with a per-step gain audit."""

    steps: tuple[SelectionStep, ...]
    baseline_id: ConfigurationId
    objective: str
    beta: float
    metric_name: str = "unknown"

    def __post_init__(self) -> None:
        object.__setattr__(self, "steps", tuple(self.steps))
        object.__setattr__(self, "objective", _normalize_objective(self.objective))
        ids = self.config_ids
        if len(set(ids)) != len(ids):
            raise ContractError("selected pool contains duplicate configuration ids")
        means = [s.envelope_mean_after for s in self.steps]
        if any(b < a for a, b in zip(means, means[1:])):
            raise ContractError("envelope mean decreased along the selection")

    @property
    def config_ids(self) -> tuple[ConfigurationId, ...]:
        return tuple(s.config_id for s in self.steps)

    def __len__(self) -> int:
        return len(self.steps)

    def prefix(self, k: int) -> SelectedPool:
        return SelectedPool(self.steps[:k], self.baseline_id, self.objective, self.beta, self.metric_name)

    def to_dict(self) -> dict:
        return {
            "objective": self.objective,
            "beta": self.beta,
            "baseline": self.baseline_id,
            "k": len(self.steps),
            "metric": self.metric_name,
            "steps": [asdict(s) for s in self.steps],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> SelectedPool:
        try:
            steps = tuple(
                SelectionStep(
                    str(s["config_id"]), float(s["risk"]), float(s["reward"]),
                    float(s["gain"]), float(s["envelope_mean_after"]),
                )
                for s in doc["steps"]
            )
            return cls(steps, str(doc["baseline"]), doc["objective"], float(doc["beta"]),
                       str(doc.get("metric", "unknown")))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"malformed pool document: {exc}") from None


def save_pool(pool: SelectedPool, path: PathLike) -> None:
    Path(path).write_text(json.dumps(pool.to_dict(), indent=2) + "\n", encoding="utf-8")


def load_pool(path: PathLike) -> SelectedPool:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from None
    return SelectedPool.from_dict(doc)


# ---------------------------------------------------------------------------
# risk / reward / gain
# ---------------------------------------------------------------------------


def _envelope_vector(
    S: Sequence[ConfigurationId], M: EffectivenessMatrix, Q: Sequence[QueryId]
) -> np.ndarray:
    if len(S) == 0:
        raise ContractError("envelope of an empty configuration set is undefined")
    return M.cells(list(S), list(Q)).max(axis=0)


def envelope(S: Sequence[ConfigurationId], q: QueryId, M: EffectivenessMatrix) -> float:
    """Best effectiveness reached on query ``q`` by any configuration in ``S``."""
    return float(_envelope_vector(S, M, [q])[0])


def _risk_reward(
    candidates: Sequence[ConfigurationId],
    env: np.ndarray,
    M: EffectivenessMatrix,
    Q: Sequence[QueryId],
    objective: str,
) -> tuple[np.ndarray, np.ndarray]:
    if len(Q) == 0:
        raise ContractError("query set is empty")
    # positive where the envelope beats the candidate
    shortfall = env[None, :] - M.cells(list(candidates), list(Q))
    n = len(Q)
    if objective == "E":
        risk = np.maximum(shortfall, 0.0).sum(axis=1) / n
        reward = np.maximum(-shortfall, 0.0).sum(axis=1) / n
    else:
        risk = (shortfall > 0).sum(axis=1) / n
        reward = (shortfall < 0).sum(axis=1) / n
    return risk, reward


def _single(c, S, M, Q, objective) -> tuple[float, float]:
    risk, reward = _risk_reward([c], _envelope_vector(S, M, Q), M, Q, objective)
    return float(risk[0]), float(reward[0])


def e_risk(c: ConfigurationId, S: Sequence[ConfigurationId], M: EffectivenessMatrix,
           Q: Sequence[QueryId]) -> float:
    return _single(c, S, M, Q, "E")[0]


def e_reward(c: ConfigurationId, S: Sequence[ConfigurationId], M: EffectivenessMatrix,
             Q: Sequence[QueryId]) -> float:
    return _single(c, S, M, Q, "E")[1]


def n_risk(c: ConfigurationId, S: Sequence[ConfigurationId], M: EffectivenessMatrix,
           Q: Sequence[QueryId]) -> float:
    return _single(c, S, M, Q, "N")[0]


def n_reward(c: ConfigurationId, S: Sequence[ConfigurationId], M: EffectivenessMatrix,
             Q: Sequence[QueryId]) -> float:
    return _single(c, S, M, Q, "N")[1]


def _breakdowns(
    candidates: Sequence[ConfigurationId],
    S: Sequence[ConfigurationId],
    M: EffectivenessMatrix,
    Q: Sequence[QueryId],
    objective: str,
    beta: float,
) -> list[GainBreakdown]:
    risk, reward = _risk_reward(candidates, _envelope_vector(S, M, Q), M, Q, objective)
    gains = reward - (1.0 + beta) * risk
    return [
        GainBreakdown(c, float(r), float(w), float(g))
        for c, r, w, g in zip(candidates, risk, reward, gains)
    ]


def gain(
    c: ConfigurationId,
    S: Sequence[ConfigurationId],
    M: EffectivenessMatrix,
    Q: Sequence[QueryId],
    params: RiskParams,
) -> GainBreakdown:
    return _breakdowns([c], S, M, Q, params.objective, params.beta)[0]


def _argmax(breakdowns: list[GainBreakdown]) -> GainBreakdown:
    best = None
    for b in sorted(breakdowns, key=lambda b: b.config_id):
        if best is None or b.gain > best.gain:
            best = b
    return best


def get_best_rsc(
    Q: Sequence[QueryId],
    pool: Sequence[ConfigurationId],
    M: EffectivenessMatrix,
    params: RiskParams,
    S: Sequence[ConfigurationId],
) -> ConfigurationId:
    """Pool member with the highest gain against ``S`` (smallest id on ties)."""
    if len(pool) == 0:
        raise ContractError("candidate pool is empty")
    return _argmax(_breakdowns(list(pool), S, M, Q, params.objective, params.beta)).config_id


def select_configurations(
    Q: Sequence[QueryId],
    pool: Sequence[ConfigurationId],
    M: EffectivenessMatrix,
    params: RiskParams,
) -> SelectedPool:
    """Greedily select ``params.k`` configurations from ``pool``.

    The first pick is scored against ``{baseline}``; after that the reference
    set is exactly the configurations picked so far. The baseline itself is
    only selected if it is a pool member and wins on gain.
    """
    Q = list(Q)
    remaining = list(dict.fromkeys(pool))
    if len(remaining) != len(pool):
        raise ContractError("candidate pool contains duplicate ids")
    if params.baseline_id is None:
        raise ContractError("a baseline configuration is required")
    if not M.has_config(params.baseline_id):
        raise ContractError(f"baseline {params.baseline_id!r} is not in the matrix")
    if params.k > len(remaining):
        raise ContractError(f"K={params.k} exceeds pool size {len(remaining)}")
    if not Q:
        raise ContractError("query set is empty")
    missing = [c for c in remaining if not M.has_config(c)]
    if missing:
        raise ContractError(f"pool members missing from matrix: {', '.join(missing)}")

    reference: list[ConfigurationId] = [params.baseline_id]
    selected: list[ConfigurationId] = []
    steps: list[SelectionStep] = []
    while len(selected) < params.k:
        best = _argmax(_breakdowns(remaining, reference, M, Q, params.objective, params.beta))
        remaining.remove(best.config_id)
        selected.append(best.config_id)
        reference = selected
        env_mean = float(np.mean(_envelope_vector(selected, M, Q)))
        steps.append(SelectionStep(best.config_id, best.risk, best.reward, best.gain, env_mean))
    return SelectedPool(tuple(steps), params.baseline_id, params.objective, params.beta, M.metric_name)
