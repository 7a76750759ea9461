"""Paired significance testing."""

from __future__ import annotations

import math
from collections.abc import Sequence

import numpy as np
from scipy.special import betainc

from .errors import ContractError


def paired_t_test(scores_a: Sequence[float], scores_b: Sequence[float]) -> tuple[float, float]:
    """Two-tailed paired t-test on per-query differences ``a - b``.

    Returns ``(t, p)``. When the differences have zero variance the statistic
    is degenerate: a zero mean gives ``(0.0, 1.0)``, any other mean gives
    ``(+/-inf, 0.0)``.
    """
    a = np.asarray(scores_a, dtype=float)
    b = np.asarray(scores_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ContractError("paired samples must be 1-D and of equal length")
    n = a.size
    if n < 2:
        raise ContractError("paired t-test needs at least 2 pairs")
    d = a - b
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        if mean == 0.0:
            return 0.0, 1.0
        return math.copysign(math.inf, mean), 0.0
    t = mean / (sd / math.sqrt(n))
    df = n - 1
    # two-tailed tail mass of Student's t via the regularized incomplete beta
    p = float(betainc(df / 2.0, 0.5, df / (df + t * t)))
    return t, min(1.0, p)


def bonferroni(p: float, m: int) -> float:
    if m < 1:
        raise ContractError("number of comparisons must be >= 1")
    return min(1.0, p * m)
