import math

import numpy as np
import pytest
from scipy import stats as scipy_stats

from sqp.errors import ContractError
from sqp.stats import bonferroni, paired_t_test


def test_known_differences():
    t, p = paired_t_test([1, 2, 3, 4, 5], [0, 0, 0, 0, 0])
    assert t == pytest.approx(4.242641, abs=1e-6)
    assert p == pytest.approx(0.0132356, abs=1e-6)


def test_sign_follows_order():
    t, p = paired_t_test([0] * 5, [1, 2, 3, 4, 5])
    assert t < 0 and p == pytest.approx(0.0132356, abs=1e-6)


def test_identical():
    assert paired_t_test([0.1, 0.5, 0.9], [0.1, 0.5, 0.9]) == (0.0, 1.0)


def test_constant_nonzero_difference():
    t, p = paired_t_test([1.0, 2.0], [0.5, 1.5])
    assert t == math.inf and p == 0.0


def test_agrees_with_scipy():
    rng = np.random.default_rng(3)
    for n in (2, 5, 30, 200):
        a, b = rng.random(n), rng.random(n)
        t, p = paired_t_test(a, b)
        ref = scipy_stats.ttest_rel(a, b)
        assert t == pytest.approx(ref.statistic, rel=1e-10)
        assert p == pytest.approx(ref.pvalue, rel=1e-8, abs=1e-14)


def test_errors():
    with pytest.raises(ContractError):
        paired_t_test([1], [2])
    with pytest.raises(ContractError):
        paired_t_test([1, 2], [1, 2, 3])


def test_bonferroni():
    assert bonferroni(0.01, 6) == pytest.approx(0.06)
    assert bonferroni(0.4, 6) == 1.0
    with pytest.raises(ContractError):
        bonferroni(0.1, 0)
