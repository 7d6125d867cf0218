from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from mamamia.dp import (Budget, NoisyMeasurement, exponential_select, laplace_counts,
                        laplace_noise, mi_sensitivity, spend)
from mamamia.errors import BudgetError, ParameterError
from mamamia.stats import FocalPoint, ProbabilityTable


def test_laplace_infinite_epsilon_is_exact(rng):
    raw = np.array([[3.0, 0.0], [1.0, 7.0]])
    m = laplace_counts(raw, math.inf, 1.0, rng, fp=FocalPoint.marginal(0, 1))
    assert np.array_equal(m.counts, raw)


def test_laplace_variance(rng):
    b = 2.5
    z = laplace_noise(100_000, 1.0, b, rng)
    assert abs(z.var() / (2 * b * b) - 1) < 0.05


@pytest.mark.parametrize("scale", [0.01, 1.0, 30.0])
def test_laplace_unbiased(scale):
    z = laplace_noise(1_000_000, 1.0, scale, np.random.default_rng(int(scale * 100)))
    sigma = math.sqrt(2) * scale / math.sqrt(z.size)
    assert abs(z.mean()) < 4 * sigma


def test_laplace_determinism_and_errors():
    a = laplace_noise(10, 0.5, 1.0, np.random.default_rng(9))
    b = laplace_noise(10, 0.5, 1.0, np.random.default_rng(9))
    assert np.array_equal(a, b)
    for eps in (0.0, -1.0):
        with pytest.raises(ParameterError):
            laplace_noise(3, eps, 1.0, np.random.default_rng(0))


def test_measurement_keeps_pre_clip_counts(rng):
    fp = FocalPoint.marginal(0)
    m = laplace_counts(ProbabilityTable(fp, [0.0, 0.0, 50.0]), 0.05, 1.0, rng)
    assert m.counts.min() < 0
    assert m.clipped().min() == 0
    assert m.distribution().sum() == pytest.approx(1.0)
    cond = NoisyMeasurement(FocalPoint.conditional(1, [0]), np.array([[-1.0, -2.0], [1.0, 3.0]]),
                            1.0, 1.0)
    assert cond.distribution().tolist() == [[0.5, 0.5], [0.25, 0.75]]


def test_exponential_uniform_on_equal_scores(rng):
    k, n = 4, 10_000
    draws = np.bincount([exponential_select([0.3] * k, 1.0, 1.0, rng) for _ in range(n)],
                        minlength=k)
    sigma = math.sqrt(n * (1 / k) * (1 - 1 / k))
    assert np.all(np.abs(draws - n / k) < 3 * sigma)


def test_exponential_two_candidate_closed_form(rng):
    n = 100_000
    p = math.e / (math.e + 1)
    hits = sum(exponential_select([1.0, 0.0], 2.0, 1.0, rng) == 0 for _ in range(n))
    assert abs(hits - n * p) < 3 * math.sqrt(n * p * (1 - p))


def test_exponential_large_epsilon_and_ties(rng):
    assert all(exponential_select([0.1, 0.9, 0.2], 1e6, 1.0, rng) == 1 for _ in range(1000))
    # exact ties keep equal mass at any finite epsilon; the lowest index wins only in the limit
    assert all(exponential_select([0.5, 0.9, 0.9], math.inf, 1.0, rng) == 1 for _ in range(1000))
    tied = {exponential_select([0.5, 0.9, 0.9], 1e6, 1.0, rng) for _ in range(200)}
    assert tied == {1, 2}


def test_exponential_chi_square():
    rng = np.random.default_rng(77)
    scores = np.array([0.0, 0.5, 1.0, 1.5, 0.2])
    eps, sens, n = 1.3, 0.7, 100_000
    w = np.exp(eps * scores / (2 * sens))
    expected = n * w / w.sum()
    obs = np.bincount([exponential_select(scores, eps, sens, rng) for _ in range(n)],
                      minlength=scores.size)
    assert chisquare(obs, expected).pvalue > 0.001


def test_exponential_errors(rng):
    with pytest.raises(ParameterError):
        exponential_select([], 1.0, 1.0, rng)
    with pytest.raises(ParameterError):
        exponential_select([1.0], 0.0, 1.0, rng)
    with pytest.raises(ParameterError):
        exponential_select([1.0], 1.0, 0.0, rng)


def test_budget_examples():
    b = Budget(10.0)
    assert spend(b, "a", 0.5) == 5.0
    assert b.remaining == 0.5
    with pytest.raises(BudgetError):
        b.spend("b", 0.6)
    b.spend("c", 0.5)
    with pytest.raises(BudgetError):
        b.spend("d", 1e-9)
    with pytest.raises(ParameterError):
        Budget(0.0)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(1e-6, 0.6), max_size=30))
def test_budget_never_overspent(fractions):
    b = Budget(3.0)
    history = []
    for f in fractions:
        try:
            b.spend("x", f)
        except BudgetError:
            pass
        assert b.ledger[: len(history)] == history
        history = list(b.ledger)
        assert b.spent <= 1.0 + 1e-12


def test_even_split_is_exact():
    b = Budget(1.0)
    for _ in range(29):
        b.spend("m", 0.5 / 29)
    for _ in range(29):
        b.spend("m", 0.5 / 29)
    assert b.spent == pytest.approx(1.0, abs=1e-12)


def test_mi_sensitivity():
    assert mi_sensitivity(1) == 1.0 and mi_sensitivity(2) == 1.0
    assert mi_sensitivity(1000) == pytest.approx(math.log(1000) / 1000)
