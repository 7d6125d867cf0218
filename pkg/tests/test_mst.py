from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make
from mamamia.data import Schema
from mamamia.dp import Budget, laplace_counts
from mamamia.errors import DomainError, ParameterError
from mamamia.generators import GeneratorConfig, fit, sample
from mamamia.generators.mst import (TreeModel, allocate, choose_root, mst_measure, mst_sample,
                                    mst_select)
from mamamia.stats import FocalPoint, raw_counts


def oracle_mi(x, y):
    n = x.size
    joint = np.zeros((x.max() + 1, y.max() + 1))
    np.add.at(joint, (x, y), 1.0)
    p = joint / n
    pa, pb = p.sum(1), p.sum(0)
    nz = p > 0
    return float(np.sum(p[nz] * np.log(p[nz] / np.outer(pa, pb)[nz])))


def oracle_mi_matrix(d):
    l = d.n_features
    m = np.zeros((l, l))
    for i, j in itertools.combinations(range(l), 2):
        m[i, j] = m[j, i] = oracle_mi(d.rows[:, i], d.rows[:, j])
    return m


def prim(w):
    l = w.shape[0]
    inside, edges = {0}, set()
    while len(inside) < l:
        i, j = max(((a, b) for a in inside for b in range(l) if b not in inside),
                   key=lambda e: w[e])
        edges.add((min(i, j), max(i, j)))
        inside.add(j)
    return edges


def is_spanning_tree(edges, l):
    if len(edges) != l - 1:
        return False
    adj = {i: set() for i in range(l)}
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    seen, stack = {0}, [0]
    while stack:
        for v in adj[stack.pop()]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return len(seen) == l


def select(d, eps, seed=0, manual=None):
    return mst_select(d, Budget(eps), 0.5, np.random.default_rng(seed), manual)


def tv(p, q):
    return 0.5 * float(np.abs(p - q).sum())


# ---------------------------------------------------------------------------
# selection


def test_exhaustive_oracle_small(rng):
    rows = rng.integers(0, 3, (400, 5))
    rows[:, 1] = np.where(rng.random(400) < 0.8, rows[:, 0], rows[:, 1])
    rows[:, 3] = np.where(rng.random(400) < 0.6, rows[:, 1], rows[:, 3])
    rows[:, 4] = np.where(rng.random(400) < 0.4, rows[:, 2], rows[:, 4])
    d = make(rows, sizes=[3] * 5)
    w = oracle_mi_matrix(d)
    pairs = list(itertools.combinations(range(5), 2))
    best = max((t for t in itertools.combinations(pairs, 4) if is_spanning_tree(t, 5)),
               key=lambda t: sum(w[e] for e in t))
    assert set(select(d, math.inf)) == set(best)


def test_infinite_epsilon_recovers_mst(population):
    w = oracle_mi_matrix(population)
    assert set(select(population, math.inf)) == prim(w)


def test_population_tree_is_recovered(population):
    from mamamia.data import default_population_config
    truth = {(min(p, c), max(p, c)) for p, c, _ in default_population_config(seed=0).edges}
    assert set(select(population, math.inf)) == truth


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 7), st.integers(1, 200), st.sampled_from([0.01, 1.0, 100.0, math.inf]),
       st.integers(0, 2**32))
def test_always_a_spanning_tree(l, n, eps, seed):
    rng = np.random.default_rng(seed)
    sizes = rng.integers(1, 5, l)
    d = make(rng.integers(0, sizes, (n, l)), sizes=sizes)
    edges = select(d, eps, seed)
    assert len(set(edges)) == l - 1 and is_spanning_tree(edges, l)


def test_manual_edges(small_pop):
    edges = select(small_pop, 10.0, manual=[(3, 1), (4, 5)])
    assert edges[:2] == [(1, 3), (4, 5)] and is_spanning_tree(edges, 15)
    with pytest.raises(ParameterError):
        select(small_pop, 10.0, manual=[(0, 1), (1, 2), (0, 2)])
    with pytest.raises(DomainError):
        select(make([[0], [1]]), 1.0)


def test_budget_split(small_pop):
    out = fit(GeneratorConfig("mst", 2.0, seed=1), small_pop.take(np.arange(500)))
    summary = {}
    for label, f in out.ledger:
        summary[label] = summary.get(label, 0.0) + f
    assert summary == pytest.approx({"select:mst": 0.5, "measure:mst": 0.5}, abs=1e-12)
    assert len(out.focal_points) == 14
    assert len([1 for label, _ in out.ledger if label == "measure:mst"]) == 29


def _mean_jaccard(sets):
    vals = [len(a & b) / len(a | b) for a, b in itertools.combinations(sets, 2)]
    return float(np.mean(vals))


def test_stability_increases_with_epsilon(small_pop):
    train = small_pop.take(np.arange(1000))
    means = []
    for eps in (0.1, 10.0, 1000.0):
        runs = [set(select(train, eps, seed=s)) for s in range(50)]
        means.append(_mean_jaccard(runs))
    assert means[0] <= means[1] <= means[2]
    assert means[2] > means[0]


# ---------------------------------------------------------------------------
# measurement and sampling


def test_measure_exact_and_finite(small_pop):
    edges = select(small_pop, math.inf)
    b = Budget(math.inf)
    one, two = mst_measure(small_pop, edges, b, 0.5, np.random.default_rng(0))
    for i, m in enumerate(one):
        assert np.array_equal(m.counts, raw_counts(small_pop, (i,)))
    for e, m in two.items():
        assert np.array_equal(m.counts, raw_counts(small_pop, e))
    one, two = mst_measure(small_pop, edges, Budget(0.01), 0.5, np.random.default_rng(0))
    cells = np.concatenate([m.counts.ravel() for m in one + list(two.values())])
    assert np.all(np.isfinite(cells)) and cells.min() < 0


def _model(train, eps, seed=0):
    out = fit(GeneratorConfig("mst", eps, seed=seed), train)
    return out


@pytest.mark.parametrize("method", ["round", "iid"])
def test_high_epsilon_preserves_edge_marginals(population, method):
    train = population.take(np.arange(10_000))
    model = _model(train, 1e6).model
    synth = mst_sample(model, 10_000, np.random.default_rng(1), method)
    n = len(train)
    for e in model.edges:
        assert tv(raw_counts(synth, e) / n, raw_counts(train, e) / n) < 0.05


@pytest.mark.parametrize("method", ["round", "iid"])
def test_root_distribution_preserved(small_pop, method):
    model = _model(small_pop.take(np.arange(1000)), 1.0).model
    synth = mst_sample(model, 100_000, np.random.default_rng(2), method)
    root = model.root
    p = np.bincount(synth.rows[:, root], minlength=small_pop.schema.sizes[root]) / 100_000
    assert tv(p, model.one_way[root].distribution()) < 0.02


def test_root_choice():
    assert choose_root(Schema.from_domains([3, 5, 5, 2])) == 1


def test_single_feature_model_samples_iid():
    schema = Schema.from_domains([3])
    m = laplace_counts(np.array([10.0, 30.0, -5.0]), math.inf, 1.0, np.random.default_rng(0),
                       fp=FocalPoint.marginal(0))
    model = TreeModel(schema, [], [m], {}, 0)
    d = mst_sample(model, 40_000, np.random.default_rng(3), "iid")
    p = np.bincount(d.rows[:, 0], minlength=3) / len(d)
    assert tv(p, np.array([0.25, 0.75, 0.0])) < 0.01


def test_allocate_rounds_counts(rng):
    p = np.array([0.5, 0.3, 0.2, 0.0])
    for m in (0, 1, 7, 100):
        c = np.bincount(allocate(p, m, rng), minlength=4)
        assert c.sum() == m and np.all(np.abs(c - p * m) < 1) and c[3] == 0


def test_sampling_determinism_and_empty(small_pop):
    out = _model(small_pop.take(np.arange(500)), 5.0, seed=4)
    assert sample(out) == sample(out)
    assert len(sample(out, 0)) == 0
    with pytest.raises(ParameterError):
        mst_sample(out.model, 5, np.random.default_rng(0), "bogus")
