from __future__ import annotations

import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mamamia import kernels
from mamamia.generators import GsdParams
from mamamia.generators.gsd import Evolver, OneHotMap, candidate_queries, query_counts

needs_numba = pytest.mark.skipif("numba" not in kernels.BACKENDS, reason="numba not installed")


def codes(draw_n, rng, dx, dy):
    return rng.integers(0, dx, draw_n), rng.integers(0, dy, draw_n)


def test_log_table():
    t = kernels.log_table(4)
    assert t[0] == 0.0 and t[4] == pytest.approx(np.log(4))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 500), st.integers(1, 6), st.integers(1, 40), st.integers(0, 2**32))
def test_joint_counts_matches_bincount(n, dx, dy, seed):
    rng = np.random.default_rng(seed)
    x, y = codes(n, rng, dx, dy)
    full = np.zeros((dx, dy), np.int64)
    np.add.at(full, (x, y), 1)
    expected = full[:, np.unique(y)]
    for impl in kernels.BACKENDS.values():
        assert np.array_equal(impl["joint_counts"](x, y, dx, dy), expected)


@needs_numba
@settings(max_examples=50, deadline=None)
@given(st.integers(1, 500), st.integers(1, 6), st.integers(1, 40), st.integers(0, 2**32))
def test_mi_backends_bit_identical(n, dx, dy, seed):
    rng = np.random.default_rng(seed)
    x, y = codes(n, rng, dx, dy)
    lt = kernels.log_table(n)
    a = kernels.BACKENDS["numpy"]["mi_codes"](x, y, dx, dy, lt)
    b = kernels.BACKENDS["numba"]["mi_codes"](x, y, dx, dy, lt)
    assert a == b


@needs_numba
def test_sample_rows_backends_bit_identical():
    rng = np.random.default_rng(5)
    p = rng.random((7, 5))
    cdf = np.cumsum(p / p.sum(axis=1, keepdims=True), axis=1)
    cdf[:, -1] = 1.0
    c = rng.integers(0, 7, 10_000)
    u = rng.random(10_000)
    a = kernels.BACKENDS["numpy"]["sample_rows"](cdf, c, u)
    b = kernels.BACKENDS["numba"]["sample_rows"](cdf, c, u)
    assert np.array_equal(a, b)
    assert a.min() >= 0 and a.max() < 5


def _evolve(backend, seed=3, generations=600):
    sizes = (3, 4, 2, 5)
    params = GsdParams(population=12, elites=3, generations=generations, patience=10_000,
                       queries=20, rounds=1, chunk=64)
    onehot = OneHotMap(sizes)
    cand = candidate_queries(onehot, 2)
    rng = np.random.default_rng(seed)
    truth = np.column_stack([rng.integers(0, s, 40) for s in sizes])
    q = cand[rng.choice(len(cand), 20, replace=False)]
    freq = query_counts(truth, onehot, q) / 40
    ev = Evolver(sizes, 40, params, np.random.default_rng(seed + 1), backend)
    ev.set_targets(q, freq)
    ev.run(generations)
    return ev


@needs_numba
def test_evolve_backends_bit_identical():
    a = _evolve("numpy")
    b = _evolve("numba")
    assert a.history == b.history
    assert np.array_equal(a.pool, b.pool)
    assert np.array_equal(a.fit, b.fit)
    assert np.array_equal(a.counts, b.counts)
    assert np.array_equal(a.rank, b.rank)


def test_flag_forces_numpy_backend():
    env = dict(os.environ, MAMAMIA_NO_NUMBA="1")
    out = subprocess.run([sys.executable, "-c",
                          "from mamamia import kernels, _accel;"
                          "print(kernels.ACTIVE, _accel.backend_name())"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["numpy", "numpy"]
