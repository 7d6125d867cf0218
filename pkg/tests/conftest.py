from __future__ import annotations

import numpy as np
import pytest

from mamamia.data import Dataset, Schema, default_population_config, synthesize_population


def make(rows, sizes=None, set_ids=None) -> Dataset:
    """Dataset over categorical features ``f0..`` with the given domain sizes."""
    arr = np.asarray(rows, dtype=np.int64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if sizes is None:
        sizes = [int(arr[:, j].max()) + 1 if arr.size else 1 for j in range(arr.shape[1])]
    return Dataset(Schema.from_domains(sizes), arr, set_ids)


@pytest.fixture(scope="session")
def population() -> Dataset:
    """The default 15-feature seeded population (50,000 rows)."""
    return synthesize_population(default_population_config(seed=0))


@pytest.fixture(scope="session")
def small_pop(population) -> Dataset:
    return population.take(np.arange(5000))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


_VERDICTS = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_VERDICTS] = {}


@pytest.fixture
def verdict(request):
    """Record one acceptance line; the terminal summary prints them in order."""
    def record(number: int, ok: bool, detail: str) -> bool:
        request.config.stash[_VERDICTS][number] = (bool(ok), detail)
        return bool(ok)
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    verdicts = config.stash.get(_VERDICTS, {})
    if not verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(verdicts):
        ok, detail = verdicts[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
