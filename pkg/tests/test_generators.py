from __future__ import annotations

import json
import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mamamia.errors import ConfigError, ModeError, ParameterError, SizeError
from mamamia.generators import (FP_ONLY, FULL, GeneratorConfig, GeneratorKind, GsdParams, fit,
                                sample)
from mamamia.stats import dataset_distance

FAST_GSD = GsdParams(generations=300, patience=100, queries=24, rounds=3)


def config(kind, eps, seed):
    return GeneratorConfig(kind, eps, seed=seed, gsd=FAST_GSD)


@pytest.mark.parametrize("eps", [0.01, 1.0, 1e4, math.inf])
def test_mst_selects_l_minus_one(small_pop, eps):
    out = fit(config("mst", eps, 0), small_pop.take(np.arange(500)))
    assert len(out.focal_points) == 14
    assert all(len(fp.features) == 2 for fp in out.focal_points)


@settings(max_examples=12, deadline=None)
@given(st.sampled_from(list(GeneratorKind)), st.sampled_from([0.1, 10.0, 1000.0]),
       st.integers(0, 2**32))
def test_fp_only_matches_full(small_pop, kind, eps, seed):
    train = small_pop.take(np.random.default_rng(seed).permutation(len(small_pop))[:300])
    cfg = config(kind, eps, seed)
    full = fit(cfg, train, FULL)
    fast = fit(cfg, train, FP_ONLY)
    assert fast.focal_points == full.focal_points
    assert fast.model is None and full.model is not None
    assert fit(cfg, train, FP_ONLY).focal_points == fast.focal_points


@pytest.mark.parametrize("kind", list(GeneratorKind))
def test_only_seeded_randomness(small_pop, kind):
    train = small_pop.take(np.arange(200))
    cfg = config(kind, 3.0, 9)
    np.random.seed(1)
    random.seed(1)
    a = sample(fit(cfg, train))
    np.random.seed(2)
    random.seed(2)
    b = sample(fit(cfg, train))
    assert a == b


def test_errors(small_pop):
    train = small_pop.take(np.arange(50))
    out = fit(config("mst", 1.0, 0), train, FP_ONLY)
    with pytest.raises(ModeError):
        sample(out)
    with pytest.raises(SizeError):
        fit(config("mst", 1.0, 0), train.take([]))
    with pytest.raises(ValueError):
        fit(config("mst", 1.0, 0), train, "partial")
    with pytest.raises(SizeError):
        sample(fit(config("mst", 1.0, 0), train), -1)
    with pytest.raises(ParameterError):
        GeneratorConfig("mst", 0.0)
    with pytest.raises(ParameterError):
        GsdParams(population=3, elites=5)


def test_kind_parsing():
    assert GeneratorKind.parse("MST-like") is GeneratorKind.MST
    assert GeneratorKind.parse("PrivBayes") is GeneratorKind.PRIVBAYES
    assert GeneratorKind.parse("private_gsd") is GeneratorKind.GSD
    with pytest.raises(ConfigError):
        GeneratorKind.parse("ctgan")


def test_config_json_round_trip():
    cfg = GeneratorConfig("gsd", math.inf, 100, 5, gsd=FAST_GSD)
    back = GeneratorConfig.from_json(json.loads(json.dumps(cfg.to_json())))
    assert back == cfg
    cfg = GeneratorConfig("mst", 2.0, manual_edges=[(0, 1)])
    assert GeneratorConfig.from_json(cfg.to_json()) == cfg
    with pytest.raises(ConfigError):
        GeneratorConfig.from_json({"kind": "mst", "epsilon": 1, "colour": 3})
    with pytest.raises(ConfigError):
        GeneratorConfig.from_json({"kind": "mst"})


@pytest.mark.parametrize("kind", list(GeneratorKind))
def test_outcome_serializes(small_pop, kind):
    train = small_pop.take(np.arange(120))
    out = fit(config(kind, 2.0, 1), train)
    obj = json.loads(out.dumps())
    assert obj["kind"] == kind.value and len(obj["focal_points"]) == len(out.focal_points)
    assert math.fsum(f for _, f in obj["ledger"]) == pytest.approx(1.0, abs=1e-12)
    assert "model" in obj


def test_synth_rows_default_and_override(small_pop):
    train = small_pop.take(np.arange(150))
    assert len(sample(fit(config("privbayes", 1.0, 0), train))) == 150
    cfg = GeneratorConfig("privbayes", 1.0, synth_rows=40)
    assert len(sample(fit(cfg, train))) == 40


def test_mst_quality_beats_short_gsd(small_pop):
    train = small_pop.take(np.arange(1000))
    mst = sample(fit(GeneratorConfig("mst", 10.0, seed=1), train))
    gsd = sample(fit(GeneratorConfig("gsd", 10.0, seed=1,
                                     gsd=GsdParams(generations=50, queries=64)), train))
    assert dataset_distance(mst, train) < dataset_distance(gsd, train)
