from __future__ import annotations

import csv
import json

import numpy as np
import pytest

from mamamia.errors import ConfigError, ParameterError, SizeError
from mamamia.experiment import (EPS_GRID, SIZE_ROWS, TrialConfig, _replace, build_grid,
                                parse_attack, run_experiment, run_trial, trial_seed)
from mamamia.generators import GeneratorConfig, GeneratorKind

SMALL = {"kinds": ["mst"], "epsilons": [10], "sizes": [[200, 200, 10, 5]],
         "attacks": ["mamamia", "domias", "random_fp"], "shadow_runs": 3}


def small_cfg(**kw):
    return TrialConfig(GeneratorConfig("mst", 10.0), 200, 200, 10, 5,
                       ("mamamia", "domias"), shadow_runs=3, **kw)


def test_constants():
    assert SIZE_ROWS["iii"] == (1000, 1000, 32, 16)
    assert [r[3] * 2 for r in SIZE_ROWS.values()] == [r[2] for r in SIZE_ROWS.values()]
    assert len(EPS_GRID) == 9
    assert EPS_GRID[0] == pytest.approx(0.1) and EPS_GRID[-1] == pytest.approx(1000.0)
    assert parse_attack("mamamia@privbayes") == ("mamamia", GeneratorKind.PRIVBAYES)
    for bad in ("nope", "domias@mst", "mamamia@foo"):
        with pytest.raises((ConfigError, ValueError)):
            parse_attack(bad)


def test_trial_config_validation():
    with pytest.raises(SizeError):
        TrialConfig(GeneratorConfig("mst", 1.0), 10, 10, 10, 10)
    with pytest.raises(SizeError):
        TrialConfig(GeneratorConfig("mst", 1.0), 4, 10, 12, 5)
    with pytest.raises(SizeError):
        TrialConfig(GeneratorConfig("mst", 1.0), 20, 10, 12, 5, set_mode=True)
    cfg = small_cfg()
    assert TrialConfig.from_json(json.loads(json.dumps(cfg.to_json()))) == cfg
    assert cfg.with_sizes("iii").sizes == SIZE_ROWS["iii"]
    assert small_cfg().log_threshold == 3
    assert TrialConfig(GeneratorConfig("mst", 1.0), 10, 10, 4, 2).log_threshold == 40


def test_trial_members_and_determinism(small_pop):
    cfg = small_cfg(seed=7)
    a = run_trial(cfg, small_pop)
    b = run_trial(cfg, small_pop)
    rep = a.reports["mamamia"]
    assert rep.labels.sum() == 5 and rep.labels.size == 10
    assert np.array_equal(rep.scores, b.reports["mamamia"].scores)
    assert a.distance == b.distance
    assert int((rep.probabilities > 0.5).sum()) == 5
    assert 0 <= rep.auc <= 1 and 0 <= rep.ma <= 1
    other = run_trial(_replace(cfg, seed=8), small_pop)
    assert not np.array_equal(other.reports["mamamia"].scores, rep.scores)


def test_non_members_are_outside_training(small_pop, monkeypatch):
    import mamamia.experiment as ex
    seen = {}
    orig = ex._split_targets

    def spy(cfg, pop, rng):
        out = orig(cfg, pop, rng)
        seen["split"] = out
        return out

    monkeypatch.setattr(ex, "_split_targets", spy)
    run_trial(small_cfg(seed=3), small_pop)
    train, targets, labels = seen["split"]
    assert np.unique(train).size == 200
    assert set(targets[labels == 1]) <= set(train)
    assert not set(targets[labels == 0]) & set(train)


def test_set_mode(small_pop):
    cfg = TrialConfig(GeneratorConfig("mst", 1000.0), 100, 100, 10, 5, ("mamamia",),
                      set_mode=True, set_size=5, shadow_runs=3, seed=1)
    res = run_trial(cfg, small_pop)
    assert res.reports["mamamia"].labels.size == 10
    assert res.reports["mamamia/records"].labels.size == 50
    assert res.reports["mamamia/records"].labels.sum() == 25


def test_experiment_matches_single_trials(small_pop):
    grid = build_grid(SMALL)
    res = run_experiment(grid, 2, 5, small_pop)
    assert not res.failures and len(res.results) == 2
    key = next(iter(res.profiles))
    for t, tr in enumerate(res.results):
        cfg = _replace(grid[0], seed=trial_seed(5, grid[0], t))
        alone = run_trial(cfg, small_pop, res.profiles, res.profile_times, t)
        for name in grid[0].attacks:
            assert tr.reports[name].auc == alone.reports[name].auc
    cell = grid[0].cell()
    hand = np.mean([t.reports["mamamia"].auc for t in res.results])
    assert res.mean(cell, "mamamia") == pytest.approx(hand)
    row = [s for s in res.summary() if s["attack"] == "mamamia"][0]
    assert row["trials"] == 2 and row["auc_mean"] == pytest.approx(hand)
    assert key[0] == "mst"


def test_jobs_and_resume(small_pop, tmp_path):
    grid = build_grid(SMALL)
    a = run_experiment(grid, 2, 9, small_pop, jobs=1, out_dir=tmp_path / "a")
    run_experiment(grid, 2, 9, small_pop, jobs=2, out_dir=tmp_path / "b")
    ra = (tmp_path / "a" / "results.csv").read_text()
    assert ra == (tmp_path / "b" / "results.csv").read_text()
    assert len(list(csv.DictReader(open(tmp_path / "a" / "results.csv")))) == 6
    (tmp_path / "a" / "trials" / grid[0].cell() / "1.json").unlink()
    again = run_experiment(grid, 2, 9, small_pop, out_dir=tmp_path / "a")
    assert (tmp_path / "a" / "results.csv").read_text() == ra
    assert [t.reports["mamamia"].auc for t in again.results] == \
        [t.reports["mamamia"].auc for t in a.results]
    assert (tmp_path / "a" / "timings.csv").exists()
    assert (tmp_path / "a" / "summary.csv").exists()


def test_failures_are_reported(small_pop, tmp_path):
    grid = build_grid({"kinds": ["mst"], "epsilons": [1], "sizes": [[4000, 10, 2000, 1]],
                       "attacks": ["domias"]})
    res = run_experiment(grid, 1, 0, small_pop, out_dir=tmp_path)
    assert not res.results and len(res.failures) == 1
    assert "SizeError" in next(iter(res.failures.values()))
    assert json.loads((tmp_path / "failures.json").read_text())[0]["trial"] == 0
    with pytest.raises(ParameterError):
        run_experiment(grid, 0, 0, small_pop)
    with pytest.raises(ConfigError):
        run_experiment(grid + grid, 1, 0, small_pop)


def test_build_grid():
    grid = build_grid({"kinds": ["mst", "gsd"], "epsilons": "full", "sizes": ["i", "iii"]})
    assert len(grid) == 2 * 9 * 2
    assert len({c.cell() for c in grid}) == len(grid)
    for bad in ({"sizes": ["vii"]}, {"sizes": [[1, 2, 3]]}, {"bogus": 1}, {"kinds": ["x"]}):
        with pytest.raises((ConfigError, ValueError)):
            build_grid(bad)


@pytest.mark.slow
def test_matching_profile_beats_wrong_generator_profile(population):
    grid = build_grid({"kinds": ["mst"], "epsilons": [1000], "sizes": ["iii"],
                       "attacks": ["mamamia", "mamamia@privbayes"], "shadow_runs": 50})
    res = run_experiment(grid, 10, 0, population)
    cell = grid[0].cell()
    match = res.mean(cell, "mamamia")
    wrong = res.mean(cell, "mamamia@privbayes")
    assert match >= 0.45 and wrong >= 0.45
    assert wrong < match, f"privbayes profile {wrong:.3f} vs mst profile {match:.3f}"
