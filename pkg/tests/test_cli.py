from __future__ import annotations

import csv
import json
from pathlib import Path

import pytest

from mamamia.cli import main
from mamamia.data import write_csv

REPO = Path(__file__).resolve().parents[1]


def write(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj), encoding="utf-8")
    return path


@pytest.fixture
def files(tmp_path, small_pop):
    train = small_pop.take(range(300))
    aux = small_pop.take(range(300, 3000))
    small_pop.schema.save(tmp_path / "schema.json")
    write_csv(train, tmp_path / "train.csv")
    write_csv(aux, tmp_path / "aux.csv")
    write_csv(small_pop.take(list(range(10)) + list(range(300, 310))), tmp_path / "t.csv")
    with open(tmp_path / "t.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    with open(tmp_path / "targets.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(rows[0] + ["member"])
        for i, r in enumerate(rows[1:]):
            w.writerow(r + [int(i < 10)])
    return tmp_path


def gen_config(d: Path, **extra) -> Path:
    return write(d / "gen.json", {
        "schema_version": 1, "generator": {"kind": "mst", "epsilon": 1000, "seed": 3},
        "train": {"csv": "train.csv", "schema": "schema.json"}, **extra})


def attack_config(d: Path, **extra) -> Path:
    return write(d / "attack.json", {
        "schema_version": 1, "generator": {"kind": "mst", "epsilon": 1000},
        "synth_csv": "g/synth.csv", "aux": {"csv": "aux.csv", "schema": "schema.json"},
        "targets": {"csv": "targets.csv", "label_column": "member"},
        "train_size": 300, "runs": 5, "member_fraction": 0.5, **extra})


def test_generate(files):
    assert main(["generate", str(gen_config(files)), "--out", str(files / "g")]) == 0
    with open(files / "g" / "synth.csv") as fh:
        assert sum(1 for _ in fh) == 301
    for name in ("manifest.json", "model.json", "ledger.json", "schema.json"):
        assert (files / "g" / name).exists()
    first = (files / "g" / "synth.csv").read_bytes()
    assert main(["generate", str(gen_config(files)), "--out", str(files / "g2")]) == 0
    assert (files / "g2" / "synth.csv").read_bytes() == first
    assert (files / "g" / "model.json").read_bytes() == (files / "g2" / "model.json").read_bytes()


def test_generate_fp_only(files):
    assert main(["generate", str(gen_config(files)), "--out", str(files / "f"), "--fp-only"]) == 0
    fps = json.loads((files / "f" / "focal_points.json").read_text())
    assert len(fps) == 14
    assert all(fp["kind"] == "marginal" and len(fp["features"]) == 2 for fp in fps)
    assert not (files / "f" / "synth.csv").exists()


def test_attack_with_and_without_labels(files):
    main(["generate", str(gen_config(files)), "--out", str(files / "g")])
    assert main(["attack", str(attack_config(files)), "--out", str(files / "a"), "--jobs", "1"]) == 0
    rep = json.loads((files / "a" / "report.json").read_text())
    assert 0 <= rep["auc"] <= 1 and 0 <= rep["ma"] <= 1
    assert (files / "a" / "profile.json").exists()
    with open(files / "a" / "scores.csv") as fh:
        assert next(csv.reader(fh)) == ["target", "zeta", "probability", "label"]

    cfg = attack_config(files, targets={"csv": "t.csv"}, profile="a/profile.json")
    assert main(["attack", str(cfg), "--out", str(files / "b"), "--jobs", "1"]) == 0
    rep = json.loads((files / "b" / "report.json").read_text())
    assert "auc" not in rep and rep["targets"] == 20

    assert main(["attack", str(attack_config(files)), "--out", str(files / "c"),
                 "--attack", "domias", "--jobs", "1"]) == 0
    assert json.loads((files / "c" / "report.json").read_text())["attack"] == "domias"


def test_attack_requires_generator(files):
    cfg = json.loads(attack_config(files).read_text())
    del cfg["generator"]
    assert main(["attack", str(write(files / "x.json", cfg)), "--out", str(files / "x")]) == 2
    cfg["generator"] = {"kind": "privbayes", "epsilon": 1000}
    cfg["profile"] = "a/profile.json"
    main(["generate", str(gen_config(files)), "--out", str(files / "g")])
    main(["attack", str(attack_config(files)), "--out", str(files / "a"), "--jobs", "1"])
    assert main(["attack", str(write(files / "y.json", cfg)), "--out", str(files / "y")]) == 2


def test_experiment_smoke_and_resume(tmp_path):
    out = tmp_path / "exp"
    cfg = REPO / "configs" / "smoke.json"
    assert main(["experiment", str(cfg), "--out", str(out), "--jobs", "1"]) == 0
    results = (out / "results.csv").read_text()
    assert len(results.strip().splitlines()) == 1 + 2 * 2
    assert main(["experiment", str(cfg), "--out", str(out), "--jobs", "1"]) == 0
    assert (out / "results.csv").read_text() == results
    assert main(["experiment", str(cfg), "--out", str(out), "--seed", "5"]) == 2


def test_errors(files):
    bad = write(files / "bad.json", {"schema_version": 2})
    assert main(["generate", str(bad), "--out", str(files / "o")]) == 2
    (files / "broken.json").write_text("{", encoding="utf-8")
    assert main(["generate", str(files / "broken.json"), "--out", str(files / "o")]) == 2
    assert main(["generate", str(files / "nope.json"), "--out", str(files / "o")]) == 2
    (files / "train.csv").write_text("a,b\n1\n", encoding="utf-8")
    cfg = write(files / "g.json", {"schema_version": 1,
                                   "generator": {"kind": "mst", "epsilon": 1},
                                   "train": {"csv": "train.csv"}})
    assert main(["generate", str(cfg), "--out", str(files / "o")]) == 3
    missing = write(files / "m.json", {"schema_version": 1,
                                       "generator": {"kind": "mst", "epsilon": 1},
                                       "train": {"csv": "gone.csv"}})
    assert main(["generate", str(missing), "--out", str(files / "o")]) == 3
    extra = write(files / "e.json", {"schema_version": 1, "generator": {"kind": "mst",
                                     "epsilon": 1}, "train": {"csv": "aux.csv"}, "what": 1})
    assert main(["generate", str(extra), "--out", str(files / "o")]) == 2


def test_quality(files, capsys):
    main(["generate", str(gen_config(files)), "--out", str(files / "g")])
    capsys.readouterr()
    assert main(["quality", str(files / "g" / "synth.csv"), str(files / "train.csv"),
                 "--schema", str(files / "schema.json"), "--out", str(files / "q")]) == 0
    d = float(capsys.readouterr().out)
    assert d >= 0
    assert json.loads((files / "q" / "quality.json").read_text())["distance"] == d
    assert main(["quality", str(files / "train.csv"), str(files / "train.csv"),
                 "--schema", str(files / "schema.json")]) == 0
    assert float(capsys.readouterr().out) == 0.0
