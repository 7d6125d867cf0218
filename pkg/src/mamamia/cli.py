"""Command-line entry point.

Every subcommand reads one JSON config (``schema_version`` 1) and writes its
outputs plus a ``manifest.json`` into ``--out``. Exit status: 0 success,
2 configuration error, 3 data error, 4 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from . import __version__
from .attack import (FPProfile, activate, activate_unknown, domias_score, random_profile,
                     shadow_profile, zeta, zeta_log)
from .data import (Dataset, PopulationConfig, Schema, file_fingerprint, load_csv,
                   sample_indices, synthesize_population, write_csv)
from .errors import (BudgetError, ConfigError, DegenerateEstimateError, DomainError,
                     MamamiaError, ParameterError, ParseError, SizeError, ThreatModelError)
from .experiment import build_grid, run_experiment
from .generators import FP_ONLY, FULL, GeneratorConfig, fit, sample
from .metrics import auc, membership_advantage, roc
from .rng import derive_rng
from .stats import dataset_distance

CONFIG_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_RUNTIME = 0, 2, 3, 4
log = logging.getLogger("mamamia")


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int | None
    version: str = __version__
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: list[str] = field(default_factory=list)

    def add_input(self, path) -> None:
        self.inputs[str(path)] = file_fingerprint(path)

    def save(self, out_dir: Path) -> None:
        (out_dir / "manifest.json").write_text(json.dumps(asdict(self), indent=1), "utf-8")

    @classmethod
    def load(cls, path) -> "RunManifest":
        return cls(**json.loads(Path(path).read_text("utf-8")))

    def check_resume(self, out_dir: Path) -> None:
        """Refuse to resume into a directory produced from different inputs."""
        path = out_dir / "manifest.json"
        if not path.exists():
            return
        old = RunManifest.load(path)
        if (old.config, old.seed, old.inputs) != (self.config, self.seed, self.inputs):
            raise ConfigError(f"{path} was written for a different config, seed or inputs; "
                              "use a fresh --out directory")


# ---------------------------------------------------------------------------
# config helpers


def read_config(path) -> dict:
    try:
        cfg = json.loads(Path(path).read_text("utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"{path}: config file not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be an object")
    version = cfg.get("schema_version")
    if version != CONFIG_VERSION:
        raise ConfigError(f"{path}: schema_version must be {CONFIG_VERSION}, got {version!r}")
    return cfg


def _need(cfg: Mapping, key: str, where: str):
    if key not in cfg:
        raise ConfigError(f"{where}: missing field {key!r}")
    return cfg[key]


def _check_fields(cfg: Mapping, allowed: set[str], where: str) -> None:
    extra = set(cfg) - allowed - {"schema_version"}
    if extra:
        raise ConfigError(f"{where}: unknown fields {sorted(extra)}")


def _resolve(base: Path, p: str) -> Path:
    q = Path(p)
    return q if q.is_absolute() else base / q


class DataFileError(MamamiaError, FileNotFoundError):
    """A data file named by a config does not exist."""


def load_data(block: Mapping, base: Path, manifest: RunManifest, where: str,
              schema: Schema | None = None) -> Dataset:
    """A dataset from ``{"csv": ...}`` or ``{"population": {...}}``."""
    if not isinstance(block, Mapping):
        raise ConfigError(f"{where}: expected an object")
    _check_fields(block, {"csv", "kinds", "bins", "schema", "population", "rows", "seed"}, where)
    if "csv" in block:
        path = _resolve(base, block["csv"])
        if not path.exists():
            raise DataFileError(f"{where}.csv: {path} not found")
        manifest.add_input(path)
        if schema is None and "schema" in block:
            spath = _resolve(base, block["schema"])
            manifest.add_input(spath)
            schema = Schema.load(spath)
        return load_csv(path, block.get("kinds"), schema, int(block.get("bins", 20)))
    if "population" in block:
        try:
            pop = synthesize_population(PopulationConfig.from_json(block["population"]))
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"{where}.population: {exc}") from None
        if "rows" in block:
            rng = derive_rng(int(block.get("seed", 0)), "data", where)
            pop = pop.take(sample_indices(len(pop), int(block["rows"]), rng))
        return pop
    raise ConfigError(f"{where}: needs 'csv' or 'population'")


def _generator(cfg: Mapping, where: str) -> GeneratorConfig:
    block = cfg.get("generator")
    if not isinstance(block, Mapping):
        raise ConfigError(f"{where}: missing 'generator' object")
    return GeneratorConfig.from_json(block)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# commands


def cmd_generate(args) -> int:
    cfg = read_config(args.config)
    _check_fields(cfg, {"generator", "train", "synth_rows", "fp_only"}, "generate")
    base = Path(args.config).parent
    out = _out_dir(args)
    gen = _generator(cfg, "generate")
    if args.seed is not None:
        gen = gen.replace(seed=args.seed)
    if cfg.get("synth_rows") is not None:
        gen = gen.replace(synth_rows=int(cfg["synth_rows"]))
    manifest = RunManifest("generate", cfg, gen.seed)
    train = load_data(_need(cfg, "train", "generate"), base, manifest, "train")
    fp_only = bool(args.fp_only or cfg.get("fp_only", False))
    outcome = fit(gen, train, FP_ONLY if fp_only else FULL)
    train.schema.save(out / "schema.json")
    manifest.outputs.append("schema.json")
    (out / "ledger.json").write_text(json.dumps(outcome.ledger, indent=1), "utf-8")
    manifest.outputs.append("ledger.json")
    if fp_only:
        (out / "focal_points.json").write_text(
            json.dumps([fp.to_json() for fp in outcome.focal_points], indent=1), "utf-8")
        manifest.outputs.append("focal_points.json")
    else:
        synth = sample(outcome)
        write_csv(synth, out / "synth.csv")
        model = outcome.to_json()
        model.pop("wall_time")
        (out / "model.json").write_text(json.dumps(model, indent=1), "utf-8")
        manifest.outputs += ["synth.csv", "model.json"]
        log.info("wrote %d synthetic rows", len(synth))
    manifest.save(out)
    return EXIT_OK


def cmd_profile(args) -> int:
    cfg = read_config(args.config)
    _check_fields(cfg, {"generator", "aux", "train_size", "runs", "seed"}, "profile")
    base = Path(args.config).parent
    out = _out_dir(args)
    gen = _generator(cfg, "profile")
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    manifest = RunManifest("profile", cfg, seed)
    aux = load_data(_need(cfg, "aux", "profile"), base, manifest, "aux")
    prof = shadow_profile(gen, aux, int(_need(cfg, "train_size", "profile")),
                          int(cfg.get("runs", 50)), seed=seed, jobs=args.jobs)
    prof.save(out / "profile.json")
    manifest.outputs.append("profile.json")
    manifest.save(out)
    log.info("%d focal points, stable fraction %.3f", len(prof), prof.stable_fraction())
    return EXIT_OK


def _read_targets(block: Mapping, base: Path, schema: Schema, manifest: RunManifest,
                  out: Path) -> tuple[Dataset, np.ndarray | None]:
    _check_fields(block, {"csv", "label_column"}, "targets")
    path = _resolve(base, _need(block, "csv", "targets"))
    if not path.exists():
        raise DataFileError(f"targets.csv: {path} not found")
    manifest.add_input(path)
    col = block.get("label_column")
    if not col:
        return load_csv(path, schema=schema), None
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or col not in rows[0]:
        raise ParseError(f"targets: no {col!r} column", 1)
    pos = rows[0].index(col)
    try:
        labels = np.array([int(r[pos]) for r in rows[1:] if r], dtype=np.int64)
    except ValueError as exc:
        raise ParseError(f"targets: bad label ({exc})") from None
    stripped = out / "targets_features.csv"
    with stripped.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for r in rows:
            if r:
                w.writerow(r[:pos] + r[pos + 1:])
    return load_csv(stripped, schema=schema), labels


def cmd_attack(args) -> int:
    cfg = read_config(args.config)
    _check_fields(cfg, {"generator", "synth_csv", "aux", "targets", "attack", "train_size",
                        "runs", "profile", "confidence", "member_fraction", "omega", "seed"},
                  "attack")
    base = Path(args.config).parent
    out = _out_dir(args)
    block = cfg.get("generator")
    if not isinstance(block, Mapping) or "kind" not in block or "epsilon" not in block:
        raise ThreatModelError("the attacker must declare the generator kind and epsilon "
                               "('generator': {'kind': ..., 'epsilon': ...})")
    gen = GeneratorConfig.from_json(block)
    attack = args.attack or cfg.get("attack", "mamamia")
    if attack not in ("mamamia", "mamamia_log", "domias", "random_fp"):
        raise ConfigError(f"unknown attack {attack!r}")
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    manifest = RunManifest("attack", {**cfg, "attack": attack}, seed)
    aux = load_data(_need(cfg, "aux", "attack"), base, manifest, "aux")
    spath = _resolve(base, _need(cfg, "synth_csv", "attack"))
    if not spath.exists():
        raise DataFileError(f"synth_csv: {spath} not found")
    manifest.add_input(spath)
    synth = load_csv(spath, schema=aux.schema)
    targets, labels = _read_targets(_need(cfg, "targets", "attack"), base, aux.schema,
                                    manifest, out)

    prof = None
    if attack != "domias":
        if cfg.get("profile"):
            ppath = _resolve(base, cfg["profile"])
            manifest.add_input(ppath)
            prof = FPProfile.load(ppath)
            if prof.kind is not gen.kind or prof.epsilon != gen.epsilon:
                raise ThreatModelError("cached profile was built for a different generator "
                                       "kind or epsilon")
        else:
            prof = shadow_profile(gen, aux, int(cfg.get("train_size", len(synth))),
                                  int(cfg.get("runs", 50)), seed=seed, jobs=args.jobs)
            prof.save(out / "profile.json")
            manifest.outputs.append("profile.json")
    if attack == "mamamia":
        scores = zeta(synth, aux, prof, targets)
    elif attack == "mamamia_log":
        omega = int(cfg.get("omega", min(prof.runs, math.ceil(0.8 * prof.runs))))
        scores = zeta_log(synth, aux, prof, targets, omega)
    elif attack == "random_fp":
        scores = zeta(synth, aux, random_profile(prof, aux.schema.sizes,
                                                 derive_rng(seed, "random_fp")), targets)
    else:
        scores = domias_score(synth, aux, targets)

    c = float(cfg.get("confidence", 1.0))
    frac = cfg.get("member_fraction")
    probs = activate(scores, c, float(frac)) if frac is not None else activate_unknown(scores, c)
    report: dict[str, Any] = {"attack": attack, "generator": gen.to_json(),
                              "targets": len(targets)}
    if labels is not None:
        report.update(auc=auc(scores, labels), ma=membership_advantage(probs, labels),
                      roc=[list(p) for p in roc(scores, labels)])
    (out / "report.json").write_text(json.dumps(report, indent=1), "utf-8")
    with (out / "scores.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["target", "zeta", "probability"] + (["label"] if labels is not None else []))
        for i, (z, p) in enumerate(zip(scores, probs)):
            w.writerow([i, repr(float(z)), repr(float(p))]
                       + ([int(labels[i])] if labels is not None else []))
    manifest.outputs += ["report.json", "scores.csv"]
    manifest.save(out)
    if labels is not None:
        log.info("AUC %.4f  MA %.4f", report["auc"], report["ma"])
    return EXIT_OK


def cmd_experiment(args) -> int:
    cfg = read_config(args.config)
    _check_fields(cfg, {"population", "aux", "trials", "grid", "seed"}, "experiment")
    base = Path(args.config).parent
    out = _out_dir(args)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    manifest = RunManifest("experiment", cfg, seed)
    if "aux" in cfg:
        pop = load_data(cfg["aux"], base, manifest, "aux")
    else:
        pop = load_data({"population": cfg.get("population", {"seed": 0})}, base, manifest,
                        "population")
    manifest.check_resume(out)
    manifest.save(out)
    grid = build_grid(_need(cfg, "grid", "experiment"))
    result = run_experiment(grid, int(cfg.get("trials", 10)), seed, pop, jobs=args.jobs,
                            out_dir=out, log=log.info)
    manifest.outputs += ["results.csv", "summary.csv", "timings.csv", "trials/"]
    if result.failures:
        manifest.outputs.append("failures.json")
    manifest.save(out)
    if result.failures:
        for (cell, t), err in sorted(result.failures.items()):
            log.error("%s trial %d failed: %s", cell, t, err)
        print(f"{len(result.failures)} trial(s) failed; see {out / 'failures.json'}",
              file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_quality(args) -> int:
    out = _out_dir(args) if args.out else None
    schema = Schema.load(args.schema) if args.schema else None
    for p in (args.synth, args.train):
        if not Path(p).exists():
            raise DataFileError(f"{p} not found")
    if schema is None:
        train = load_csv(args.train)
        schema = train.schema
    else:
        train = load_csv(args.train, schema=schema)
    synth = load_csv(args.synth, schema=schema)
    d = dataset_distance(synth, train)
    print(repr(d))
    if out is not None:
        manifest = RunManifest("quality", {"synth": args.synth, "train": args.train,
                                           "schema": args.schema}, None)
        for p in (args.synth, args.train):
            manifest.add_input(p)
        (out / "quality.json").write_text(json.dumps({"distance": d}), "utf-8")
        manifest.outputs.append("quality.json")
        manifest.save(out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mamamia", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    verbosity = argparse.ArgumentParser(add_help=False)
    verbosity.add_argument("-v", "--verbose", action="count", default=0,
                           help="-v for progress, -vv for debug output")
    sub = p.add_subparsers(dest="command", required=True)

    def parser(name, help):
        return sub.add_parser(name, help=help, parents=[verbosity])

    def common(sp, jobs=True):
        sp.add_argument("config", help="JSON config file")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        if jobs:
            sp.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                            help="parallel workers (results do not depend on it)")

    g = parser("generate", "fit a generator and write synthetic data")
    common(g, jobs=False)
    g.add_argument("--fp-only", action="store_true", help="stop once focal points are fixed")
    g.set_defaults(func=cmd_generate)
    pr = parser("profile", "build a shadow focal-point profile")
    common(pr)
    pr.set_defaults(func=cmd_profile)
    a = parser("attack", "score targets against synthetic data")
    common(a)
    a.add_argument("--attack", choices=["mamamia", "mamamia_log", "domias", "random_fp"])
    a.set_defaults(func=cmd_attack)
    e = parser("experiment", "run a trial grid (resumable)")
    common(e)
    e.set_defaults(func=cmd_experiment)
    q = parser("quality", "summed per-column Wasserstein distance")
    q.add_argument("synth")
    q.add_argument("train")
    q.add_argument("--schema", help="schema.json shared by both files")
    q.add_argument("--out", default=None)
    q.set_defaults(func=cmd_quality)
    return p


_CONFIG_ERRORS = (ConfigError, ThreatModelError, ParameterError, BudgetError)
_DATA_ERRORS = (ParseError, DomainError, SizeError, DegenerateEstimateError, DataFileError)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(message)s")
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except _CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (MamamiaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
