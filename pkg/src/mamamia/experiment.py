"""Trials and experiment grids: sample, generate, attack, score.

One trial samples a training set from the population, fits the generator,
draws the synthetic data once and runs every requested attack against that
same synthetic data. Results that depend only on the seed go to
``results.csv``; wall-clock stage times go to ``timings.csv`` so the former
is reproducible bit for bit.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .attack import (FPProfile, activate, domias_score, random_profile, set_mi, shadow_profile,
                     zeta, zeta_log)
from .data import Dataset, sample_indices
from .errors import ConfigError, MamamiaError, ParameterError, SizeError
from .generators import GeneratorConfig, GeneratorKind, fit, sample
from .metrics import auc, membership_advantage, roc
from .rng import derive_rng, derive_seed
from .stats import dataset_distance

SIZE_ROWS = {
    "i": (100, 100, 10, 5),
    "ii": (316, 316, 18, 9),
    "iii": (1000, 1000, 32, 16),
    "iv": (3162, 3162, 56, 28),
    "v": (10000, 10000, 100, 50),
    "vi": (31623, 31623, 178, 89),
}
EPS_GRID = tuple(10 ** (i / 2) for i in range(-2, 7))
BASE_ATTACKS = ("mamamia", "mamamia_log", "domias", "random_fp")


def parse_attack(name: str) -> tuple[str, GeneratorKind | None]:
    """``"mamamia@privbayes"`` attacks with another generator's profile."""
    base, _, other = name.partition("@")
    if base not in BASE_ATTACKS or (other and base != "mamamia"):
        raise ConfigError(f"unknown attack {name!r}")
    return base, GeneratorKind.parse(other) if other else None


@dataclass(frozen=True)
class TrialConfig:
    generator: GeneratorConfig
    train_size: int
    synth_size: int
    n_targets: int
    n_members: int
    attacks: tuple[str, ...] = ("mamamia",)
    seed: int = 0
    set_mode: bool = False
    set_size: int = 5
    overlap: bool = False
    shadow_runs: int = 50
    confidence: float = 1.0
    omega: int | None = None

    def __post_init__(self):
        if not 1 <= self.n_members < self.n_targets:
            raise SizeError("need 1 <= members < targets so both classes appear")
        if not self.set_mode and self.n_members > self.train_size:
            raise SizeError("more members than training rows")
        if self.set_mode and self.n_members * self.set_size > self.train_size:
            raise SizeError("member sets do not fit in the training set")
        if self.train_size < 1 or self.synth_size < 1 or self.shadow_runs < 1:
            raise SizeError("sizes and shadow runs must be positive")
        if self.set_size < 1:
            raise SizeError("set size must be >= 1")
        for a in self.attacks:
            parse_attack(a)

    @property
    def epsilon(self) -> float:
        return self.generator.epsilon

    @property
    def kind(self) -> GeneratorKind:
        return self.generator.kind

    @property
    def sizes(self) -> tuple[int, int, int, int]:
        return self.train_size, self.synth_size, self.n_targets, self.n_members

    @property
    def member_fraction(self) -> float:
        return self.n_members / self.n_targets

    @property
    def log_threshold(self) -> int:
        """omega for ``mamamia_log``: 40 of 50 runs unless configured."""
        if self.omega is not None:
            return self.omega
        return min(self.shadow_runs, math.ceil(0.8 * self.shadow_runs))

    def cell(self) -> str:
        mode = "sets" if self.set_mode else "rows"
        return (f"{self.kind.value}_eps{self.epsilon:g}_n{self.train_size}_s{self.synth_size}"
                f"_t{self.n_targets}_m{self.n_members}_{mode}")

    def with_sizes(self, row: str) -> "TrialConfig":
        t, s, n, m = SIZE_ROWS[row]
        return _replace(self, train_size=t, synth_size=s, n_targets=n, n_members=m)

    def to_json(self) -> dict:
        out = asdict(self)
        out["generator"] = self.generator.to_json()
        out["attacks"] = list(self.attacks)
        return out

    @classmethod
    def from_json(cls, obj: Mapping) -> "TrialConfig":
        obj = dict(obj)
        known = set(cls.__dataclass_fields__)
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown trial fields: {sorted(unknown)}")
        obj["generator"] = GeneratorConfig.from_json(obj["generator"])
        obj["attacks"] = tuple(obj.get("attacks", ("mamamia",)))
        return cls(**obj)


def _replace(cfg: TrialConfig, **changes) -> TrialConfig:
    return TrialConfig(**{**{f: getattr(cfg, f) for f in cfg.__dataclass_fields__}, **changes})


@dataclass
class AttackReport:
    attack: str
    scores: np.ndarray
    labels: np.ndarray
    probabilities: np.ndarray
    auc: float
    ma: float
    roc: list[tuple[float, float]]
    runtimes: dict[str, float] = field(default_factory=dict)

    @classmethod
    def build(cls, attack: str, scores, labels, member_fraction: float, c: float,
              runtimes: dict[str, float]) -> "AttackReport":
        s = np.asarray(scores, dtype=float)
        y = np.asarray(labels, dtype=np.int64)
        p = activate(s, c, member_fraction)
        return cls(attack, s, y, p, auc(s, y), membership_advantage(p, y), roc(s, y), runtimes)

    def to_json(self) -> dict:
        return {"attack": self.attack, "auc": self.auc, "ma": self.ma,
                "scores": self.scores.tolist(), "labels": self.labels.tolist(),
                "probabilities": self.probabilities.tolist(),
                "roc": [list(p) for p in self.roc], "runtimes": self.runtimes}


@dataclass
class TrialResult:
    config: TrialConfig
    trial: int
    distance: float
    reports: dict[str, AttackReport]
    runtimes: dict[str, float]

    def rows(self) -> list[dict]:
        base = {"cell": self.config.cell(), "kind": self.config.kind.value,
                "epsilon": repr(float(self.config.epsilon)),
                "train": self.config.train_size, "synth": self.config.synth_size,
                "targets": self.config.n_targets, "members": self.config.n_members,
                "trial": self.trial, "distance": repr(self.distance)}
        return [{**base, "attack": name, "auc": repr(r.auc), "ma": repr(r.ma)}
                for name, r in self.reports.items()]

    def timing_rows(self) -> list[dict]:
        base = {"cell": self.config.cell(), "trial": self.trial}
        out = [{**base, "stage": k, "seconds": v} for k, v in self.runtimes.items()]
        for name, r in self.reports.items():
            out += [{**base, "stage": f"{name}:{k}", "seconds": v} for k, v in r.runtimes.items()]
        return out

    def to_json(self) -> dict:
        return {"trial": self.trial, "config": self.config.to_json(), "distance": self.distance,
                "runtimes": self.runtimes,
                "reports": {k: r.to_json() for k, r in self.reports.items()}}

    @classmethod
    def from_json(cls, obj: Mapping) -> "TrialResult":
        reports = {}
        for k, r in obj["reports"].items():
            reports[k] = AttackReport(r["attack"], np.asarray(r["scores"], float),
                                      np.asarray(r["labels"], np.int64),
                                      np.asarray(r["probabilities"], float), r["auc"], r["ma"],
                                      [tuple(p) for p in r["roc"]], r["runtimes"])
        return cls(TrialConfig.from_json(obj["config"]), obj["trial"], obj["distance"], reports,
                   obj["runtimes"])


# ---------------------------------------------------------------------------
# profiles


def profile_key(cfg: TrialConfig, kind: GeneratorKind | None = None) -> tuple:
    gen = cfg.generator if kind is None else cfg.generator.replace(kind=kind)
    gsd = asdict(gen.gsd) if gen.kind is GeneratorKind.GSD else None
    return (gen.kind.value, float(gen.epsilon), cfg.train_size, cfg.shadow_runs,
            json.dumps(gsd, sort_keys=True), json.dumps(gen.parent_cap),
            json.dumps(gen.manual_edges))


def profiles_needed(cfg: TrialConfig) -> dict[tuple, GeneratorConfig]:
    """Generator configs whose shadow profiles the trial's attacks read."""
    out = {}
    for a in cfg.attacks:
        base, other = parse_attack(a)
        if base == "domias":
            continue
        kind = other or cfg.kind
        out[profile_key(cfg, kind)] = cfg.generator.replace(kind=kind)
    return out


def build_profile(gen: GeneratorConfig, aux: Dataset, train_size: int, runs: int, seed: int,
                  jobs: int = 1) -> tuple[FPProfile, float]:
    start = time.perf_counter()
    prof = shadow_profile(gen, aux, train_size, runs, seed=seed, jobs=jobs)
    return prof, time.perf_counter() - start


# ---------------------------------------------------------------------------
# trials


def _split_targets(cfg: TrialConfig, population: Dataset, rng: np.random.Generator):
    """Training indices, target indices (shuffled) and their labels."""
    n = len(population)
    if cfg.train_size + cfg.n_targets - cfg.n_members > n:
        raise SizeError("population too small for the requested sizes")
    train_idx = sample_indices(n, cfg.train_size, rng)
    rest = np.setdiff1d(np.arange(n), train_idx)
    members = train_idx[sample_indices(train_idx.size, cfg.n_members, rng)]
    non = rest[sample_indices(rest.size, cfg.n_targets - cfg.n_members, rng)]
    targets = np.concatenate([members, non])
    labels = np.r_[np.ones(members.size), np.zeros(non.size)].astype(np.int64)
    order = rng.permutation(targets.size)
    return train_idx, targets[order], labels[order]


def _split_sets(cfg: TrialConfig, population: Dataset, rng: np.random.Generator):
    """Like ``_split_targets`` with whole record sets as targets.

    Each target set contributes its first ``set_size`` rows. Member sets are
    placed in the training data, which is then filled with uniform rows from
    outside every target set.
    """
    if population.set_ids is None:
        raise SizeError("set mode needs a population with set ids")
    ids, first, counts = np.unique(population.set_ids, return_index=True, return_counts=True)
    pool = np.flatnonzero(counts >= cfg.set_size)
    if pool.size < cfg.n_targets:
        raise SizeError(f"only {pool.size} sets have >= {cfg.set_size} records")
    chosen = pool[sample_indices(pool.size, cfg.n_targets, rng)]
    rows = [np.flatnonzero(population.set_ids == ids[c])[: cfg.set_size] for c in chosen]
    labels = np.r_[np.ones(cfg.n_members), np.zeros(cfg.n_targets - cfg.n_members)]
    member_rows = np.concatenate(rows[: cfg.n_members])
    outside = np.setdiff1d(np.arange(len(population)), np.concatenate(rows))
    fill = outside[sample_indices(outside.size, cfg.train_size - member_rows.size, rng)]
    train_idx = np.concatenate([member_rows, fill])
    order = rng.permutation(cfg.n_targets)
    return train_idx, [rows[i] for i in order], labels[order].astype(np.int64)


def _score(attack: str, cfg: TrialConfig, synth: Dataset, aux: Dataset, targets: Dataset,
           profiles: Mapping[tuple, FPProfile], seed: int) -> np.ndarray:
    base, other = parse_attack(attack)
    if base == "domias":
        return domias_score(synth, aux, targets)
    prof = profiles[profile_key(cfg, other or cfg.kind)]
    if base == "mamamia":
        return zeta(synth, aux, prof, targets)
    if base == "mamamia_log":
        return zeta_log(synth, aux, prof, targets, min(cfg.log_threshold, prof.runs))
    rand = random_profile(prof, synth.schema.sizes, derive_rng(seed, "random_fp"))
    return zeta(synth, aux, rand, targets)


def run_trial(cfg: TrialConfig, population: Dataset,
              profiles: Mapping[tuple, FPProfile] | None = None,
              profile_times: Mapping[tuple, float] | None = None,
              trial: int = 0) -> TrialResult:
    """One trial; missing profiles are built on this trial's auxiliary view."""
    start = time.perf_counter()
    rng = derive_rng(cfg.seed, "split")
    if cfg.set_mode:
        train_idx, target_rows, labels = _split_sets(cfg, population, rng)
        flat = np.concatenate(target_rows)
    else:
        train_idx, flat, labels = _split_targets(cfg, population, rng)
    train = population.take(train_idx)
    aux = population if cfg.overlap else population.drop(train_idx)
    targets = population.take(flat)
    runtimes: dict[str, float] = {}

    t = time.perf_counter()
    gen = cfg.generator.replace(seed=derive_seed(cfg.seed, "generator"),
                                synth_rows=cfg.synth_size)
    synth = sample(fit(gen, train))
    runtimes["generate"] = time.perf_counter() - t
    distance = dataset_distance(synth, train)

    profiles = dict(profiles or {})
    shadow_times = dict(profile_times or {})
    for key, pgen in profiles_needed(cfg).items():
        if key not in profiles:
            profiles[key], shadow_times[key] = build_profile(
                pgen, aux, cfg.train_size, cfg.shadow_runs, derive_seed(cfg.seed, "shadow"))

    reports: dict[str, AttackReport] = {}
    for attack in cfg.attacks:
        t = time.perf_counter()
        scores = _score(attack, cfg, synth, aux, targets, profiles,
                        derive_seed(cfg.seed, "attack", attack))
        zeta_time = time.perf_counter() - t
        base, other = parse_attack(attack)
        shadow = 0.0 if base == "domias" else shadow_times.get(profile_key(cfg, other or cfg.kind), 0.0)
        times = {"shadow": shadow, "zeta": zeta_time, "total": shadow + zeta_time}
        if cfg.set_mode:
            rec = activate(scores, cfg.confidence, cfg.member_fraction)
            sizes = [r.size for r in target_rows]
            bounds = np.cumsum([0] + sizes)
            rec_map = {i: float(p) for i, p in enumerate(rec)}
            sets = {k: list(range(bounds[k], bounds[k + 1])) for k in range(len(sizes))}
            set_p = set_mi(rec_map, sets)
            set_scores = np.array([set_p[k] for k in range(len(sizes))])
            reports[attack] = AttackReport.build(attack, set_scores, labels,
                                                 cfg.member_fraction, cfg.confidence, times)
            rec_labels = np.repeat(labels, sizes)
            reports[f"{attack}/records"] = AttackReport.build(
                f"{attack}/records", scores, rec_labels, cfg.member_fraction, cfg.confidence, times)
        else:
            reports[attack] = AttackReport.build(attack, scores, labels, cfg.member_fraction,
                                                 cfg.confidence, times)
    runtimes["total"] = time.perf_counter() - start
    return TrialResult(cfg, trial, float(distance), reports, runtimes)


# ---------------------------------------------------------------------------
# experiments


RESULT_FIELDS = ["cell", "kind", "epsilon", "train", "synth", "targets", "members", "trial",
                 "attack", "auc", "ma", "distance"]
SUMMARY_FIELDS = ["cell", "kind", "epsilon", "train", "attack", "trials", "auc_mean", "auc_std",
                  "ma_mean", "ma_std", "distance_mean"]


@dataclass
class ExperimentResult:
    results: list[TrialResult]
    failures: dict[tuple[str, int], str]
    profiles: dict[tuple, FPProfile]
    profile_times: dict[tuple, float]

    def rows(self) -> list[dict]:
        return [r for t in self.results for r in t.rows()]

    def summary(self) -> list[dict]:
        groups: dict[tuple[str, str], list[TrialResult]] = {}
        for t in self.results:
            for name in t.reports:
                groups.setdefault((t.config.cell(), name), []).append(t)
        out = []
        for (cell, name), trials in groups.items():
            a = np.array([t.reports[name].auc for t in trials])
            m = np.array([t.reports[name].ma for t in trials])
            d = np.array([t.distance for t in trials])
            c = trials[0].config
            out.append({"cell": cell, "kind": c.kind.value, "epsilon": repr(float(c.epsilon)),
                        "train": c.train_size, "attack": name, "trials": len(trials),
                        "auc_mean": float(a.mean()), "auc_std": float(a.std()),
                        "ma_mean": float(m.mean()), "ma_std": float(m.std()),
                        "distance_mean": float(d.mean())})
        return out

    def mean(self, cell: str, attack: str, metric: str = "auc") -> float:
        vals = [getattr(t.reports[attack], metric) if metric != "distance" else t.distance
                for t in self.results if t.config.cell() == cell and attack in t.reports]
        if not vals:
            raise KeyError((cell, attack))
        return float(np.mean(vals))


def trial_seed(master: int, cfg: TrialConfig, trial: int) -> int:
    return derive_seed(master, "trial", cfg.cell(), trial)


def _run_one(args) -> tuple[str, int, dict | None, str | None]:
    cfg, population, profiles, times, trial = args
    try:
        res = run_trial(cfg, population, profiles, times, trial)
        return cfg.cell(), trial, res.to_json(), None
    except MamamiaError as exc:
        return cfg.cell(), trial, None, f"{type(exc).__name__}: {exc}"


def run_experiment(grid: Sequence[TrialConfig], trials: int, master_seed: int,
                   population: Dataset, jobs: int = 1, out_dir: str | Path | None = None,
                   log=None) -> ExperimentResult:
    """``trials`` seeded trials per grid cell.

    Shadow profiles are built once per (generator, epsilon, train size) on the
    full population and shared by the cell's trials. With ``out_dir`` every
    finished trial is stored as JSON and reused on the next call.
    """
    if trials < 1:
        raise ParameterError("trials must be >= 1")
    cells = [c.cell() for c in grid]
    if len(set(cells)) != len(cells):
        raise ConfigError("grid cells must be distinct")
    store = Path(out_dir) / "trials" if out_dir is not None else None

    profiles: dict[tuple, FPProfile] = {}
    times: dict[tuple, float] = {}
    for cfg in grid:
        for key, gen in profiles_needed(cfg).items():
            if key in profiles:
                continue
            cached = store.parent / "profiles" / f"{_key_name(key)}.json" if store else None
            if cached is not None and cached.exists():
                profiles[key] = FPProfile.load(cached)
                times[key] = 0.0
                continue
            seed = derive_seed(master_seed, "profile", *map(str, key))
            profiles[key], times[key] = build_profile(gen, population, cfg.train_size,
                                                      cfg.shadow_runs, seed, jobs)
            if log:
                log(f"profile {key[0]} eps={key[1]:g} n={key[2]}: {len(profiles[key])} focal "
                    f"points in {times[key]:.1f}s")
            if cached is not None:
                cached.parent.mkdir(parents=True, exist_ok=True)
                profiles[key].save(cached)

    done: dict[tuple[str, int], TrialResult] = {}
    todo = []
    for cfg in grid:
        for t in range(trials):
            path = store / cfg.cell() / f"{t}.json" if store else None
            if path is not None and path.exists():
                done[(cfg.cell(), t)] = TrialResult.from_json(json.loads(path.read_text("utf-8")))
                continue
            tcfg = _replace(cfg, seed=trial_seed(master_seed, cfg, t))
            need = {k: profiles[k] for k in profiles_needed(cfg)}
            todo.append((tcfg, population, need, {k: times[k] for k in need}, t))

    failures: dict[tuple[str, int], str] = {}
    if jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outs = list(pool.map(_run_one, todo))
    else:
        outs = [_run_one(a) for a in todo]
    for cell, t, obj, err in outs:
        if err is not None:
            failures[(cell, t)] = err
            continue
        res = TrialResult.from_json(obj)
        done[(cell, t)] = res
        if store is not None:
            path = store / cell / f"{t}.json"
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(json.dumps(obj), encoding="utf-8")
        if log:
            aucs = " ".join(f"{k}={r.auc:.3f}" for k, r in res.reports.items())
            log(f"{cell} trial {t}: {aucs}")
    ordered = [done[(c.cell(), t)] for c in grid for t in range(trials) if (c.cell(), t) in done]
    result = ExperimentResult(ordered, failures, profiles, times)
    if out_dir is not None:
        write_outputs(result, out_dir)
    return result


def _key_name(key: tuple) -> str:
    return f"{key[0]}_eps{key[1]:g}_n{key[2]}_r{key[3]}_" + \
        hashlib.blake2b(json.dumps(key).encode(), digest_size=6).hexdigest()


def _write_csv(path: Path, fields: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def write_outputs(result: ExperimentResult, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "results.csv", RESULT_FIELDS, result.rows())
    _write_csv(out / "summary.csv", SUMMARY_FIELDS, result.summary())
    timings = [r for t in result.results for r in t.timing_rows()]
    timings += [{"cell": "profile:" + _key_name(k), "trial": "", "stage": "shadow", "seconds": v}
                for k, v in result.profile_times.items()]
    _write_csv(out / "timings.csv", ["cell", "trial", "stage", "seconds"], timings)
    if result.failures:
        (out / "failures.json").write_text(
            json.dumps([{"cell": c, "trial": t, "error": e}
                        for (c, t), e in sorted(result.failures.items())], indent=1),
            encoding="utf-8")


# ---------------------------------------------------------------------------
# grid construction from a config mapping


def build_grid(spec: Mapping) -> list[TrialConfig]:
    """Cells from ``kinds`` x ``epsilons`` x ``sizes`` (named size rows or explicit lists)."""
    allowed = {"kinds", "epsilons", "sizes", "attacks", "shadow_runs", "set_mode", "set_size",
               "overlap", "confidence", "omega", "gsd", "parent_cap"}
    unknown = set(spec) - allowed
    if unknown:
        raise ConfigError(f"unknown grid fields: {sorted(unknown)}")
    kinds = [GeneratorKind.parse(k) for k in spec.get("kinds", ["mst"])]
    eps_field = spec.get("epsilons", [10.0])
    epsilons = list(EPS_GRID) if eps_field == "full" else [float(e) for e in eps_field]
    sizes = []
    for s in spec.get("sizes", ["iii"]):
        if isinstance(s, str):
            if s not in SIZE_ROWS:
                raise ConfigError(f"unknown size row {s!r}; use one of {sorted(SIZE_ROWS)}")
            sizes.append(SIZE_ROWS[s])
        else:
            if len(s) != 4:
                raise ConfigError("explicit sizes are [train, synth, targets, members]")
            sizes.append(tuple(int(x) for x in s))
    grid = []
    for kind in kinds:
        for eps in epsilons:
            for t, s, n, m in sizes:
                gen = GeneratorConfig.from_json({"kind": kind.value, "epsilon": eps,
                                                 "gsd": spec.get("gsd", {}),
                                                 "parent_cap": spec.get("parent_cap")})
                grid.append(TrialConfig(
                    gen, t, s, n, m, tuple(spec.get("attacks", ["mamamia"])),
                    set_mode=bool(spec.get("set_mode", False)),
                    set_size=int(spec.get("set_size", 5)),
                    overlap=bool(spec.get("overlap", False)),
                    shadow_runs=int(spec.get("shadow_runs", 50)),
                    confidence=float(spec.get("confidence", 1.0)),
                    omega=spec.get("omega")))
    return grid
