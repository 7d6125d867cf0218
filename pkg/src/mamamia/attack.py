"""Focal-point membership inference and a density-ratio baseline.

The attack learns which statistics a generator tends to preserve by
re-running it (selection only) on samples of the auxiliary data, then scores
each target by how much more likely its values are under the synthetic data
than under the population, weighting each statistic by how often it was
chosen.
"""

from __future__ import annotations

import json
import math
from itertools import combinations
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.special import expit

from .data import Dataset, sample_indices
from .errors import DomainError, MamamiaError, ParameterError
from .generators import FP_ONLY, GeneratorConfig, GeneratorKind, fit
from .generators.gsd import CELLS, OneHotMap, candidate_queries, query_counts, query_hits
from .rng import derive_rng, derive_seed
from .stats import FocalPoint, estimate

FEATURES = "features"
ONEHOT = "onehot"


@dataclass
class FPProfile:
    """How often each focal point was selected over ``runs`` shadow fits."""

    kind: GeneratorKind
    epsilon: float
    runs: int
    counts: dict[FocalPoint, int]
    space: str = FEATURES

    def __post_init__(self):
        for fp, c in self.counts.items():
            if not 0 < c <= self.runs:
                raise ParameterError(f"count {c} for {fp} outside 1..{self.runs}")

    def __len__(self) -> int:
        return len(self.counts)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def stable_fraction(self, threshold: float = 0.75) -> float:
        """Share of distinct focal points chosen in at least ``threshold`` of runs."""
        if not self.counts:
            return 0.0
        need = threshold * self.runs
        return sum(c >= need for c in self.counts.values()) / len(self.counts)

    def to_json(self) -> dict:
        return {"kind": self.kind.value,
                "epsilon": "inf" if math.isinf(self.epsilon) else self.epsilon,
                "runs": self.runs, "space": self.space,
                "focal_points": [[fp.to_json(), c] for fp, c in self.counts.items()]}

    @classmethod
    def from_json(cls, obj: Mapping) -> "FPProfile":
        counts = {FocalPoint.from_json(f): int(c) for f, c in obj["focal_points"]}
        return cls(GeneratorKind.parse(obj["kind"]), float(obj["epsilon"]), int(obj["runs"]),
                   counts, obj.get("space", FEATURES))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json()), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "FPProfile":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class TargetScore:
    row: int
    zeta: float
    probability: float | None = None
    label: int | None = None


# ---------------------------------------------------------------------------
# shadow modelling


def _shadow_run(cfg: GeneratorConfig, aux: Dataset, train_size: int, seed: int,
                run: int) -> list[FocalPoint]:
    rng = derive_rng(seed, "shadow", run, "sample")
    sample = aux.take(sample_indices(len(aux), train_size, rng))
    run_cfg = cfg.replace(seed=derive_seed(seed, "shadow", run, "fit"), synth_rows=None)
    try:
        return fit(run_cfg, sample, FP_ONLY).focal_points
    except MamamiaError as exc:
        raise type(exc)(f"shadow run {run}: {exc}") from exc


def shadow_profile(cfg: GeneratorConfig, aux: Dataset, train_size: int, runs: int = 50,
                   seed: int = 0, jobs: int = 1) -> FPProfile:
    """Count focal points over ``runs`` selection-only fits on samples of ``aux``."""
    if runs < 1:
        raise ParameterError("runs must be >= 1")
    if train_size > len(aux):
        raise ParameterError(f"train size {train_size} exceeds the {len(aux)} auxiliary rows")
    if jobs > 1 and runs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_shadow_run, *zip(*[(cfg, aux, train_size, seed, r)
                                                         for r in range(runs)])))
    else:
        results = [_shadow_run(cfg, aux, train_size, seed, r) for r in range(runs)]
    counts: dict[FocalPoint, int] = {}
    for fps in results:
        for fp in dict.fromkeys(fps):
            counts[fp] = counts.get(fp, 0) + 1
    space = ONEHOT if cfg.kind is GeneratorKind.GSD else FEATURES
    return FPProfile(cfg.kind, cfg.epsilon, runs, counts, space)


def _shape_space(shape: tuple[bool, int], sizes: Sequence[int], space: str) -> list[FocalPoint]:
    """Every focal point of one (conditional?, width) shape, in a fixed order."""
    conditional, width = shape
    l = len(sizes)
    if space == ONEHOT:
        if width > l:
            return []
        return [FocalPoint.marginal(*q) for q in
                candidate_queries(OneHotMap(tuple(sizes)), width).tolist()]
    if conditional:
        return [FocalPoint.conditional(child, parents) for child in range(l)
                for parents in combinations([f for f in range(l) if f != child], width - 1)]
    return [FocalPoint.marginal(*feats) for feats in combinations(range(l), width)]


def random_profile(profile: FPProfile, sizes: Sequence[int],
                   rng: np.random.Generator) -> FPProfile:
    """Same number, shapes and weights of focal points, on random features.

    Focal points of each shape are drawn without replacement from every
    focal point of that shape, so the draw never stalls on a dense profile.
    """
    groups: dict[tuple[bool, int], list[int]] = {}
    for fp, w in profile.counts.items():
        groups.setdefault((fp.is_conditional, len(fp.columns)), []).append(w)
    counts: dict[FocalPoint, int] = {}
    for shape in sorted(groups):
        weights = groups[shape]
        pool = _shape_space(shape, sizes, profile.space)
        if len(pool) < len(weights):
            raise ParameterError("too few distinct focal points for a random profile")
        for i, w in zip(rng.choice(len(pool), size=len(weights), replace=False), weights):
            counts[pool[int(i)]] = w
    return FPProfile(profile.kind, profile.epsilon, profile.runs, counts, profile.space)


# ---------------------------------------------------------------------------
# density ratios


def _check_schema(*ds: Dataset) -> None:
    first = ds[0].schema
    for d in ds[1:]:
        if d.schema != first:
            raise DomainError("synthetic, auxiliary and target data must share a schema")


def _feature_probs(d: Dataset, fp: FocalPoint, pseudo: float, targets: Dataset) -> np.ndarray:
    if len(d) == 0 and pseudo == 0:
        # no synthetic evidence at all: every probability is zero
        return np.zeros(len(targets))
    return estimate(d, fp, pseudo).prob_of(targets.rows)


def _onehot_probs(d: Dataset, queries: np.ndarray, pseudo: float,
                  target_cells: np.ndarray) -> np.ndarray:
    counts = query_counts(d.rows, OneHotMap(d.schema.sizes), queries).astype(float) + pseudo
    tot = counts.sum(axis=1, keepdims=True)
    probs = np.divide(counts, tot, out=np.zeros_like(counts), where=tot > 0)
    return probs[np.arange(len(queries))[:, None], target_cells]


def _target_cells(targets: Dataset, queries: np.ndarray) -> np.ndarray:
    return query_hits(targets.rows, OneHotMap(targets.schema.sizes), queries).T.astype(np.int64)


def ratio_terms(synth: Dataset, aux: Dataset, profile: FPProfile, targets: Dataset,
                floor: bool = False, aux_pseudo: float = 1.0,
                ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per focal point: weights (F,), synthetic (F, T) and auxiliary (F, T) probabilities.

    Synthetic tables are unsmoothed; auxiliary tables add ``aux_pseudo``
    counts per cell. With ``floor`` the synthetic probabilities are raised to half
    the smallest non-zero frequency a table of ``|synth|`` rows can hold.
    """
    _check_schema(synth, aux, targets)
    fps = list(profile.counts)
    weights = np.array([profile.counts[fp] for fp in fps], dtype=float)
    if not fps:
        empty = np.zeros((0, len(targets)))
        return weights, empty, empty
    if profile.space == ONEHOT:
        queries = np.array([fp.features for fp in fps], dtype=np.int64)
        cells_t = _target_cells(targets, queries)
        ps = _onehot_probs(synth, queries, 0.0, cells_t)
        pa = _onehot_probs(aux, queries, aux_pseudo, cells_t)
        n_cells = np.full(len(fps), float(CELLS))
    else:
        sizes = synth.schema.sizes
        ps = np.stack([_feature_probs(synth, fp, 0.0, targets) for fp in fps])
        pa = np.stack([_feature_probs(aux, fp, aux_pseudo, targets) for fp in fps])
        n_cells = np.array([math.prod(sizes[c] for c in fp.columns) for fp in fps], float)
    if floor:
        lo = 1.0 / (2.0 * max(len(synth), 1) * n_cells)
        ps = np.maximum(ps, lo[:, None])
    return weights, ps, pa


def zeta(synth: Dataset, aux: Dataset, profile: FPProfile, targets: Dataset,
         aux_pseudo: float = 1.0) -> np.ndarray:
    """Weighted sum over focal points of P_synth(F(t)) / P_aux(F(t))."""
    w, ps, pa = ratio_terms(synth, aux, profile, targets, aux_pseudo=aux_pseudo)
    out = np.zeros(len(targets))
    for i in range(len(w)):
        out += w[i] * (ps[i] / pa[i])
    return out


def zeta_log(synth: Dataset, aux: Dataset, profile: FPProfile, targets: Dataset,
             omega: int = 40, aux_pseudo: float = 1.0) -> np.ndarray:
    """exp of the summed log ratios over focal points chosen at least ``omega`` times."""
    if not 0 <= omega <= profile.runs:
        raise ParameterError(f"omega must lie in 0..{profile.runs}")
    w, ps, pa = ratio_terms(synth, aux, profile, targets, floor=True, aux_pseudo=aux_pseudo)
    g = np.zeros(len(targets))
    for i in np.flatnonzero(w >= omega):
        g += np.log(ps[i] / pa[i])
    return np.exp(g)


def domias_score(synth: Dataset, aux: Dataset, targets: Dataset,
                 pseudo: float = 1.0) -> np.ndarray:
    """Ratio of independent-feature densities, each 1-way table smoothed by ``pseudo``."""
    _check_schema(synth, aux, targets)
    log_s = np.zeros(len(targets))
    with np.errstate(divide="ignore"):
        for f in range(targets.n_features):
            fp = FocalPoint.marginal(f)
            log_s += np.log(estimate(synth, fp, pseudo).prob_of(targets.rows))
            log_s -= np.log(estimate(aux, fp, pseudo).prob_of(targets.rows))
    return np.exp(log_s)


# ---------------------------------------------------------------------------
# activation


def activate(scores, c: float = 1.0, member_fraction: float = 0.5) -> np.ndarray:
    """Sigmoid of ``c * (log zeta - m)``.

    ``m`` is the (N - k)-th smallest log score with ``k = ceil(fraction * N)``,
    so exactly ``k`` targets land strictly above one half when the log scores
    are distinct at double resolution (a gap below ~1e-16 rounds the sigmoid
    to exactly 0.5). A zero score maps to 0; identical scores all map to 0.5.
    """
    z = np.asarray(scores, dtype=float)
    if z.ndim != 1 or z.size == 0:
        raise ParameterError("need at least one score")
    if np.any(z < 0) or np.any(np.isnan(z)):
        raise ParameterError("scores must be non-negative")
    if not c > 0:
        raise ParameterError("c must be > 0")
    if not 0 < member_fraction < 1:
        raise ParameterError("member fraction must lie in (0, 1)")
    if np.all(z == z[0]):
        return np.full(z.size, 0.0 if z[0] == 0 else 0.5)
    with np.errstate(divide="ignore"):
        x = np.log(z)
    n = z.size
    k = math.ceil(member_fraction * n)
    xs = np.sort(x)
    m = xs[n - k - 1] if n - k >= 1 else xs[0] - 1.0
    out = np.empty(n)
    zero = np.isneginf(x)
    if np.isneginf(m):
        out[:] = 1.0
    else:
        with np.errstate(invalid="ignore"):
            out[:] = expit(c * (x - m))
    out[zero] = 0.0
    return out


def activate_unknown(scores, c: float = 1.0) -> np.ndarray:
    """min(zeta ** (1 / c) / 2, 1) for when the member share is unknown."""
    if c < 1:
        raise ParameterError("c must be >= 1")
    z = np.asarray(scores, dtype=float)
    if np.any(z < 0):
        raise ParameterError("scores must be non-negative")
    return np.minimum(np.power(z, 1.0 / c) / 2.0, 1.0)


def set_mi(record_probs: Mapping[int, float], sets: Mapping[int, Sequence[int]]) -> dict:
    """Mean record probability per set."""
    out = {}
    for sid, members in sets.items():
        if len(members) == 0:
            raise ParameterError(f"set {sid} is empty")
        try:
            out[sid] = float(np.mean([record_probs[m] for m in members]))
        except KeyError as exc:
            raise ParameterError(f"set {sid}: no probability for record {exc.args[0]}") from None
    return out
