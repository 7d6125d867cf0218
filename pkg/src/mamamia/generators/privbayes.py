"""Greedy Bayesian-network generator with an epsilon-dependent parent cap."""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .. import kernels
from ..data import Dataset, Schema
from ..dp import Budget, NoisyMeasurement, exponential_select, laplace_counts, mi_sensitivity
from ..errors import ParameterError
from ..stats import FocalPoint, mutual_information_codes, raw_counts
from .mst import allocate

MAX_CANDIDATES = 5000
MAX_PARENTS = 4


def parent_cap(epsilon: float, override: int | None = None) -> int:
    """Largest allowed parent set: clamp(floor(log10 eps) + 2, 1, 4)."""
    if override is not None:
        return int(override)
    if math.isinf(epsilon):
        return MAX_PARENTS
    return int(min(max(math.floor(math.log10(epsilon)) + 2, 1), MAX_PARENTS))


@dataclass
class BayesNet:
    schema: Schema
    order: list[int]
    parents: dict[int, tuple[int, ...]]
    measurements: dict[int, NoisyMeasurement] | None = None

    def focal_points(self) -> list[FocalPoint]:
        root = self.order[0]
        fps = [FocalPoint.marginal(root)]
        fps += [FocalPoint.conditional(v, self.parents[v]) for v in self.order[1:]]
        return fps

    def to_json(self) -> dict:
        out = {"order": self.order,
               "parents": {str(v): list(p) for v, p in self.parents.items()}}
        if self.measurements is not None:
            out["measurements"] = {str(v): m.counts.tolist()
                                   for v, m in self.measurements.items()}
        return out


class _Scorer:
    """Caches joint parent codes and (child, parents) mutual information."""

    def __init__(self, d: Dataset):
        self.rows = d.rows
        self.sizes = d.schema.sizes
        self.logtab = kernels.log_table(len(d))
        self._codes: dict[tuple[int, ...], tuple[np.ndarray, int]] = {}
        self._mi: dict[tuple[int, tuple[int, ...]], float] = {}

    def code(self, subset: tuple[int, ...]) -> tuple[np.ndarray, int]:
        hit = self._codes.get(subset)
        if hit is None:
            shape = tuple(self.sizes[s] for s in subset)
            codes = np.ravel_multi_index(tuple(self.rows[:, s] for s in subset), shape)
            hit = (codes.astype(np.int64), int(np.prod(shape)))
            self._codes[subset] = hit
        return hit

    def mi(self, child: int, subset: tuple[int, ...]) -> float:
        key = (child, subset)
        hit = self._mi.get(key)
        if hit is None:
            y, dy = self.code(subset)
            hit = mutual_information_codes(self.rows[:, child], y, self.sizes[child], dy,
                                           self.logtab)
            self._mi[key] = hit
        return hit


def pb_build(train: Dataset, budget: Budget, fraction: float, k: int,
             rng: np.random.Generator) -> tuple[list[int], dict[int, tuple[int, ...]]]:
    """Greedy network: each step picks a (child, parent subset) pair privately.

    Candidate subsets are the non-empty subsets of already placed nodes with
    at most ``k`` members. When there are more than ``MAX_CANDIDATES`` pairs,
    only the highest-scoring ones (by exact MI) remain eligible.
    """
    l = train.n_features
    first = int(rng.integers(l))
    order = [first]
    parents: dict[int, tuple[int, ...]] = {first: ()}
    if l == 1:
        return order, parents
    scorer = _Scorer(train)
    sens = mi_sensitivity(len(train))
    steps = l - 1
    while len(order) < l:
        eps = budget.spend("select:privbayes", fraction / steps)
        placed = sorted(order)
        todo = [v for v in range(l) if v not in parents]
        subsets = [s for size in range(1, min(k, len(placed)) + 1)
                   for s in combinations(placed, size)]
        cand = [(c, s) for c in todo for s in subsets]
        scores = np.array([scorer.mi(c, s) for c, s in cand])
        if len(cand) > MAX_CANDIDATES:
            keep = np.sort(np.argsort(-scores, kind="stable")[:MAX_CANDIDATES])
            cand = [cand[i] for i in keep]
            scores = scores[keep]
        child, subset = cand[exponential_select(scores, eps, sens, rng)]
        order.append(child)
        parents[child] = subset
    return order, parents


def pb_measure(train: Dataset, net: BayesNet, budget: Budget, fraction: float,
               rng: np.random.Generator) -> dict[int, NoisyMeasurement]:
    """Noisy (parents..., child) counts per node; the root gets a 1-way table."""
    share = fraction / len(net.order)
    out = {}
    for v in net.order:
        eps = budget.spend("measure:privbayes", share)
        ps = net.parents[v]
        fp = FocalPoint.conditional(v, ps) if ps else FocalPoint.marginal(v)
        out[v] = laplace_counts(raw_counts(train, fp.columns).astype(float), eps, 1.0, rng,
                                fp=fp)
    return out


def pb_sample(net: BayesNet, n: int, rng: np.random.Generator,
              method: str = "round") -> Dataset:
    """Ancestral sampling in node order from the clipped, row-normalized tables.

    ``method`` is as for :func:`mst_sample`: ``"round"`` gives each parent
    group rounded counts of its conditional, ``"iid"`` draws cells independently.
    """
    if method not in ("round", "iid"):
        raise ParameterError("method must be 'round' or 'iid'")
    sizes = net.schema.sizes
    rows = np.zeros((n, len(sizes)), dtype=np.int64)
    for v in net.order:
        m = net.measurements[v]
        dist = m.distribution()
        ps = m.fp.features if m.fp.is_conditional else ()
        if ps:
            table = dist.reshape(-1, sizes[v])
            codes = np.ravel_multi_index(tuple(rows[:, p] for p in ps),
                                         tuple(sizes[p] for p in ps)) if n else \
                np.empty(0, np.int64)
        else:
            table = dist.reshape(1, -1)
            codes = np.zeros(n, np.int64)
        if method == "round":
            groups, inv = np.unique(codes, return_inverse=True)
            members = np.argsort(inv, kind="stable")
            bounds = np.r_[0, np.cumsum(np.bincount(inv.reshape(-1), minlength=groups.size))]
            for g, code in enumerate(groups):
                idx = members[bounds[g]:bounds[g + 1]]
                rows[idx, v] = allocate(table[code], idx.size, rng)
            continue
        cdf = np.cumsum(table, axis=1)
        cdf[:, -1] = 1.0
        rows[:, v] = kernels.sample_rows(cdf, codes, rng.random(n))
    return Dataset(net.schema, rows)


def fit_privbayes(cfg, train: Dataset, fp_only: bool, streams):
    k = parent_cap(cfg.epsilon, cfg.parent_cap)
    order, parents = pb_build(train, streams.budget, 0.5, k, streams.selection)
    net = BayesNet(train.schema, order, parents)
    if fp_only:
        return net.focal_points(), None
    net.measurements = pb_measure(train, net, streams.budget, 0.5, streams.measurement)
    return net.focal_points(), net
