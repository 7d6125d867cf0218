"""Maximum-spanning-tree generator over pairwise mutual information."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..data import Dataset, Schema
from ..dp import Budget, NoisyMeasurement, exponential_select, laplace_counts, mi_sensitivity
from ..errors import DomainError, ParameterError
from ..stats import FocalPoint, pairwise_mi, raw_counts


class _Forest:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, a: int) -> int:
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[max(ra, rb)] = min(ra, rb)
        return True


def mst_select(train: Dataset, budget: Budget, fraction: float, rng: np.random.Generator,
               manual_edges=None) -> list[tuple[int, int]]:
    """Kruskal-style tree built from exponential-mechanism picks.

    ``manual_edges`` are inserted first without spending budget; the
    remaining ``l - 1 - len(manual)`` picks share ``fraction`` of the budget.
    """
    l = train.n_features
    if l < 2:
        raise DomainError("a spanning tree needs at least two features")
    forest = _Forest(l)
    edges: list[tuple[int, int]] = []
    for a, b in manual_edges or ():
        a, b = sorted((int(a), int(b)))
        if not (0 <= a < b < l) or not forest.union(a, b):
            raise ParameterError(f"manual edge {(a, b)} is invalid or closes a cycle")
        edges.append((a, b))
    picks = l - 1 - len(edges)
    if picks == 0:
        return edges
    mi = pairwise_mi(train)
    sens = mi_sensitivity(len(train))
    pairs = [(i, j) for i in range(l) for j in range(i + 1, l)]
    for _ in range(picks):
        eps = budget.spend("select:mst", fraction / picks)
        cand = [p for p in pairs if forest.find(p[0]) != forest.find(p[1])]
        scores = [mi[i, j] for i, j in cand]
        i, j = cand[exponential_select(scores, eps, sens, rng)]
        forest.union(i, j)
        edges.append((i, j))
    return edges


@dataclass
class TreeModel:
    schema: Schema
    edges: list[tuple[int, int]]
    one_way: list[NoisyMeasurement]
    two_way: dict[tuple[int, int], NoisyMeasurement]
    root: int

    def __post_init__(self):
        l = len(self.schema)
        if len(self.edges) != l - 1 or set(self.two_way) != set(self.edges):
            raise DomainError("tree model needs l - 1 measured edges")

    def to_json(self) -> dict:
        return {"root": self.root, "edges": [list(e) for e in self.edges],
                "one_way": [m.counts.tolist() for m in self.one_way],
                "two_way": [self.two_way[e].counts.tolist() for e in self.edges]}


def mst_measure(train: Dataset, edges, budget: Budget, fraction: float,
                rng: np.random.Generator) -> tuple[list[NoisyMeasurement], dict]:
    l = train.n_features
    share = fraction / (2 * l - 1)
    one_way = []
    for i in range(l):
        eps = budget.spend("measure:mst", share)
        one_way.append(laplace_counts(raw_counts(train, (i,)).astype(float), eps, 1.0, rng,
                                      fp=FocalPoint.marginal(i)))
    two_way = {}
    for e in edges:
        eps = budget.spend("measure:mst", share)
        two_way[e] = laplace_counts(raw_counts(train, e).astype(float), eps, 1.0, rng,
                                    fp=FocalPoint.marginal(*e))
    return one_way, two_way


def choose_root(schema: Schema) -> int:
    return int(np.argmax(schema.sizes))


def _cdf(p: np.ndarray) -> np.ndarray:
    c = np.cumsum(p, axis=-1)
    c[..., -1] = 1.0
    return c


def allocate(p: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    """``m`` category draws whose counts round ``p * m`` (shuffled).

    Integer parts are placed deterministically; the leftover draws go to
    categories picked without replacement in proportion to the fractional
    parts. Every count is within one of its expectation.
    """
    frac, whole = np.modf(p * m)
    counts = whole.astype(np.int64)
    extra = m - int(counts.sum())
    if extra > 0:
        nz = int(np.count_nonzero(frac))
        w = frac / frac.sum() if frac.sum() > 0 else np.full(p.size, 1.0 / p.size)
        idx = rng.choice(p.size, extra, replace=nz < extra, p=w)
        np.add.at(counts, idx, 1)
    vals = np.repeat(np.arange(p.size), counts)
    rng.shuffle(vals)
    return vals


def mst_sample(model: TreeModel, n: int, rng: np.random.Generator,
               method: str = "round") -> Dataset:
    """Breadth-first ancestral sampling from the clipped measurements.

    ``method="round"`` fills each parent-value group with rounded counts of
    its conditional (low-variance, as graphical-model synthesizers usually
    do); ``"iid"`` draws every cell independently.
    """
    if method not in ("round", "iid"):
        raise ParameterError("method must be 'round' or 'iid'")
    schema = model.schema
    l = len(schema)
    rows = np.zeros((n, l), dtype=np.int64)
    root = model.root
    root_p = model.one_way[root].distribution()
    if method == "round":
        rows[:, root] = allocate(root_p, n, rng)
    else:
        rows[:, root] = kernels.sample_rows(_cdf(root_p[None, :]), np.zeros(n, np.int64),
                                            rng.random(n))
    adj: dict[int, list[int]] = {i: [] for i in range(l)}
    for a, b in model.edges:
        adj[a].append(b)
        adj[b].append(a)
    seen = {root}
    queue = deque([root])
    while queue:
        p = queue.popleft()
        for c in sorted(adj[p]):
            if c in seen:
                continue
            seen.add(c)
            queue.append(c)
            e = (min(p, c), max(p, c))
            joint = model.two_way[e].clipped()
            if e[0] != p:
                joint = joint.T
            cond = _conditional_rows(joint, model.one_way[c].clipped())
            if method == "round":
                for v in range(cond.shape[0]):
                    grp = np.flatnonzero(rows[:, p] == v)
                    if grp.size:
                        rows[grp, c] = allocate(cond[v], grp.size, rng)
            else:
                rows[:, c] = kernels.sample_rows(_cdf(cond), rows[:, p], rng.random(n))
    return Dataset(schema, rows)


def _conditional_rows(joint: np.ndarray, child_counts: np.ndarray) -> np.ndarray:
    """Rows of P(child | parent); empty rows fall back to the child's own table."""
    s = joint.sum(axis=1, keepdims=True)
    tot = child_counts.sum()
    fallback = child_counts / tot if tot > 0 else np.full(child_counts.shape,
                                                           1.0 / child_counts.size)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(s > 0, joint / np.where(s > 0, s, 1.0), fallback[None, :])


def fit_mst(cfg, train: Dataset, fp_only: bool, streams) -> tuple[list[FocalPoint], TreeModel | None]:
    budget: Budget = streams.budget
    edges = mst_select(train, budget, 0.5, streams.selection, cfg.manual_edges)
    fps = [FocalPoint.marginal(*e) for e in edges]
    if fp_only:
        return fps, None
    one_way, two_way = mst_measure(train, edges, budget, 0.5, streams.measurement)
    return fps, TreeModel(train.schema, edges, one_way, two_way, choose_root(train.schema))
