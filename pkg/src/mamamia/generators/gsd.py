"""Evolutionary generator fitting noisy marginals over one-hot columns.

Queries are conjunctions of ``arity`` binary columns taken from distinct
features. A query answer is the two-cell frequency table
``[not all columns set, all columns set]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations, product
from typing import Callable

import numpy as np

from .. import kernels
from ..data import Dataset, Schema
from ..dp import Budget, exponential_select, laplace_noise
from ..errors import ParameterError
from ..stats import FocalPoint
from .base import GsdParams

SCALE = 1 << 20
_CELL_BUDGET = 1 << 22


@dataclass(frozen=True)
class OneHotMap:
    sizes: tuple[int, ...]
    offsets: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "offsets",
                           tuple(int(x) for x in np.concatenate([[0], np.cumsum(self.sizes)[:-1]])))

    @classmethod
    def for_schema(cls, schema: Schema) -> "OneHotMap":
        return cls(tuple(schema.sizes))

    @property
    def width(self) -> int:
        return int(sum(self.sizes))

    def column(self, feature: int, category: int) -> int:
        return self.offsets[feature] + category

    def decode(self, columns) -> tuple[np.ndarray, np.ndarray]:
        """Feature and category arrays for binary column indices."""
        cols = np.asarray(columns, dtype=np.int64)
        feat = np.searchsorted(np.asarray(self.offsets), cols, side="right") - 1
        return feat, cols - np.asarray(self.offsets)[feat]

    def encode(self, rows: np.ndarray) -> np.ndarray:
        out = np.zeros((rows.shape[0], self.width), dtype=np.int8)
        for f, off in enumerate(self.offsets):
            out[np.arange(rows.shape[0]), off + rows[:, f]] = 1
        return out


def candidate_queries(onehot: OneHotMap, arity: int) -> np.ndarray:
    """All sorted ``arity``-tuples of binary columns from distinct features."""
    l = len(onehot.sizes)
    if arity > l:
        raise ParameterError(f"arity {arity} exceeds the feature count {l}")
    out = []
    for feats in combinations(range(l), arity):
        for cats in product(*(range(onehot.sizes[f]) for f in feats)):
            out.append([onehot.column(f, c) for f, c in zip(feats, cats)])
    return np.asarray(out, dtype=np.int64).reshape(-1, arity)


CELLS = 2


def query_hits(rows: np.ndarray, onehot: OneHotMap, queries: np.ndarray) -> np.ndarray:
    """Boolean (len(rows), len(queries)): row satisfies the conjunction."""
    qf, qc = onehot.decode(queries)
    return np.all(rows[:, qf] == qc[None, :, :], axis=2)


def query_counts(rows: np.ndarray, onehot: OneHotMap, queries: np.ndarray) -> np.ndarray:
    """Counts per query, shape (len(queries), 2): rows failing, rows satisfying."""
    q, k = queries.shape
    out = np.zeros((q, CELLS), dtype=np.int64)
    if rows.shape[0] == 0 or q == 0:
        return out
    block = max(1, _CELL_BUDGET // (rows.shape[0] * k))
    for s in range(0, q, block):
        out[s:s + block, 1] = query_hits(rows, onehot, queries[s:s + block]).sum(axis=0)
    out[:, 0] = rows.shape[0] - out[:, 1]
    return out


def uniform_answers(onehot: OneHotMap, queries: np.ndarray) -> np.ndarray:
    """Expected answers for data with every feature uniform and independent."""
    qf, _ = onehot.decode(queries)
    hit = np.prod(1.0 / np.asarray(onehot.sizes, dtype=float)[qf], axis=1)
    return np.stack([1.0 - hit, hit], axis=1)


def select_batch(exact: np.ndarray, reference: np.ndarray, taken: np.ndarray, count: int,
                 budget: Budget, fraction: float, sensitivity: float,
                 rng: np.random.Generator) -> list[int]:
    """Pick ``count`` unused candidates by worst-cell error against ``reference``."""
    scores = np.abs(reference - exact).max(axis=1)
    picked = []
    for _ in range(count):
        eps = budget.spend("select:gsd", fraction)
        avail = np.flatnonzero(~taken)
        i = int(avail[exponential_select(scores[avail], eps, sensitivity, rng)])
        taken[i] = True
        picked.append(i)
    return picked


def gsd_select_queries(train: Dataset, budget: Budget, fraction: float, params: GsdParams,
                       rng: np.random.Generator,
                       refine: Callable[[np.ndarray, int], np.ndarray | None] | None = None,
                       ) -> list[int]:
    """Adaptive rounds of private query selection.

    ``refine(picked, round)`` is called after every round but the last with
    the candidate indices picked so far, and returns the reference answers
    (over all candidates) that the next round scores against. Without it the
    uniform reference is reused.
    """
    onehot = OneHotMap.for_schema(train.schema)
    cand = candidate_queries(onehot, params.arity)
    if params.queries > len(cand):
        raise ParameterError(f"{params.queries} queries requested, only {len(cand)} exist")
    exact = query_counts(train.rows, onehot, cand) / max(len(train), 1)
    reference = uniform_answers(onehot, cand)
    taken = np.zeros(len(cand), dtype=bool)
    sens = 1.0 / max(len(train), 1)
    picked: list[int] = []
    for r, size in enumerate(_split(params.queries, params.rounds)):
        picked += select_batch(exact, reference, taken, size, budget,
                               fraction / params.queries, sens, rng)
        if refine is not None and r < params.rounds - 1:
            ref = refine(np.asarray(picked), r)
            if ref is not None:
                reference = ref
    return picked


def _split(total: int, parts: int) -> list[int]:
    base, extra = divmod(total, parts)
    return [base + (1 if i < extra else 0) for i in range(parts)]


def gsd_measure(train: Dataset, queries: np.ndarray, budget: Budget, fraction_each: float,
                rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Noisy counts per query and their clipped, renormalized frequencies."""
    onehot = OneHotMap.for_schema(train.schema)
    raw = query_counts(train.rows, onehot, queries).astype(float)
    noisy = np.empty_like(raw)
    for i in range(len(queries)):
        eps = budget.spend("measure:gsd", fraction_each)
        noisy[i] = raw[i] + laplace_noise(raw.shape[1], eps, 1.0, rng)
    clipped = np.clip(noisy, 0.0, None)
    s = clipped.sum(axis=1, keepdims=True)
    freq = np.where(s > 0, clipped / np.where(s > 0, s, 1.0), 1.0 / raw.shape[1])
    return noisy, freq


class Evolver:
    """Elitist search over candidate datasets against fixed-point integer targets."""

    def __init__(self, sizes: tuple[int, ...], n_rows: int, params: GsdParams,
                 rng: np.random.Generator, backend: str | None = None):
        self.sizes = np.asarray(sizes, dtype=np.int64)
        self.onehot = OneHotMap(tuple(int(s) for s in sizes))
        self.n = int(n_rows)
        self.params = params
        self.rng = rng
        self.backend = backend
        l = len(sizes)
        pop = rng.integers(0, self.sizes, size=(params.population, self.n, l)).astype(np.int32)
        self.candidates = pop
        self.pool: np.ndarray | None = None
        self.counts: np.ndarray | None = None
        self.fit: np.ndarray | None = None
        self.rank: np.ndarray | None = None
        self.queries = np.empty((0, params.arity), np.int64)
        self.targets = np.empty((0, CELLS), np.int64)
        self.history: list[int] = []
        self.generations = 0

    def elites(self) -> np.ndarray:
        """Current elite datasets, best first."""
        return self.pool[self.rank]

    def set_targets(self, queries: np.ndarray, freqs: np.ndarray) -> None:
        """Replace the query set and re-rank the current candidates against it."""
        self.queries = np.asarray(queries, dtype=np.int64)
        self.targets = np.rint(np.asarray(freqs) * (self.n * SCALE)).astype(np.int64)
        cands = self.candidates if self.pool is None else self.elites()
        counts = np.stack([query_counts(c, self.onehot, self.queries) for c in cands])
        fit = np.abs(counts * SCALE - self.targets[None]).sum(axis=(1, 2))
        order = np.argsort(fit, kind="stable")[: self.params.elites]
        E = len(order)
        self.pool = np.concatenate([cands[order], np.zeros_like(cands[order])])
        self.counts = np.concatenate([counts[order], np.zeros_like(counts[order])])
        self.fit = np.concatenate([fit[order], np.zeros(E, np.int64)])
        self.rank = np.arange(E, dtype=np.int64)
        self.candidates = None

    @property
    def best_rows(self) -> np.ndarray:
        return np.asarray(self.pool[self.rank[0]], dtype=np.int64)

    @property
    def best_fit(self) -> int:
        return int(self.fit[self.rank[0]])

    @property
    def best_fitness(self) -> float:
        return self.best_fit / (self.n * SCALE)

    def best_answers(self, onehot: OneHotMap, cand: np.ndarray) -> np.ndarray:
        return query_counts(self.best_rows, onehot, cand) / max(self.n, 1)

    def run(self, generations: int) -> int:
        """Evolve up to ``generations`` steps; return how many ran."""
        p = self.params
        E = p.elites
        n_off = p.population - E
        if generations <= 0 or n_off == 0 or self.n == 0 or len(self.queries) == 0:
            return 0
        qf, qc = self.onehot.decode(self.queries)
        qf = np.ascontiguousarray(qf)
        qc = np.ascontiguousarray(qc.astype(np.int32))
        l = len(self.sizes)
        n_mut = math.ceil(n_off / 2)
        stall, best, done = 0, self.best_fit, 0
        rng = self.rng
        while done < generations:
            g = min(p.chunk, generations - done)
            shape = (g, n_off)
            dr = rng.integers(0, self.n, shape)
            df = rng.integers(0, l, shape)
            dv = rng.integers(0, self.sizes[df])
            dpa = rng.integers(0, E, shape)
            dpb = (dpa + rng.integers(1, E, shape)) % E if E > 1 else dpa.copy()
            dr2 = rng.integers(0, self.n, shape)
            dcut = rng.integers(1, l, shape) if l > 1 else np.zeros(shape, np.int64)
            hist = np.empty(g, np.int64)
            ran, stall, best, stopped = kernels.evolve_chunk(
                self.pool, self.counts, self.fit, self.rank, self.targets, qf, qc, SCALE, n_mut, dr, df, dv, dpa, dpb, dr2, dcut,
                stall, best, p.patience, hist, backend=self.backend)
            self.history.extend(int(h) for h in hist[:ran])
            done += ran
            if stopped:
                break
        self.generations += done
        return done


@dataclass
class GsdModel:
    schema: Schema
    queries: np.ndarray
    answers: np.ndarray
    rows: np.ndarray
    fitness: float
    generations: int
    history: list[int]

    def to_json(self) -> dict:
        return {"queries": self.queries.tolist(), "answers": self.answers.tolist(),
                "fitness": self.fitness, "generations": self.generations}


def gsd_sample(model: GsdModel, n: int, rng: np.random.Generator) -> Dataset:
    """The fitted dataset itself when ``n`` matches, otherwise rows drawn from it."""
    m = model.rows.shape[0]
    if n == m:
        return Dataset(model.schema, model.rows)
    if m == 0:
        raise ParameterError("cannot resample from an empty fitted dataset")
    idx = rng.choice(m, size=n, replace=n > m)
    return Dataset(model.schema, model.rows[idx])


def fit_gsd(cfg, train: Dataset, fp_only: bool, streams, backend: str | None = None):
    p: GsdParams = cfg.gsd
    budget: Budget = streams.budget
    onehot = OneHotMap.for_schema(train.schema)
    cand = candidate_queries(onehot, p.arity)
    n_rows = len(train) if cfg.synth_rows is None else cfg.synth_rows
    evolver = Evolver(train.schema.sizes, n_rows, p, streams.synthesis, backend)
    per_round = _split(p.generations, p.rounds)
    measured: list[int] = []
    answers: list[np.ndarray] = []
    meas_share = 0.5 / p.queries

    def absorb(picked: np.ndarray, r: int) -> None:
        new = [int(i) for i in picked[len(measured):]]
        _, freq = gsd_measure(train, cand[new], budget, meas_share, streams.measurement)
        measured.extend(new)
        answers.append(freq)
        evolver.set_targets(cand[measured], np.concatenate(answers))
        evolver.run(per_round[r])

    def refine(picked: np.ndarray, r: int) -> np.ndarray:
        absorb(picked, r)
        return evolver.best_answers(onehot, cand)

    picked = gsd_select_queries(train, budget, 0.5, p, streams.selection, refine)
    queries = cand[np.asarray(picked)]
    fps = [FocalPoint.marginal(*map(int, q)) for q in queries]
    if fp_only:
        return fps, None
    absorb(np.asarray(picked), p.rounds - 1)
    model = GsdModel(train.schema, queries, np.concatenate(answers), evolver.best_rows,
                     evolver.best_fitness, evolver.generations, evolver.history)
    return fps, model
