"""Exact marginals, conditionals, mutual information and Wasserstein distance."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import kernels
from .data import Dataset
from .errors import DegenerateEstimateError, DomainError, ParameterError, SizeError

MARGINAL = "marginal"
CONDITIONAL = "conditional"


@dataclass(frozen=True)
class FocalPoint:
    """A statistic over a feature subset: a joint marginal or a conditional.

    Marginal features are stored sorted so that equality is structural.
    For conditionals, ``features`` are the (sorted) parents and ``child`` is
    the predicted feature.
    """

    kind: str
    features: tuple[int, ...]
    child: int | None = None

    def __post_init__(self):
        feats = tuple(int(f) for f in self.features)
        if not feats:
            raise ParameterError("a focal point needs at least one feature")
        if len(set(feats)) != len(feats):
            raise ParameterError("focal point features must be distinct")
        if self.kind == MARGINAL:
            if self.child is not None:
                raise ParameterError("marginals have no child")
        elif self.kind == CONDITIONAL:
            if self.child is None or int(self.child) in feats:
                raise ParameterError("a conditional needs a child outside its parents")
            object.__setattr__(self, "child", int(self.child))
        else:
            raise ParameterError(f"unknown focal point kind {self.kind!r}")
        object.__setattr__(self, "features", tuple(sorted(feats)))

    @classmethod
    def marginal(cls, *features: int) -> "FocalPoint":
        return cls(MARGINAL, tuple(features))

    @classmethod
    def conditional(cls, child: int, parents: Sequence[int]) -> "FocalPoint":
        return cls(CONDITIONAL, tuple(parents), child)

    @property
    def is_conditional(self) -> bool:
        return self.kind == CONDITIONAL

    @property
    def columns(self) -> tuple[int, ...]:
        """Table axes in storage order: features, then the child if any."""
        return self.features + ((self.child,) if self.child is not None else ())

    def validate(self, n_features: int) -> None:
        if max(self.columns) >= n_features or min(self.columns) < 0:
            raise DomainError(f"{self} references a feature outside the schema")

    def __str__(self) -> str:
        names = ",".join(map(str, self.features))
        return f"P({self.child}|{names})" if self.is_conditional else f"P({names})"

    def to_json(self) -> dict:
        out = {"kind": self.kind, "features": list(self.features)}
        if self.child is not None:
            out["child"] = self.child
        return out

    @classmethod
    def from_json(cls, obj: Mapping) -> "FocalPoint":
        return cls(obj["kind"], tuple(obj["features"]), obj.get("child"))


class ProbabilityTable:
    """Dense (possibly noisy) counts over the product domain of a focal point.

    ``counts`` has one axis per entry of ``fp.columns``. Negative counts are
    clipped to zero before probabilities are formed.
    """

    def __init__(self, fp: FocalPoint, counts, pseudo_count: float = 0.0):
        counts = np.asarray(counts, dtype=float)
        if counts.ndim != len(fp.columns):
            raise DomainError(f"counts must have {len(fp.columns)} axes for {fp}")
        if pseudo_count < 0:
            raise ParameterError("pseudo-count must be >= 0")
        self.fp = fp
        self.counts = counts
        self.pseudo_count = float(pseudo_count)
        self._probs: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.counts.shape

    @property
    def total(self) -> float:
        return float(self.counts.sum())

    @property
    def probabilities(self) -> np.ndarray:
        if self._probs is None:
            self._probs = _normalize(self.fp, self.counts)
        return self._probs

    def prob_of(self, rows: np.ndarray) -> np.ndarray:
        """Probability of each row's cell (conditional on its parents if any)."""
        rows = np.asarray(rows, dtype=np.int64)
        if rows.ndim == 1:
            rows = rows[None, :]
        idx = tuple(rows[:, c] for c in self.fp.columns)
        return self.probabilities[idx]

    def as_dict(self) -> dict[tuple[int, ...], float]:
        p = self.probabilities
        return {tuple(int(v) for v in k): float(p[k]) for k in np.ndindex(*p.shape)}

    def to_json(self) -> dict:
        cells = [[list(k), float(self.counts[k])] for k in np.ndindex(*self.shape)
                 if self.counts[k] != 0]
        return {"focal_point": self.fp.to_json(), "shape": list(self.shape),
                "cells": cells, "total": self.total, "pseudo_count": self.pseudo_count}

    @classmethod
    def from_json(cls, obj: Mapping) -> "ProbabilityTable":
        counts = np.zeros(tuple(obj["shape"]), dtype=float)
        for key, value in obj["cells"]:
            counts[tuple(key)] = value
        return cls(FocalPoint.from_json(obj["focal_point"]), counts, obj.get("pseudo_count", 0.0))

    def dumps(self) -> str:
        return json.dumps(self.to_json())


def _normalize(fp: FocalPoint, counts: np.ndarray) -> np.ndarray:
    c = np.clip(counts, 0.0, None)
    if not fp.is_conditional:
        total = c.sum()
        if total <= 0:
            return np.full(c.shape, 1.0 / c.size)
        return c / total
    return normalize_rows(c)


def normalize_rows(c: np.ndarray) -> np.ndarray:
    """Normalize along the last axis; rows without mass become uniform."""
    c = np.clip(np.asarray(c, dtype=float), 0.0, None)
    s = c.sum(axis=-1, keepdims=True)
    uniform = np.full(c.shape, 1.0 / c.shape[-1])
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(s > 0, c / np.where(s > 0, s, 1.0), uniform)


def raw_counts(d: Dataset, columns: Sequence[int]) -> np.ndarray:
    """Unsmoothed integer counts over the full product domain of ``columns``."""
    shape = tuple(d.schema.sizes[c] for c in columns)
    if not columns:
        return np.array(len(d), dtype=np.int64)
    flat = np.ravel_multi_index(tuple(d.rows[:, c] for c in columns), shape) if len(d) else \
        np.empty(0, np.int64)
    return np.bincount(flat, minlength=int(np.prod(shape))).reshape(shape)


def estimate_marginal(d: Dataset, fp: FocalPoint, pseudo_count: float = 0.0) -> ProbabilityTable:
    if fp.is_conditional:
        raise ParameterError("estimate_marginal needs a marginal focal point")
    return _estimate(d, fp, pseudo_count)


def estimate_conditional(d: Dataset, fp: FocalPoint,
                         pseudo_count: float = 0.0) -> ProbabilityTable:
    if not fp.is_conditional:
        raise ParameterError("estimate_conditional needs a conditional focal point")
    return _estimate(d, fp, pseudo_count)


def estimate(d: Dataset, fp: FocalPoint, pseudo_count: float = 0.0) -> ProbabilityTable:
    return _estimate(d, fp, pseudo_count)


def _estimate(d: Dataset, fp: FocalPoint, pseudo_count: float) -> ProbabilityTable:
    fp.validate(d.n_features)
    if pseudo_count < 0:
        raise ParameterError("pseudo-count must be >= 0")
    if len(d) == 0 and pseudo_count == 0:
        raise DegenerateEstimateError(f"cannot estimate {fp} from an empty dataset")
    counts = raw_counts(d, fp.columns).astype(float) + pseudo_count
    return ProbabilityTable(fp, counts, pseudo_count)


# ---------------------------------------------------------------------------
# mutual information


def mutual_information_codes(x: np.ndarray, y: np.ndarray, dx: int, dy: int,
                             logtab: np.ndarray | None = None) -> float:
    """Plug-in MI in nats between two integer-coded columns."""
    if len(x) == 0:
        raise DegenerateEstimateError("mutual information of an empty dataset")
    mi = kernels.mi_codes(x, y, dx, dy, logtab)
    return max(mi, 0.0) if mi > -1e-12 else mi


def mutual_information(d: Dataset, i: int, j: int) -> float:
    if len(d) == 0:
        raise DegenerateEstimateError("mutual information of an empty dataset")
    if i == j:
        return entropy(d, i)
    a, b = (i, j) if i < j else (j, i)
    sizes = d.schema.sizes
    return mutual_information_codes(d.rows[:, a], d.rows[:, b], sizes[a], sizes[b])


def entropy(d: Dataset, i: int) -> float:
    c = np.bincount(d.rows[:, i], minlength=d.schema.sizes[i]).astype(float)
    p = c[c > 0] / c.sum()
    return float(-np.sum(p * np.log(p)))


def pairwise_mi(d: Dataset) -> np.ndarray:
    l = d.n_features
    out = np.zeros((l, l))
    if len(d) == 0:
        raise DegenerateEstimateError("mutual information of an empty dataset")
    logtab = kernels.log_table(len(d))
    sizes = d.schema.sizes
    for i in range(l):
        for j in range(i + 1, l):
            out[i, j] = out[j, i] = mutual_information_codes(
                d.rows[:, i], d.rows[:, j], sizes[i], sizes[j], logtab)
    return out


# ---------------------------------------------------------------------------
# distances


def wasserstein_1d(a, b, lo: float | None = None, hi: float | None = None) -> float:
    """W1 between two empirical distributions after scaling [lo, hi] to [0, 1].

    Without an explicit range the pooled min and max are used; a degenerate
    range means both samples sit on one point and the distance is zero.
    """
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise SizeError("wasserstein_1d needs two non-empty samples")
    lo = float(min(a[0], b[0])) if lo is None else float(lo)
    hi = float(max(a[-1], b[-1])) if hi is None else float(hi)
    width = hi - lo
    if width <= 0:
        return 0.0
    a = (a - lo) / width
    b = (b - lo) / width
    grid = np.union1d(a, b)
    fa = np.searchsorted(a, grid[:-1], side="right") / a.size
    fb = np.searchsorted(b, grid[:-1], side="right") / b.size
    return float(np.sum(np.abs(fa - fb) * np.diff(grid)))


def dataset_distance(synth: Dataset, train: Dataset) -> float:
    """Sum over columns of the range-normalized 1-D Wasserstein distance."""
    if synth.schema != train.schema:
        raise DomainError("datasets must share a schema")
    total = 0.0
    for i, d in enumerate(synth.schema.sizes):
        total += wasserstein_1d(synth.rows[:, i], train.rows[:, i], 0, d - 1)
    return total
