"""Laplace and exponential mechanisms plus a fractional privacy budget."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetError, ParameterError
from .stats import FocalPoint, ProbabilityTable, normalize_rows

SLACK = 1e-12


@dataclass
class Budget:
    """Total epsilon with an append-only ledger of spent fractions."""

    total: float
    ledger: list[tuple[str, float]] = field(default_factory=list)

    def __post_init__(self):
        if not self.total > 0:
            raise ParameterError("total epsilon must be > 0")

    @property
    def spent(self) -> float:
        return math.fsum(f for _, f in self.ledger)

    @property
    def remaining(self) -> float:
        return max(1.0 - self.spent, 0.0)

    def spend(self, label: str, fraction: float) -> float:
        """Record ``fraction`` of the total under ``label``; return its epsilon."""
        if not fraction > 0:
            raise ParameterError("spent fraction must be > 0")
        if self.spent + fraction > 1.0 + SLACK:
            raise BudgetError(
                f"spending {fraction:.6g} on {label!r} exceeds the remaining {self.remaining:.6g}")
        self.ledger.append((label, float(fraction)))
        return fraction * self.total

    def summary(self) -> dict[str, float]:
        out: dict[str, float] = {}
        for label, f in self.ledger:
            key = label.split(":", 1)[0]
            out[key] = out.get(key, 0.0) + f
        return out


def spend(budget: Budget, label: str, fraction: float) -> float:
    return budget.spend(label, fraction)


@dataclass
class NoisyMeasurement:
    """Noised counts of a focal point. ``counts`` are kept before any clipping."""

    fp: FocalPoint
    counts: np.ndarray
    epsilon: float
    sensitivity: float

    def table(self) -> ProbabilityTable:
        return ProbabilityTable(self.fp, self.counts)

    def clipped(self) -> np.ndarray:
        return np.clip(self.counts, 0.0, None)

    def distribution(self) -> np.ndarray:
        """Clipped and normalized; conditionals normalize along the child axis."""
        c = self.clipped()
        if self.fp.is_conditional:
            return normalize_rows(c)
        s = c.sum()
        return c / s if s > 0 else np.full(c.shape, 1.0 / c.size)


def _check(epsilon: float, sensitivity: float) -> None:
    if not epsilon > 0:
        raise ParameterError("epsilon must be > 0")
    if not sensitivity > 0:
        raise ParameterError("sensitivity must be > 0")


def laplace_noise(shape, epsilon: float, sensitivity: float,
                  rng: np.random.Generator) -> np.ndarray:
    _check(epsilon, sensitivity)
    scale = sensitivity / epsilon
    # draw even at scale 0 so the stream position does not depend on epsilon
    z = rng.laplace(0.0, 1.0, size=shape)
    return z * scale


def laplace_counts(table: ProbabilityTable | np.ndarray, epsilon: float, sensitivity: float,
                   rng: np.random.Generator, fp: FocalPoint | None = None) -> NoisyMeasurement:
    """Add i.i.d. Laplace(sensitivity/epsilon) noise to every cell."""
    if isinstance(table, ProbabilityTable):
        fp = table.fp
        raw = table.counts
    else:
        raw = np.asarray(table, dtype=float)
        if fp is None:
            raise ParameterError("a focal point is required for raw count arrays")
    noisy = raw + laplace_noise(raw.shape, epsilon, sensitivity, rng)
    return NoisyMeasurement(fp, noisy, float(epsilon), float(sensitivity))


def exponential_select(scores, epsilon: float, sensitivity: float,
                       rng: np.random.Generator) -> int:
    """Index drawn with probability proportional to exp(eps * score / (2 * sens)).

    Exactly one uniform is consumed per call. An infinite epsilon returns the
    first maximizer.
    """
    s = np.asarray(scores, dtype=float)
    if s.ndim != 1 or s.size == 0:
        raise ParameterError("scores must be a non-empty 1-D sequence")
    _check(epsilon, sensitivity)
    u = rng.random()
    if math.isinf(epsilon):
        return int(np.argmax(s))
    logits = epsilon * (s - s.max()) / (2.0 * sensitivity)
    w = np.exp(logits)
    cdf = np.cumsum(w)
    pick = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
    return min(pick, s.size - 1)


def mi_sensitivity(n: int) -> float:
    """Surrogate sensitivity of a plug-in mutual-information score."""
    if n <= 2:
        return 1.0
    return math.log(n) / n
