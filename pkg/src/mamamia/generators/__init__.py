"""Generator front end: ``fit`` in full or focal-point-only mode, then ``sample``."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from ..data import Dataset
from ..dp import Budget
from ..errors import DomainError, ModeError, SizeError
from ..rng import derive_rng
from .base import (FP_ONLY, FULL, MODES, FitOutcome, GeneratorConfig, GeneratorKind,
                   GsdParams)
from .gsd import GsdModel, OneHotMap, fit_gsd, gsd_sample
from .mst import TreeModel, fit_mst, mst_sample
from .privbayes import BayesNet, fit_privbayes, parent_cap, pb_sample

__all__ = ["FP_ONLY", "FULL", "FitOutcome", "GeneratorConfig", "GeneratorKind", "GsdParams",
           "OneHotMap", "fit", "sample", "parent_cap", "Streams"]


@dataclass
class Streams:
    """Independent random sub-streams of one fit plus its budget."""

    budget: Budget
    selection: np.random.Generator
    measurement: np.random.Generator
    synthesis: np.random.Generator

    @classmethod
    def for_config(cls, cfg: GeneratorConfig) -> "Streams":
        return cls(Budget(cfg.epsilon),
                   derive_rng(cfg.seed, "selection"),
                   derive_rng(cfg.seed, "measurement"),
                   derive_rng(cfg.seed, "synthesis"))


_FITTERS = {GeneratorKind.MST: fit_mst, GeneratorKind.PRIVBAYES: fit_privbayes,
            GeneratorKind.GSD: fit_gsd}


def fit(cfg: GeneratorConfig, train: Dataset, mode: str = FULL) -> FitOutcome:
    """Fit ``cfg.kind`` on ``train``.

    In ``fp_only`` mode the run stops as soon as its focal points are fixed;
    no final measurement or synthesis happens and ``model`` is None.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if len(train) == 0:
        raise SizeError("cannot fit a generator on an empty dataset")
    train.schema.require_nonempty()
    if cfg.synth_rows is None:
        cfg = cfg.replace(synth_rows=len(train))
    start = time.perf_counter()
    streams = Streams.for_config(cfg)
    fps, model = _FITTERS[cfg.kind](cfg, train, mode == FP_ONLY, streams)
    space = "onehot" if cfg.kind is GeneratorKind.GSD else "features"
    return FitOutcome(cfg.kind, cfg, fps, model, list(streams.budget.ledger),
                      time.perf_counter() - start, space)


def sample(outcome: FitOutcome, n: int | None = None,
           rng: np.random.Generator | None = None) -> Dataset:
    """Draw ``n`` rows (default: the configured synthetic size) from a full fit."""
    if outcome.model is None:
        raise ModeError("focal-point-only outcomes have no model to sample from")
    model = outcome.model
    if n is None:
        n = outcome.config.synth_rows
    if n < 0:
        raise SizeError("n must be >= 0")
    if rng is None:
        rng = derive_rng(outcome.config.seed, "synthesis", "sample")
    if isinstance(model, TreeModel):
        return mst_sample(model, n, rng)
    if isinstance(model, BayesNet):
        return pb_sample(model, n, rng)
    if isinstance(model, GsdModel):
        return gsd_sample(model, n, rng)
    raise DomainError(f"unknown model type {type(model).__name__}")

