"""Configuration and result types shared by all generators."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Mapping

from ..errors import ConfigError, ParameterError
from ..stats import FocalPoint

FULL = "full"
FP_ONLY = "fp_only"
MODES = (FULL, FP_ONLY)


class GeneratorKind(str, enum.Enum):
    MST = "mst"
    PRIVBAYES = "privbayes"
    GSD = "gsd"

    @classmethod
    def parse(cls, value) -> "GeneratorKind":
        if isinstance(value, cls):
            return value
        key = str(value).lower().replace("-", "").replace("_", "")
        for k in cls:
            if k.value == key or k.name.lower() == key:
                return k
        aliases = {"mstlike": cls.MST, "privbayeslike": cls.PRIVBAYES, "gsdlike": cls.GSD,
                   "privategsd": cls.GSD}
        if key in aliases:
            return aliases[key]
        raise ConfigError(f"unknown generator kind {value!r}")


@dataclass(frozen=True)
class GsdParams:
    population: int = 50
    elites: int = 5
    generations: int = 20_000
    patience: int = 500
    arity: int = 2
    queries: int = 64
    rounds: int = 4
    chunk: int = 256

    def __post_init__(self):
        if self.elites < 1 or self.population < self.elites:
            raise ParameterError("need population >= elites >= 1")
        if self.generations < 0 or self.patience < 1 or self.chunk < 1:
            raise ParameterError("generations >= 0, patience >= 1 and chunk >= 1 required")
        if self.arity < 1 or self.queries < 1 or not 1 <= self.rounds <= self.queries:
            raise ParameterError("need arity >= 1 and 1 <= rounds <= queries")


@dataclass(frozen=True)
class GeneratorConfig:
    """Everything the generator (and a black-box attacker) knows.

    ``epsilon`` may be ``math.inf`` for noiseless runs. ``synth_rows=None``
    means "as many rows as the training data".
    """

    kind: GeneratorKind
    epsilon: float
    synth_rows: int | None = None
    seed: int = 0
    parent_cap: int | None = None
    manual_edges: tuple[tuple[int, int], ...] | None = None
    gsd: GsdParams = field(default_factory=GsdParams)

    def __post_init__(self):
        object.__setattr__(self, "kind", GeneratorKind.parse(self.kind))
        if not self.epsilon > 0:
            raise ParameterError("epsilon must be > 0")
        if self.synth_rows is not None and self.synth_rows < 0:
            raise ParameterError("synth_rows must be >= 0")
        if self.parent_cap is not None and self.parent_cap < 1:
            raise ParameterError("parent_cap must be >= 1")
        if self.manual_edges is not None:
            object.__setattr__(self, "manual_edges",
                               tuple((int(a), int(b)) for a, b in self.manual_edges))
        if isinstance(self.gsd, Mapping):
            object.__setattr__(self, "gsd", GsdParams(**self.gsd))

    def replace(self, **changes) -> "GeneratorConfig":
        data = {k: getattr(self, k) for k in self.__dataclass_fields__}
        data.update(changes)
        return GeneratorConfig(**data)

    def to_json(self) -> dict:
        out: dict[str, Any] = {"kind": self.kind.value,
                               "epsilon": "inf" if math.isinf(self.epsilon) else self.epsilon,
                               "synth_rows": self.synth_rows, "seed": self.seed}
        if self.parent_cap is not None:
            out["parent_cap"] = self.parent_cap
        if self.manual_edges is not None:
            out["manual_edges"] = [list(e) for e in self.manual_edges]
        if self.kind is GeneratorKind.GSD:
            out["gsd"] = asdict(self.gsd)
        return out

    @classmethod
    def from_json(cls, obj: Mapping) -> "GeneratorConfig":
        known = {"kind", "epsilon", "synth_rows", "seed", "parent_cap", "manual_edges", "gsd"}
        extra = set(obj) - known
        if extra:
            raise ConfigError(f"unknown generator fields: {sorted(extra)}")
        if "kind" not in obj or "epsilon" not in obj:
            raise ConfigError("generator config needs 'kind' and 'epsilon'")
        try:
            gsd = GsdParams(**obj.get("gsd", {}))
            return cls(obj["kind"], float(obj["epsilon"]), obj.get("synth_rows"),
                       int(obj.get("seed", 0)), obj.get("parent_cap"),
                       obj.get("manual_edges"), gsd)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad generator config: {exc}") from None


@dataclass
class FitOutcome:
    """Focal points chosen by one fit, plus the model unless fit stopped early."""

    kind: GeneratorKind
    config: GeneratorConfig
    focal_points: list[FocalPoint]
    model: Any | None
    ledger: list[tuple[str, float]]
    wall_time: float
    space: str = "features"

    @property
    def fp_only(self) -> bool:
        return self.model is None

    def to_json(self) -> dict:
        out = {"kind": self.kind.value, "config": self.config.to_json(), "space": self.space,
               "focal_points": [fp.to_json() for fp in self.focal_points],
               "ledger": [[label, f] for label, f in self.ledger],
               "wall_time": self.wall_time}
        if self.model is not None:
            out["model"] = self.model.to_json()
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1)
