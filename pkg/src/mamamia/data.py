"""Immutable discrete tables, CSV ingestion, binning and a seeded population.

A :class:`Dataset` stores one category index per cell. Numeric CSV columns
are discretized with equal-depth bins whose edges are computed once, on the
auxiliary (population) data, and carried in the :class:`Schema` so every
derived dataset is binned identically.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DomainError, ParameterError, ParseError, SizeError

SCHEMA_VERSION = 1
CATEGORICAL = "categorical"
NUMERIC = "numeric"


@dataclass(frozen=True)
class BinningSpec:
    feature: str
    edges: tuple[float, ...]

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=float)
        if e.size and np.any(np.diff(e) <= 0):
            raise ParameterError(f"bin edges for {self.feature!r} must be strictly increasing")

    @property
    def bins(self) -> int:
        return len(self.edges) + 1

    def apply(self, values) -> np.ndarray:
        """Bin index per value; bin i is the interval (edge[i-1], edge[i]]."""
        return np.searchsorted(np.asarray(self.edges, dtype=float),
                               np.asarray(values, dtype=float), side="left").astype(np.int64)


@dataclass(frozen=True)
class Feature:
    name: str
    domain: tuple[str, ...]
    kind: str = CATEGORICAL
    binning: BinningSpec | None = None

    @property
    def size(self) -> int:
        return len(self.domain)

    def to_json(self) -> dict:
        out = {"name": self.name, "kind": self.kind, "domain": list(self.domain)}
        if self.binning is not None:
            out["bin_edges"] = list(self.binning.edges)
        return out

    @classmethod
    def from_json(cls, obj: Mapping) -> "Feature":
        kind = obj.get("kind", CATEGORICAL)
        binning = None
        if kind == NUMERIC:
            binning = BinningSpec(obj["name"], tuple(float(e) for e in obj.get("bin_edges", ())))
        return cls(obj["name"], tuple(str(v) for v in obj["domain"]), kind, binning)


@dataclass(frozen=True)
class Schema:
    """Ordered features with finite domains.

    Domains may only be empty for a schema inferred from a header-only CSV;
    anything that models data calls :meth:`require_nonempty`.
    """

    features: tuple[Feature, ...]

    def __post_init__(self):
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise DomainError("feature names must be unique")
        for f in self.features:
            if len(set(f.domain)) != len(f.domain):
                raise DomainError(f"duplicate labels in domain of {f.name!r}")
            if f.binning is not None and f.binning.bins != f.size:
                raise DomainError(f"feature {f.name!r}: {f.size} labels for {f.binning.bins} bins")

    @classmethod
    def from_domains(cls, domains: Mapping[str, Sequence] | Sequence[int]) -> "Schema":
        """Categorical schema from ``{name: labels}`` or a list of domain sizes."""
        if isinstance(domains, Mapping):
            feats = [Feature(str(k), tuple(str(v) for v in vals)) for k, vals in domains.items()]
        else:
            feats = [Feature(f"f{i}", tuple(str(v) for v in range(int(d))))
                     for i, d in enumerate(domains)]
        return cls(tuple(feats))

    def __len__(self) -> int:
        return len(self.features)

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.features]

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(f.size for f in self.features)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def require_nonempty(self) -> None:
        for f in self.features:
            if f.size == 0:
                raise DomainError(f"feature {f.name!r} has an empty domain")

    def fingerprint(self) -> str:
        return hashlib.sha256(json.dumps(self.to_json(), sort_keys=True).encode()).hexdigest()[:16]

    def to_json(self) -> dict:
        return {"schema_version": SCHEMA_VERSION,
                "features": [f.to_json() for f in self.features]}

    @classmethod
    def from_json(cls, obj: Mapping) -> "Schema":
        return cls(tuple(Feature.from_json(f) for f in obj["features"]))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Schema":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


class Dataset:
    """Read-only table of category indices plus optional record-set ids."""

    __slots__ = ("schema", "rows", "set_ids")

    def __init__(self, schema: Schema, rows, set_ids=None):
        arr = np.asarray(rows, dtype=np.int64)
        if arr.ndim == 1 and arr.size == 0:
            arr = arr.reshape(0, len(schema))
        if arr.ndim != 2 or arr.shape[1] != len(schema):
            raise DomainError(f"rows must have {len(schema)} cells, got shape {arr.shape}")
        if arr.size:
            sizes = np.asarray(schema.sizes, dtype=np.int64)
            if arr.min() < 0 or np.any(arr.max(axis=0) >= sizes):
                raise DomainError("cell index outside its feature domain")
        arr = np.array(arr, copy=True)
        arr.flags.writeable = False
        sids = None
        if set_ids is not None:
            sids = np.array(set_ids, dtype=np.int64, copy=True).reshape(-1)
            if sids.shape[0] != arr.shape[0]:
                raise DomainError("set_ids length must equal the row count")
            sids.flags.writeable = False
        object.__setattr__(self, "schema", schema)
        object.__setattr__(self, "rows", arr)
        object.__setattr__(self, "set_ids", sids)

    def __setattr__(self, key, value):
        raise AttributeError("Dataset is immutable")

    def __reduce__(self):
        return Dataset, (self.schema, self.rows, self.set_ids)

    def __len__(self) -> int:
        return self.rows.shape[0]

    def __repr__(self) -> str:
        return f"Dataset({len(self)} rows x {len(self.schema)} features)"

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        same_sets = (self.set_ids is None and other.set_ids is None) or (
            self.set_ids is not None and other.set_ids is not None
            and np.array_equal(self.set_ids, other.set_ids))
        return self.schema == other.schema and np.array_equal(self.rows, other.rows) and same_sets

    __hash__ = None

    @property
    def n_features(self) -> int:
        return self.rows.shape[1]

    def column(self, i: int) -> np.ndarray:
        return self.rows[:, i]

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        sids = None if self.set_ids is None else self.set_ids[idx]
        return Dataset(self.schema, self.rows[idx], sids)

    def drop(self, idx) -> "Dataset":
        keep = np.ones(len(self), dtype=bool)
        keep[np.asarray(idx, dtype=np.int64)] = False
        return self.take(np.flatnonzero(keep))

    def with_rows(self, rows) -> "Dataset":
        return Dataset(self.schema, rows)

    def fingerprint(self) -> str:
        h = hashlib.sha256(self.schema.fingerprint().encode())
        h.update(np.ascontiguousarray(self.rows).tobytes())
        if self.set_ids is not None:
            h.update(np.ascontiguousarray(self.set_ids).tobytes())
        return h.hexdigest()[:16]

    def to_csv(self, path, set_id_column: str = "set_id") -> None:
        write_csv(self, path, set_id_column=set_id_column)


# ---------------------------------------------------------------------------
# binning


def equal_depth_bin(values, bins: int) -> tuple[BinningSpec, np.ndarray]:
    """Equal-depth bins: edges at the lower empirical i/bins quantiles.

    Duplicate edges are merged and edges at or above the maximum are dropped,
    so ties shrink the effective bin count instead of leaving empty bins.
    """
    if bins < 1:
        raise ParameterError("bins must be >= 1")
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ParameterError("values must be non-empty")
    spec = _depth_edges(v, bins)
    return spec, spec.apply(v)


def _depth_edges(v: np.ndarray, bins: int, name: str = "") -> BinningSpec:
    s = np.sort(v)
    n = s.size
    idx = [math.ceil(i * n / bins) - 1 for i in range(1, bins)]
    edges = np.unique(s[np.clip(idx, 0, n - 1)]) if idx else np.empty(0)
    edges = edges[edges < s[-1]]
    return BinningSpec(name, tuple(float(e) for e in edges))


def _bin_labels(values: np.ndarray, spec: BinningSpec) -> tuple[str, ...]:
    """Label each bin by the smallest value it holds (or its lower edge)."""
    idx = spec.apply(values)
    labels = []
    for b in range(spec.bins):
        members = values[idx == b]
        lo = members.min() if members.size else spec.edges[b - 1]
        labels.append(repr(float(lo)))
    return tuple(labels)


# ---------------------------------------------------------------------------
# CSV


def _read_csv(path) -> tuple[list[str], list[list[str]]]:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("missing header", 1) from None
        width = len(header)
        body = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise ParseError(f"expected {width} cells, found {len(row)}", lineno)
            body.append(row)
    return [h.strip() for h in header], body


def load_csv(path, kinds: Mapping[str, str] | None = None, schema: Schema | None = None,
             bins: int = 20, set_id_column: str | None = "set_id") -> Dataset:
    """Read a CSV into a :class:`Dataset`.

    With ``schema`` the file is validated against it: categorical labels must
    exist in the domain and numeric cells are binned with the stored edges.
    Without one, categorical domains are built in first-appearance order and
    numeric columns (named in ``kinds``) get fresh equal-depth bins.
    """
    header, body = _read_csv(path)
    set_ids = None
    if set_id_column and set_id_column in header:
        pos = header.index(set_id_column)
        try:
            set_ids = [int(r[pos]) for r in body]
        except ValueError as exc:
            raise ParseError(f"non-integer {set_id_column}: {exc}") from None
        header = header[:pos] + header[pos + 1:]
        body = [r[:pos] + r[pos + 1:] for r in body]
    columns = list(zip(*body)) if body else [() for _ in header]

    if schema is not None:
        if schema.names != header:
            raise DomainError(f"CSV header {header} does not match schema {schema.names}")
        cols = [_encode_with(f, col) for f, col in zip(schema.features, columns)]
        rows = np.stack(cols, axis=1) if body else np.empty((0, len(header)), np.int64)
        return Dataset(schema, rows, set_ids)

    kinds = dict(kinds or {})
    unknown = set(kinds) - set(header)
    if unknown:
        raise DomainError(f"kinds name unknown columns: {sorted(unknown)}")
    feats, cols = [], []
    for name, col in zip(header, columns):
        if kinds.get(name, CATEGORICAL) == NUMERIC:
            try:
                vals = np.array([float(c) for c in col], dtype=float)
            except ValueError as exc:
                raise ParseError(f"column {name!r}: {exc}") from None
            if vals.size == 0:
                feats.append(Feature(name, (), NUMERIC, BinningSpec(name, ())))
                cols.append(np.empty(0, np.int64))
                continue
            spec = _depth_edges(vals, bins, name)
            feats.append(Feature(name, _bin_labels(vals, spec), NUMERIC, spec))
            cols.append(spec.apply(vals))
        else:
            labels: dict[str, int] = {}
            codes = [labels.setdefault(c, len(labels)) for c in col]
            feats.append(Feature(name, tuple(labels)))
            cols.append(np.asarray(codes, dtype=np.int64))
    rows = np.stack(cols, axis=1) if body else np.empty((0, len(header)), np.int64)
    return Dataset(Schema(tuple(feats)), rows, set_ids)


def _encode_with(feature: Feature, col: Sequence[str]) -> np.ndarray:
    if feature.kind == NUMERIC:
        try:
            vals = np.array([float(c) for c in col], dtype=float)
        except ValueError as exc:
            raise ParseError(f"column {feature.name!r}: {exc}") from None
        return feature.binning.apply(vals)
    lookup = {label: i for i, label in enumerate(feature.domain)}
    out = np.empty(len(col), dtype=np.int64)
    for i, c in enumerate(col):
        try:
            out[i] = lookup[c]
        except KeyError:
            raise DomainError(f"unknown category {c!r} for feature {feature.name!r}") from None
    return out


def write_csv(d: Dataset, path, set_id_column: str = "set_id") -> None:
    header = d.schema.names
    with_sets = d.set_ids is not None
    if with_sets:
        header = header + [set_id_column]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        domains = [f.domain for f in d.schema.features]
        for i, row in enumerate(d.rows):
            cells = [domains[j][v] for j, v in enumerate(row)]
            if with_sets:
                cells.append(str(int(d.set_ids[i])))
            w.writerow(cells)


def file_fingerprint(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# ---------------------------------------------------------------------------
# sampling


def sample_rows(d: Dataset, n: int, rng: np.random.Generator) -> Dataset:
    """Uniform sample of ``n`` rows without replacement."""
    return d.take(sample_indices(len(d), n, rng))


def sample_indices(total: int, n: int, rng: np.random.Generator) -> np.ndarray:
    if n < 0 or n > total:
        raise SizeError(f"cannot sample {n} rows from {total}")
    return rng.permutation(total)[:n]


def qualifying_sets(d: Dataset, min_size: int) -> np.ndarray:
    if d.set_ids is None:
        raise SizeError("dataset has no record-set ids")
    ids, counts = np.unique(d.set_ids, return_counts=True)
    return ids[counts >= min_size]


def sample_target_sets(d: Dataset, count: int, min_size: int,
                       rng: np.random.Generator) -> list[int]:
    """Draw ``count`` distinct set ids among sets holding >= ``min_size`` rows."""
    pool = qualifying_sets(d, min_size)
    if count > pool.size:
        raise SizeError(f"only {pool.size} sets have >= {min_size} records, {count} requested")
    pick = rng.permutation(pool.size)[:count]
    return [int(s) for s in pool[pick]]


# ---------------------------------------------------------------------------
# seeded population


@dataclass(frozen=True)
class PopulationConfig:
    """Tree-structured categorical population.

    ``edges`` are (parent, child, coupling) triples. A child copies its
    parent's value through a fixed map with probability ``coupling`` and is
    uniform otherwise. ``max_set_size`` > 0 groups consecutive rows into
    record sets of uniform random size 1..max_set_size.
    """

    domain_sizes: tuple[int, ...]
    edges: tuple[tuple[int, int, float], ...]
    rows: int
    seed: int
    max_set_size: int = 0

    def __post_init__(self):
        l = len(self.domain_sizes)
        if any(d < 1 for d in self.domain_sizes):
            raise ParameterError("domain sizes must be >= 1")
        if self.rows < 0:
            raise ParameterError("rows must be >= 0")
        parent_of: dict[int, int] = {}
        for p, c, s in self.edges:
            if not (0 <= p < l and 0 <= c < l) or p == c:
                raise ParameterError(f"bad edge {(p, c)}")
            if not 0.0 <= s <= 1.0:
                raise ParameterError("coupling strengths must lie in [0, 1]")
            if c in parent_of:
                raise ParameterError(f"feature {c} has two parents")
            parent_of[c] = p
        for start in parent_of:
            seen, node = set(), start
            while node in parent_of:
                if node in seen:
                    raise ParameterError("dependency edges contain a cycle")
                seen.add(node)
                node = parent_of[node]

    @property
    def n_features(self) -> int:
        return len(self.domain_sizes)

    def to_json(self) -> dict:
        return {"domain_sizes": list(self.domain_sizes),
                "edges": [list(e) for e in self.edges],
                "rows": self.rows, "seed": self.seed, "max_set_size": self.max_set_size}

    @classmethod
    def from_json(cls, obj: Mapping) -> "PopulationConfig":
        if "edges" not in obj:
            return default_population_config(
                seed=int(obj.get("seed", 0)), n_features=int(obj.get("n_features", 15)),
                rows=int(obj.get("rows", 50_000)), max_set_size=int(obj.get("max_set_size", 8)))
        return cls(tuple(int(d) for d in obj["domain_sizes"]),
                   tuple((int(p), int(c), float(s)) for p, c, s in obj["edges"]),
                   int(obj["rows"]), int(obj["seed"]), int(obj.get("max_set_size", 0)))


def default_population_config(seed: int = 0, n_features: int = 15, rows: int = 50_000,
                              min_domain: int = 2, max_domain: int = 10,
                              coupling: tuple[float, float] = (0.05, 0.5),
                              max_set_size: int = 8) -> PopulationConfig:
    """Random spanning tree with distinct couplings.

    Domain sizes are spread evenly over ``[min_domain, max_domain]`` and
    shuffled, so every run sees both small and large domains.
    """
    rng = np.random.default_rng([int(seed), 0x706F70])
    spread = np.rint(np.linspace(min_domain, max_domain, n_features)).astype(np.int64)
    sizes = tuple(int(x) for x in rng.permutation(spread))
    order = rng.permutation(n_features)
    strengths = np.sort(rng.uniform(*coupling, size=max(n_features - 1, 0)))[::-1]
    strengths = strengths[rng.permutation(strengths.size)]
    edges = []
    for k in range(1, n_features):
        parent = int(order[rng.integers(0, k)])
        edges.append((parent, int(order[k]), float(strengths[k - 1])))
    return PopulationConfig(sizes, tuple(edges), rows, seed, max_set_size)


def synthesize_population(cfg: PopulationConfig) -> Dataset:
    """Ancestral sampling over the configured dependency forest."""
    rng = np.random.default_rng([int(cfg.seed) & 0xFFFFFFFFFFFFFFFF, 0x73796E])
    l = cfg.n_features
    schema = Schema.from_domains(cfg.domain_sizes)
    parent_of = {c: (p, s) for p, c, s in cfg.edges}
    maps = {}
    for p, c, _ in cfg.edges:
        perm = rng.permutation(cfg.domain_sizes[c])
        maps[c] = perm[np.arange(cfg.domain_sizes[p]) % cfg.domain_sizes[c]]
    children: dict[int, list[int]] = {}
    for p, c, _ in cfg.edges:
        children.setdefault(p, []).append(c)
    order = [i for i in range(l) if i not in parent_of]
    for node in order:
        order.extend(sorted(children.get(node, [])))
    n = cfg.rows
    rows = np.zeros((n, l), dtype=np.int64)
    for node in order:
        d = cfg.domain_sizes[node]
        uniform = rng.integers(0, d, n)
        if node in parent_of:
            p, s = parent_of[node]
            copy = rng.random(n) < s
            rows[:, node] = np.where(copy, maps[node][rows[:, p]], uniform)
        else:
            rows[:, node] = uniform
    set_ids = None
    if cfg.max_set_size > 0:
        sizes = rng.integers(1, cfg.max_set_size + 1, size=n + 1)
        set_ids = np.repeat(np.arange(sizes.size), sizes)[:n]
    return Dataset(schema, rows, set_ids)


def rows_as_tuples(d: Dataset) -> Iterable[tuple[int, ...]]:
    return map(tuple, d.rows.tolist())
