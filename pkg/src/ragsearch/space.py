"""Discrete pipeline configuration spaces.

A :class:`SearchSpace` is an ordered product of categorical
:class:`Dimension` objects, optionally filtered by named validity
constraints. A :class:`PipelineConfig` is one point in that space, stored as
a tuple of value indices in dimension order.
"""
from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator, Mapping, Sequence

import numpy as np

MODULE_TAGS = ("rewriter", "chunker", "retriever", "reranker", "pruner", "generator")
OFF = "off"
SPACE_FILE_VERSION = 1
MAX_SAMPLE_RETRIES = 1000


class SpaceError(ValueError):
    """Invalid space definition, invalid configuration, or unsatisfiable constraints."""


@dataclass(frozen=True)
class Dimension:
    name: str
    module_tag: str
    values: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(str(v) for v in self.values))
        if not self.values:
            raise SpaceError(f"dimension {self.name!r} has no values")
        if len(set(self.values)) != len(self.values):
            raise SpaceError(f"dimension {self.name!r} has duplicate values")
        if self.module_tag not in MODULE_TAGS:
            raise SpaceError(f"dimension {self.name!r}: unknown module tag {self.module_tag!r}")

    def __len__(self):
        return len(self.values)

    def index(self, label) -> int:
        try:
            return self.values.index(str(label))
        except ValueError:
            raise SpaceError(f"{label!r} is not a value of dimension {self.name!r}") from None


@dataclass(frozen=True)
class Constraint:
    """A named validity predicate over the labels of a subset of dimensions."""

    name: str
    dims: tuple[str, ...]
    predicate: Callable[..., bool] = field(compare=False)

    def __call__(self, labels: Mapping[str, str]) -> bool:
        return bool(self.predicate(*(labels[d] for d in self.dims)))


def _overlap_lt_size(size, overlap):
    return int(overlap) < int(size)


CONSTRAINTS: dict[str, Constraint] = {
    "overlap_lt_size": Constraint("overlap_lt_size", ("chunk_size", "chunk_overlap"), _overlap_lt_size),
}


class SearchSpace:
    """Ordered categorical product space with optional constraints."""

    def __init__(self, dimensions: Sequence[Dimension], constraints: Iterable[Constraint | str] = ()):
        self.dimensions: tuple[Dimension, ...] = tuple(dimensions)
        names = [d.name for d in self.dimensions]
        if len(set(names)) != len(names):
            raise SpaceError("dimension names must be unique")
        self._pos = {n: i for i, n in enumerate(names)}
        resolved = []
        for c in constraints:
            if isinstance(c, str):
                if c not in CONSTRAINTS:
                    raise SpaceError(f"unknown constraint {c!r}")
                c = CONSTRAINTS[c]
            missing = [d for d in c.dims if d not in self._pos]
            if missing:
                raise SpaceError(f"constraint {c.name!r} refers to unknown dimensions {missing}")
            resolved.append(c)
        self.constraints: tuple[Constraint, ...] = tuple(resolved)

    # -- structure -----------------------------------------------------
    @property
    def names(self) -> tuple[str, ...]:
        return tuple(d.name for d in self.dimensions)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(d) for d in self.dimensions)

    def __len__(self):
        return len(self.dimensions)

    def __contains__(self, name):
        return name in self._pos

    def __getitem__(self, name) -> Dimension:
        return self.dimensions[self.position(name)]

    def position(self, name) -> int:
        try:
            return self._pos[name]
        except KeyError:
            raise SpaceError(f"unknown dimension {name!r}") from None

    def __eq__(self, other):
        return (isinstance(other, SearchSpace) and self.dimensions == other.dimensions
                and tuple(c.name for c in self.constraints) == tuple(c.name for c in other.constraints))

    def __hash__(self):
        return hash((self.dimensions, tuple(c.name for c in self.constraints)))

    def __repr__(self):
        dims = ", ".join(f"{d.name}[{len(d)}]" for d in self.dimensions)
        return f"SearchSpace({dims})"

    def replace_dimension(self, name, values) -> "SearchSpace":
        """Copy of this space with one dimension's value list replaced."""
        dims = [Dimension(d.name, d.module_tag, tuple(values)) if d.name == name else d
                for d in self.dimensions]
        return SearchSpace(dims, self.constraints)

    # -- validity ------------------------------------------------------
    def labels_of(self, indices: Sequence[int]) -> dict[str, str]:
        return {d.name: d.values[i] for d, i in zip(self.dimensions, indices)}

    def is_valid(self, indices: Sequence[int]) -> bool:
        if len(indices) != len(self.dimensions):
            return False
        for d, i in zip(self.dimensions, indices):
            if not 0 <= i < len(d):
                return False
        if not self.constraints:
            return True
        labels = self.labels_of(indices)
        return all(c(labels) for c in self.constraints)

    def config(self, assignment: Mapping[str, int | str] | None = None, **kwargs) -> "PipelineConfig":
        """Build a config from a mapping of dimension name to value label or index.

        Integers are treated as indices, strings as labels.
        """
        assignment = dict(assignment or {}, **kwargs)
        extra = set(assignment) - set(self._pos)
        if extra:
            raise SpaceError(f"unknown dimensions {sorted(extra)}")
        missing = [n for n in self.names if n not in assignment]
        if missing:
            raise SpaceError(f"unassigned dimensions {missing}")
        idx = []
        for d in self.dimensions:
            v = assignment[d.name]
            if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
                idx.append(int(v))
            else:
                idx.append(d.index(v))
        return PipelineConfig(self, tuple(idx))

    def from_labels(self, labels: Mapping[str, str]) -> "PipelineConfig":
        return PipelineConfig(self, tuple(d.index(labels[d.name]) for d in self.dimensions))

    # -- counting ------------------------------------------------------
    def _constrained_dims(self) -> list[int]:
        touched = sorted({self._pos[n] for c in self.constraints for n in c.dims})
        return touched

    def cardinality(self) -> int:
        """Number of valid configurations.

        Only dimensions referenced by a constraint are enumerated; the rest
        contribute their value counts multiplicatively.
        """
        touched = self._constrained_dims()
        free = math.prod(len(d) for i, d in enumerate(self.dimensions) if i not in touched)
        if not touched:
            return free
        count = 0
        sub = [self.dimensions[i] for i in touched]
        for combo in itertools.product(*(d.values for d in sub)):
            labels = dict(zip((d.name for d in sub), combo))
            if all(c(labels) for c in self.constraints):
                count += 1
        return free * count

    def enumerate(self) -> Iterator["PipelineConfig"]:
        """All valid configurations in lexicographic index order."""
        for idx in itertools.product(*(range(len(d)) for d in self.dimensions)):
            if self.is_valid(idx):
                yield PipelineConfig(self, idx)

    def validity_mask(self) -> np.ndarray:
        """Boolean array of shape ``sizes`` marking valid index tuples."""
        mask = np.ones(self.sizes, dtype=bool)
        touched = self._constrained_dims()
        if not touched:
            return mask
        sub_shape = [len(self.dimensions[i]) for i in touched]
        sub = np.ones(sub_shape, dtype=bool)
        for combo in itertools.product(*(range(n) for n in sub_shape)):
            labels = {self.dimensions[i].name: self.dimensions[i].values[j] for i, j in zip(touched, combo)}
            sub[combo] = all(c(labels) for c in self.constraints)
        shape = [1] * len(self.dimensions)
        for i, n in zip(touched, sub_shape):
            shape[i] = n
        return mask & sub.reshape(shape)

    # -- serialization -------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "version": SPACE_FILE_VERSION,
            "dimensions": [{"name": d.name, "module_tag": d.module_tag, "values": list(d.values)}
                           for d in self.dimensions],
            "constraints": [c.name for c in self.constraints],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "SearchSpace":
        version = data.get("version", SPACE_FILE_VERSION)
        if version != SPACE_FILE_VERSION:
            raise SpaceError(f"unsupported space file version {version}")
        try:
            dims = [Dimension(d["name"], d["module_tag"], tuple(d["values"])) for d in data["dimensions"]]
        except KeyError as exc:
            raise SpaceError(f"dimension entry missing field {exc}") from None
        return cls(dims, data.get("constraints", ()))

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass(frozen=True)
class PipelineConfig:
    """One configuration: value indices in the owning space's dimension order."""

    space: SearchSpace = field(repr=False)
    indices: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))
        if not self.space.is_valid(self.indices):
            raise SpaceError(f"invalid configuration {self.indices} for {self.space!r}")

    @property
    def assignment(self) -> dict[str, int]:
        return dict(zip(self.space.names, self.indices))

    @property
    def labels(self) -> dict[str, str]:
        return self.space.labels_of(self.indices)

    def __getitem__(self, name) -> str:
        pos = self.space.position(name)
        return self.space.dimensions[pos].values[self.indices[pos]]

    def index_of(self, name) -> int:
        return self.indices[self.space.position(name)]

    def with_index(self, name, index) -> "PipelineConfig":
        pos = self.space.position(name)
        idx = list(self.indices)
        idx[pos] = int(index)
        return PipelineConfig(self.space, tuple(idx))

    def hamming(self, other: "PipelineConfig") -> int:
        return sum(a != b for a, b in zip(self.indices, other.indices))

    def __repr__(self):
        return "PipelineConfig(" + ", ".join(f"{k}={v}" for k, v in self.labels.items()) + ")"


def default_text_space() -> SearchSpace:
    """The shared text-pipeline space (nine dimensions, 276,480 configurations)."""
    return SearchSpace(
        [
            Dimension("rewriter_prompt", "rewriter", (OFF, "P1", "P2", "P3")),
            Dimension("chunk_size", "chunker", ("256", "512", "1024", "2048")),
            Dimension("chunk_overlap", "chunker", ("0", "64", "128", "192")),
            Dimension("retriever_embedder", "retriever", ("emb-a", "emb-b")),
            Dimension("retriever_top_k", "retriever", ("1", "3", "5", "10", "20", "50")),
            Dimension("bm25_weight_alpha", "retriever", ("0.0", "0.25", "0.5", "0.75", "1.0")),
            Dimension("reranker_model", "reranker", (OFF, "rr-a", "rr-b")),
            Dimension("reranker_top_k", "reranker", ("1", "3", "5", "10", "20", "50")),
            Dimension("pruner_prompt", "pruner", (OFF, "P1", "P2", "P3")),
        ],
        constraints=["overlap_lt_size"],
    )


def load_space(spec: str | Path) -> SearchSpace:
    """Load a space from a JSON definition file, or ``"default-text"``."""
    if str(spec) == "default-text":
        return default_text_space()
    with open(spec) as fh:
        return SearchSpace.from_dict(json.load(fh))


def save_space(space: SearchSpace, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(space.to_dict(), fh, indent=2)
        fh.write("\n")


def sample_uniform(space: SearchSpace, rng: np.random.Generator,
                   max_retries: int = MAX_SAMPLE_RETRIES) -> PipelineConfig:
    """Draw each dimension's index independently and uniformly.

    Draws that violate a constraint are rejected and redrawn, up to
    ``max_retries`` attempts.
    """
    sizes = space.sizes
    for _ in range(max_retries):
        idx = tuple(int(rng.integers(n)) for n in sizes)
        if space.is_valid(idx):
            return PipelineConfig(space, idx)
    raise SpaceError(f"no valid configuration found after {max_retries} draws")


def neighbors(space: SearchSpace, config: PipelineConfig) -> list[PipelineConfig]:
    """Valid configurations at Hamming distance 1, in (dimension, value) order."""
    out = []
    for pos, d in enumerate(space.dimensions):
        cur = config.indices[pos]
        for j in range(len(d)):
            if j == cur:
                continue
            idx = config.indices[:pos] + (j,) + config.indices[pos + 1:]
            if space.is_valid(idx):
                out.append(PipelineConfig(space, idx))
    return out


def canonical_key(config: PipelineConfig) -> bytes:
    """Order-independent serialization of a config's (dimension, label) pairs."""
    pairs = sorted(config.labels.items())
    return json.dumps(pairs, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def parse_key(space: SearchSpace, key: bytes) -> PipelineConfig:
    pairs = json.loads(key.decode("utf-8"))
    return space.from_labels(dict(pairs))
