"""Knob spaces, candidate generation and feature extraction.

A candidate is an assignment of one value index per knob. Internally the
search loop works on ``(m, K)`` integer arrays of indices and on flat
mixed-radix codes (for set membership); the :class:`Candidate` dataclass is
the public, per-item view of the same thing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

if TYPE_CHECKING:
    from .graph import Subgraph

MAX_KNOBS = 16
MAX_SPACE = 2**63 - 1
# spaces at most this many times the requested pool are enumerated, not sampled
ENUMERATE_FACTOR = 4


class SpaceError(ValueError):
    pass


@dataclass(frozen=True)
class SpaceDescriptor:
    knobs: tuple[tuple[str, tuple[int, ...]], ...]

    def __post_init__(self):
        knobs = tuple((str(n), tuple(int(v) for v in vals)) for n, vals in self.knobs)
        object.__setattr__(self, "knobs", knobs)
        if not 1 <= len(knobs) <= MAX_KNOBS:
            raise SpaceError(f"knob count must be in [1, {MAX_KNOBS}], got {len(knobs)}")
        names = [n for n, _ in knobs]
        if len(set(names)) != len(names):
            raise SpaceError(f"duplicate knob names: {names}")
        for name, vals in knobs:
            if not vals:
                raise SpaceError(f"knob {name!r} has no values")
            if len(set(vals)) != len(vals):
                raise SpaceError(f"knob {name!r} has repeated values")
            if min(vals) < 1:
                raise SpaceError(f"knob {name!r} values must be positive integers")
        if math.prod(len(v) for _, v in knobs) > MAX_SPACE:
            raise OverflowError("space size does not fit in 64 bits")

    @classmethod
    def from_lists(cls, knobs: Iterable[tuple[str, Sequence[int]]]) -> "SpaceDescriptor":
        return cls(tuple((n, tuple(v)) for n, v in knobs))

    @property
    def n_knobs(self) -> int:
        return len(self.knobs)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(len(v) for _, v in self.knobs)

    @property
    def size(self) -> int:
        return math.prod(self.dims)

    @property
    def strides(self) -> np.ndarray:
        # row-major: last knob varies fastest
        dims = self.dims
        out = np.ones(len(dims), dtype=np.int64)
        for i in range(len(dims) - 2, -1, -1):
            out[i] = out[i + 1] * dims[i + 1]
        return out

    def encode(self, assignments: np.ndarray) -> np.ndarray:
        return np.asarray(assignments, dtype=np.int64) @ self.strides

    def decode(self, codes: np.ndarray) -> np.ndarray:
        codes = np.asarray(codes, dtype=np.int64)
        out = np.empty((codes.shape[0], self.n_knobs), dtype=np.int64)
        rest = codes.copy()
        for i, s in enumerate(self.strides):
            out[:, i], rest = np.divmod(rest, s)
        return out

    def value_table(self) -> list[np.ndarray]:
        return [np.asarray(v, dtype=float) for _, v in self.knobs]

    def positions(self, assignments: np.ndarray) -> np.ndarray:
        """Normalized knob positions in [0, 1] (0 for single-valued knobs)."""
        denom = np.maximum(np.asarray(self.dims, dtype=float) - 1.0, 1.0)
        return np.asarray(assignments, dtype=float) / denom


@dataclass(frozen=True, slots=True)
class Candidate:
    subgraph_id: int
    assignment: tuple[int, ...]

    def validate(self, space: SpaceDescriptor) -> None:
        if len(self.assignment) != space.n_knobs:
            raise SpaceError(
                f"assignment has {len(self.assignment)} entries, space has {space.n_knobs} knobs"
            )
        for idx, d in zip(self.assignment, space.dims):
            if not 0 <= idx < d:
                raise SpaceError(f"value index {idx} out of range [0, {d})")


@dataclass(slots=True)
class MeasurementRecord:
    candidate: Candidate
    features: np.ndarray
    latency: float
    measured_at: float = 0.0

    def __post_init__(self):
        if not self.latency > 0:
            raise ValueError(f"latency must be positive, got {self.latency}")
        # a non-finite entry always makes the sum non-finite; the exact check
        # only runs then (overflow of a finite sum)
        if not math.isfinite(self.features.sum()) and not np.isfinite(self.features).all():
            raise ValueError("features must be finite")

    @classmethod
    def batch(cls, candidates, features: np.ndarray, latencies: np.ndarray, stamps) -> list["MeasurementRecord"]:
        """Build many records, validating the arrays once instead of per row."""
        if not (latencies > 0).all():
            raise ValueError("latency must be positive")
        if not np.isfinite(features).all():
            raise ValueError("features must be finite")
        out = []
        new = object.__new__
        for c, f, lat, t in zip(candidates, features, latencies.tolist(), stamps):
            r = new(cls)
            r.candidate, r.features, r.latency, r.measured_at = c, f, lat, t
            out.append(r)
        return out


def space_size(subgraph: "Subgraph") -> int:
    return subgraph.knob_space.size


def feature_dim(n_knobs: int) -> int:
    return 2 * n_knobs + n_knobs * (n_knobs - 1) // 2


def featurize_batch(assignments: np.ndarray, space: SpaceDescriptor, d_max: int | None = None) -> np.ndarray:
    """Feature rows for an ``(m, K)`` index array.

    Layout: ``log2(value)`` per knob, normalized position per knob, then
    ``log2(v_i) * log2(v_j)`` for ``i < j``; zero-padded to ``d_max``.
    """
    a = np.atleast_2d(np.asarray(assignments, dtype=np.int64))
    k = space.n_knobs
    if a.shape[1] != k:
        raise SpaceError(f"expected {k} knob indices per row, got {a.shape[1]}")
    d = feature_dim(k)
    d_max = d if d_max is None else d_max
    if d_max < d:
        raise SpaceError(f"d_max={d_max} smaller than native feature size {d}")
    logs = np.empty((a.shape[0], k))
    for i, vals in enumerate(space.value_table()):
        logs[:, i] = np.log2(vals)[a[:, i]]
    out = np.zeros((a.shape[0], d_max))
    out[:, :k] = logs
    out[:, k : 2 * k] = space.positions(a)
    iu, ju = np.triu_indices(k, 1)
    out[:, 2 * k : d] = logs[:, iu] * logs[:, ju]
    return out


def featurize(candidate: Candidate, subgraph: "Subgraph", d_max: int | None = None) -> np.ndarray:
    candidate.validate(subgraph.knob_space)
    return featurize_batch(np.asarray([candidate.assignment]), subgraph.knob_space, d_max)[0]


@dataclass
class History:
    """Measured candidates of one subgraph: flat codes and latencies."""

    codes: list[int] = field(default_factory=list)
    latencies: list[float] = field(default_factory=list)
    seen: set[int] = field(default_factory=set)

    def add(self, codes: Iterable[int], latencies: Iterable[float]) -> None:
        for c, lat in zip(codes, latencies):
            c = int(c)
            self.codes.append(c)
            self.latencies.append(float(lat))
            self.seen.add(c)

    def __len__(self) -> int:
        return len(self.seen)

    def __contains__(self, code: int) -> bool:
        return int(code) in self.seen

    def top_quartile(self) -> np.ndarray:
        if not self.codes:
            return np.empty(0, dtype=np.int64)
        lat = np.asarray(self.latencies)
        k = max(1, len(lat) // 4)
        order = np.argsort(lat, kind="stable")[:k]
        return np.asarray(self.codes, dtype=np.int64)[order]


def propose(
    space: SpaceDescriptor,
    history: History,
    pool_random: int,
    pool_evolved: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Return an ``(m, K)`` array of distinct, unmeasured assignments.

    Evolved entries come first (single-knob mutations of top-quartile
    parents), followed by uniform random draws. Small spaces are enumerated
    so that exhaustion is exact.
    """
    size = space.size
    want = pool_random + pool_evolved
    if size - len(history) <= 0 or want <= 0:
        return np.empty((0, space.n_knobs), dtype=np.int64)

    taken: set[int] = set()
    out: list[int] = []

    parents = history.top_quartile()
    n_evolve = pool_evolved if len(parents) else 0
    if n_evolve:
        dims = np.asarray(space.dims)
        pa = space.decode(parents)
        attempts = 0
        while len(out) < n_evolve and attempts < 8:
            attempts += 1
            n = 2 * (n_evolve - len(out))
            child = pa[rng.integers(0, len(pa), size=n)].copy()
            knob = rng.integers(0, space.n_knobs, size=n)
            child[np.arange(n), knob] = rng.integers(0, dims[knob])
            for c in space.encode(child).tolist():
                if c not in history.seen and c not in taken:
                    taken.add(c)
                    out.append(c)
                    if len(out) == n_evolve:
                        break

    n_random = want - len(out) if not n_evolve else pool_random
    if size <= ENUMERATE_FACTOR * want:
        free = np.setdiff1d(np.arange(size, dtype=np.int64), np.fromiter(history.seen | taken, np.int64))
        if len(free) > n_random:
            free = rng.choice(free, size=n_random, replace=False)
        out.extend(free.tolist())
    else:
        dims = np.asarray(space.dims)
        goal = len(out) + n_random
        attempts = 0
        while len(out) < goal and attempts < 20:
            attempts += 1
            n = goal - len(out)
            draws = space.encode(rng.integers(0, dims, size=(n, space.n_knobs)))
            for c in draws.tolist():
                if c not in history.seen and c not in taken:
                    taken.add(c)
                    out.append(c)
    return space.decode(np.asarray(out, dtype=np.int64))


def generate_candidates(
    subgraph: "Subgraph",
    history: History,
    pool_random: int,
    pool_evolved: int,
    rng: np.random.Generator,
) -> list[Candidate]:
    arr = propose(subgraph.knob_space, history, pool_random, pool_evolved, rng)
    return [Candidate(subgraph.id, tuple(row)) for row in arr.tolist()]
