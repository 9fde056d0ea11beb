"""Synthetic latency landscapes, a simulated clock and a parallel executor.

True latency of candidate ``x`` on subgraph ``s`` with archetype ``a``::

    L_s(x) = base_s * (1 + sum_k c_a * (z_k - o_ak - shift_sk)**2 + z @ W_a @ z)

where ``z`` are the normalized knob positions in [0, 1]. ``W_a`` is
symmetric with zero diagonal and ``sum |W_a| < 1``, which keeps
``L_s > 0`` everywhere. Measurements multiply by ``exp(eps)`` with
``eps ~ N(0, noise_sigma**2)``.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .family import FamilyRegistry
from .graph import ModelGraph, Subgraph
from .searchspace import Candidate, MeasurementRecord, featurize_batch, feature_dim

MAX_ORACLE_SPACE = 10**6
# rng stream tags, so noise and search streams never collide
NOISE_STREAM = 1
SEARCH_STREAM = 2


@dataclass(frozen=True)
class LandscapeConfig:
    base_low: float = 0.1
    base_high: float = 10.0
    curvature_low: float = 1.0
    curvature_high: float = 4.0
    interaction: float = 0.6
    shift_max: float = 0.1
    noise_sigma: float = 0.02

    def __post_init__(self):
        if not 0 < self.base_low <= self.base_high:
            raise ValueError("need 0 < base_low <= base_high")
        if not 0 < self.curvature_low <= self.curvature_high:
            raise ValueError("need 0 < curvature_low <= curvature_high")
        if not 0 <= self.interaction < 1:
            raise ValueError("interaction must be in [0, 1) to keep latencies positive")
        if not 0 <= self.shift_max <= 0.15:
            raise ValueError("shift_max must be in [0, 0.15]")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")


@dataclass(frozen=True)
class Archetype:
    optimum: np.ndarray
    curvature: float
    interaction: np.ndarray

    def __post_init__(self):
        W = self.interaction
        if self.curvature <= 0:
            raise ValueError("curvature must be positive")
        if W.shape != (len(self.optimum),) * 2 or not np.allclose(W, W.T) or np.any(np.diag(W) != 0):
            raise ValueError("interaction must be symmetric with zero diagonal")
        if np.abs(W).sum() >= 1:
            raise ValueError("sum |interaction| must be < 1")


@dataclass
class Landscape:
    subgraphs: tuple[Subgraph, ...]
    archetypes: list[Archetype]
    archetype_of: np.ndarray
    base_latency: np.ndarray
    shift: list[np.ndarray]
    noise_sigma: float = 0.02
    seed: int = 0

    def latency(self, subgraph_id: int, assignments: np.ndarray) -> np.ndarray:
        """Noise-free latency for an ``(m, K)`` index array."""
        s = self.subgraphs[subgraph_id]
        arch = self.archetypes[self.archetype_of[subgraph_id]]
        k = s.knob_space.n_knobs
        z = s.knob_space.positions(np.atleast_2d(assignments))
        dev = z - arch.optimum[:k] - self.shift[subgraph_id]
        W = arch.interaction[:k, :k]
        shape = 1.0 + arch.curvature * np.sum(dev**2, axis=1) + np.einsum("mi,ij,mj->m", z, W, z)
        return self.base_latency[subgraph_id] * shape

    def default_latency(self, subgraph_id: int) -> float:
        k = self.subgraphs[subgraph_id].knob_space.n_knobs
        return float(self.latency(subgraph_id, np.zeros((1, k), dtype=np.int64))[0])

    def digest(self) -> str:
        h = hashlib.sha256()
        for a in self.archetypes:
            h.update(np.ascontiguousarray(a.optimum).tobytes())
            h.update(np.float64(a.curvature).tobytes())
            h.update(np.ascontiguousarray(a.interaction).tobytes())
        h.update(self.archetype_of.astype(np.int64).tobytes())
        h.update(self.base_latency.tobytes())
        for sh in self.shift:
            h.update(sh.tobytes())
        h.update(np.float64(self.noise_sigma).tobytes())
        return h.hexdigest()

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["subgraph_id", "archetype_id", "base_latency_ms", "default_latency_ms", "shift"])
            for s in self.subgraphs:
                w.writerow(
                    [
                        s.id,
                        int(self.archetype_of[s.id]),
                        f"{self.base_latency[s.id]:.9g}",
                        f"{self.default_latency(s.id):.9g}",
                        " ".join(f"{v:.6f}" for v in self.shift[s.id]),
                    ]
                )


def _draw_archetype(rng: np.random.Generator, k: int, cfg: LandscapeConfig) -> Archetype:
    optimum = rng.uniform(0.0, 1.0, size=k)
    curvature = float(rng.uniform(cfg.curvature_low, cfg.curvature_high))
    W = np.triu(rng.uniform(-1.0, 1.0, size=(k, k)), 1)
    W = W + W.T
    total = np.abs(W).sum()
    if total > 0:
        W *= cfg.interaction / total
    return Archetype(optimum, curvature, W)


def make_landscape(
    model: ModelGraph,
    truth: FamilyRegistry | Mapping[int, int],
    seed: int,
    config: LandscapeConfig | None = None,
    archetypes: Mapping[int, Archetype] | None = None,
) -> Landscape:
    """Draw one archetype per true family and per-subgraph base/shift.

    ``truth`` maps subgraph id to archetype id (a registry's index works).
    ``archetypes`` pins specific archetype parameters, for fixtures.
    """
    cfg = config or LandscapeConfig()
    index = truth.index if isinstance(truth, FamilyRegistry) else dict(truth)
    if set(index) != {s.id for s in model.subgraphs}:
        raise ValueError("truth must assign every subgraph to an archetype")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    k_max = max(s.knob_space.n_knobs for s in model.subgraphs)
    n_arch = max(index.values()) + 1
    arch = []
    for a in range(n_arch):
        drawn = _draw_archetype(rng, k_max, cfg)
        pinned = (archetypes or {}).get(a)
        if pinned is not None:
            if len(pinned.optimum) < k_max:
                raise ValueError(f"pinned archetype {a} has fewer than {k_max} knobs")
            drawn = pinned
        arch.append(drawn)
    n = len(model)
    base = np.exp(rng.uniform(math.log(cfg.base_low), math.log(cfg.base_high), size=n))
    shift = [rng.uniform(-cfg.shift_max, cfg.shift_max, size=s.knob_space.n_knobs) for s in model.subgraphs]
    archetype_of = np.array([index[s.id] for s in model.subgraphs], dtype=np.int64)
    return Landscape(tuple(model.subgraphs), arch, archetype_of, base, shift, cfg.noise_sigma, seed)


def measure(candidate: Candidate, landscape: Landscape, rng: np.random.Generator) -> float:
    lat = landscape.latency(candidate.subgraph_id, np.asarray([candidate.assignment]))[0]
    if landscape.noise_sigma > 0:
        lat *= math.exp(rng.normal(0.0, landscape.noise_sigma))
    return float(lat)


@dataclass
class SimClock:
    t_measure: float = 1.0
    t_train_per_sample: float = 0.0005
    train_speedup: float = 10.0
    now: float = 0.0

    def __post_init__(self):
        if self.t_measure < 0 or self.t_train_per_sample < 0:
            raise ValueError("clock costs must be >= 0")
        if self.train_speedup < 1:
            raise ValueError("train_speedup must be >= 1")

    def advance(self, seconds: float) -> None:
        if seconds < 0:
            raise ValueError("clock cannot go backwards")
        self.now += seconds


def charge_training(clock: SimClock, n_samples: int, accelerated: bool) -> None:
    cost = n_samples * clock.t_train_per_sample
    clock.advance(cost / clock.train_speedup if accelerated else cost)


def stream(seed: int, tag: int, subgraph_id: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, tag, subgraph_id]))


@dataclass
class SimBackend:
    """Measurement executor with ``workers`` simulated devices.

    Each device runs one candidate at a time, so a batch of ``m`` costs
    ``ceil(m / workers) * t_measure``. Noise comes from per-subgraph streams,
    so the worker count never changes measured values.
    """

    landscape: Landscape
    clock: SimClock = field(default_factory=SimClock)
    workers: int = 1
    seed: int = 0
    d_max: int | None = None
    _noise: dict[int, np.random.Generator] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.d_max is None:
            self.d_max = max(feature_dim(s.knob_space.n_knobs) for s in self.landscape.subgraphs)

    def noise_rng(self, subgraph_id: int) -> np.random.Generator:
        rng = self._noise.get(subgraph_id)
        if rng is None:
            rng = self._noise[subgraph_id] = stream(self.seed, NOISE_STREAM, subgraph_id)
        return rng

    def measure_array(self, subgraph_id: int, assignments: np.ndarray) -> np.ndarray:
        """Latencies for an index array, advancing the clock by the batch cost."""
        lat = self.landscape.latency(subgraph_id, assignments)
        if self.landscape.noise_sigma > 0:
            lat = lat * np.exp(self.noise_rng(subgraph_id).normal(0.0, self.landscape.noise_sigma, size=len(lat)))
        return lat

    def run_batch(self, candidates: Sequence[Candidate], workers: int | None = None) -> list[MeasurementRecord]:
        return run_batch(candidates, workers or self.workers, self.clock, self)


def run_batch(
    candidates: Sequence[Candidate], workers: int, clock: SimClock, backend: SimBackend
) -> list[MeasurementRecord]:
    """Measure every candidate; results in input order, stamped with finish times."""
    if workers < 1:
        raise ValueError("workers must be >= 1")
    records: list[MeasurementRecord | None] = [None] * len(candidates)
    start = clock.now
    by_sg: dict[int, list[int]] = {}
    for i, c in enumerate(candidates):
        by_sg.setdefault(c.subgraph_id, []).append(i)
    for sid, idx in by_sg.items():
        space = backend.landscape.subgraphs[sid].knob_space
        arr = np.asarray([candidates[i].assignment for i in idx], dtype=np.int64)
        lat = backend.measure_array(sid, arr)
        feats = featurize_batch(arr, space, backend.d_max)
        stamps = (start + (np.asarray(idx) // workers + 1) * clock.t_measure).tolist()
        batch = MeasurementRecord.batch([candidates[i] for i in idx], feats, np.asarray(lat, dtype=float), stamps)
        for i, r in zip(idx, batch):
            records[i] = r
    clock.advance(math.ceil(len(candidates) / workers) * clock.t_measure)
    return records


def brute_force_optimum(subgraph: Subgraph, landscape: Landscape) -> tuple[Candidate, float]:
    """Exhaustive noise-free minimum over the subgraph's whole space."""
    space = subgraph.knob_space
    if space.size > MAX_ORACLE_SPACE:
        raise ValueError(f"space of {space.size} candidates too large for enumeration (max {MAX_ORACLE_SPACE})")
    best_code, best_lat = -1, math.inf
    chunk = 65536
    for lo in range(0, space.size, chunk):
        codes = np.arange(lo, min(lo + chunk, space.size), dtype=np.int64)
        lat = landscape.latency(subgraph.id, space.decode(codes))
        j = int(np.argmin(lat))
        if lat[j] < best_lat:
            best_code, best_lat = int(codes[j]), float(lat[j])
    assign = tuple(space.decode(np.asarray([best_code]))[0].tolist())
    return Candidate(subgraph.id, assign), best_lat


def oracle_model_latency(model: ModelGraph, landscape: Landscape) -> float:
    return float(sum(s.weight * brute_force_optimum(s, landscape)[1] for s in model.subgraphs))
