"""Foresee tuning with per-family cost models, and the monolithic baseline.

One iteration of foresee tuning:

1. main phase: pick the bottleneck subgraph among all non-exhausted ones,
   measure ``g`` candidates ranked by its family's cost model, retrain that
   model;
2. foresee phase: if the family has other non-exhausted members, pick the
   family bottleneck (excluding the subgraph just tuned), measure
   ``max(1, floor(g * p))`` candidates with the freshly retrained family
   model, retrain again.

The baseline runs only the main phase and shares a single cost model
across all subgraphs. Budget is counted in measurements; the last
iteration may overshoot ``B`` by less than ``g + floor(g * p)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .costmodel import CostModel, CostModelConfig, initialize_cost_model
from .family import FamilyRegistry, construct_family, find_family, monolithic_registry
from .graph import ModelGraph, Subgraph, model_latency
from .searchspace import Candidate, History, MeasurementRecord, featurize_batch, propose
from .simbackend import SEARCH_STREAM, SimBackend, charge_training, stream

MAX_G = 64


@dataclass(frozen=True)
class Policy:
    mode: str = "foresee"  # foresee | monolithic
    potential: str = "greedy"  # greedy | gradient
    cluster_algo: str = "core-op"

    def __post_init__(self):
        if self.mode not in ("foresee", "monolithic"):
            raise ValueError(f"unknown policy mode {self.mode!r}")
        if self.potential not in ("greedy", "gradient"):
            raise ValueError(f"unknown potential {self.potential!r}")


@dataclass(frozen=True)
class TunerConfig:
    pool_random: int = 512
    pool_evolved: int = 512
    epsilon: float = 0.1
    gradient_window: int = 3
    cost_model: CostModelConfig = field(default_factory=CostModelConfig)
    accelerated_training: bool = False

    def __post_init__(self):
        if not 0 <= self.epsilon < 1:
            raise ValueError("epsilon must be in [0, 1)")
        if self.gradient_window < 1:
            raise ValueError("gradient_window must be >= 1")


@dataclass
class CurvePoint:
    b: int
    sim_wall_seconds: float
    model_latency_ms: float
    phase: str
    tuned_subgraph_id: int


@dataclass
class TunerState:
    B: int
    g: int
    p: float
    best_latency: list[float]
    weights: list[int]
    b: int = 0
    spent: list[int] = field(default_factory=list)
    measured: list[History] = field(default_factory=list)
    history: list[list[tuple[int, float]]] = field(default_factory=list)
    exhausted: list[bool] = field(default_factory=list)
    curve: list[CurvePoint] = field(default_factory=list)

    @classmethod
    def initial(cls, model: ModelGraph, B: int, g: int, p: float, default_latency: Sequence[float]) -> "TunerState":
        n = len(model)
        best = [float(x) for x in default_latency]
        return cls(
            B=B,
            g=g,
            p=p,
            best_latency=best,
            weights=model.weights,
            spent=[0] * n,
            measured=[History() for _ in range(n)],
            # (measurements spent on this subgraph, best latency after them)
            history=[[(0, best[i])] for i in range(n)],
            exhausted=[False] * n,
        )

    @property
    def n_subgraphs(self) -> int:
        return len(self.best_latency)

    def record(self, sid: int, codes: np.ndarray, latencies: np.ndarray) -> None:
        self.measured[sid].add(codes.tolist(), latencies.tolist())
        self.spent[sid] += len(latencies)
        self.b += len(latencies)
        if len(latencies):
            self.best_latency[sid] = min(self.best_latency[sid], float(np.min(latencies)))
        self.history[sid].append((self.spent[sid], self.best_latency[sid]))

    def model_latency(self) -> float:
        return float(sum(w * l for w, l in zip(self.weights, self.best_latency)))


def iteration_size(B: int, n_subgraphs: int) -> int:
    """Candidates per main-phase step: min(64, floor(B / n))."""
    return min(MAX_G, B // n_subgraphs)


def foresee_size(g: int, p: float) -> int:
    return max(1, math.floor(g * p))


def calculate_potential(state: TunerState, subgraph_id: int, mode: str = "greedy", window: int = 3) -> float:
    """Priority of a subgraph; larger means tune it sooner.

    greedy: ``weight * best``. gradient: ``weight * max(backward, forward)``
    with backward the best-latency drop per measurement over the last
    ``window`` tuning steps and forward the optimistic ``best / spent``.
    Never-measured subgraphs get ``inf``.
    """
    if state.spent[subgraph_id] == 0:
        return math.inf
    w = state.weights[subgraph_id]
    best = state.best_latency[subgraph_id]
    if mode == "greedy":
        return w * best
    if mode != "gradient":
        raise ValueError(f"unknown potential mode {mode!r}")
    hist = state.history[subgraph_id]
    spent_now, best_now = hist[-1]
    spent_then, best_then = hist[max(0, len(hist) - 1 - window)]
    backward = (best_then - best_now) / (spent_now - spent_then) if spent_now > spent_then else 0.0
    forward = best_now / spent_now
    return w * max(backward, forward)


def select_bottleneck(scope: Sequence[int], state: TunerState, potential_fn: str = "greedy", window: int = 3) -> int:
    """Subgraph id of maximum potential; ties go to the smaller id."""
    if not scope:
        raise ValueError("empty scope")
    best_id, best_p = None, -math.inf
    for sid in sorted(scope):
        pot = calculate_potential(state, sid, potential_fn, window)
        if pot > best_p:
            best_id, best_p = sid, pot
    return best_id


class Tuner:
    """Holds everything one tuning run mutates: state, models, rng streams."""

    def __init__(
        self,
        model: ModelGraph,
        B: int,
        p: float,
        policy: Policy,
        backend: SimBackend,
        config: TunerConfig | None = None,
        model_registry: FamilyRegistry | None = None,
    ):
        n = len(model)
        if B < n:
            raise ValueError(f"budget {B} smaller than subgraph count {n}")
        if not 0 < p < 1:
            raise ValueError(f"foresee proportion must be in (0, 1), got {p}")
        self.model = model
        self.policy = policy
        self.backend = backend
        self.config = config or TunerConfig()
        self.g = iteration_size(B, n)
        self.g_foresee = foresee_size(self.g, p)
        if model_registry is None:
            subs = list(model.subgraphs)
            if policy.mode == "foresee":
                model_registry = construct_family(subs, policy.cluster_algo)
            else:
                model_registry = monolithic_registry(subs)
        self.registry = model_registry
        self.cost_models: dict[int, CostModel] = {
            f.family_id: initialize_cost_model(f if policy.mode == "foresee" else "monolithic", self.config.cost_model)
            for f in self.registry.families
        }
        defaults = [backend.landscape.default_latency(s.id) for s in model.subgraphs]
        self.state = TunerState.initial(model, B, self.g, p, defaults)
        self.search_rng = [stream(backend.seed, SEARCH_STREAM, s.id) for s in model.subgraphs]
        self.state.curve.append(CurvePoint(0, backend.clock.now, self.state.model_latency(), "init", -1))

    def cost_model_for(self, sid: int) -> CostModel:
        return self.cost_models[find_family(sid, self.registry).family_id]

    def live(self, ids) -> list[int]:
        return [i for i in ids if not self.state.exhausted[i]]

    def select(self, scope: Sequence[int]) -> int:
        return select_bottleneck(scope, self.state, self.policy.potential, self.config.gradient_window)

    def phase(self, sid: int, n_candidates: int, label: str) -> list[MeasurementRecord]:
        cm = self.cost_model_for(sid)
        records = tune_step(self.model[sid], cm, n_candidates, self.state, self.backend, self.search_rng[sid], self.config)
        if records:
            st = self.state
            st.curve.append(CurvePoint(st.b, self.backend.clock.now, st.model_latency(), label, sid))
        return records

    def run(self, foresee: bool) -> TunerState:
        st = self.state
        all_ids = [s.id for s in self.model.subgraphs]
        while st.b < st.B:
            scope = self.live(all_ids)
            if not scope:
                break
            s_cur = self.select(scope)
            self.phase(s_cur, self.g, "main")
            if not foresee:
                continue
            fam = find_family(s_cur, self.registry)
            if len(fam) > 1:
                sibs = self.live(i for i in fam.member_ids if i != s_cur)
                if sibs:
                    self.phase(self.select(sibs), self.g_foresee, "foresee")
        return st


def tune_step(
    subgraph: Subgraph,
    cost_model: CostModel,
    g_eff: int,
    state: TunerState,
    backend: SimBackend,
    rng: np.random.Generator,
    config: TunerConfig | None = None,
) -> list[MeasurementRecord]:
    """Measure up to ``g_eff`` candidates picked by the cost model, then retrain it.

    Ranking is by ascending predicted latency; ``floor(epsilon * g_eff)``
    slots go to uniformly random pool members instead. A subgraph whose
    space runs out is marked exhausted.
    """
    cfg = config or TunerConfig()
    if g_eff < 1:
        raise ValueError("g_eff must be >= 1")
    sid = subgraph.id
    space = subgraph.knob_space
    hist = state.measured[sid]
    pool = propose(space, hist, cfg.pool_random, cfg.pool_evolved, rng)
    if len(pool) == 0:
        state.exhausted[sid] = True
        return []
    if len(pool) <= g_eff:
        chosen = pool
    else:
        scores = cost_model.predict(featurize_batch(pool, space, backend.d_max))
        order = np.argsort(scores, kind="stable")
        n_eps = int(cfg.epsilon * g_eff)
        top = order[: g_eff - n_eps]
        rest = order[g_eff - n_eps :]
        explore = rng.choice(rest, size=n_eps, replace=False) if n_eps else np.empty(0, dtype=np.int64)
        chosen = pool[np.concatenate([top, explore])]
    cands = [Candidate(sid, tuple(row)) for row in chosen.tolist()]
    records = backend.run_batch(cands)
    lat = np.array([r.latency for r in records])
    state.record(sid, space.encode(chosen), lat)
    if len(state.measured[sid]) >= space.size:
        state.exhausted[sid] = True
    cost_model.add_samples(np.vstack([r.features for r in records]), lat, sid)
    cost_model.fit()
    charge_training(backend.clock, cost_model.n_samples, cfg.accelerated_training)
    return records


def foresee_tune(
    model: ModelGraph,
    B: int,
    p: float,
    policy: Policy,
    backend: SimBackend,
    config: TunerConfig | None = None,
    registry: FamilyRegistry | None = None,
) -> TunerState:
    if policy.mode != "foresee":
        policy = Policy("foresee", policy.potential, policy.cluster_algo)
    tuner = Tuner(model, B, p, policy, backend, config, registry)
    return tuner.run(foresee=True)


def baseline_tune(
    model: ModelGraph,
    B: int,
    policy: Policy,
    backend: SimBackend,
    config: TunerConfig | None = None,
    model_registry: FamilyRegistry | None = None,
) -> TunerState:
    """Main-phase-only loop; one shared cost model unless ``model_registry`` is given."""
    if policy.mode != "monolithic":
        policy = Policy("monolithic", policy.potential, policy.cluster_algo)
    tuner = Tuner(model, B, 0.25, policy, backend, config, model_registry)
    return tuner.run(foresee=False)


def tune(model: ModelGraph, B: int, p: float, policy: Policy, backend: SimBackend, config: TunerConfig | None = None) -> TunerState:
    if policy.mode == "foresee":
        return foresee_tune(model, B, p, policy, backend, config)
    return baseline_tune(model, B, policy, backend, config)


CURVE_COLUMNS = ["b", "sim_wall_seconds", "model_latency_ms", "phase", "tuned_subgraph_id"]


def write_curve(state: TunerState, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CURVE_COLUMNS)
        for pt in state.curve:
            w.writerow([pt.b, f"{pt.sim_wall_seconds:.6f}", f"{pt.model_latency_ms:.9g}", pt.phase, pt.tuned_subgraph_id])


def read_curve(path: str | Path) -> list[CurvePoint]:
    with open(path, newline="") as fh:
        return [
            CurvePoint(int(r["b"]), float(r["sim_wall_seconds"]), float(r["model_latency_ms"]), r["phase"], int(r["tuned_subgraph_id"]))
            for r in csv.DictReader(fh)
        ]


__all__ = [
    "Policy",
    "TunerConfig",
    "TunerState",
    "Tuner",
    "calculate_potential",
    "select_bottleneck",
    "tune_step",
    "foresee_tune",
    "baseline_tune",
    "tune",
    "model_latency",
    "write_curve",
    "read_curve",
]
