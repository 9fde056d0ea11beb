"""Experiment harnesses: cross-prediction heatmaps, monolithic vs individual
accuracy bars, paired policy comparisons and budget-allocation reports.

Performance thresholds follow the throughput convention: reaching ``x`` of
the baseline's final performance means a model latency at or below
``L_final / x``.
"""

from __future__ import annotations

import csv
import math
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .costmodel import CostModel, CostModelConfig, initialize_cost_model, ranking_accuracy
from .family import FamilyRegistry, construct_family
from .graph import ModelGraph
from .scheduler import CurvePoint, Policy, TunerConfig, TunerState, baseline_tune, foresee_tune
from .searchspace import feature_dim, featurize_batch
from .simbackend import Landscape, LandscapeConfig, SimBackend, SimClock, make_landscape, stream

THRESHOLDS = (0.8, 0.9, 1.0)
SAMPLE_STREAM = 3
SPLIT_STREAM = 4
SAMPLE_NOISE_STREAM = 5
MIN_SAMPLES = 32


@dataclass
class SampleSet:
    """Measured random candidates of one subgraph, split into train/validation."""

    subgraph_id: int
    X_train: np.ndarray
    lat_train: np.ndarray
    X_val: np.ndarray
    lat_val: np.ndarray

    @property
    def n(self) -> int:
        return len(self.lat_train) + len(self.lat_val)


def sample_subgraphs(
    model: ModelGraph,
    landscape: Landscape,
    samples: int | Mapping[int, int],
    seed: int,
    train_fraction: float = 0.8,
    train_caps: Mapping[int, int] | None = None,
) -> list[SampleSet]:
    """Uniformly sample distinct candidates per subgraph, measure, split 80/20.

    ``train_caps`` truncates the training share of selected subgraphs while
    leaving their validation share intact.
    """
    d_max = max(feature_dim(s.knob_space.n_knobs) for s in model.subgraphs)
    out = []
    for s in model.subgraphs:
        want = samples.get(s.id, MIN_SAMPLES) if isinstance(samples, Mapping) else samples
        space = s.knob_space
        rng = stream(seed, SAMPLE_STREAM, s.id)
        n = min(want, space.size)
        codes = rng.choice(space.size, size=n, replace=False) if space.size <= 10**7 else _distinct_codes(rng, space.size, n)
        A = space.decode(np.asarray(codes, dtype=np.int64))
        lat = landscape.latency(s.id, A)
        if landscape.noise_sigma > 0:
            lat = lat * np.exp(stream(seed, SAMPLE_NOISE_STREAM, s.id).normal(0, landscape.noise_sigma, size=n))
        X = featurize_batch(A, space, d_max)
        perm = stream(seed, SPLIT_STREAM, s.id).permutation(n)
        k = int(round(train_fraction * n))
        tr, va = perm[:k], perm[k:]
        if train_caps and s.id in train_caps:
            tr = tr[: train_caps[s.id]]
        out.append(SampleSet(s.id, X[tr], lat[tr], X[va], lat[va]))
    return out


def _distinct_codes(rng: np.random.Generator, size: int, n: int) -> np.ndarray:
    seen: set[int] = set()
    while len(seen) < n:
        seen.update(int(c) for c in rng.integers(0, size, size=n - len(seen)))
    return np.asarray(sorted(seen), dtype=np.int64)


def _fit(tag, sets: Sequence[SampleSet], config: CostModelConfig | None) -> CostModel:
    cm = initialize_cost_model(tag, config)
    for ss in sets:
        cm.add_samples(ss.X_train, ss.lat_train, ss.subgraph_id)
    return cm.fit()


def _accuracy(cm: CostModel, ss: SampleSet) -> float:
    try:
        return ranking_accuracy(cm.predict(ss.X_val), ss.lat_val)
    except ValueError:
        return math.nan


def _truth(model: ModelGraph, truth: FamilyRegistry | str | None) -> FamilyRegistry:
    if truth is None:
        truth = "core-op"
    if isinstance(truth, str):
        truth = construct_family(list(model.subgraphs), truth)
    return truth


@dataclass
class HeatmapResult:
    """``matrix[x, y]``: accuracy of subgraph x's model on subgraph y's validation set."""

    matrix: np.ndarray
    subgraph_ids: list[int]
    samples: list[int]
    archetype_of: list[int]

    def within_cross_means(self) -> tuple[float, float]:
        """Mean off-diagonal same-archetype accuracy, mean cross-archetype accuracy."""
        arch = np.asarray(self.archetype_of)
        same = arch[:, None] == arch[None, :]
        off = ~np.eye(len(arch), dtype=bool)
        M = self.matrix
        within = M[same & off]
        cross = M[~same]
        within = within[np.isfinite(within)]
        cross = cross[np.isfinite(cross)]
        return (float(within.mean()) if within.size else math.nan, float(cross.mean()) if cross.size else math.nan)

    def diagonal_mean(self) -> float:
        return float(np.nanmean(np.diag(self.matrix)))

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["model\\validation"] + [f"subgraph_{i}" for i in self.subgraph_ids])
            for i, row in zip(self.subgraph_ids, self.matrix):
                w.writerow([f"subgraph_{i}"] + ["" if math.isnan(v) else f"{v:.4f}" for v in row])


def run_heatmap(
    model: ModelGraph,
    samples_per_subgraph: int,
    seed: int,
    truth: FamilyRegistry | str | None = None,
    landscape_config: LandscapeConfig | None = None,
    cost_config: CostModelConfig | None = None,
    landscape: Landscape | None = None,
) -> HeatmapResult:
    if samples_per_subgraph < MIN_SAMPLES:
        raise ValueError(f"samples_per_subgraph must be >= {MIN_SAMPLES}")
    truth = _truth(model, truth)
    land = landscape or make_landscape(model, truth, seed, landscape_config)
    sets = sample_subgraphs(model, land, samples_per_subgraph, seed)
    models = [_fit(ss.subgraph_id, [ss], cost_config) for ss in sets]
    n = len(sets)
    M = np.full((n, n), math.nan)
    for x in range(n):
        for y in range(n):
            M[x, y] = _accuracy(models[x], sets[y])
    return HeatmapResult(M, [s.id for s in model.subgraphs], [ss.n for ss in sets], [int(a) for a in land.archetype_of])


@dataclass
class BarRow:
    subgraph_id: int
    samples: int
    monolithic_acc: float
    individual_acc: float
    family_acc: float


def run_accuracy_bars(
    model: ModelGraph,
    samples_per_subgraph: int,
    seed: int,
    truth: FamilyRegistry | str | None = None,
    families: FamilyRegistry | str | None = None,
    train_caps: Mapping[int, int] | None = None,
    landscape_config: LandscapeConfig | None = None,
    cost_config: CostModelConfig | None = None,
    landscape: Landscape | None = None,
) -> list[BarRow]:
    """Monolithic (all subgraphs), individual and family model accuracy per subgraph.

    ``train_caps`` limits the training samples of selected subgraphs, e.g. to
    starve one of data; validation sets are unaffected.
    """
    if samples_per_subgraph < MIN_SAMPLES:
        raise ValueError(f"samples_per_subgraph must be >= {MIN_SAMPLES}")
    truth = _truth(model, truth)
    fam = _truth(model, families) if families is not None else truth
    land = landscape or make_landscape(model, truth, seed, landscape_config)
    sets = sample_subgraphs(model, land, samples_per_subgraph, seed, train_caps=train_caps)
    mono = _fit("monolithic", sets, cost_config)
    fam_models = {f.family_id: _fit(f.family_id, [sets[i] for i in f.member_ids], cost_config) for f in fam.families}
    rows = []
    for ss in sets:
        indiv = _fit(ss.subgraph_id, [ss], cost_config)
        rows.append(
            BarRow(
                ss.subgraph_id,
                ss.n,
                _accuracy(mono, ss),
                _accuracy(indiv, ss),
                _accuracy(fam_models[fam.index[ss.subgraph_id]], ss),
            )
        )
    return rows


def write_bars_csv(rows: Sequence[BarRow], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["subgraph_id", "samples", "monolithic_acc", "individual_acc", "family_acc"])
        for r in rows:
            w.writerow([r.subgraph_id, r.samples, f"{r.monolithic_acc:.4f}", f"{r.individual_acc:.4f}", f"{r.family_acc:.4f}"])


@dataclass
class ThresholdRow:
    fraction: float
    target_latency_ms: float
    baseline_b: int | None
    baseline_wall: float | None
    foresee_b: int | None
    foresee_wall: float | None

    @property
    def budget_ratio(self) -> float:
        """Foresee budget over baseline budget (< 1 means foresee is faster)."""
        if self.foresee_b is None or not self.baseline_b:
            return math.inf
        return self.foresee_b / self.baseline_b

    @property
    def budget_speedup(self) -> float:
        return 1.0 / self.budget_ratio if self.budget_ratio > 0 else math.inf

    @property
    def wall_speedup(self) -> float:
        if self.foresee_wall is None or self.baseline_wall is None or self.foresee_wall == 0:
            return 0.0 if self.foresee_wall is None else math.inf
        return self.baseline_wall / self.foresee_wall


def first_reaching(curve: Sequence[CurvePoint], target: float) -> CurvePoint | None:
    for pt in curve:
        if pt.model_latency_ms <= target:
            return pt
    return None


@dataclass
class ComparisonReport:
    seed: int
    budget: int
    baseline: TunerState
    foresee: TunerState
    thresholds: list[ThresholdRow] = field(default_factory=list)
    landscape_digest: str = ""

    @property
    def baseline_final(self) -> float:
        return self.baseline.curve[-1].model_latency_ms

    def row(self, fraction: float) -> ThresholdRow:
        for r in self.thresholds:
            if math.isclose(r.fraction, fraction):
                return r
        raise KeyError(fraction)

    def write(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "compare_curves.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["policy", "b", "sim_wall_seconds", "model_latency_ms", "phase", "tuned_subgraph_id"])
            for name, st in (("monolithic", self.baseline), ("foresee", self.foresee)):
                for pt in st.curve:
                    w.writerow([name, pt.b, f"{pt.sim_wall_seconds:.6f}", f"{pt.model_latency_ms:.9g}", pt.phase, pt.tuned_subgraph_id])
        with open(out / "compare_thresholds.csv", "w", newline="") as fh:
            fh.write("# performance = 1/latency; x of final performance means latency <= L_final / x\n")
            w = csv.writer(fh)
            w.writerow(["fraction", "target_latency_ms", "baseline_b", "foresee_b", "budget_ratio", "budget_speedup", "baseline_wall", "foresee_wall", "wall_speedup"])
            for r in self.thresholds:
                w.writerow(
                    [r.fraction, f"{r.target_latency_ms:.9g}", r.baseline_b, r.foresee_b, f"{r.budget_ratio:.4f}", f"{r.budget_speedup:.4f}", r.baseline_wall, r.foresee_wall, f"{r.wall_speedup:.4f}"]
                )
        for name, st in (("monolithic", self.baseline), ("foresee", self.foresee)):
            with open(out / f"curve_{name}.dat", "w") as fh:
                fh.write("# b sim_wall_seconds model_latency_ms\n")
                for pt in st.curve:
                    fh.write(f"{pt.b} {pt.sim_wall_seconds:.6f} {pt.model_latency_ms:.9g}\n")
        (out / "compare.gp").write_text(
            "set xlabel 'measurements'\nset ylabel 'model latency (ms)'\nset logscale y\n"
            "plot 'curve_monolithic.dat' using 1:3 with steps title 'monolithic', "
            "'curve_foresee.dat' using 1:3 with steps title 'foresee'\n"
        )


def threshold_rows(baseline: TunerState, foresee: TunerState, fractions: Sequence[float] = THRESHOLDS) -> list[ThresholdRow]:
    final = baseline.curve[-1].model_latency_ms
    rows = []
    for x in fractions:
        target = final / x
        pb, pf = first_reaching(baseline.curve, target), first_reaching(foresee.curve, target)
        rows.append(
            ThresholdRow(
                x,
                target,
                pb.b if pb else None,
                pb.sim_wall_seconds if pb else None,
                pf.b if pf else None,
                pf.sim_wall_seconds if pf else None,
            )
        )
    return rows


def run_compare(
    model: ModelGraph,
    B: int,
    p: float,
    seed: int,
    workers: int = 1,
    policy: Policy | None = None,
    truth: FamilyRegistry | str | None = None,
    landscape_config: LandscapeConfig | None = None,
    tuner_config: TunerConfig | None = None,
    clock_template: SimClock | None = None,
) -> ComparisonReport:
    """Baseline and foresee tuning on the same landscape and noise streams."""
    policy = policy or Policy()
    truth = _truth(model, truth)
    land = make_landscape(model, truth, seed, landscape_config)
    tmpl = clock_template or SimClock()

    def backend() -> SimBackend:
        clock = SimClock(tmpl.t_measure, tmpl.t_train_per_sample, tmpl.train_speedup)
        return SimBackend(land, clock, workers, seed)

    base = baseline_tune(model, B, policy, backend(), tuner_config)
    fore = foresee_tune(model, B, p, policy, backend(), tuner_config)
    return ComparisonReport(seed, B, base, fore, threshold_rows(base, fore), land.digest())


def median_budget_ratios(reports: Sequence[ComparisonReport]) -> dict[float, float]:
    return {x: statistics.median(r.row(x).budget_ratio for r in reports) for x in THRESHOLDS}


@dataclass
class BudgetRow:
    subgraph_id: int
    measurements: int
    share: float
    initial_ms: float
    best_ms: float
    last_improvement_at: int
    plateau: bool
    exhausted: bool


def run_budget_report(state: TunerState) -> list[BudgetRow]:
    """Per-subgraph allocation, improvement and plateau flags.

    A subgraph plateaued if its best latency did not improve during the final
    25% of the measurements it received. Exhausted subgraphs are reported as
    exhausted instead.
    """
    total = max(state.b, 1)
    rows = []
    for sid in range(state.n_subgraphs):
        hist = state.history[sid]
        spent = state.spent[sid]
        last = 0
        for (_, prev), (at, cur) in zip(hist, hist[1:]):
            if cur < prev:
                last = at
        exhausted = state.exhausted[sid]
        plateau = bool(spent > 0 and not exhausted and last <= 0.75 * spent)
        rows.append(BudgetRow(sid, spent, spent / total, hist[0][1], state.best_latency[sid], last, plateau, exhausted))
    return rows


def write_budget_csv(rows: Sequence[BudgetRow], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["subgraph_id", "measurements", "share", "initial_ms", "best_ms", "improvement_ms", "last_improvement_at", "plateau", "exhausted"])
        for r in rows:
            w.writerow(
                [r.subgraph_id, r.measurements, f"{r.share:.4f}", f"{r.initial_ms:.6g}", f"{r.best_ms:.6g}", f"{r.initial_ms - r.best_ms:.6g}", r.last_improvement_at, int(r.plateau), int(r.exhausted)]
            )
