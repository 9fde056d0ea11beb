"""Gradient-boosted regression trees used as a learned latency model.

The model regresses per-subgraph relative log-latency,
``log(latency) - min log(latency)`` over that subgraph's training records,
so subgraphs of one family with different base latencies share a target
scale. Lower predictions mean faster candidates.

Split search is exact greedy: every distinct training value of a feature is
a threshold candidate (``x <= threshold`` goes left). Equal gains resolve to
the lowest feature index and then the lowest threshold. Rows are put in a
canonical order before fitting, so the fit does not depend on the order in
which records arrived.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .searchspace import MeasurementRecord

MONOLITHIC = "monolithic"


@dataclass(frozen=True)
class CostModelConfig:
    n_trees: int = 50
    max_depth: int = 3
    learning_rate: float = 0.1
    min_samples_leaf: int = 2

    def __post_init__(self):
        if self.n_trees < 0 or self.max_depth < 1 or self.min_samples_leaf < 1:
            raise ValueError(f"invalid cost model config {self}")
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must be in (0, 1]")


@dataclass
class RegressionTree:
    """Heap-ordered binary tree; children of node i are 2i+1 and 2i+2."""

    feature: np.ndarray  # -1 marks a leaf
    threshold: np.ndarray
    value: np.ndarray

    @classmethod
    def leaf(cls, value: float, depth: int = 0) -> "RegressionTree":
        n = 2 ** (depth + 1) - 1
        t = cls(np.full(n, -1), np.zeros(n), np.zeros(n))
        t.value[0] = value
        return t

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                return node
            go_right = X[rows, np.where(inner, f, 0)] > self.threshold[node]
            node = np.where(inner, 2 * node + 1 + go_right, node)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def dump(self) -> str:
        lines = []

        def walk(i: int, indent: int) -> None:
            pad = "  " * indent
            if self.feature[i] < 0:
                lines.append(f"{pad}leaf {self.value[i]:.6g}")
                return
            lines.append(f"{pad}x[{self.feature[i]}] <= {self.threshold[i]:.6g}")
            walk(2 * i + 1, indent + 1)
            walk(2 * i + 2, indent + 1)

        walk(0, 0)
        return "\n".join(lines)


class _Binned:
    """Per-feature rank codes laid out in one global bin axis."""

    def __init__(self, X: np.ndarray):
        n, d = X.shape
        codes = np.empty((n, d), dtype=np.int64)
        values = []
        offset = 0
        for j in range(d):
            uniq, inv = np.unique(X[:, j], return_inverse=True)
            codes[:, j] = inv + offset
            values.append(uniq)
            offset += len(uniq)
        sizes = np.array([len(v) for v in values])
        self.codes = codes
        self.n_bins = offset
        self.bin_value = np.concatenate(values)
        self.bin_feature = np.repeat(np.arange(d), sizes)
        seg_start = np.repeat(np.cumsum(sizes) - sizes, sizes)
        self.before = np.maximum(seg_start - 1, 0)
        self.has_before = seg_start > 0
        self.last_in_seg = np.zeros(offset, dtype=bool)
        self.last_in_seg[np.cumsum(sizes) - 1] = True
        # the feature-0 segment of a node histogram sums to the node total
        self.first_seg_end = int(sizes[0])
        self.root_counts = np.bincount(codes.ravel(), minlength=offset).astype(float)

    def histogram(self, idx: np.ndarray, r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        flat = self.codes[idx].ravel()
        d = self.codes.shape[1]
        s = np.bincount(flat, weights=np.repeat(r[idx], d), minlength=self.n_bins)
        n = np.bincount(flat, minlength=self.n_bins).astype(float)
        return s, n

    def best_split(self, S: np.ndarray, N: np.ndarray, min_leaf: int) -> tuple[int, float]:
        cs, cn = np.cumsum(S), np.cumsum(N)
        SL = cs - np.where(self.has_before, cs[self.before], 0.0)
        NL = cn - np.where(self.has_before, cn[self.before], 0.0)
        tot_s, tot_n = cs[self.first_seg_end - 1], cn[self.first_seg_end - 1]
        SR, NR = tot_s - SL, tot_n - NL
        # thresholds are node values only: empty bins repeat a partition and
        # carry subtraction round-off in S
        valid = ~self.last_in_seg & (N > 0) & (NL >= min_leaf) & (NR >= min_leaf)
        if not valid.any():
            return -1, 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            gain = np.where(valid, SL**2 / NL + SR**2 / NR, -np.inf) - tot_s**2 / tot_n
        # equal partitions can differ by round-off between features; treat
        # near-equal gains as ties so the lowest feature/threshold wins
        parent = tot_s**2 / tot_n
        gmax = gain.max()
        b = int(np.argmax(gain >= gmax - 1e-9 * (abs(gmax) + parent)))
        return b, float(gain[b])


def _grow_tree(binned: _Binned, r: np.ndarray, max_depth: int, min_leaf: int) -> tuple[RegressionTree, np.ndarray]:
    """Fit one depth-limited tree to residuals ``r``; also return each row's leaf."""
    n = len(r)
    n_nodes = 2 ** (max_depth + 1) - 1
    feature = np.full(n_nodes, -1)
    threshold = np.zeros(n_nodes)
    value = np.zeros(n_nodes)
    leaf_of = np.zeros(n, dtype=np.int64)

    all_rows = np.arange(n)
    root_s = np.bincount(binned.codes.ravel(), weights=np.repeat(r, binned.codes.shape[1]), minlength=binned.n_bins)
    # (heap index, rows, histogram sums, histogram counts, depth)
    stack = [(0, all_rows, root_s, binned.root_counts, 0)]
    while stack:
        h, rows, S, N, depth = stack.pop()
        rr = r[rows]
        b, gain = (-1, 0.0) if depth == max_depth else binned.best_split(S, N, min_leaf)
        if b < 0 or gain <= 1e-12 * max(float(rr @ rr), 1e-300):
            value[h] = rr.mean()
            leaf_of[rows] = h
            continue
        f = binned.bin_feature[b]
        feature[h] = f
        threshold[h] = binned.bin_value[b]
        go_left = binned.codes[rows, f] <= b
        left, right = rows[go_left], rows[~go_left]
        if depth + 1 == max_depth:
            # children will be leaves; their histograms are never read
            stack.append((2 * h + 2, right, S, N, depth + 1))
            stack.append((2 * h + 1, left, S, N, depth + 1))
            continue
        small, big = (left, right) if len(left) <= len(right) else (right, left)
        s_small, n_small = binned.histogram(small, r)
        hs = {id(small): (s_small, n_small), id(big): (S - s_small, N - n_small)}
        stack.append((2 * h + 2, right, *hs[id(right)], depth + 1))
        stack.append((2 * h + 1, left, *hs[id(left)], depth + 1))
    return RegressionTree(feature, threshold, value), leaf_of


@dataclass
class CostModel:
    tag: object
    config: CostModelConfig = field(default_factory=CostModelConfig)
    trees: list[RegressionTree] = field(default_factory=list)
    base_prediction: float = 0.0
    loss_curve: list[float] = field(default_factory=list)
    _X: list[np.ndarray] = field(default_factory=list, repr=False)
    _logy: list[np.ndarray] = field(default_factory=list, repr=False)
    _groups: list[np.ndarray] = field(default_factory=list, repr=False)
    n_features: int | None = None

    @property
    def learning_rate(self) -> float:
        return self.config.learning_rate

    @property
    def n_samples(self) -> int:
        return int(sum(len(y) for y in self._logy))

    def training_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if not self._logy:
            return np.empty((0, self.n_features or 0)), np.empty(0), np.empty(0, dtype=np.int64)
        return np.vstack(self._X), np.concatenate(self._logy), np.concatenate(self._groups)

    def add_samples(self, features: np.ndarray, latencies: np.ndarray, groups: np.ndarray) -> None:
        X = np.atleast_2d(np.asarray(features, dtype=float))
        lat = np.asarray(latencies, dtype=float)
        if X.shape[0] != lat.shape[0]:
            raise ValueError("features and latencies differ in length")
        if np.any(lat <= 0):
            raise ValueError("latencies must be positive")
        if self.n_features is None:
            self.n_features = X.shape[1]
        elif X.shape[1] != self.n_features:
            raise ValueError(f"feature length {X.shape[1]} != {self.n_features}")
        self._X.append(X)
        self._logy.append(np.log(lat))
        self._groups.append(np.broadcast_to(np.asarray(groups, dtype=np.int64), lat.shape).copy())

    def fit(self) -> "CostModel":
        X, logy, groups = self.training_arrays()
        self.trees = []
        self.loss_curve = []
        if len(logy) == 0:
            self.base_prediction = 0.0
            return self
        y = relative_targets(logy, groups)
        cfg = self.config
        if cfg.n_trees == 0:
            # fsum is exact, so the constant model ignores row order too
            self.base_prediction = math.fsum(y) / len(y)
            self.loss_curve.append(float(np.mean((y - self.base_prediction) ** 2)))
            return self
        order = np.lexsort((*X.T, y, groups))
        X, y = X[order], y[order]
        self.base_prediction = float(np.mean(y))
        F = np.full(len(y), self.base_prediction)
        self.loss_curve.append(float(np.mean((y - F) ** 2)))
        if np.all(y == y[0]):
            return self
        min_leaf = max(1, min(cfg.min_samples_leaf, len(y) // 2))
        binned = _Binned(X)
        for _ in range(cfg.n_trees):
            tree, leaf_of = _grow_tree(binned, y - F, cfg.max_depth, min_leaf)
            self.trees.append(tree)
            F = F + cfg.learning_rate * tree.value[leaf_of]
            self.loss_curve.append(float(np.mean((y - F) ** 2)))
        return self

    def predict(self, features: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(features, dtype=float))
        if not np.all(np.isfinite(X)):
            raise ValueError("features must be finite")
        if self.n_features is not None and X.shape[1] != self.n_features:
            raise ValueError(f"feature length {X.shape[1]} != {self.n_features}")
        out = np.full(X.shape[0], self.base_prediction)
        lr = self.config.learning_rate
        for t in self.trees:
            out += lr * t.predict(X)
        return out

    def dump(self) -> str:
        head = f"# cost model {self.tag}: base={self.base_prediction:.6g} lr={self.learning_rate} trees={len(self.trees)}"
        return "\n".join([head] + [f"tree {i}\n{t.dump()}" for i, t in enumerate(self.trees)])


def relative_targets(logy: np.ndarray, groups: np.ndarray) -> np.ndarray:
    """log-latency minus the per-group minimum."""
    uniq, inv = np.unique(groups, return_inverse=True)
    mins = np.full(len(uniq), np.inf)
    np.minimum.at(mins, inv, logy)
    return logy - mins[inv]


def initialize_cost_model(family=MONOLITHIC, config: CostModelConfig | None = None) -> CostModel:
    """Fresh, untrained model tagged with its family id (or ``"monolithic"``)."""
    tag = getattr(family, "family_id", family)
    return CostModel(tag=tag, config=config or CostModelConfig())


def _record_arrays(records: Sequence[MeasurementRecord]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    X = np.vstack([r.features for r in records])
    lat = np.array([r.latency for r in records])
    groups = np.array([r.candidate.subgraph_id for r in records], dtype=np.int64)
    return X, lat, groups


def train_cost_model(records: Sequence[MeasurementRecord], model: CostModel) -> CostModel:
    """Append records to the model's training set and refit from scratch."""
    if not records:
        raise ValueError("no records to train on")
    model.add_samples(*_record_arrays(records))
    return model.fit()


def predict(model: CostModel, features: np.ndarray) -> np.ndarray | float:
    out = model.predict(features)
    return float(out[0]) if np.ndim(features) == 1 else out


def ranking_accuracy(pred: np.ndarray, true: np.ndarray, rel_tol: float = 1e-6) -> float:
    """Fraction of pairs ordered like ``true``; predicted ties count one half."""
    pred = np.asarray(pred, dtype=float)
    true = np.asarray(true, dtype=float)
    if len(true) < 2:
        raise ValueError("need at least 2 points")
    i, j = np.triu_indices(len(true), 1)
    dt = true[i] - true[j]
    keep = np.abs(dt) >= rel_tol * np.minimum(np.abs(true[i]), np.abs(true[j]))
    if not keep.any():
        raise ValueError("all pairs have (near-)equal true latency; accuracy undefined")
    dp = (pred[i] - pred[j])[keep]
    dt = dt[keep]
    score = np.where(dp == 0, 0.5, (np.sign(dp) == np.sign(dt)).astype(float))
    return float(score.mean())


def pairwise_accuracy(model: CostModel, validation: Sequence[MeasurementRecord]) -> float:
    if len(validation) < 2:
        raise ValueError("need at least 2 validation records")
    X, lat, _ = _record_arrays(validation)
    return ranking_accuracy(model.predict(X), lat)
