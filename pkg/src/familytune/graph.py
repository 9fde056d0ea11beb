"""Model descriptions: parsing, validation, deduplication and model latency.

File format (JSON)::

    {"name": "...",
     "subgraphs": [
        {"ops": [{"op_kind": "dense", "input_shape": [128, 1024],
                  "attrs": {"units": 1024}}, ...],
         "core_op": "dense",            # optional, inferred if absent
         "weight": 24,
         "knobs": [{"name": "tile_x", "values": [1, 2, 4, 8]}, ...]}]}

Unknown keys are rejected at every level.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Sequence

from .searchspace import SpaceDescriptor, SpaceError

OP_KINDS = frozenset(
    {
        "conv2d",
        "depthwise_conv2d",
        "dense",
        "batch_matmul",
        "softmax",
        "pooling",
        "relu",
        "gelu",
        "tanh",
        "add",
        "multiply",
        "bias_add",
        "layer_norm",
        "mean",
        "reshape",
        "transpose",
    }
)

MAX_SUBGRAPHS = 64

_TOP_KEYS = {"name", "subgraphs"}
_SG_KEYS = {"ops", "core_op", "weight", "knobs"}
_SG_REQUIRED = {"ops", "weight", "knobs"}
_OP_KEYS = {"op_kind", "input_shape", "attrs"}
_KNOB_KEYS = {"name", "values"}


class ModelFormatError(ValueError):
    pass


@dataclass(frozen=True)
class OperatorNode:
    op_kind: str
    input_shape: tuple[int, ...]
    attrs: tuple[tuple[str, int], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(self.input_shape))
        attrs = self.attrs.items() if isinstance(self.attrs, dict) else self.attrs
        object.__setattr__(self, "attrs", tuple((str(k), v) for k, v in attrs))
        if self.op_kind not in OP_KINDS:
            raise ModelFormatError(f"unknown op_kind {self.op_kind!r}; expected one of {sorted(OP_KINDS)}")
        if not self.input_shape:
            raise ModelFormatError(f"{self.op_kind}: input_shape must be non-empty")
        for d in self.input_shape:
            if not isinstance(d, int) or isinstance(d, bool) or d < 1:
                raise ModelFormatError(f"{self.op_kind}: shape dims must be integers >= 1, got {list(self.input_shape)}")
        for k, v in self.attrs:
            if not isinstance(v, int) or isinstance(v, bool):
                raise ModelFormatError(f"{self.op_kind}: attr {k!r} must be an integer")

    def key(self) -> tuple:
        return (self.op_kind, self.input_shape, self.attrs)

    def to_json(self) -> dict:
        return {"op_kind": self.op_kind, "input_shape": list(self.input_shape), "attrs": dict(self.attrs)}


def infer_core_index(ops: Sequence[OperatorNode]) -> int:
    """Index of the highest-arity node (shape rank + attribute count); first wins ties."""
    arity = [len(op.input_shape) + len(op.attrs) for op in ops]
    return arity.index(max(arity))


@dataclass(frozen=True)
class Subgraph:
    id: int
    ops: tuple[OperatorNode, ...]
    core_op: str
    weight: int
    knob_space: SpaceDescriptor

    def __post_init__(self):
        object.__setattr__(self, "ops", tuple(self.ops))
        if not self.ops:
            raise ModelFormatError(f"subgraph {self.id}: ops must be non-empty")
        if self.core_op not in self.op_kinds:
            raise ModelFormatError(f"subgraph {self.id}: core_op {self.core_op!r} is not among its ops")
        if not isinstance(self.weight, int) or self.weight < 1:
            raise ModelFormatError(f"subgraph {self.id}: weight must be an integer >= 1")

    @property
    def op_kinds(self) -> tuple[str, ...]:
        return tuple(op.op_kind for op in self.ops)

    @property
    def core_index(self) -> int:
        return self.op_kinds.index(self.core_op)

    def ops_key(self) -> tuple:
        return tuple(op.key() for op in self.ops)

    def sort_key(self) -> tuple:
        return (
            ",".join(self.op_kinds),
            tuple(op.input_shape for op in self.ops),
            tuple(op.attrs for op in self.ops),
        )


@dataclass(frozen=True)
class ModelGraph:
    name: str
    subgraphs: tuple[Subgraph, ...]

    def __post_init__(self):
        object.__setattr__(self, "subgraphs", tuple(self.subgraphs))
        n = len(self.subgraphs)
        if not 1 <= n <= MAX_SUBGRAPHS:
            raise ModelFormatError(f"subgraph count {n} outside [1, {MAX_SUBGRAPHS}]")
        if [s.id for s in self.subgraphs] != list(range(n)):
            raise ModelFormatError("subgraph ids must be 0..n-1 in order")

    def __len__(self) -> int:
        return len(self.subgraphs)

    def __getitem__(self, i: int) -> Subgraph:
        return self.subgraphs[i]

    @property
    def weights(self) -> list[int]:
        return [s.weight for s in self.subgraphs]

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "subgraphs": [
                {
                    "ops": [op.to_json() for op in s.ops],
                    "core_op": s.core_op,
                    "weight": s.weight,
                    "knobs": [{"name": n, "values": list(v)} for n, v in s.knob_space.knobs],
                }
                for s in self.subgraphs
            ],
        }


def construct_subgraphs(model: ModelGraph | Iterable[Subgraph]) -> list[Subgraph]:
    """Merge subgraphs with identical op lists (summing weights), sort, re-index."""
    subgraphs = list(model.subgraphs if isinstance(model, ModelGraph) else model)
    if not subgraphs:
        raise ModelFormatError("subgraph count < 1: model has no subgraphs")
    merged: dict[tuple, Subgraph] = {}
    for s in subgraphs:
        key = s.ops_key()
        prev = merged.get(key)
        if prev is None:
            merged[key] = s
            continue
        if prev.core_op != s.core_op or prev.knob_space != s.knob_space:
            raise ModelFormatError("duplicate op lists disagree on core_op or knobs")
        merged[key] = Subgraph(prev.id, prev.ops, prev.core_op, prev.weight + s.weight, prev.knob_space)
    ordered = sorted(merged.values(), key=Subgraph.sort_key)
    return [Subgraph(i, s.ops, s.core_op, s.weight, s.knob_space) for i, s in enumerate(ordered)]


def _check_keys(obj: Any, allowed: set, required: set, where: str) -> None:
    if not isinstance(obj, dict):
        raise ModelFormatError(f"{where}: expected an object")
    unknown = set(obj) - allowed
    if unknown:
        raise ModelFormatError(f"{where}: unknown field(s) {sorted(unknown)}")
    missing = required - set(obj)
    if missing:
        raise ModelFormatError(f"{where}: missing field(s) {sorted(missing)}")


def _int_list(value: Any, where: str) -> list[int]:
    if not isinstance(value, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in value):
        raise ModelFormatError(f"{where}: expected a list of integers")
    return value


def parse_model(doc: Any) -> ModelGraph:
    _check_keys(doc, _TOP_KEYS, _TOP_KEYS, "model")
    if not isinstance(doc["name"], str):
        raise ModelFormatError("model.name must be a string")
    entries = doc["subgraphs"]
    if not isinstance(entries, list):
        raise ModelFormatError("model.subgraphs must be a list")
    raw = []
    for i, entry in enumerate(entries):
        where = f"subgraphs[{i}]"
        _check_keys(entry, _SG_KEYS, _SG_REQUIRED, where)
        if not isinstance(entry["ops"], list) or not entry["ops"]:
            raise ModelFormatError(f"{where}.ops must be a non-empty list")
        ops = []
        for j, op in enumerate(entry["ops"]):
            _check_keys(op, _OP_KEYS, {"op_kind", "input_shape"}, f"{where}.ops[{j}]")
            attrs = op.get("attrs", {})
            if not isinstance(attrs, dict):
                raise ModelFormatError(f"{where}.ops[{j}].attrs must be an object")
            try:
                ops.append(
                    OperatorNode(op["op_kind"], tuple(_int_list(op["input_shape"], f"{where}.ops[{j}].input_shape")), attrs)
                )
            except ModelFormatError as exc:
                raise ModelFormatError(f"{where}.ops[{j}]: {exc}") from None
        knobs = entry["knobs"]
        if not isinstance(knobs, list):
            raise ModelFormatError(f"{where}.knobs must be a list")
        for j, kb in enumerate(knobs):
            _check_keys(kb, _KNOB_KEYS, _KNOB_KEYS, f"{where}.knobs[{j}]")
            _int_list(kb["values"], f"{where}.knobs[{j}].values")
        try:
            space = SpaceDescriptor.from_lists((kb["name"], kb["values"]) for kb in knobs)
        except (SpaceError, OverflowError) as exc:
            raise ModelFormatError(f"{where}.knobs: {exc}") from None
        core = entry.get("core_op")
        if core is None:
            core = ops[infer_core_index(ops)].op_kind
        weight = entry["weight"]
        if not isinstance(weight, int) or isinstance(weight, bool):
            raise ModelFormatError(f"{where}.weight must be an integer")
        try:
            raw.append(Subgraph(i, tuple(ops), core, weight, space))
        except ModelFormatError as exc:
            raise ModelFormatError(f"{where}: {exc}") from None
    return ModelGraph(doc["name"], construct_subgraphs(raw))


def load_model(path: str | Path) -> ModelGraph:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    return parse_model(doc)


def save_model(model: ModelGraph, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model.to_json(), indent=1) + "\n")


def model_latency(state: Any, model: ModelGraph) -> float:
    """Weighted end-to-end latency: sum of weight * best latency per subgraph.

    ``state`` is anything with a ``best_latency`` sequence indexed by
    subgraph id (a :class:`~familytune.scheduler.TunerState`, typically).
    """
    best = state.best_latency
    return float(sum(s.weight * best[s.id] for s in model.subgraphs))
