"""Static clustering of subgraphs into families."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

from .graph import Subgraph

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def fnv1a64(text: str) -> int:
    h = _FNV_OFFSET
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def sequence_signature(subgraph: Subgraph) -> str:
    """FNV-1a 64 of the comma-joined op kinds; shapes and attrs ignored."""
    return f"{fnv1a64(','.join(subgraph.op_kinds)):016x}"


@dataclass(frozen=True)
class SubgraphFamily:
    family_id: int
    member_ids: tuple[int, ...]
    signature: str

    def __len__(self) -> int:
        return len(self.member_ids)


@dataclass(frozen=True)
class FamilyRegistry:
    families: tuple[SubgraphFamily, ...]
    index: dict[int, int] | None = None
    algorithm: str = ""

    def __post_init__(self):
        if self.index is None:
            object.__setattr__(self, "index", {i: f.family_id for f in self.families for i in f.member_ids})
        seen = [i for f in self.families for i in f.member_ids]
        if len(seen) != len(set(seen)):
            raise ValueError("families overlap")
        if set(seen) != set(range(len(seen))):
            raise ValueError("family members must cover subgraph ids 0..n-1")
        if [f.family_id for f in self.families] != list(range(len(self.families))):
            raise ValueError("family ids must be 0..k-1 in order")
        if set(seen) != set(self.index):
            raise ValueError("index does not cover exactly the family members")
        for f in self.families:
            if not f.member_ids or list(f.member_ids) != sorted(f.member_ids):
                raise ValueError(f"family {f.family_id}: member ids must be non-empty and ascending")
            for i in f.member_ids:
                if self.index[i] != f.family_id:
                    raise ValueError(f"index disagrees with family {f.family_id} for subgraph {i}")

    def __len__(self) -> int:
        return len(self.families)

    def to_rows(self) -> list[tuple[int, int, str]]:
        return sorted((i, fid, self.families[fid].signature) for i, fid in self.index.items())

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["subgraph_id", "family_id", "signature"])
            w.writerows(self.to_rows())


def _cluster(subgraphs: Sequence[Subgraph], key: Callable[[Subgraph], object], name: str) -> FamilyRegistry:
    if not subgraphs:
        raise ValueError("cannot cluster an empty subgraph list")
    groups: dict[object, list[int]] = {}
    for s in subgraphs:
        groups.setdefault(key(s), []).append(s.id)
    families = []
    index = {}
    # family ids follow the lowest member id
    for fid, sig in enumerate(sorted(groups, key=lambda k: min(groups[k]))):
        members = tuple(sorted(groups[sig]))
        families.append(SubgraphFamily(fid, members, str(sig)))
        for i in members:
            index[i] = fid
    return FamilyRegistry(tuple(families), index, name)


def cluster_by_core_op(subgraphs: Sequence[Subgraph]) -> FamilyRegistry:
    return _cluster(subgraphs, lambda s: s.core_op, "core-op")


def cluster_by_op_count(subgraphs: Sequence[Subgraph]) -> FamilyRegistry:
    return _cluster(subgraphs, lambda s: len(s.ops), "op-count")


def cluster_by_op_sequence(subgraphs: Sequence[Subgraph]) -> FamilyRegistry:
    return _cluster(subgraphs, sequence_signature, "op-sequence")


def singleton_registry(subgraphs: Sequence[Subgraph]) -> FamilyRegistry:
    """One family per subgraph (individual cost models)."""
    return _cluster(subgraphs, lambda s: s.id, "singleton")


def monolithic_registry(subgraphs: Sequence[Subgraph]) -> FamilyRegistry:
    """All subgraphs in one family (a single shared cost model)."""
    return _cluster(subgraphs, lambda s: "all", "monolithic")


CLUSTER_ALGORITHMS: dict[str, Callable[[Sequence[Subgraph]], FamilyRegistry]] = {
    "core-op": cluster_by_core_op,
    "op-count": cluster_by_op_count,
    "op-sequence": cluster_by_op_sequence,
    "singleton": singleton_registry,
    "monolithic": monolithic_registry,
}


def construct_family(subgraphs: Sequence[Subgraph], algorithm: str = "core-op") -> FamilyRegistry:
    try:
        fn = CLUSTER_ALGORITHMS[algorithm]
    except KeyError:
        raise ValueError(f"unknown cluster algorithm {algorithm!r}; choose from {sorted(CLUSTER_ALGORITHMS)}") from None
    return fn(subgraphs)


def find_family(subgraph_id: int, registry: FamilyRegistry) -> SubgraphFamily:
    try:
        return registry.families[registry.index[subgraph_id]]
    except KeyError:
        raise KeyError(f"subgraph {subgraph_id} is not in any family") from None
