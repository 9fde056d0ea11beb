"""Built-in model descriptions used by tests, scripts and the CLI.

Shapes follow the named architectures loosely; knob lists are tile/unroll
style factors. Dense-like and conv-like subgraphs get five knobs of eight
values (32768 candidates); softmax and pooling get the 4 x 5 x 16 = 320
candidate space.
"""

from __future__ import annotations

from .graph import ModelGraph, OperatorNode, Subgraph, construct_subgraphs
from .searchspace import SpaceDescriptor

POW2_8 = (1, 2, 4, 8, 16, 32, 64, 128)

WIDE_SPACE = SpaceDescriptor.from_lists(
    [("tile_x", POW2_8), ("tile_y", POW2_8), ("tile_k", POW2_8), ("unroll", POW2_8), ("vector", POW2_8)]
)
SMALL_SPACE = SpaceDescriptor.from_lists(
    [("tile", (1, 2, 4, 8)), ("unroll", (1, 2, 4, 8, 16)), ("split", tuple(range(1, 17)))]
)
TINY_SPACE = SpaceDescriptor.from_lists([("tile_x", (1, 2, 4, 8)), ("tile_y", (1, 2, 4, 8)), ("unroll", (1, 2, 4, 8))])


def _op(kind: str, shape, **attrs) -> OperatorNode:
    return OperatorNode(kind, tuple(shape), tuple(attrs.items()))


def _model(name: str, entries) -> ModelGraph:
    raw = [Subgraph(i, tuple(ops), core, weight, space) for i, (ops, core, weight, space) in enumerate(entries)]
    return ModelGraph(name, construct_subgraphs(raw))


def bert_large_like(seq: int = 128, hidden: int = 1024, heads: int = 16, layers: int = 24) -> ModelGraph:
    """11 subgraphs: six dense, two batch_matmul, three softmax."""
    hd = hidden // heads
    entries = [
        ([_op("dense", [seq, hidden], units=3 * hidden), _op("bias_add", [seq, 3 * hidden])], "dense", layers, WIDE_SPACE),
        (
            [_op("dense", [seq, hidden], units=hidden), _op("bias_add", [seq, hidden]), _op("add", [seq, hidden])],
            "dense",
            layers,
            WIDE_SPACE,
        ),
        (
            [_op("dense", [seq, hidden], units=4 * hidden), _op("bias_add", [seq, 4 * hidden]), _op("gelu", [seq, 4 * hidden])],
            "dense",
            layers,
            WIDE_SPACE,
        ),
        (
            [_op("dense", [seq, 4 * hidden], units=hidden), _op("bias_add", [seq, hidden]), _op("add", [seq, hidden])],
            "dense",
            layers,
            WIDE_SPACE,
        ),
        ([_op("dense", [1, hidden], units=hidden), _op("bias_add", [1, hidden]), _op("tanh", [1, hidden])], "dense", 1, WIDE_SPACE),
        ([_op("dense", [1, hidden], units=2), _op("bias_add", [1, 2])], "dense", 1, WIDE_SPACE),
        ([_op("batch_matmul", [heads, seq, hd], transpose_b=1)], "batch_matmul", layers, WIDE_SPACE),
        ([_op("batch_matmul", [heads, seq, seq], transpose_b=0)], "batch_matmul", layers, WIDE_SPACE),
        ([_op("multiply", [heads, seq, seq]), _op("add", [heads, seq, seq]), _op("softmax", [heads, seq, seq], axis=2)], "softmax", layers, SMALL_SPACE),
        ([_op("softmax", [heads, seq, seq], axis=2)], "softmax", 1, SMALL_SPACE),
        ([_op("softmax", [1, 2], axis=1)], "softmax", 1, SMALL_SPACE),
    ]
    return _model("bert_large_like", entries)


def resnet50_like() -> ModelGraph:
    """28 subgraphs: conv2d variants over four stages, plus pooling/dense/softmax."""
    stages = [(56, 64, 3), (28, 128, 4), (14, 256, 6), (7, 512, 3)]
    entries = [
        ([_op("conv2d", [1, 3, 224, 224], kernel=7, stride=2), _op("bias_add", [1, 64, 112, 112]), _op("relu", [1, 64, 112, 112])], "conv2d", 1, WIDE_SPACE),
        ([_op("pooling", [1, 64, 112, 112], kernel=3, stride=2)], "pooling", 1, SMALL_SPACE),
    ]
    prev = 64
    for hw, c, blocks in stages:
        out = 4 * c
        stride = 1 if hw == 56 else 2
        in_hw = hw * stride
        entries += [
            # 1x1 reduce, first block of stage
            ([_op("conv2d", [1, prev, in_hw, in_hw], kernel=1, stride=1), _op("bias_add", [1, c, in_hw, in_hw]), _op("relu", [1, c, in_hw, in_hw])], "conv2d", 1, WIDE_SPACE),
            # 3x3, strided in the first block
            ([_op("conv2d", [1, c, in_hw, in_hw], kernel=3, stride=stride), _op("bias_add", [1, c, hw, hw]), _op("relu", [1, c, hw, hw])], "conv2d", 1, WIDE_SPACE),
            # 1x1 expand + residual
            ([_op("conv2d", [1, c, hw, hw], kernel=1, stride=1), _op("bias_add", [1, out, hw, hw]), _op("add", [1, out, hw, hw]), _op("relu", [1, out, hw, hw])], "conv2d", blocks, WIDE_SPACE),
            # projection shortcut
            ([_op("conv2d", [1, prev, in_hw, in_hw], kernel=1, stride=stride), _op("bias_add", [1, out, hw, hw])], "conv2d", 1, WIDE_SPACE),
            # 1x1 reduce, later blocks
            ([_op("conv2d", [1, out, hw, hw], kernel=1, stride=1), _op("bias_add", [1, c, hw, hw]), _op("relu", [1, c, hw, hw])], "conv2d", blocks - 1, WIDE_SPACE),
            # 3x3, later blocks
            ([_op("conv2d", [1, c, hw, hw], kernel=3, stride=1), _op("bias_add", [1, c, hw, hw]), _op("relu", [1, c, hw, hw])], "conv2d", blocks - 1, WIDE_SPACE),
        ]
        prev = out
    entries += [
        ([_op("pooling", [1, 2048, 7, 7], kernel=7, stride=1), _op("mean", [1, 2048, 1, 1])], "pooling", 1, SMALL_SPACE),
        ([_op("dense", [1, 2048], units=1000), _op("bias_add", [1, 1000])], "dense", 1, WIDE_SPACE),
        ([_op("softmax", [1, 1000], axis=1)], "softmax", 1, SMALL_SPACE),
    ]
    return _model("resnet50_like", entries)


def tiny_model() -> ModelGraph:
    """Four subgraphs on spaces of at most 320 candidates, for oracle checks."""
    entries = [
        ([_op("dense", [64, 256], units=256), _op("bias_add", [64, 256])], "dense", 2, TINY_SPACE),
        ([_op("dense", [64, 256], units=1024), _op("bias_add", [64, 1024]), _op("relu", [64, 1024])], "dense", 1, TINY_SPACE),
        ([_op("conv2d", [1, 32, 28, 28], kernel=3, stride=1), _op("relu", [1, 32, 28, 28])], "conv2d", 1, TINY_SPACE),
        ([_op("softmax", [8, 64, 64], axis=2)], "softmax", 1, SMALL_SPACE),
    ]
    return _model("tiny", entries)


BUILTIN_MODELS = {
    "bert_large_like": bert_large_like,
    "resnet50_like": resnet50_like,
    "tiny": tiny_model,
}


def mirrored_archetype_landscape(model: ModelGraph, seed: int, distinct_op: str, mirror_op: str, config=None):
    """Core-op landscape where ``distinct_op``'s archetype mirrors ``mirror_op``'s.

    The mirror puts the optimum at ``1 - o`` and flips the interaction
    matrix, so the two families disagree on almost every candidate pair.
    All other draws are unchanged.
    """
    from .family import cluster_by_core_op
    from .simbackend import Archetype, make_landscape

    truth = cluster_by_core_op(list(model.subgraphs))
    fam_of = {f.signature: f.family_id for f in truth.families}
    plain = make_landscape(model, truth, seed, config)
    src = plain.archetypes[fam_of[mirror_op]]
    mirrored = Archetype(1.0 - src.optimum, src.curvature, -src.interaction)
    return make_landscape(model, truth, seed, config, archetypes={fam_of[distinct_op]: mirrored})
