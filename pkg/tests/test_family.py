import pytest
from hypothesis import given, settings, strategies as st

from familytune.family import (
    CLUSTER_ALGORITHMS,
    FamilyRegistry,
    SubgraphFamily,
    cluster_by_core_op,
    cluster_by_op_count,
    cluster_by_op_sequence,
    construct_family,
    find_family,
    fnv1a64,
    monolithic_registry,
    singleton_registry,
)
from familytune.fixtures import TINY_SPACE
from familytune.graph import OperatorNode, Subgraph, construct_subgraphs


def sg(i, kinds, core=None, shape=(4, 4)):
    ops = tuple(OperatorNode(k, shape) for k in kinds)
    return Subgraph(i, ops, core or kinds[0], 1, TINY_SPACE)


def members(reg):
    return [list(f.member_ids) for f in reg.families]


def test_fnv1a64_reference_vectors():
    # published FNV-1a 64-bit test vectors
    assert fnv1a64("") == 0xCBF29CE484222325
    assert fnv1a64("a") == 0xAF63DC4C8601EC8C
    assert fnv1a64("foobar") == 0x85944171F73967E8


def test_core_op_example():
    subs = [sg(0, ["conv2d"]), sg(1, ["conv2d", "relu"]), sg(2, ["softmax"]), sg(3, ["pooling"])]
    assert members(cluster_by_core_op(subs)) == [[0, 1], [2], [3]]


def test_bert_batch_matmul_pair_is_one_family(bert):
    reg = cluster_by_core_op(list(bert.subgraphs))
    bmm = [s.id for s in bert.subgraphs if s.core_op == "batch_matmul"]
    assert len(bmm) == 2
    assert find_family(bmm[0], reg) is find_family(bmm[1], reg)
    assert len(reg) == 3


def test_single_subgraph_singleton():
    assert members(cluster_by_core_op([sg(0, ["dense"])])) == [[0]]


def test_op_count_examples():
    subs = [sg(0, ["conv2d", "relu", "add"]), sg(1, ["dense", "relu", "add"]), sg(2, ["conv2d", "bias_add", "relu", "add", "relu"])]
    assert members(cluster_by_op_count(subs)) == [[0, 1], [2]]
    distinct = [sg(i, ["relu"] * (i + 1)) for i in range(4)]
    assert members(cluster_by_op_count(distinct)) == [[0], [1], [2], [3]]
    equal = [sg(i, [k, "relu"]) for i, k in enumerate(["dense", "conv2d", "softmax"])]
    assert members(cluster_by_op_count(equal)) == [[0, 1, 2]]


def test_op_sequence_shape_blind_and_order_sensitive():
    a = sg(0, ["conv2d", "relu"], shape=(1, 8, 8, 8))
    b = sg(1, ["conv2d", "relu"], shape=(1, 16, 4, 4))
    c = sg(2, ["relu", "conv2d"], core="conv2d")
    reg = cluster_by_op_sequence([a, b, c])
    assert find_family(0, reg) is find_family(1, reg)
    assert find_family(2, reg) is not find_family(0, reg)


def test_find_family():
    reg = FamilyRegistry((SubgraphFamily(0, (0, 1), "x"), SubgraphFamily(1, (2,), "y")))
    assert find_family(0, reg).family_id == 0
    assert find_family(2, reg).family_id == 1
    with pytest.raises(KeyError):
        find_family(9, reg)


def test_registry_rejects_overlap_and_gaps():
    with pytest.raises(ValueError):
        FamilyRegistry((SubgraphFamily(0, (0, 1), "x"), SubgraphFamily(1, (1, 2), "y")))
    with pytest.raises(ValueError):
        FamilyRegistry((SubgraphFamily(0, (0, 2), "x"),))


def test_registry_csv(tmp_path, bert):
    reg = construct_family(list(bert.subgraphs))
    path = tmp_path / "fam.csv"
    reg.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "subgraph_id,family_id,signature"
    assert len(lines) == 12


def test_unknown_algorithm():
    with pytest.raises(ValueError):
        construct_family([sg(0, ["dense"])], "by-vibes")


def test_trivial_registries(bert):
    subs = list(bert.subgraphs)
    assert len(singleton_registry(subs)) == 11
    assert members(monolithic_registry(subs)) == [list(range(11))]


kinds = st.sampled_from(["conv2d", "dense", "softmax", "relu", "add", "pooling"])


@settings(max_examples=80, deadline=None)
@given(st.lists(st.lists(kinds, min_size=1, max_size=4), min_size=1, max_size=16), st.randoms())
def test_partition_and_permutation_invariance(specs, rnd):
    raw = [sg(i, ks, shape=(i + 1, 3)) for i, ks in enumerate(specs)]
    subs = construct_subgraphs(raw)
    ids = {s.id for s in subs}
    for algo in CLUSTER_ALGORITHMS:
        reg = construct_family(subs, algo)
        seen = [i for f in reg.families for i in f.member_ids]
        assert sorted(seen) == sorted(ids) and len(seen) == len(set(seen))
        for f in reg.families:
            assert list(f.member_ids) == sorted(f.member_ids) and f.member_ids
        shuffled = subs[:]
        rnd.shuffle(shuffled)
        assert construct_family(shuffled, algo).to_rows() == reg.to_rows()
        assert construct_family(subs, algo) == reg
