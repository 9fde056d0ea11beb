import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from familytune.fixtures import SMALL_SPACE, TINY_SPACE, WIDE_SPACE
from familytune.graph import OperatorNode, Subgraph
from familytune.searchspace import (
    Candidate,
    History,
    MeasurementRecord,
    SpaceDescriptor,
    SpaceError,
    feature_dim,
    featurize,
    featurize_batch,
    generate_candidates,
    propose,
    space_size,
)


def subgraph(space):
    return Subgraph(0, (OperatorNode("dense", (4, 4)),), "dense", 1, space)


def test_space_size_examples():
    assert space_size(subgraph(SMALL_SPACE)) == 320
    assert SpaceDescriptor.from_lists([("a", [7])]).size == 1
    assert SpaceDescriptor.from_lists([(f"k{i}", range(1, 9)) for i in range(4)]).size == 4096


def test_space_validation():
    with pytest.raises(SpaceError):
        SpaceDescriptor.from_lists([])
    with pytest.raises(SpaceError):
        SpaceDescriptor.from_lists([(f"k{i}", [1]) for i in range(17)])
    with pytest.raises(SpaceError):
        SpaceDescriptor.from_lists([("a", [1, 1])])
    with pytest.raises(SpaceError):
        SpaceDescriptor.from_lists([("a", [])])
    with pytest.raises(OverflowError):
        SpaceDescriptor.from_lists([(f"k{i}", range(1, 1001)) for i in range(16)])


def test_featurize_single_knob():
    space = SpaceDescriptor.from_lists([("t", [8, 16, 32])])
    v = featurize(Candidate(0, (0,)), subgraph(space), d_max=6)
    assert v.tolist() == [3.0, 0.0, 0.0, 0.0, 0.0, 0.0]


def test_featurize_pairwise_term():
    space = SpaceDescriptor.from_lists([("a", [1, 4]), ("b", [2, 8])])
    v = featurize(Candidate(0, (1, 0)), subgraph(space))
    assert len(v) == feature_dim(2) == 5
    assert v[4] == 2.0  # log2(4) * log2(2)
    assert v.tolist() == [2.0, 1.0, 1.0, 0.0, 2.0]


def test_featurize_pure_and_validating():
    sg = subgraph(TINY_SPACE)
    c = Candidate(0, (1, 2, 3))
    assert np.array_equal(featurize(c, sg), featurize(c, sg))
    with pytest.raises(SpaceError):
        featurize(Candidate(0, (1, 2, 4)), sg)
    with pytest.raises(SpaceError):
        featurize(Candidate(0, (1, 2)), sg)


@pytest.mark.parametrize("space", [TINY_SPACE, SMALL_SPACE], ids=["tiny", "small"])
def test_featurize_injective_on_whole_space(space):
    X = featurize_batch(space.decode(np.arange(space.size)), space)
    assert len(np.unique(X, axis=0)) == space.size


def test_encode_decode_roundtrip():
    codes = np.arange(WIDE_SPACE.size, dtype=np.int64)
    assert np.array_equal(WIDE_SPACE.encode(WIDE_SPACE.decode(codes)), codes)


def test_empty_history_large_space_gives_1024_distinct():
    space = SpaceDescriptor.from_lists([(f"k{i}", range(1, 11)) for i in range(6)])
    assert space.size == 10**6
    arr = propose(space, History(), 512, 512, np.random.default_rng(0))
    assert arr.shape == (1024, 6)
    assert len(set(space.encode(arr).tolist())) == 1024


def test_exhausted_320_space_gives_nothing():
    h = History()
    h.add(range(320), np.ones(320))
    assert generate_candidates(subgraph(SMALL_SPACE), h, 512, 512, np.random.default_rng(1)) == []


def test_small_space_enumerates_remaining():
    h = History()
    h.add(range(0, 320, 2), np.linspace(1, 2, 160))
    arr = propose(SMALL_SPACE, h, 512, 512, np.random.default_rng(2))
    codes = set(SMALL_SPACE.encode(arr).tolist())
    assert codes == set(range(1, 320, 2))


def test_fixed_seed_reproducible():
    h = History()
    h.add([5, 9, 100], [1.0, 0.5, 2.0])
    a = propose(WIDE_SPACE, h, 64, 64, np.random.default_rng(7))
    b = propose(WIDE_SPACE, h, 64, 64, np.random.default_rng(7))
    assert np.array_equal(a, b)


@settings(max_examples=50, deadline=None)
@given(
    dims=st.lists(st.integers(1, 6), min_size=1, max_size=4),
    n_seen=st.integers(0, 200),
    pools=st.tuples(st.integers(0, 40), st.integers(0, 40)),
    seed=st.integers(0, 2**16),
)
def test_proposals_fresh_distinct_valid(dims, n_seen, pools, seed):
    space = SpaceDescriptor.from_lists([(f"k{i}", [2**j for j in range(d)]) for i, d in enumerate(dims)])
    rng = np.random.default_rng(seed)
    seen = rng.choice(space.size, size=min(n_seen, space.size), replace=False)
    h = History()
    h.add(seen, rng.uniform(1, 2, size=len(seen)))
    sg = subgraph(space)
    cands = generate_candidates(sg, h, pools[0], pools[1], rng)
    codes = space.encode(np.asarray([c.assignment for c in cands], dtype=np.int64).reshape(-1, space.n_knobs))
    assert len(set(codes.tolist())) == len(cands)
    assert not set(codes.tolist()) & set(seen.tolist())
    for c in cands:
        c.validate(space)
    assert len(cands) <= sum(pools)
    if sum(pools) and len(seen) < space.size:
        assert len(cands) >= 1


def test_record_batch_matches_single_records():
    cands = [Candidate(0, (0,)), Candidate(0, (1,))]
    feats = np.array([[0.0, 1.0], [1.0, 0.0]])
    recs = MeasurementRecord.batch(cands, feats, np.array([1.0, 2.0]), [0.5, 1.0])
    singles = [MeasurementRecord(c, f, lat, t) for c, f, lat, t in zip(cands, feats, [1.0, 2.0], [0.5, 1.0])]
    for a, b in zip(recs, singles):
        assert a.candidate == b.candidate and a.latency == b.latency and a.measured_at == b.measured_at
        assert np.array_equal(a.features, b.features)
        assert type(a.latency) is float


def test_record_batch_rejects_bad_values():
    cands = [Candidate(0, (0,))]
    with pytest.raises(ValueError):
        MeasurementRecord.batch(cands, np.array([[0.0, 1.0]]), np.array([0.0]), [0.0])
    with pytest.raises(ValueError):
        MeasurementRecord.batch(cands, np.array([[np.nan, 1.0]]), np.array([1.0]), [0.0])
