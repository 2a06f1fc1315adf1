"""Linear-hash indexer: dense ordinals, split safety, reverse-table commitment."""

import random

import pytest

from flatstate.errors import BoundsError
from flatstate.index import LinearHashIndex
from flatstate.pagepool import PagePool, PoolConfig
from flatstate.store import RecordStore


def make_index(tmp_path, key_width=20, page_size=256, name="idx", state=None, count=0):
    pool = PagePool(PoolConfig(file_path=tmp_path / f"{name}.buckets", page_size=page_size, capacity=64))
    reverse = RecordStore.open(
        tmp_path / f"{name}.keys",
        key_width,
        count=count,
        page_size=page_size,
        capacity=64,
        tree_path=tmp_path / f"{name}.tree",
    )
    return LinearHashIndex(pool, reverse, key_width, state=state)


def k20(n: int) -> bytes:
    return n.to_bytes(20, "big")


def test_first_key_gets_ordinal_zero(tmp_path):
    index = make_index(tmp_path)
    assert index.get_or_add(k20(7)) == (0, True)


def test_repeated_insert_is_idempotent(tmp_path):
    index = make_index(tmp_path)
    ordinal, was_new = index.get_or_add(k20(1))
    again, still_new = index.get_or_add(k20(1))
    assert (ordinal, was_new) == (0, True)
    assert (again, still_new) == (0, False)
    assert index.count == 1


def test_get_is_read_only(tmp_path):
    index = make_index(tmp_path)
    assert index.get(k20(5)) is None
    assert index.count == 0
    root = index.root_hash()
    index.get_or_add(k20(5))
    assert index.get(k20(5)) == 0
    assert index.root_hash() != root


def test_dense_ordinals_across_many_splits(tmp_path):
    # Small pages force frequent splits: (256-10)//28 = 8 slots per bucket.
    index = make_index(tmp_path)
    rng = random.Random(77)
    keys = [rng.randbytes(20) for _ in range(10_000)]
    buckets_seen = {len(index.bucket_pages)}
    ordinals = []
    for key in keys:
        ordinal, was_new = index.get_or_add(key)
        assert was_new
        ordinals.append(ordinal)
        buckets_seen.add(len(index.bucket_pages))
    assert sorted(ordinals) == list(range(10_000))
    assert len(buckets_seen) > 8  # at least 8 splits happened
    for key, expected in zip(keys, ordinals):
        assert index.get(key) == expected
        assert index.key_at(expected) == key


def test_key_at_bounds(tmp_path):
    index = make_index(tmp_path)
    index.get_or_add(k20(3))
    assert index.key_at(0) == k20(3)
    with pytest.raises(BoundsError):
        index.key_at(1)


def test_random_workload_matches_dict_oracle(tmp_path):
    rng = random.Random(404)
    index = make_index(tmp_path)
    oracle: dict[bytes, int] = {}
    universe = [rng.randbytes(20) for _ in range(600)]
    for _ in range(5_000):
        key = rng.choice(universe)
        if rng.random() < 0.5:
            ordinal, was_new = index.get_or_add(key)
            if key in oracle:
                assert (ordinal, was_new) == (oracle[key], False)
            else:
                assert was_new and ordinal == len(oracle)
                oracle[key] = ordinal
        else:
            assert index.get(key) == oracle.get(key)
    for key, ordinal in oracle.items():
        assert index.key_at(ordinal) == key


def test_commitment_ignores_duplicate_inserts(tmp_path):
    index = make_index(tmp_path)
    index.get_or_add(k20(1))
    index.get_or_add(k20(2))
    root = index.root_hash()
    index.get_or_add(k20(1))
    assert index.root_hash() == root


def test_same_sequence_same_root_and_permuted_sequence_differs(tmp_path):
    keys = [k20(i) for i in range(40)]
    left = make_index(tmp_path, name="left")
    right = make_index(tmp_path, name="right")
    for key in keys:
        left.get_or_add(key)
        right.get_or_add(key)
    assert left.root_hash() == right.root_hash()
    permuted = make_index(tmp_path, name="perm")
    for key in reversed(keys):
        permuted.get_or_add(key)
    assert permuted.root_hash() != left.root_hash()


def test_rebuild_from_key_sequence_reproduces_root(tmp_path):
    rng = random.Random(11)
    index = make_index(tmp_path, name="orig")
    for _ in range(500):
        index.get_or_add(rng.randbytes(20))
    rebuilt = make_index(tmp_path, name="rebuilt")
    for ordinal in range(index.count):
        rebuilt.get_or_add(index.key_at(ordinal))
    assert rebuilt.root_hash() == index.root_hash()


def test_empty_index_root_is_empty_tree_root(tmp_path):
    from flatstate.digest import EMPTY_HASH

    index = make_index(tmp_path)
    assert index.root_hash() == EMPTY_HASH


def test_persistence_roundtrip(tmp_path):
    rng = random.Random(55)
    index = make_index(tmp_path, name="persist")
    keys = [rng.randbytes(20) for _ in range(3_000)]
    for key in keys:
        index.get_or_add(key)
    root = index.root_hash()
    state = index.state()
    index.flush()
    index.close()
    reopened = make_index(tmp_path, name="persist", state=state, count=state["count"])
    assert reopened.root_hash() == root
    for ordinal, key in enumerate(keys):
        assert reopened.get(key) == ordinal
    assert reopened.get_or_add(rng.randbytes(20)) == (3_000, True)
