import numpy as np
import pytest

from helpers import ReferenceStalenessStore

from roughcount.adapter import AdapterConfig, AdapterStore, UpdateKind
from roughcount.errors import DimensionMismatch, EmptyStore


def small_store(capacity=4, delta=0.14, lam=0.1):
    return AdapterStore(AdapterConfig(capacity=capacity, distance_threshold=delta, mix_factor=lam))


def test_defaults_match_documented_values():
    cfg = AdapterConfig()
    assert cfg.capacity == 3000
    assert cfg.distance_threshold == pytest.approx(0.14)
    assert cfg.mix_factor == pytest.approx(0.1)


def test_first_update_inserts_with_mixed_value():
    store = small_store()
    kind = store.update([1.0, 0.0], [0.0, 1.0])
    assert kind == UpdateKind.INSERTED
    entry = store.entries()[0]
    assert np.allclose(entry.key, [1.0, 0.0])
    assert np.allclose(entry.value, [0.1, 0.9], atol=1e-12)
    assert entry.last_write_step == 0
    assert store.step_counter == 1


def test_merge_normalizes_key_sum_and_keeps_value():
    store = small_store(delta=10.0)  # huge threshold: second update must merge
    store.update([1.0, 0.0], [1.0, 0.0])
    value_before = store.entries()[0].value.copy()
    kind = store.update([0.0, 1.0], [1.0, 0.0])
    assert kind == UpdateKind.MERGED
    entry = store.entries()[0]
    assert np.allclose(entry.key, [0.7071067811865475, 0.7071067811865475], atol=1e-9)
    assert np.allclose(entry.value, value_before)
    assert len(store) == 1


def test_distant_update_inserts_new_slot():
    store = small_store(delta=0.14)
    store.update([1.0, 0.0], [1.0, 0.0])
    kind = store.update([0.9, 0.1], [0.0, 1.0])  # value far from stored one
    assert kind == UpdateKind.INSERTED
    assert len(store) == 2


def test_full_store_evicts_stalest():
    store = small_store(capacity=2, delta=1e-9)  # merges effectively disabled
    store.update([1.0, 0.0, 0.0], [1.0, 0.0, 0.0])
    store.update([0.0, 1.0, 0.0], [0.0, 1.0, 0.0])
    kind = store.update([0.0, 0.0, 1.0], [0.0, 0.0, 1.0])
    assert kind == UpdateKind.EVICTED
    # slot 0 was oldest; its key is replaced by the new input
    assert np.allclose(store.entries()[0].key, [0.0, 0.0, 1.0])
    assert len(store) == 2


def test_query_single_entry_returns_it():
    store = small_store()
    store.update([1.0, 0.0], [0.0, 1.0])
    idx, value = store.query([-0.3, 0.8])
    assert idx == 0
    assert np.allclose(value, [0.1, 0.9])


def test_query_two_keys_picks_most_similar():
    store = small_store(delta=1e-9)
    store.update([1.0, 0.0], [1.0, 0.0])
    store.update([0.0, 1.0], [0.0, 1.0])
    idx, _ = store.query([0.9, 0.1])
    assert idx == 0
    idx, _ = store.query([0.1, 0.9])
    assert idx == 1


def test_query_identical_key_similarity_one():
    store = small_store(delta=1e-9)
    store.update([0.6, 0.8], [0.6, 0.8])
    idx, _ = store.query([0.6, 0.8])
    assert idx == 0


def test_query_empty_raises():
    with pytest.raises(EmptyStore):
        small_store().query([1.0, 0.0])
    with pytest.raises(EmptyStore):
        small_store().stalest()


def test_refine_identity_cases():
    store = small_store()
    v = np.array([0.2, -0.4])
    assert np.allclose(store.refine(v), v)  # empty store: identity
    store.update(v, v)
    refined = store.refine(v)
    vh = v / np.linalg.norm(v)
    expected = 0.5 * (v + 0.1 * vh + 0.9 * vh)
    assert np.allclose(refined, expected, atol=1e-12)


def test_refine_midpoint():
    store = small_store(lam=0.0)  # value = text embedding exactly
    store.update([1.0, 0.0], [0.0, 1.0])
    refined = store.refine([1.0, 0.0])
    assert np.allclose(refined, [0.5, 0.5], atol=1e-12)


def test_refine_norm_bounded_by_convexity():
    rng = np.random.default_rng(0)
    store = small_store(capacity=8)
    for _ in range(8):
        store.update(rng.normal(size=4), rng.normal(size=4))
    for _ in range(20):
        v = rng.normal(size=4)
        refined = store.refine(v)
        _, value = store.query(v)
        assert np.linalg.norm(refined) <= max(np.linalg.norm(v), np.linalg.norm(value)) + 1e-12


def test_stalest_ordering_and_ties():
    store = small_store(capacity=3, delta=1e-9)
    store.update([1.0, 0.0, 0.0], [1, 0, 0])
    store.update([0.0, 1.0, 0.0], [0, 1, 0])
    store.update([0.0, 0.0, 1.0], [0, 0, 1])
    assert store.stalest() == 0
    # rewriting slot 0 (eviction of stalest) moves staleness to slot 1
    store.update([1.0, 1.0, 0.0], [1, 0, 0])
    assert store.stalest() == 1


def test_updated_slot_never_stalest_next_call():
    rng = np.random.default_rng(1)
    store = small_store(capacity=4, delta=1e-9)
    for _ in range(4):
        store.update(rng.normal(size=3), rng.normal(size=3))
    before = store.stalest()
    store.update(rng.normal(size=3), rng.normal(size=3))  # evicts `before`
    assert store.stalest() != before


def test_dimension_mismatch():
    store = small_store()
    store.update([1.0, 0.0], [0.0, 1.0])
    with pytest.raises(DimensionMismatch):
        store.update([1.0, 0.0, 0.0], [0.0, 1.0, 0.0])
    with pytest.raises(DimensionMismatch):
        store.update([1.0, 0.0], [0.0, 1.0, 0.0])


def test_capacity_never_exceeded_random_ops():
    rng = np.random.default_rng(2)
    for capacity in (1, 3, 9):
        store = small_store(capacity=capacity, delta=0.5)
        for _ in range(500):
            store.update(rng.normal(size=5), rng.normal(size=5))
            assert len(store) <= capacity


def test_merged_keys_unit_norm():
    rng = np.random.default_rng(3)
    store = small_store(capacity=4, delta=2.0)  # most updates merge
    store.update(rng.normal(size=6), rng.normal(size=6))
    merged = 0
    for _ in range(300):
        kind = store.update(rng.normal(size=6), rng.normal(size=6))
        if kind == UpdateKind.MERGED:
            merged += 1
            for entry in store.entries():
                assert abs(np.linalg.norm(entry.key) - 1.0) <= 1e-9
    assert merged > 0


def test_matches_reference_model_on_random_sequences():
    rng = np.random.default_rng(4)
    for trial in range(20):
        capacity = int(rng.integers(1, 17))
        delta = float(rng.uniform(0.05, 1.5))
        store = small_store(capacity=capacity, delta=delta)
        ref = ReferenceStalenessStore(capacity, delta, 0.1)
        for _ in range(500):
            v = rng.normal(size=4)
            u = rng.normal(size=4)
            kind = store.update(v, u)
            ref_kind = ref.update(v, u)
            assert kind.value == ref_kind
            assert len(store) == len(ref.keys)
            for entry, (k, val, st) in zip(store.entries(), zip(ref.keys, ref.values, ref.steps)):
                assert np.allclose(entry.key, k, atol=1e-12)
                assert np.allclose(entry.value, val, atol=1e-12)
                assert entry.last_write_step == st


def test_deterministic_replay_bit_identical():
    rng = np.random.default_rng(5)
    ops = [(rng.normal(size=4), rng.normal(size=4)) for _ in range(200)]
    stores = []
    for _ in range(2):
        store = small_store(capacity=6, delta=0.3)
        for v, u in ops:
            store.update(v, u)
        stores.append(store)
    a, b = stores
    assert a.step_counter == b.step_counter
    for ea, eb in zip(a.entries(), b.entries()):
        assert np.array_equal(ea.key, eb.key)
        assert np.array_equal(ea.value, eb.value)
        assert ea.last_write_step == eb.last_write_step
