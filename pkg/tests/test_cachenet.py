import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from redsim.cachenet import (HIT_CR, HIT_NEIGHBOR, HIT_ORIGIN, BloomDigest, CrNetwork, CrState,
                             ResponseContext, ScriptedDraws, admit_all, admit_cachedbit,
                             exchange_digests, lru_insert, lru_touch, neighbor_lookup,
                             process_request)
from redsim.topology import bundled_topology, select_servers, shortest_path
from redsim.workload import RequestEvent, build_catalog, generate_trace


def cr_with(items, capacity):
    cr = CrState(0, capacity)
    for x in items:
        lru_insert(cr, x)
    return cr


# -- LRU ---------------------------------------------------------------------

def test_lru_insert_evicts_oldest():
    cr = CrState(0, 2)
    assert lru_insert(cr, "a") is None
    assert lru_insert(cr, "b") is None
    assert lru_insert(cr, "c") == "a"
    assert list(cr.store) == ["b", "c"]


def test_lru_touch_changes_victim():
    cr = cr_with("ab", 2)
    lru_touch(cr, "a")
    assert lru_insert(cr, "c") == "b"
    assert set(cr.store) == {"a", "c"}


def test_insert_present_chunk_only_touches():
    cr = cr_with("ab", 2)
    assert lru_insert(cr, "a") is None
    assert list(cr.store) == ["b", "a"]


def test_zero_capacity_stores_nothing():
    cr = CrState(0, 0)
    assert lru_insert(cr, 1) is None
    assert not cr.store


def _reference_lru(ops, capacity):
    order: list = []  # least recent first
    for kind, x in ops:
        if kind == "touch":
            if x in order:
                order.remove(x)
                order.append(x)
        elif x in order:
            order.remove(x)
            order.append(x)
        elif capacity > 0:
            if len(order) >= capacity:
                order.pop(0)
            order.append(x)
    return order


def test_lru_matches_list_oracle():
    rng = random.Random(1)
    ops = [(rng.choice(["touch", "insert"]), rng.randrange(30)) for _ in range(1000)]
    cr = CrState(0, 7)
    for kind, x in ops:
        (lru_touch if kind == "touch" else lru_insert)(cr, x)
    assert list(cr.store) == _reference_lru(ops, 7)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 40), min_size=1, max_size=400), st.integers(0, 12))
def test_lru_inclusion_and_capacity(seq, s):
    small, big = CrState(0, s), CrState(1, s + 1)
    for x in seq:
        for cr in (small, big):
            if x in cr.store:
                lru_touch(cr, x)
            else:
                lru_insert(cr, x)
            assert len(cr.store) <= cr.capacity
        assert set(small.store) <= set(big.store)


# -- admission ---------------------------------------------------------------

def test_admit_all_stores_everywhere():
    path = [CrState(i, 2) for i in range(3)]
    assert admit_all(ResponseContext(path), "x") == [0, 1, 2]
    assert all("x" in cr for cr in path)


def test_cachedbit_single_cr_always_caches():
    cr = CrState(0, 2)
    assert admit_cachedbit(ResponseContext([cr]), "x", ScriptedDraws([])) == [0]


def test_cachedbit_bit_set_on_arrival_only_last_stores():
    path = [CrState(i, 2) for i in range(4)]
    draws = ScriptedDraws([])
    assert admit_cachedbit(ResponseContext(path, cached_bit=True), "x", draws) == [3]
    assert draws.used == 0


def test_cachedbit_first_success_sets_bit():
    path = [CrState(i, 2) for i in range(4)]
    ctx = ResponseContext(path)
    draws = ScriptedDraws([0.9, 0.1])
    assert admit_cachedbit(ctx, "x", draws) == [1, 3]
    assert ctx.cached_bit and draws.used == 2


def test_cachedbit_without_last_copy():
    path = [CrState(i, 2) for i in range(4)]
    assert admit_cachedbit(ResponseContext(path), "x", ScriptedDraws([0.9] * 4),
                           last_copy=False) == []


@pytest.mark.parametrize("n", [2, 4, 6])
def test_cachedbit_store_rate_closed_form(n):
    trials = 10_000
    rng = np.random.default_rng(n)
    u = rng.random(trials * n).tolist()
    it = iter(u)
    total = 0
    for _ in range(trials):
        stored = admit_cachedbit(ResponseContext([CrState(i, 1) for i in range(n)]), 0,
                                 lambda: next(it))
        assert 1 <= len(stored) <= 2
        total += len(stored)
    p = 1 - (1 - 1 / n) ** (n - 1)
    assert abs(total / trials - (1 + p)) <= 3 * math.sqrt(p * (1 - p) / trials)


# -- Bloom digests -----------------------------------------------------------

def test_bloom_no_false_negatives_and_fpr():
    rng = random.Random(5)
    b = BloomDigest(16 * 512, 4)
    members = [rng.getrandbits(64) for _ in range(512)]
    for d in members:
        b.add(d)
    assert all(d in b for d in members)
    probes = [rng.getrandbits(64) for _ in range(10_000)]
    probes = [d for d in probes if d not in set(members)]
    fpr = sum(b.query(d) for d in probes) / len(probes)
    assert fpr <= 2 * b.false_positive_bound()


def test_bloom_empty_and_rebuild():
    b = BloomDigest(64, 3)
    assert b.is_empty()
    b.add(12345)
    b.clear()
    assert b.is_empty()
    pos = np.array([b.positions(7), b.positions(99)])
    b.rebuild(pos)
    assert 7 in b and 99 in b and b.inserted == 2


# -- network -----------------------------------------------------------------

def line_net(policy, capacity=2, draws=None, **kw):
    t = bundled_topology("path6")
    return CrNetwork(t, build_catalog(10, 0.9), capacity, policy, draw=draws, **kw)


def ev(seq, chunk, client=0, server=5):
    return RequestEvent(seq, client, server, chunk)


def test_cold_start_is_origin():
    net = line_net("all")
    r = net.process(ev(0, 3))
    assert (r.hit, r.serving_node, r.hops, r.bytes_hops) == (HIT_ORIGIN, 5, 6, 6 * 1024)


def test_all_repeat_hits_first_cr():
    net = line_net("all")
    net.process(ev(0, 3))
    r = net.process(ev(1, 3))
    assert (r.hit, r.serving_node, r.hops) == (HIT_CR, 0, 1)
    assert all(3 in net.crs[v] for v in range(5)) and 3 not in net.crs[5]


def test_cachedbit_hand_traced_scenario():
    A, B, C = 0, 1, 2
    draws = ScriptedDraws([0.9, 0.1,            # req 1: p4 skips, p3 stores
                           0.5, 0.5, 0.5, 0.5,  # req 3: nothing stores early
                           0.05])               # req 4: p4 stores
    net = line_net("cachedbit", 2, draws)
    got = [net.process(e) for e in (ev(0, A), ev(1, A), ev(2, B), ev(3, C), ev(4, A))]
    expected = [  # hit, serving node, hops
        (HIT_ORIGIN, 5, 6),
        (HIT_CR, 0, 1),
        (HIT_ORIGIN, 5, 6),
        (HIT_ORIGIN, 5, 6),
        (HIT_CR, 3, 4),
    ]
    assert [(r.hit, r.serving_node, r.hops) for r in got] == expected
    assert [r.bytes_hops for r in got] == [h * 1024 for *_, h in expected]
    assert draws.used == 7
    stores = {v: list(net.crs[v].store) for v in range(6)}
    assert stores == {0: [C, A], 1: [], 2: [], 3: [A], 4: [C], 5: []}


def test_capacity_zero_matches_baseline():
    t = bundled_topology("exodus")
    p = select_servers(t, 10)
    cat = build_catalog(500, 0.9)
    trace = generate_trace(cat, t, p, "constant", 2000, 2)
    base = CrNetwork(t, cat, 0, "none").run(trace)
    for policy in ("all", "cachedbit", "nbsc"):
        recs = CrNetwork(t, cat, 0, policy).run(trace)
        assert all(r.hit == HIT_ORIGIN for r in recs)
        assert [r.bytes_hops for r in recs] == [r.bytes_hops for r in base]
    assert all(r.hops == len(shortest_path(t, r.request.client, r.request.server))
               for r in base)


def star_net(capacity=4):
    t = bundled_topology("star")
    return CrNetwork(t, build_catalog(20, 0.9), capacity, "nbsc", exchange_period=10_000)


def test_neighbor_lookup_cases():
    net = star_net()
    assert neighbor_lookup(net, 0, 7) is None
    lru_insert(net.crs[4], 7)
    exchange_digests(net)
    assert neighbor_lookup(net, 0, 7) == 4
    # stale digest: evicted after the exchange
    net.crs[4].store.clear()
    assert neighbor_lookup(net, 0, 7) is None


def test_neighbor_false_positive_falls_through():
    net = star_net()
    lru_insert(net.crs[5], 7)
    exchange_digests(net)
    net.crs[3].digest.bits = bytearray(b"\xff" * len(net.crs[3].digest.bits))
    assert net.neighbor_lookup(0, 7) == 5


def test_neighbor_hit_in_request_flow():
    net = star_net()
    lru_insert(net.crs[4], 7)
    exchange_digests(net)
    r = net.process(RequestEvent(0, 1, 2, 7))  # path 1-0-2
    assert (r.hit, r.serving_node, r.hops) == (HIT_NEIGHBOR, 4, 1 + 1 + 2)
    # admission on the remaining client-ward CRs with the bit unset
    assert 7 in net.crs[1]
    assert process_request(net, RequestEvent(1, 1, 2, 7)).hit == HIT_CR


def test_digests_after_exchange_have_no_false_negatives():
    t = bundled_topology("sprint")
    p = select_servers(t, 20)
    cat = build_catalog(2000, 0.9)
    net = CrNetwork(t, cat, 32, "nbsc", exchange_period=250)
    net.run(generate_trace(cat, t, p, "constant", 1000, 4))
    assert net.processed == 1000
    for cr in net.crs:
        assert all(cr.digest.query(int(cat.digests[c])) for c in cr.store)
        assert len(cr.store) <= 32
    empty = [cr for cr in net.crs if not cr.store]
    assert all(cr.digest.is_empty() for cr in empty)


def test_nbsc_never_reports_non_holder():
    t = bundled_topology("exodus")
    p = select_servers(t, 10)
    cat = build_catalog(300, 0.9)
    net = CrNetwork(t, cat, 16, "nbsc", exchange_period=50)
    for e in generate_trace(cat, t, p, "constant", 3000, 9):
        holders = {v for v in t.nodes if e.chunk in net.crs[v]}
        r = net.process(e)
        if r.hit == HIT_NEIGHBOR:
            assert r.serving_node in holders


def test_invalid_arguments():
    with pytest.raises(ValueError):
        line_net("lfu")
    with pytest.raises(ValueError):
        line_net("all", capacity=-1)
    with pytest.raises(ValueError):
        line_net("nbsc", radius=0)
