"""Content-router network: on-path lookup, admission policies and LRU storage.

Request model: clients sit behind their POP, so a request from client POP
``c`` to server POP ``s`` enters the network at ``c`` and walks the shortest
path ``c = p0, p1, ..., pL = s``. The CR at ``p_k`` is ``k + 1`` hops from
the client (the first hop is the access link into ``p0``). The origin sits
at ``s`` and is ``L + 1`` hops away, so the CRs consulted are ``p0 .. p(L-1)``.
The data then flows back over the CRs between the serving point and the
client, which apply the admission policy.
"""
from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from .topology import Topology, shortest_path
from .workload import Catalog, RequestEvent, make_rng

POLICIES = ("all", "cachedbit", "nbsc", "none")
HIT_ORIGIN, HIT_CR, HIT_NEIGHBOR = "origin", "cr", "neighbor"
NEIGHBOR_DETOUR_HOPS = 2

_MASK64 = (1 << 64) - 1


class BloomDigest:
    """Bloom filter over 64-bit chunk digests using double hashing."""

    def __init__(self, m: int, k: int):
        if m < 1 or k < 1:
            raise ValueError("Bloom filter needs m >= 1 and k >= 1")
        self.m = m
        self.k = k
        self.bits = bytearray((m + 7) // 8)
        self.inserted = 0

    def positions(self, digest: int) -> list[int]:
        h1 = digest & 0xFFFFFFFF
        h2 = (digest >> 32) | 1
        return [((h1 + i * h2) & _MASK64) % self.m for i in range(self.k)]

    def add(self, digest: int) -> None:
        self.add_positions(self.positions(digest))

    def add_positions(self, pos) -> None:
        bits = self.bits
        for p in pos:
            bits[p >> 3] |= 1 << (p & 7)
        self.inserted += 1

    def query(self, digest: int) -> bool:
        return self.query_positions(self.positions(digest))

    __contains__ = query

    def query_positions(self, pos) -> bool:
        bits = self.bits
        for p in pos:
            if not bits[p >> 3] >> (p & 7) & 1:
                return False
        return True

    def rebuild(self, positions: np.ndarray) -> None:
        """Reset to exactly the members whose bit positions are given
        (one row of ``k`` positions per member)."""
        bits = np.zeros(len(self.bits) * 8, dtype=bool)
        if len(positions):
            bits[positions.ravel()] = True
        self.bits = bytearray(np.packbits(bits, bitorder="little").tobytes())
        self.inserted = len(positions)

    def clear(self) -> None:
        self.bits = bytearray(len(self.bits))
        self.inserted = 0

    def is_empty(self) -> bool:
        return not any(self.bits)

    def false_positive_bound(self) -> float:
        """Textbook FPR estimate ``(1 - exp(-k n / m)) ** k``."""
        return (1.0 - math.exp(-self.k * self.inserted / self.m)) ** self.k


@dataclass(eq=False)
class CrState:
    node: int
    capacity: int
    store: OrderedDict = field(default_factory=OrderedDict)
    digest: Optional[BloomDigest] = None

    def __contains__(self, chunk) -> bool:
        return chunk in self.store


def lru_touch(cr: CrState, chunk) -> None:
    if chunk in cr.store:
        cr.store.move_to_end(chunk)


def lru_insert(cr: CrState, chunk):
    """Insert ``chunk`` as most recent; return the evicted chunk, if any."""
    store = cr.store
    if chunk in store:
        store.move_to_end(chunk)
        return None
    if cr.capacity <= 0:
        return None
    evicted = None
    if len(store) >= cr.capacity:
        evicted, _ = store.popitem(last=False)
    store[chunk] = None
    assert len(store) <= cr.capacity
    return evicted


@dataclass
class ResponseContext:
    path: list  # CrState, serving point first, client-side CR last
    cached_bit: bool = False


class FulfillmentRecord(NamedTuple):
    request: RequestEvent
    hit: str
    serving_node: int
    hops: int
    bytes_hops: int


def admit_all(ctx: ResponseContext, chunk) -> list[int]:
    stored = []
    for cr in ctx.path:
        if cr.capacity > 0:
            lru_insert(cr, chunk)
            stored.append(cr.node)
    return stored


def admit_cachedbit(ctx: ResponseContext, chunk, draw: Callable[[], float],
                    last_copy: bool = True, n: int | None = None) -> list[int]:
    """Cache with probability ``1/n`` until the cached bit is set.

    With ``last_copy`` the CR nearest the client always stores the chunk.
    Returns the nodes that stored it.
    """
    last = len(ctx.path) - 1
    n = n or len(ctx.path)
    stored = []
    for i, cr in enumerate(ctx.path):
        if last_copy and i == last:
            if cr.capacity > 0:
                lru_insert(cr, chunk)
                stored.append(cr.node)
            break
        if ctx.cached_bit:
            continue
        if draw() < 1.0 / n:
            ctx.cached_bit = True
            if cr.capacity > 0:
                lru_insert(cr, chunk)
                stored.append(cr.node)
    return stored


class UniformStream:
    """Batched uniform draws from a seeded generator."""

    def __init__(self, rng: np.random.Generator, batch: int = 4096):
        self._rng = rng
        self._batch = batch
        self._buf: list[float] = []
        self._i = 0

    def __call__(self) -> float:
        if self._i >= len(self._buf):
            self._buf = self._rng.random(self._batch).tolist()
            self._i = 0
        u = self._buf[self._i]
        self._i += 1
        return u


class ScriptedDraws:
    """Replays a fixed list of uniforms; handy for hand-traced scenarios."""

    def __init__(self, values: Sequence[float]):
        self._values = list(values)
        self.used = 0

    def __call__(self) -> float:
        u = self._values[self.used]
        self.used += 1
        return u


class CrNetwork:
    """Mutable state of one simulated CR network.

    Parameters
    ----------
    topology, catalog
        Where CRs sit and what they cache.
    capacity : int
        Per-CR store size in chunks.
    policy : str
        One of ``all``, ``cachedbit``, ``nbsc`` or ``none``.
    draw : callable
        Source of uniforms for the probabilistic policies.
    """

    def __init__(self, topology: Topology, catalog: Catalog, capacity: int,
                 policy: str = "all", draw: Callable[[], float] | None = None,
                 seed: int = 0, radius: int = 1, exchange_period: int = 1000,
                 bloom_bits_per_chunk: int = 16, bloom_hashes: int = 4,
                 last_copy: bool = True, nbsc_consult: str = "every",
                 cachedbit_n: str = "response"):
        if policy not in POLICIES:
            raise ValueError(f"unknown policy {policy!r}; expected one of {POLICIES}")
        if capacity < 0:
            raise ValueError("capacity must be >= 0")
        if radius < 1:
            raise ValueError("neighbor radius must be >= 1")
        if exchange_period < 1:
            raise ValueError("exchange period must be >= 1")
        if nbsc_consult not in ("every", "first"):
            raise ValueError("nbsc_consult must be 'every' or 'first'")
        self.topology = topology
        self.catalog = catalog
        self.capacity = 0 if policy == "none" else int(capacity)
        self.policy = policy
        self.draw = draw or UniformStream(make_rng(seed, 3))
        self.radius = radius
        self.exchange_period = exchange_period
        self.last_copy = last_copy
        self.nbsc_consult = nbsc_consult
        self.cachedbit_n = cachedbit_n
        self.processed = 0
        m = max(1, bloom_bits_per_chunk * self.capacity)
        self.crs = [CrState(v, self.capacity, digest=BloomDigest(m, bloom_hashes))
                    for v in topology.nodes]
        self.neighbors = [topology.within_radius(v, radius) for v in topology.nodes]
        self._positions = None
        if policy == "nbsc":
            self._positions = self._precompute_positions(m, bloom_hashes)
            self.exchange_digests()

    def _precompute_positions(self, m: int, k: int):
        d = self.catalog.digests
        h1 = d & np.uint64(0xFFFFFFFF)
        h2 = (d >> np.uint64(32)) | np.uint64(1)
        with np.errstate(over="ignore"):  # uint64 wrap-around is intended
            table = np.stack([(h1 + np.uint64(i) * h2) % np.uint64(m) for i in range(k)], axis=1)
        table = table.astype(np.int64)
        return table, [tuple(row) for row in table.tolist()]

    def chunk_positions(self, chunk: int):
        if self._positions is not None:
            return self._positions[1][chunk]
        return self.crs[0].digest.positions(int(self.catalog.digests[chunk]))

    def exchange_digests(self) -> None:
        """Rebuild every CR's digest from its current store."""
        if self._positions is None:
            for cr in self.crs:
                cr.digest.clear()
                for chunk in cr.store:
                    cr.digest.add(int(self.catalog.digests[chunk]))
            return
        table = self._positions[0]
        for cr in self.crs:
            members = np.fromiter(cr.store, dtype=np.int64, count=len(cr.store))
            cr.digest.rebuild(table[members])

    def neighbor_lookup(self, node: int, chunk: int, exclude=()) -> Optional[int]:
        """First CR near ``node`` (ascending id) whose digest claims ``chunk``
        and whose store really holds it."""
        pos = self.chunk_positions(chunk)
        crs = self.crs
        for q in self.neighbors[node]:
            if q in exclude:
                continue
            cr = crs[q]
            if cr.digest.query_positions(pos) and chunk in cr.store:
                return q
        return None

    def process(self, ev: RequestEvent) -> FulfillmentRecord:
        path = shortest_path(self.topology, ev.client, ev.server)
        chunk = ev.chunk
        crs = self.crs
        policy = self.policy
        nbsc = policy == "nbsc"
        on_path = set(path) if nbsc else ()
        n_crs = len(path) - 1
        hit = HIT_ORIGIN
        serving = ev.server
        hops = n_crs + 1
        resp_end = n_crs  # response path is path[resp_end - 1] .. path[0]
        for k in range(n_crs):
            cr = crs[path[k]]
            if chunk in cr.store:
                cr.store.move_to_end(chunk)
                hit, serving, hops, resp_end = HIT_CR, path[k], k + 1, k
                break
            if nbsc and (k == 0 or self.nbsc_consult == "every"):
                q = self.neighbor_lookup(path[k], chunk, on_path)
                if q is not None:
                    crs[q].store.move_to_end(chunk)
                    hit, serving = HIT_NEIGHBOR, q
                    hops, resp_end = k + 1 + NEIGHBOR_DETOUR_HOPS, k + 1
                    break
        if policy != "none" and resp_end >= 1:
            # a copy already sits on this path when a CR served the chunk
            ctx = ResponseContext([crs[path[i]] for i in range(resp_end - 1, -1, -1)],
                                  cached_bit=hit == HIT_CR)
            if policy == "all":
                admit_all(ctx, chunk)
            else:
                admit_cachedbit(ctx, chunk, self.draw, self.last_copy,
                                n_crs if self.cachedbit_n == "path" else None)
        self.processed += 1
        if nbsc and self.processed % self.exchange_period == 0:
            self.exchange_digests()
        return FulfillmentRecord(ev, hit, serving, hops, hops * self.catalog.chunk_size)

    def run(self, trace: Sequence[RequestEvent]) -> list[FulfillmentRecord]:
        return [self.process(ev) for ev in trace]


def process_request(net: CrNetwork, ev: RequestEvent, policy: str | None = None) -> FulfillmentRecord:
    if policy is not None and policy != net.policy:
        raise ValueError(f"network was built for policy {net.policy!r}, not {policy!r}")
    return net.process(ev)


def neighbor_lookup(net: CrNetwork, cr: int, chunk: int, radius: int | None = None) -> Optional[int]:
    if radius is not None and radius != net.radius:
        net.neighbors = [net.topology.within_radius(v, radius) for v in net.topology.nodes]
        net.radius = radius
    return net.neighbor_lookup(cr, chunk)


def exchange_digests(net: CrNetwork) -> None:
    net.exchange_digests()
