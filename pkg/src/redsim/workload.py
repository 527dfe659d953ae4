"""Zipf chunk catalog and request traces."""
from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .topology import Placement, Topology

RNG_ALGORITHM = "numpy.PCG64/SeedSequence"
PATTERNS = ("constant", "gravity")


class ChunkId(NamedTuple):
    rank: int
    digest: int


class RequestEvent(NamedTuple):
    seq: int
    client: int
    server: int
    chunk: int  # catalog rank; ``Catalog.chunk_id`` gives the full ChunkId


def chunk_digest(rank: int) -> int:
    """64-bit permanent identifier of the chunk at ``rank``."""
    h = hashlib.blake2b(f"chunk:{rank}".encode(), digest_size=8)
    return int.from_bytes(h.digest(), "big")


@dataclass(frozen=True, eq=False)
class Catalog:
    n_chunks: int
    chunk_size: int
    alpha: float
    weights: np.ndarray
    cumulative: np.ndarray
    digests: np.ndarray  # uint64, indexed by rank

    def chunk_id(self, rank: int) -> ChunkId:
        return ChunkId(rank, int(self.digests[rank]))

    def draw(self, u: np.ndarray | float):
        """Inverse-CDF lookup of ranks for uniforms in [0, 1)."""
        idx = np.searchsorted(self.cumulative, u, side="right")
        return np.minimum(idx, self.n_chunks - 1)


def build_catalog(n: int, alpha: float, chunk_size: int = 1024) -> Catalog:
    """Catalog of ``n`` chunks whose rank-``i`` weight is ``1/(i+1)**alpha``."""
    if n < 1:
        raise ValueError("catalog needs at least one chunk")
    if alpha < 0:
        raise ValueError("Zipf exponent must be non-negative")
    if chunk_size < 1:
        raise ValueError("chunk size must be positive")
    ranks = np.arange(1, n + 1, dtype=np.float64)
    w = ranks ** -float(alpha)
    w /= w.sum()
    cum = np.cumsum(w)
    cum[-1] = 1.0
    digests = np.array([chunk_digest(r) for r in range(n)], dtype=np.uint64)
    return Catalog(n, int(chunk_size), float(alpha), w, cum, digests)


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Independent generator for ``(seed, stream)``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(stream)])))


def pair_weights(t: Topology, p: Placement, pattern: str) -> np.ndarray:
    """Probability of each (client, server) pair, flattened client-major."""
    if pattern == "constant":
        w = np.ones(len(p.clients) * len(p.servers))
    elif pattern == "gravity":
        dc = np.array([t.degree(c) for c in p.clients], dtype=np.float64)
        ds = np.array([t.degree(s) for s in p.servers], dtype=np.float64)
        w = np.outer(dc, ds).ravel()
    else:
        raise ValueError(f"unknown traffic pattern {pattern!r}; expected one of {PATTERNS}")
    return w / w.sum()


def sample_request(cat: Catalog, t: Topology, p: Placement, pattern: str,
                   rng: np.random.Generator, seq: int = 0) -> RequestEvent:
    weights = pair_weights(t, p, pattern)
    pair = int(rng.choice(len(weights), p=weights)) if len(weights) > 1 else 0
    ci, si = divmod(pair, len(p.servers))
    rank = int(cat.draw(rng.random()))
    return RequestEvent(seq, p.clients[ci], p.servers[si], rank)


def generate_trace(cat: Catalog, t: Topology, p: Placement, pattern: str,
                   n_requests: int, seed: int) -> list[RequestEvent]:
    """Deterministic trace of ``n_requests`` events for ``seed``.

    Pair and chunk draws use separate generator streams, so the chunk
    sequence does not depend on the traffic pattern.
    """
    if n_requests < 1:
        raise ValueError("n_requests must be >= 1")
    weights = pair_weights(t, p, pattern)
    pair_rng = make_rng(seed, 1)
    chunk_rng = make_rng(seed, 2)
    cum = np.cumsum(weights)
    cum[-1] = 1.0
    pairs = np.minimum(np.searchsorted(cum, pair_rng.random(n_requests), side="right"),
                       len(weights) - 1)
    ranks = cat.draw(chunk_rng.random(n_requests))
    ns = len(p.servers)
    clients, servers = p.clients, p.servers
    return [RequestEvent(i, clients[k // ns], servers[k % ns], int(r))
            for i, (k, r) in enumerate(zip(pairs.tolist(), ranks.tolist()))]


def write_trace_csv(trace: Sequence[RequestEvent], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["seq", "client", "server", "rank"])
        w.writerows(trace)


def read_trace_csv(path) -> list[RequestEvent]:
    with open(path, newline="") as fh:
        rows = csv.DictReader(fh)
        return [RequestEvent(int(r["seq"]), int(r["client"]), int(r["server"]), int(r["rank"]))
                for r in rows]
