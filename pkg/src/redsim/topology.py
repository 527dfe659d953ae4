"""ISP topologies: loading, validation, server placement and routing.

Topology files are plain edge lists::

    # level=pop name=sprint
    0 1
    1 2

Router-level files may tag routers with the POP they belong to using
``# pop <node> <label>`` comment directives; untagged routers count as
their own POP.
"""
from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

__all__ = [
    "TopologyError",
    "Topology",
    "Placement",
    "load_topology",
    "load_topology_file",
    "bundled_topology",
    "BUNDLED",
    "select_servers",
    "shortest_path",
    "format_topology",
]

LEVELS = ("pop", "router")
DATA_DIR = Path(__file__).parent / "data"

# name -> (file stem, default server count)
BUNDLED = {
    "exodus": 10,
    "sprint": 20,
    "att": 20,
    "ntt": 20,
    "path6": 1,
    "star": 1,
}

_HEADER_KV = re.compile(r"(\w+)=(\S+)")


class TopologyError(ValueError):
    """Raised for malformed or invalid topology input."""


@dataclass(eq=False)
class Topology:
    name: str
    level: str
    adjacency: tuple[tuple[int, ...], ...]
    edges: tuple[tuple[int, int], ...]
    original_ids: tuple[int, ...]
    pop_of: tuple[str, ...]
    _paths: dict = field(default_factory=dict, repr=False)

    @property
    def node_count(self) -> int:
        return len(self.adjacency)

    @property
    def nodes(self) -> range:
        return range(len(self.adjacency))

    def degree(self, v: int) -> int:
        return len(self.adjacency[v])

    def neighbors(self, v: int) -> tuple[int, ...]:
        return self.adjacency[v]

    def pop_nodes(self) -> list[int]:
        """Nodes standing for POPs: every node at POP level, one representative
        router per POP at router level (highest degree, then lowest id)."""
        if self.level == "pop":
            return list(self.nodes)
        best: dict[str, int] = {}
        for v in self.nodes:
            label = self.pop_of[v]
            cur = best.get(label)
            if cur is None or self.degree(v) > self.degree(cur):
                best[label] = v
        return sorted(best.values())

    def pop_count(self) -> int:
        return len(set(self.pop_of))

    def within_radius(self, v: int, radius: int) -> list[int]:
        """Nodes at hop distance 1..radius from ``v``, ascending id."""
        seen = {v}
        frontier = [v]
        for _ in range(radius):
            nxt = []
            for u in frontier:
                for w in self.adjacency[u]:
                    if w not in seen:
                        seen.add(w)
                        nxt.append(w)
            frontier = nxt
        seen.discard(v)
        return sorted(seen)


@dataclass(frozen=True)
class Placement:
    servers: tuple[int, ...]
    clients: tuple[int, ...]

    def __post_init__(self):
        if not self.servers or not self.clients:
            raise TopologyError("placement needs at least one server and one client")
        if set(self.servers) & set(self.clients):
            raise TopologyError("servers and clients overlap")


def _parse_header(line: str, meta: dict) -> None:
    body = line.lstrip("#").strip()
    if body.startswith("pop "):
        parts = body.split()
        if len(parts) != 3:
            raise TopologyError(f"bad pop directive: {line!r}")
        meta.setdefault("pops", {})[int(parts[1])] = parts[2]
        return
    for key, value in _HEADER_KV.findall(body):
        meta.setdefault(key, value)


def load_topology(source: str | Iterable[str], level: str | None = None,
                  name: str | None = None) -> Topology:
    """Parse an edge-list topology.

    ``source`` is the file text (or an iterable of lines). ``level`` overrides
    the ``# level=`` header; one of the two must be present.
    """
    lines = source.splitlines() if isinstance(source, str) else list(source)
    meta: dict = {}
    edges: set[tuple[int, int]] = set()
    for lineno, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            _parse_header(line, meta)
            continue
        parts = line.split()
        if len(parts) != 2:
            raise TopologyError(f"line {lineno}: expected 'u v', got {raw!r}")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise TopologyError(f"line {lineno}: non-integer node id in {raw!r}") from None
        if u < 0 or v < 0:
            raise TopologyError(f"line {lineno}: negative node id in {raw!r}")
        if u == v:
            raise TopologyError(f"line {lineno}: self-loop on node {u}")
        edges.add((min(u, v), max(u, v)))

    level = level or meta.get("level")
    if level not in LEVELS:
        raise TopologyError(f"topology level must be one of {LEVELS}, got {level!r}")
    if not edges:
        raise TopologyError("topology has no edges")

    original = sorted({x for e in edges for x in e})
    index = {orig: i for i, orig in enumerate(original)}
    adj: list[list[int]] = [[] for _ in original]
    dense_edges = []
    for u, v in sorted(edges):
        a, b = index[u], index[v]
        adj[a].append(b)
        adj[b].append(a)
        dense_edges.append((a, b))

    _check_connected(adj, original)

    pops = meta.get("pops", {})
    pop_of = tuple(pops.get(orig, str(orig)) for orig in original)
    return Topology(
        name=name or meta.get("name", "unnamed"),
        level=level,
        adjacency=tuple(tuple(sorted(a)) for a in adj),
        edges=tuple(dense_edges),
        original_ids=tuple(original),
        pop_of=pop_of,
    )


def _check_connected(adj: list[list[int]], original: Sequence[int]) -> None:
    seen = [False] * len(adj)
    seen[0] = True
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for w in adj[u]:
            if not seen[w]:
                seen[w] = True
                queue.append(w)
    if not all(seen):
        missing = min(original[i] for i, s in enumerate(seen) if not s)
        raise TopologyError(f"topology is disconnected: node {missing} is unreachable")


def load_topology_file(path: str | Path, level: str | None = None) -> Topology:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    topo = load_topology(text, level=level)
    if topo.name == "unnamed":
        topo.name = path.stem
    return topo


def bundled_topology(name: str, level: str = "pop") -> Topology:
    """Load one of the topologies shipped with the package."""
    if name not in BUNDLED:
        raise TopologyError(f"unknown bundled topology {name!r}; choose from {sorted(BUNDLED)}")
    suffix = "" if name in ("path6", "star") else f".{level}"
    return load_topology_file(DATA_DIR / f"{name}{suffix}.txt")


def format_topology(edges: Iterable[tuple[int, int]], level: str, name: str,
                    pops: dict[int, str] | None = None) -> str:
    out = [f"# level={level} name={name}"]
    for node, label in sorted((pops or {}).items()):
        out.append(f"# pop {node} {label}")
    out.extend(f"{u} {v}" for u, v in sorted(edges))
    return "\n".join(out) + "\n"


def select_servers(t: Topology, k: int) -> Placement:
    """Top-``k`` POPs by degree become servers, the remaining POPs clients.

    Ties are broken by the lower node id.
    """
    pops = t.pop_nodes()
    if k < 1 or k >= len(pops):
        raise TopologyError(f"server count {k} must be in [1, {len(pops) - 1}] for {len(pops)} POPs")
    ranked = sorted(pops, key=lambda v: (-t.degree(v), v))
    servers = tuple(sorted(ranked[:k]))
    clients = tuple(sorted(ranked[k:]))
    return Placement(servers=servers, clients=clients)


def shortest_path(t: Topology, a: int, b: int) -> tuple[int, ...]:
    """Minimum-hop path from ``a`` to ``b`` inclusive of both endpoints.

    Among equal-length paths the lexicographically smallest node sequence
    wins. Results are memoized on the topology.
    """
    key = (a, b)
    cached = t._paths.get(key)
    if cached is not None:
        return cached
    n = t.node_count
    if not (0 <= a < n and 0 <= b < n):
        raise TopologyError(f"node out of range: {a}, {b}")
    if a == b:
        path = (a,)
    else:
        path = _lexmin_path(t, a, b)
    t._paths[key] = path
    return path


def _lexmin_path(t: Topology, a: int, b: int) -> tuple[int, ...]:
    # distances to b, then greedy walk from a picking the smallest neighbor
    # that is one step closer; this yields the lexicographic minimum.
    dist = [-1] * t.node_count
    dist[b] = 0
    queue = deque([b])
    while queue:
        u = queue.popleft()
        if u == a:
            break
        for w in t.adjacency[u]:
            if dist[w] < 0:
                dist[w] = dist[u] + 1
                queue.append(w)
    path = [a]
    cur = a
    while cur != b:
        want = dist[cur] - 1
        for w in t.adjacency[cur]:
            if dist[w] == want:
                cur = w
                break
        else:  # pragma: no cover - connectivity is validated at load
            raise TopologyError(f"no path from {a} to {b}")
        path.append(cur)
    return tuple(path)
