"""Deterministic synthetic ISP maps sized like the Rocketfuel networks.

The generator lays POPs out in the unit square, grows a POP backbone by
distance-discounted preferential attachment, spreads routers over POPs in
proportion to backbone degree and wires them so that the router and link
counts come out exactly. The result is emitted as ``.cch`` text so it goes
through the same import path as a real Rocketfuel map.
"""
from __future__ import annotations

import math
import random

# name: (routers, links, pops, pop_links, seed)
ISP_SIZES = {
    "exodus": (338, 800, 23, 37, 3967),
    "sprint": (547, 1600, 43, 72, 1239),
    "att": (733, 2300, 108, 141, 7018),
    "ntt": (1018, 2300, 121, 162, 2914),
}


def _pop_backbone(n: int, m: int, rng: random.Random, pref: float = 1.0,
                  reach: float = 2.0):
    pos = [(rng.random(), rng.random()) for _ in range(n)]

    def dist(a, b):
        return math.hypot(pos[a][0] - pos[b][0], pos[a][1] - pos[b][1]) + 0.05

    deg = [0] * n
    edges: set[tuple[int, int]] = set()
    for v in range(1, n):
        weights = [(deg[u] + 1) ** pref / dist(u, v) ** reach for u in range(v)]
        u = rng.choices(range(v), weights=weights)[0]
        edges.add((u, v))
        deg[u] += 1
        deg[v] += 1
    candidates = [(a, b) for a in range(n) for b in range(a + 1, n)]
    while len(edges) < m:
        weights = [0.0 if e in edges else ((deg[e[0]] + 1) * (deg[e[1]] + 1)) ** pref / dist(*e) ** (reach + 1)
                   for e in candidates]
        a, b = rng.choices(candidates, weights=weights)[0]
        edges.add((a, b))
        deg[a] += 1
        deg[b] += 1
    return edges, deg


def synthesize_isp(routers: int, links: int, pops: int, pop_links: int, seed: int,
                   pref: float = 0.3, reach: float = 4.0):
    """Return ``(location, router_links)`` for a synthetic ISP map."""
    rng = random.Random(seed)
    pop_edges, pop_deg = _pop_backbone(pops, pop_links, rng, pref, reach)

    # every POP gets one router, the rest go by degree^1.5
    sizes = [1] * pops
    weights = [d ** 1.5 for d in pop_deg]
    for p in rng.choices(range(pops), weights=weights, k=routers - pops):
        sizes[p] += 1
    members: list[list[int]] = []
    location: dict[int, int] = {}
    nxt = 1
    for p in range(pops):
        members.append(list(range(nxt, nxt + sizes[p])))
        for r in members[-1]:
            location[r] = p
        nxt += sizes[p]

    edges: set[tuple[int, int]] = set()

    def add(a, b):
        if a != b:
            edges.add((min(a, b), max(a, b)))

    for group in members:
        for i in range(1, len(group)):
            add(group[i], rng.choice(group[:i]))
    for a, b in sorted(pop_edges):
        add(rng.choice(members[a]), rng.choice(members[b]))

    capacity = sum(len(g) * (len(g) - 1) // 2 for g in members)
    pop_pairs = sorted(pop_edges)
    while len(edges) < links:
        if rng.random() < 0.7 and capacity > 0:
            g = rng.choices(members, weights=[len(x) - 1 for x in members])[0]
            add(rng.choice(g), rng.choice(g))
        else:
            a, b = rng.choice(pop_pairs)
            add(rng.choice(members[a]), rng.choice(members[b]))
    return location, edges


def to_cch(location: dict[int, int], edges: set[tuple[int, int]], prefix: str) -> str:
    neigh: dict[int, list[int]] = {r: [] for r in location}
    for a, b in edges:
        neigh[a].append(b)
        neigh[b].append(a)
    lines = []
    for r in sorted(location):
        ns = sorted(neigh[r])
        refs = " ".join(f"<{n}>" for n in ns)
        lines.append(f"{r} @{prefix}-pop{location[r]:03d} bb ({len(ns)}) -> {refs} "
                     f"=r{r}.{prefix}.example r1")
    return "\n".join(lines) + "\n"


def isp_cch(name: str) -> str:
    routers, links, pops, pop_links, seed = ISP_SIZES[name]
    location, edges = synthesize_isp(routers, links, pops, pop_links, seed)
    return to_cch(location, edges, name)


def small_topologies() -> dict[str, str]:
    """Tiny graphs used by oracle tests: a 6-node path and a 6-leaf star."""
    from .topology import format_topology

    path = format_topology([(i, i + 1) for i in range(5)], "pop", "path6")
    star = format_topology([(0, i) for i in range(1, 7)], "pop", "star")
    return {"path6": path, "star": star}


def bundled_files() -> dict[str, str]:
    """File name -> contents for every topology shipped in ``redsim/data``."""
    from .rocketfuel import cch_to_topology_text

    files = {}
    for name in ISP_SIZES:
        cch = isp_cch(name)
        files[f"{name}.cch"] = cch
        for level in ("pop", "router"):
            files[f"{name}.{level}.txt"] = cch_to_topology_text(cch, level, name)
    for name, text in small_topologies().items():
        files[f"{name}.txt"] = text
    return files


if __name__ == "__main__":
    from pathlib import Path

    out = Path(__file__).parent / "data"
    for fname, text in bundled_files().items():
        (out / fname).write_text(text, encoding="utf-8")
