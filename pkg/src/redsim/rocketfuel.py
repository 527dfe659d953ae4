"""Convert Rocketfuel ``.cch`` ISP maps into edge-list topology files.

A ``.cch`` line looks like::

    uid @loc [+] [bb] (num_neigh) [&ext] -> <nuid-1> <nuid-2> ... {-euid} ... =name[!] rn

Lines for external nodes start with a negative uid and are skipped, as
are ``{-euid}`` references to them.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

from .topology import TopologyError, format_topology

_LINE = re.compile(r"^(?P<uid>\d+)\s+@(?P<loc>\S+).*?->(?P<rest>.*)$")
_NEIGH = re.compile(r"<(\d+)>")


@dataclass
class RouterMap:
    location: dict[int, str]
    links: set[tuple[int, int]]


def parse_cch(text: str) -> RouterMap:
    location: dict[int, str] = {}
    links: set[tuple[int, int]] = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#") or line.startswith("-"):
            continue
        m = _LINE.match(line)
        if m is None:
            raise TopologyError(f"line {lineno}: unrecognised cch record {raw!r}")
        uid = int(m.group("uid"))
        location[uid] = m.group("loc")
        rest = m.group("rest").split("=", 1)[0]
        for n in _NEIGH.findall(rest):
            nid = int(n)
            if nid != uid:
                links.add((min(uid, nid), max(uid, nid)))
    unknown = {x for e in links for x in e} - location.keys()
    if unknown:
        raise TopologyError(f"links reference undeclared routers: {sorted(unknown)[:5]}")
    return RouterMap(location=location, links=links)


def cch_to_topology_text(text: str, level: str, name: str) -> str:
    """Render a ``.cch`` map as an edge-list file at router or POP level."""
    rmap = parse_cch(text)
    if level == "router":
        return format_topology(rmap.links, "router", name, pops=rmap.location)
    if level != "pop":
        raise TopologyError(f"unknown level {level!r}")
    labels = sorted(set(rmap.location.values()))
    pop_index = {label: i for i, label in enumerate(labels)}
    pop_links = set()
    for u, v in rmap.links:
        a, b = pop_index[rmap.location[u]], pop_index[rmap.location[v]]
        if a != b:
            pop_links.add((min(a, b), max(a, b)))
    header = "".join(f"# popname {i} {label}\n" for label, i in pop_index.items())
    return format_topology(pop_links, "pop", name).replace("\n", "\n" + header, 1)
