"""Redundancy-elimination baselines.

SmartRE-style: ingress routers encode redundant chunks as shims and a
caching manifest assigns each path's redundant volume to on-path decoders.
The manifest comes from an LP (or a greedy fallback) over a redundancy
profile measured in windows of ``W`` requests.

End-to-end RE: every (client, server) pair keeps an LRU chunk memory at the
client; a repeated chunk crosses the whole path as a shim.

Byte accounting matches :mod:`redsim.cachenet`: a request over the POP path
``c = p0 .. pL = s`` costs ``L + 1`` hops, the first being the client's
access link, and data flows from the ingress ``s`` toward the egress ``c``.
"""
from __future__ import annotations

import csv
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize, sparse

from .topology import Topology, shortest_path
from .workload import RequestEvent

DEFAULT_SHIM_BYTES = 32
# PACK is reported to save about 2% less than EndRE; applied multiplicatively.
PACK_RELATIVE_PENALTY = 0.02
RESIDUAL_TOL = 1e-6


@dataclass
class RedundancyProfile:
    """Per-path volumes, averaged per window of ``window`` requests.

    ``routes[i]`` runs from the ingress (server POP) to the egress (client
    POP); decoders may sit at ``routes[i][1:]``.
    """

    pairs: list[tuple[int, int]]
    routes: list[tuple[int, ...]]
    vol: np.ndarray
    red: np.ndarray
    window: int
    windows: float
    chunk_size: int
    index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.index = {pair: i for i, pair in enumerate(self.pairs)}


@dataclass
class CachingManifest:
    """``x[i]`` maps decoder router -> fraction of path ``i``'s redundant bytes."""

    x: list[dict[int, float]]
    capacities: dict[int, float]
    objective: float
    solver: str

    def residuals(self, profile: RedundancyProfile) -> tuple[float, float]:
        """Worst violation of the per-path and per-router constraints."""
        path_res = max((sum(xp.values()) - 1.0 for xp in self.x), default=0.0)
        load: dict[int, float] = {}
        for i, xp in enumerate(self.x):
            for r, f in xp.items():
                load[r] = load.get(r, 0.0) + f * profile.red[i]
        router_res = max((load[r] - self.capacities.get(r, 0.0) for r in load), default=0.0)
        neg = -min((f for xp in self.x for f in xp.values()), default=0.0)
        return max(path_res, neg, 0.0), max(router_res, 0.0)


@dataclass
class ReOutcome:
    baseline_bytes_hops: float
    reduced_bytes_hops: float
    reduction_fraction: float
    baseline_bytes: float = 0.0
    transferred_bytes: float = 0.0
    bandwidth_savings: float = 0.0
    requests: int = 0
    origin_served: int = 0

    @property
    def origin_fraction(self) -> float:
        return self.origin_served / self.requests if self.requests else 0.0


def _route(t: Topology, client: int, server: int) -> tuple[int, ...]:
    return tuple(reversed(shortest_path(t, client, server)))


def _windows(trace: Sequence[RequestEvent], window: int):
    for start in range(0, len(trace), window):
        yield trace[start:start + window]


def build_redundancy_profile(trace: Sequence[RequestEvent], placement, topology: Topology,
                             window: int, chunk_size: int = 1024) -> RedundancyProfile:
    """Measure per-path total and redundant bytes.

    A request is redundant when its chunk already crossed the same path
    earlier in the same window. Volumes are totals scaled to one window.
    """
    if window < 1:
        raise ValueError("profile window must be >= 1 request")
    if not trace:
        raise ValueError("cannot profile an empty trace")
    pairs = sorted({(c, s) for c in placement.clients for s in placement.servers})
    index = {p: i for i, p in enumerate(pairs)}
    vol = np.zeros(len(pairs))
    red = np.zeros(len(pairs))
    for block in _windows(trace, window):
        seen: set[tuple[int, int]] = set()
        for ev in block:
            i = index[(ev.client, ev.server)]
            vol[i] += chunk_size
            key = (i, ev.chunk)
            if key in seen:
                red[i] += chunk_size
            else:
                seen.add(key)
    windows = len(trace) / window
    routes = [_route(topology, c, s) for c, s in pairs]
    return RedundancyProfile(pairs, routes, vol / windows, red / windows, window, windows, chunk_size)


def ideal_capacity(profile: RedundancyProfile) -> float:
    """Smallest uniform per-router capacity that lets every path decode all
    its redundant bytes at its egress (the unconstrained optimum)."""
    need: dict[int, float] = {}
    for route, r in zip(profile.routes, profile.red):
        need[route[-1]] = need.get(route[-1], 0.0) + r
    return max(need.values(), default=0.0)


def _capacity_map(capacities, profile: RedundancyProfile) -> dict[int, float]:
    routers = {r for route in profile.routes for r in route[1:]}
    if isinstance(capacities, dict):
        caps = {r: float(capacities.get(r, 0.0)) for r in routers}
    else:
        caps = {r: float(capacities) for r in routers}
    if any(c < 0 for c in caps.values()):
        raise ValueError("capacities must be >= 0")
    return caps


def _variables(profile: RedundancyProfile):
    """(path index, router, distance from ingress) for every decode slot
    on a path with redundancy."""
    out = []
    for i, route in enumerate(profile.routes):
        if profile.red[i] <= 0:
            continue
        for d, r in enumerate(route[1:], 1):
            out.append((i, r, d))
    return out


def manifest_objective(manifest_x: list[dict[int, float]], profile: RedundancyProfile) -> float:
    total = 0.0
    for i, xp in enumerate(manifest_x):
        if not xp:
            continue
        dist = {r: d for d, r in enumerate(profile.routes[i])}
        total += sum(f * profile.red[i] * dist[r] for r, f in xp.items())
    return total


def solve_manifest_lp(profile: RedundancyProfile, capacities,
                      topology: Topology | None = None) -> CachingManifest:
    """Decoder placement maximising redundant bytes x hops kept off the
    network, subject to per-path and per-router capacity limits."""
    caps = _capacity_map(capacities, profile)
    vars_ = _variables(profile)
    x: list[dict[int, float]] = [{} for _ in profile.routes]
    if not vars_:
        return CachingManifest(x, caps, 0.0, "lp")
    n = len(vars_)
    c = np.array([-profile.red[i] * d for i, _, d in vars_])
    paths = sorted({i for i, _, _ in vars_})
    prow = {i: k for k, i in enumerate(paths)}
    routers = sorted({r for _, r, _ in vars_})
    rrow = {r: len(paths) + k for k, r in enumerate(routers)}
    rows, cols, vals = [], [], []
    for j, (i, r, _) in enumerate(vars_):
        rows += [prow[i], rrow[r]]
        cols += [j, j]
        vals += [1.0, profile.red[i]]
    A = sparse.csr_matrix((vals, (rows, cols)), shape=(len(paths) + len(routers), n))
    b = np.concatenate([np.ones(len(paths)), [caps[r] for r in routers]])
    res = optimize.linprog(c, A_ub=A, b_ub=b, bounds=(0.0, 1.0), method="highs",
                           options={"primal_feasibility_tolerance": 1e-9,
                                    "dual_feasibility_tolerance": 1e-9})
    if res.status != 0:
        raise RuntimeError(f"LP solver failed: {res.message}")
    for (i, r, _), v in zip(vars_, res.x):
        if v > 1e-12:
            x[i][r] = float(v)
    _repair(x, profile, caps)
    return CachingManifest(x, caps, manifest_objective(x, profile), "lp")


def _repair(x: list[dict[int, float]], profile: RedundancyProfile, caps: dict[int, float]) -> None:
    # scale away solver round-off so both constraint families hold exactly
    for xp in x:
        s = sum(xp.values())
        if s > 1.0:
            for r in xp:
                xp[r] /= s
    load: dict[int, float] = {}
    for i, xp in enumerate(x):
        for r, f in xp.items():
            load[r] = load.get(r, 0.0) + f * profile.red[i]
    for r, used in load.items():
        if used > caps[r] > 0 or (caps[r] == 0 and used > 0):
            scale = caps[r] / used
            for i, xp in enumerate(x):
                if r in xp:
                    xp[r] *= scale


def solve_manifest_greedy(profile: RedundancyProfile, capacities,
                          topology: Topology | None = None) -> CachingManifest:
    """Fractional-knapsack fill: decode slots in order of saved hops per
    byte of decoder memory (farthest from ingress first)."""
    caps = _capacity_map(capacities, profile)
    left = dict(caps)
    used = np.zeros(len(profile.routes))
    x: list[dict[int, float]] = [{} for _ in profile.routes]
    for i, r, d in sorted(_variables(profile), key=lambda v: (-v[2], v[0], v[1])):
        red = profile.red[i]
        f = min(1.0 - used[i], left[r] / red)
        if f <= 0:
            continue
        x[i][r] = f
        used[i] += f
        left[r] = max(0.0, left[r] - f * red)
    return CachingManifest(x, caps, manifest_objective(x, profile), "greedy")


def _redundant_flags(trace: Sequence[RequestEvent], window: int) -> list[bool]:
    flags = []
    for block in _windows(trace, window):
        seen: set[tuple[int, int, int]] = set()
        for ev in block:
            key = (ev.client, ev.server, ev.chunk)
            flags.append(key in seen)
            seen.add(key)
    return flags


def simulate_smartre(trace: Sequence[RequestEvent], manifest: CachingManifest,
                     profile: RedundancyProfile, topology: Topology,
                     shim_bytes: int = DEFAULT_SHIM_BYTES, external_hops: int = 1) -> ReOutcome:
    """Replay ``trace`` through the encoders/decoders of ``manifest``.

    Every request is served by its origin. A redundant request's bytes are
    split by the manifest: fraction ``x[r]`` travels ingress -> ``r`` as a
    shim and full-size afterwards.
    """
    size = profile.chunk_size
    # per path: fraction of bytes x hops saved on a redundant transfer
    saving = []
    for i, route in enumerate(profile.routes):
        dist = {r: d for d, r in enumerate(route)}
        saving.append(sum(f * dist[r] for r, f in manifest.x[i].items()) * (size - shim_bytes))
    base = reduced = 0.0
    for ev, redundant in zip(trace, _redundant_flags(trace, profile.window)):
        i = profile.index[(ev.client, ev.server)]
        hops = len(profile.routes[i])  # L + 1 including the access link
        base += size * hops
        reduced += size * hops - (saving[i] if redundant else 0.0)
    ext = size * external_hops * len(trace)
    return ReOutcome(
        baseline_bytes_hops=base,
        reduced_bytes_hops=reduced,
        reduction_fraction=1.0 - reduced / base if base else 0.0,
        baseline_bytes=size * len(trace),
        transferred_bytes=size * len(trace),
        bandwidth_savings=1.0 - (reduced + ext) / (base + ext) if base else 0.0,
        requests=len(trace),
        origin_served=len(trace),
    )


def simulate_endre(trace: Sequence[RequestEvent], pair_cache_capacity: int, topology: Topology,
                   chunk_size: int = 1024, shim_bytes: int = DEFAULT_SHIM_BYTES,
                   measure_from: int = 0) -> ReOutcome:
    """Per-pair LRU memory at the client; hits cross the path as shims.

    Byte savings depend only on the trace and the memory size; the
    topology only scales the footprint figures.
    """
    if pair_cache_capacity < 0:
        raise ValueError("pair cache capacity must be >= 0")
    memories: dict[tuple[int, int], OrderedDict] = {}
    base_b = sent_b = base_fp = sent_fp = 0.0
    for pos, ev in enumerate(trace):
        mem = memories.setdefault((ev.client, ev.server), OrderedDict())
        if ev.chunk in mem:
            mem.move_to_end(ev.chunk)
            sent = shim_bytes
        else:
            sent = chunk_size
            if pair_cache_capacity > 0:
                if len(mem) >= pair_cache_capacity:
                    mem.popitem(last=False)
                mem[ev.chunk] = None
        if pos < measure_from:
            continue
        hops = len(shortest_path(topology, ev.client, ev.server))
        base_b += chunk_size
        sent_b += sent
        base_fp += chunk_size * hops
        sent_fp += sent * hops
    savings = 1.0 - sent_b / base_b if base_b else 0.0
    n = len(trace) - measure_from
    return ReOutcome(
        baseline_bytes_hops=base_fp,
        reduced_bytes_hops=sent_fp,
        reduction_fraction=1.0 - sent_fp / base_fp if base_fp else 0.0,
        baseline_bytes=base_b,
        transferred_bytes=sent_b,
        bandwidth_savings=savings,
        requests=n,
        origin_served=n,
    )


def pack_savings(endre_savings: float) -> float:
    """PACK modelled as EndRE minus its reported relative penalty."""
    return endre_savings * (1.0 - PACK_RELATIVE_PENALTY)


def write_manifest_csv(manifest: CachingManifest, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path_id", "router", "fraction"])
        for i, xp in enumerate(manifest.x):
            for r in sorted(xp):
                w.writerow([i, r, repr(xp[r])])


def write_profile_csv(profile: RedundancyProfile, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path_id", "vol_bytes", "red_bytes"])
        for i in range(len(profile.pairs)):
            w.writerow([i, repr(float(profile.vol[i])), repr(float(profile.red[i]))])


def ideal_reduction(trace: Sequence[RequestEvent], placement, topology: Topology, window: int,
                    chunk_size: int = 1024, shim_bytes: int = DEFAULT_SHIM_BYTES) -> float:
    """SmartRE footprint reduction with ideal decoder memory."""
    prof = build_redundancy_profile(trace, placement, topology, window, chunk_size)
    manifest = solve_manifest_lp(prof, ideal_capacity(prof))
    return simulate_smartre(trace, manifest, prof, topology, shim_bytes).reduction_fraction


def calibrate_window(make_trace, placement, topology: Topology, target: float,
                     lo: float = 10.0, hi: float = 5000.0, tol: float = 0.002,
                     chunk_size: int = 1024) -> float:
    """Requests-per-path window whose ideal SmartRE reduction hits ``target``.

    ``make_trace(n)`` must return a trace of ``n`` requests; each probe uses
    two windows of traffic. Bisection on a log scale.
    """
    n_paths = len(placement.clients) * len(placement.servers)

    def reduction(per_path: float) -> float:
        window = max(1, int(round(per_path * n_paths)))
        return ideal_reduction(make_trace(2 * window), placement, topology, window, chunk_size)

    for _ in range(30):
        mid = (lo * hi) ** 0.5
        r = reduction(mid)
        if abs(r - target) <= tol:
            return mid
        if r < target:
            lo = mid
        else:
            hi = mid
    return (lo * hi) ** 0.5
