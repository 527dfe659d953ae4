"""Experiment orchestration: scenario expansion, repetitions and reports."""
from __future__ import annotations

import csv
import json
import logging
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Sequence

from . import __version__
from .cachenet import CrNetwork
from .config import INCA_POLICIES, ConfigError, ScenarioConfig
from .metrics import (bandwidth_savings, footprint_reduction, hit_rate, hop_cdf,
                      write_fulfillment_csv, write_hop_cdf_csv)
from .redundancy import (build_redundancy_profile, ideal_capacity, simulate_endre,
                         simulate_smartre, solve_manifest_greedy, solve_manifest_lp)
from .topology import (BUNDLED, Topology, bundled_topology, load_topology_file,
                       select_servers)
from .workload import RNG_ALGORITHM, build_catalog, generate_trace, write_trace_csv

log = logging.getLogger(__name__)

REPORT_COLUMNS = [
    "topology", "level", "policy", "cache_chunks", "alpha", "pattern", "seed",
    "hit_rate", "footprint_reduction", "bandwidth_savings",
    "hit_rate_sd", "footprint_reduction_sd", "bandwidth_savings_sd",
    "origin_fraction", "config_hash",
]
METRICS = ("hit_rate", "footprint_reduction", "bandwidth_savings")


@dataclass
class RunResult:
    scenario: dict
    seed: int
    hit_rate: float
    footprint_reduction: float
    bandwidth_savings: float
    origin_fraction: float
    hop_cdf: list = field(default_factory=list)
    records: list | None = None
    extra: dict = field(default_factory=dict)


@lru_cache(maxsize=None)
def get_topology(name: str, level: str) -> Topology:
    if name in BUNDLED:
        return bundled_topology(name, level)
    return load_topology_file(name, level=level)


def server_count(cfg: ScenarioConfig, name: str) -> int:
    if cfg.servers != "auto":
        return cfg.servers
    return BUNDLED.get(name, 20)


@lru_cache(maxsize=None)
def get_catalog(n: int, alpha: float, chunk_size: int):
    return build_catalog(n, alpha, chunk_size)


@lru_cache(maxsize=8)
def _trace(name, level, k, n_chunks, alpha, chunk_size, pattern, n_requests, seed):
    t = get_topology(name, level)
    p = select_servers(t, k)
    cat = get_catalog(n_chunks, alpha, chunk_size)
    return generate_trace(cat, t, p, pattern, n_requests, seed)


def scenario_trace(cfg: ScenarioConfig, sc: dict, seed: int):
    name = sc["topology"]
    return _trace(name, cfg.level, server_count(cfg, name), cfg.catalog_chunks,
                  float(sc["alpha"]), cfg.chunk_size, sc["pattern"], cfg.n_requests, seed)


@lru_cache(maxsize=8)
def _baseline(name, level, key):
    t = get_topology(name, level)
    trace = _trace(*key)
    cat = get_catalog(key[3], key[4], key[5])
    return CrNetwork(t, cat, 0, "none").run(trace)


def smartre_window(cfg: ScenarioConfig, n_paths: int, n_measured: int) -> int:
    if cfg.smartre_window == "auto":
        window = int(round(cfg.smartre_window_per_path * n_paths))
    else:
        window = cfg.smartre_window
    return max(1, min(window, n_measured))


def run_one(cfg: ScenarioConfig, sc: dict, seed: int, keep_records: bool = False) -> RunResult:
    """Run one scenario for one seed."""
    name, policy, cap = sc["topology"], sc["policy"], sc["cache_chunks"]
    t = get_topology(name, cfg.level)
    placement = select_servers(t, server_count(cfg, name))
    cat = get_catalog(cfg.catalog_chunks, float(sc["alpha"]), cfg.chunk_size)
    trace = scenario_trace(cfg, sc, seed)
    warm = int(len(trace) * cfg.warmup)

    if policy in INCA_POLICIES or policy == "none":
        net = CrNetwork(
            t, cat, cap, "cachedbit" if policy == "cachedbit-nolast" else policy,
            seed=seed, radius=cfg.nbsc_radius, exchange_period=cfg.nbsc_exchange_period,
            bloom_bits_per_chunk=cfg.bloom_bits_per_chunk, bloom_hashes=cfg.bloom_hashes,
            last_copy=policy != "cachedbit-nolast", nbsc_consult=cfg.nbsc_consult)
        records = net.run(trace)[warm:]
        key = (name, cfg.level, server_count(cfg, name), cfg.catalog_chunks, float(sc["alpha"]),
               cfg.chunk_size, sc["pattern"], cfg.n_requests, seed)
        baseline = _baseline(name, cfg.level, key)[warm:]
        return RunResult(
            sc, seed,
            hit_rate=hit_rate(records),
            footprint_reduction=footprint_reduction(records, baseline),
            bandwidth_savings=bandwidth_savings(records, baseline, cfg.chunk_size, cfg.external_hops),
            origin_fraction=1.0 - hit_rate(records),
            hop_cdf=hop_cdf(records),
            records=records if keep_records else None,
        )

    if policy == "endre":
        out = simulate_endre(trace, cap, t, cfg.chunk_size, cfg.shim_bytes, measure_from=warm)
        return RunResult(sc, seed, 0.0, out.reduction_fraction, out.bandwidth_savings,
                         out.origin_fraction)

    measured = trace[warm:]
    window = smartre_window(cfg, len(placement.clients) * len(placement.servers), len(measured))
    profile = build_redundancy_profile(measured, placement, t, window, cfg.chunk_size)
    ideal = ideal_capacity(profile)
    scale = cap / cfg.smartre_reference_chunks
    solve = solve_manifest_lp if policy == "smartre-lp" else solve_manifest_greedy
    manifest = solve(profile, ideal * scale, t)
    out = simulate_smartre(measured, manifest, profile, t, cfg.shim_bytes, cfg.external_hops)
    return RunResult(sc, seed, 0.0, out.reduction_fraction, out.bandwidth_savings,
                     out.origin_fraction,
                     extra={"window": window, "scale": scale, "ideal_capacity_bytes": ideal,
                            "objective": manifest.objective})


def _run_unit(args):
    cfg, sc, seed, keep = args
    return run_one(cfg, sc, seed, keep)


def run_all(cfg: ScenarioConfig, parallel: int = 1, keep_records: bool = False) -> list[RunResult]:
    """Every (scenario, seed) unit in deterministic order."""
    cfg.validate()
    units = [(cfg, sc, seed, keep_records) for sc in cfg.scenarios() for seed in cfg.seeds]
    for sc in cfg.scenarios():
        try:
            get_topology(sc["topology"], cfg.level)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"scenario {sc}: cannot load topology: {exc}") from exc
    results = []
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            for unit, res in zip(units, pool.map(_run_unit, units)):
                results.append(res)
    else:
        for unit in units:
            try:
                results.append(_run_unit(unit))
            except Exception as exc:
                raise RuntimeError(f"scenario {unit[1]} seed {unit[2]} failed: {exc}") from exc
            log.info("done %s seed=%s", unit[1], unit[2])
    return results


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def report_rows(cfg: ScenarioConfig, results: Sequence[RunResult]) -> list[dict]:
    """One row per (scenario, seed) followed by a ``mean`` row per scenario."""
    digest = cfg.digest()
    rows = []
    by_scenario: dict[tuple, list[RunResult]] = {}
    for r in results:
        by_scenario.setdefault(tuple(r.scenario.items()), []).append(r)
    for key, group in by_scenario.items():
        sc = dict(key)
        base = {"topology": sc["topology"], "level": cfg.level, "policy": sc["policy"],
                "cache_chunks": sc["cache_chunks"], "alpha": sc["alpha"],
                "pattern": sc["pattern"], "config_hash": digest}
        for r in group:
            row = dict(base, seed=r.seed, origin_fraction=_fmt(r.origin_fraction))
            row.update({m: _fmt(getattr(r, m)) for m in METRICS})
            row.update({f"{m}_sd": "" for m in METRICS})
            rows.append(row)
        agg = dict(base, seed="mean",
                   origin_fraction=_fmt(statistics.fmean(r.origin_fraction for r in group)))
        for m in METRICS:
            values = [getattr(r, m) for r in group]
            agg[m] = _fmt(statistics.fmean(values))
            agg[f"{m}_sd"] = _fmt(statistics.pstdev(values))
        rows.append(agg)
    return rows


def _stem(sc: dict, seed) -> str:
    topo = Path(str(sc["topology"])).stem
    return f"{topo}_{sc['policy']}_{sc['cache_chunks']}_{sc['alpha']}_{sc['pattern']}_s{seed}"


def _write_csv(rows: Sequence[dict], columns: Sequence[str], dest) -> None:
    """Write to a path, or to an already-open text stream."""
    if hasattr(dest, "write"):
        w = csv.DictWriter(dest, fieldnames=columns, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        return
    with open(dest, "w", newline="") as fh:
        _write_csv(rows, columns, fh)


def write_report(rows: Sequence[dict], dest) -> None:
    _write_csv(rows, REPORT_COLUMNS, dest)


def run_matrix(cfg: ScenarioConfig, out_dir=None, parallel: int = 1,
               fulfillment_logs: bool = False) -> list[dict]:
    """Run the full matrix; with ``out_dir`` also write ``report.csv``,
    ``metadata.json``, per-run hop CDFs and (optionally) fulfillment logs."""
    results = run_all(cfg, parallel=parallel, keep_records=fulfillment_logs)
    rows = report_rows(cfg, results)
    if out_dir is None:
        return rows
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_report(rows, out / "report.csv")
    meta = {"config": cfg.to_dict(), "config_hash": cfg.digest(), "rng": RNG_ALGORITHM,
            "redsim_version": __version__}
    (out / "metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    cdf_dir = out / "hopcdf"
    for r in results:
        if r.hop_cdf:
            cdf_dir.mkdir(exist_ok=True)
            write_hop_cdf_csv(r.hop_cdf, cdf_dir / f"{_stem(r.scenario, r.seed)}.csv")
        if fulfillment_logs and r.records is not None:
            log_dir = out / "fulfillment"
            log_dir.mkdir(exist_ok=True)
            stem = _stem(r.scenario, r.seed)
            write_fulfillment_csv(r.records, log_dir / f"{stem}.csv")
            write_trace_csv([rec.request for rec in r.records], log_dir / f"{stem}.trace.csv")
    return rows


def join_reductions(left: Sequence[dict], right: Sequence[dict], left_label: str = "inca",
                    right_label: str = "smartre") -> list[dict]:
    """Pair mean-footprint rows on (topology, alpha, pattern, cache_chunks).

    Each ``right`` point must exist for every ``left`` point; otherwise the
    missing keys are reported in a ConfigError.
    """
    def key(row):
        return (row["topology"], str(row["alpha"]), row["pattern"], int(row["cache_chunks"]))

    rmap = {key(r): r for r in right if r["seed"] == "mean"}
    lmeans = [r for r in left if r["seed"] == "mean"]
    missing = sorted({key(r) for r in lmeans} - set(rmap))
    if missing:
        raise ConfigError(f"no {right_label} result for points: {missing}")
    out = []
    for r in lmeans:
        other = rmap[key(r)]
        a, b = float(r["footprint_reduction"]), float(other["footprint_reduction"])
        ratio = "" if b == 0 else repr(a / b)
        out.append({"topology": r["topology"], "alpha": r["alpha"], "pattern": r["pattern"],
                    "cache_chunks": r["cache_chunks"], f"{left_label}_policy": r["policy"],
                    f"{left_label}_footprint_reduction": repr(a),
                    f"{right_label}_policy": other["policy"],
                    f"{right_label}_footprint_reduction": repr(b), "ratio": ratio})
    return out


def compare_inca_smartre(cfg: ScenarioConfig, rows: Sequence[dict] | None = None,
                         parallel: int = 1) -> list[dict]:
    """INCA vs SmartRE footprint reductions on the shared capacity axis.

    SmartRE at ``c`` chunks gets ``c / smartre_reference_chunks`` of its
    ideal decoder memory, so 1024 -> 1, 512 -> 1/2, 256 -> 1/4, 128 -> 1/8.
    """
    inca = [p for p in cfg.policy if p in INCA_POLICIES]
    smart = [p for p in cfg.policy if p.startswith("smartre")]
    if not inca or not smart:
        raise ConfigError("compare needs at least one INCA policy and one SmartRE policy")
    if rows is None:
        rows = run_matrix(cfg, parallel=parallel)
    smart_rows = [r for r in rows if r["policy"] == smart[0]]
    out = []
    for policy in inca:
        out += join_reductions([r for r in rows if r["policy"] == policy], smart_rows)
    return out


COMPARISON_COLUMNS = ["topology", "alpha", "pattern", "cache_chunks", "inca_policy",
                      "inca_footprint_reduction", "smartre_policy",
                      "smartre_footprint_reduction", "ratio"]


def write_comparison(rows: Sequence[dict], dest) -> None:
    _write_csv(rows, COMPARISON_COLUMNS, dest)
