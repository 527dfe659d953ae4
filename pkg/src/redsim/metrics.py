"""Hit rate, hop-count CDF, footprint reduction and bandwidth savings."""
from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence, Union

from .cachenet import HIT_ORIGIN, FulfillmentRecord


class MetricsError(ValueError):
    pass


@dataclass
class MetricsReport:
    hit_rate: float
    hop_cdf: list[tuple[int, float]]
    baseline_bytes_hops: float
    reduced_bytes_hops: float
    footprint_reduction: float
    bandwidth_savings: float
    metadata: dict = field(default_factory=dict)


def measured(records: Sequence[FulfillmentRecord], warmup: float) -> Sequence[FulfillmentRecord]:
    """Drop the first ``warmup`` fraction of records."""
    if not 0.0 <= warmup < 1.0:
        raise MetricsError("warmup fraction must be in [0, 1)")
    return records[int(len(records) * warmup):]


def hit_rate(records: Sequence[FulfillmentRecord]) -> float:
    if not records:
        raise MetricsError("hit rate of an empty record set")
    return sum(r.hit != HIT_ORIGIN for r in records) / len(records)


def hop_cdf(records: Sequence[FulfillmentRecord]) -> list[tuple[int, float]]:
    """Cumulative share of hits served within each hop count.

    Returns an empty table when there are no hits.
    """
    counts = Counter(r.hops for r in records if r.hit != HIT_ORIGIN)
    total = sum(counts.values())
    out = []
    acc = 0
    for h in sorted(counts):
        acc += counts[h]
        out.append((h, acc / total))
    return out


def cdf_at(cdf: Sequence[tuple[int, float]], hops: int) -> float:
    value = 0.0
    for h, frac in cdf:
        if h > hops:
            break
        value = frac
    return value


Baseline = Union[float, int, Sequence[FulfillmentRecord]]


def _total(baseline: Baseline) -> float:
    if isinstance(baseline, (int, float)):
        return float(baseline)
    return float(sum(r.bytes_hops for r in baseline))


def footprint_reduction(records: Sequence[FulfillmentRecord], baseline: Baseline) -> float:
    """``1 - sum(bytes x hops) / baseline``; ``baseline`` is either a total or
    the records of the same trace replayed without caching."""
    base = _total(baseline)
    if base <= 0:
        raise MetricsError("baseline footprint must be positive")
    return 1.0 - sum(r.bytes_hops for r in records) / base


def bandwidth_savings(records: Sequence[FulfillmentRecord], baseline: Sequence[FulfillmentRecord],
                      chunk_size: int, external_hops: int = 1) -> float:
    """Footprint reduction with each origin fetch also paying
    ``external_hops`` hops of transit outside the ISP."""
    ext = chunk_size * external_hops

    def cost(recs):
        return sum(r.bytes_hops + (ext if r.hit == HIT_ORIGIN else 0) for r in recs)

    base = cost(baseline)
    if base <= 0:
        raise MetricsError("baseline bandwidth must be positive")
    return 1.0 - cost(records) / base


def build_report(records: Sequence[FulfillmentRecord], baseline: Sequence[FulfillmentRecord],
                 chunk_size: int, external_hops: int = 1, metadata: dict | None = None) -> MetricsReport:
    return MetricsReport(
        hit_rate=hit_rate(records),
        hop_cdf=hop_cdf(records),
        baseline_bytes_hops=_total(baseline),
        reduced_bytes_hops=_total(records),
        footprint_reduction=footprint_reduction(records, baseline),
        bandwidth_savings=bandwidth_savings(records, baseline, chunk_size, external_hops),
        metadata=dict(metadata or {}),
    )


def write_fulfillment_csv(records: Sequence[FulfillmentRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["seq", "hit", "serving_node", "hops", "bytes_hops"])
        for r in records:
            w.writerow([r.request.seq, r.hit, r.serving_node, r.hops, r.bytes_hops])


def write_hop_cdf_csv(cdf: Sequence[tuple[int, float]], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["hops", "cum_fraction"])
        for h, f in cdf:
            w.writerow([h, repr(f)])
