"""Oracle bounds, prediction accuracy, memory footprint and run reports.

Accuracy is scored against a perfect close/keep predictor replayed over the
same access order:

* ``oracle_hits`` - accesses whose bank's previous access hit the same row;
  a perfect predictor keeps exactly those rows open.
* ``avoidable_misses`` - accesses whose bank's previous access used another
  row; a perfect predictor closes in time and turns them into empties, so the
  oracle miss count is zero.

``hit_accuracy = hits / oracle_hits`` and
``miss_accuracy = 1 - misses / avoidable_misses`` (both 1.0 when the
denominator is zero).
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .addrmap import MappingScheme, decode_array
from .errors import UsageError


@dataclass(frozen=True)
class OracleBounds:
    hits: int
    avoidable_misses: int
    first_touches: int
    misses: int = 0

    @property
    def total(self):
        return self.hits + self.avoidable_misses + self.first_touches


def oracle_counts(banks, rows):
    """Oracle bounds for parallel sequences of bank ids and row indices."""
    last = {}
    hits = avoidable = first = 0
    for b, r in zip(banks, rows):
        prev = last.get(b)
        if prev is None:
            first += 1
        elif prev == r:
            hits += 1
        else:
            avoidable += 1
        last[b] = r
    return OracleBounds(hits, avoidable, first)


def _bank_row(trace, geo, scheme):
    ch, rk, bk, rw, _ = decode_array(trace.addr, geo, scheme)
    return (ch * geo.ranks + rk) * geo.banks + bk, rw


def oracle(trace, geo, scheme=MappingScheme.ROW_LOCALITY, order=None):
    """Oracle bounds of ``trace`` in file order, or in ``order`` (trace indices)."""
    banks, rows = _bank_row(trace, geo, MappingScheme.parse(scheme))
    if order is not None:
        banks, rows = banks[order], rows[order]
    return oracle_counts(banks.tolist(), rows.tolist())


def accuracy(counts, bounds):
    """``(hit_accuracy, miss_accuracy)`` of a run against its oracle bounds.

    ``counts`` needs ``hits``, ``misses`` and ``empties`` attributes; a total
    that differs from the bounds' means they come from different traces.
    """
    total = counts.hits + counts.misses + counts.empties
    if total != bounds.total:
        raise UsageError(f"run covers {total} accesses but oracle bounds cover {bounds.total}")
    if counts.hits > bounds.hits or counts.misses > bounds.avoidable_misses:
        raise UsageError("run exceeds its oracle bounds; were they computed for another access order?")
    hit_acc = counts.hits / bounds.hits if bounds.hits else 1.0
    miss_acc = 1.0 - counts.misses / bounds.avoidable_misses if bounds.avoidable_misses else 1.0
    return hit_acc, miss_acc


def footprint(trace, geo, scheme=MappingScheme.ROW_LOCALITY):
    """Fraction of all DRAM rows touched by ``trace``."""
    if len(trace) == 0:
        return 0.0
    banks, rows = _bank_row(trace, geo, MappingScheme.parse(scheme))
    distinct = np.unique(banks * geo.rows + rows).size
    return distinct / geo.total_rows


def geometric_mean(values, degenerate=()):
    """Geometric mean of ``values`` skipping indices listed in ``degenerate``.

    Returns ``(gmean, excluded_indices)``. Zero entries make the mean zero.
    """
    skip = set(degenerate)
    kept = [v for i, v in enumerate(values) if i not in skip]
    if not kept:
        return float("nan"), sorted(skip)
    if any(v <= 0 for v in kept):
        return 0.0, sorted(skip)
    return math.exp(sum(math.log(v) for v in kept) / len(kept)), sorted(skip)


CSV_COLUMNS = (
    "trace", "policy", "mapping", "scheduler", "seed", "requests", "hits", "misses", "empties",
    "timeouts", "total_latency", "mean_latency", "service_latency", "stall_cycles",
    "oracle_hits", "avoidable_misses", "hit_accuracy", "miss_accuracy", "footprint",
    "storage_counters", "storage_bytes",
)


@dataclass
class SimReport:
    trace: str
    policy: str
    mapping: str
    scheduler: str
    seed: int
    requests: int
    hits: int
    misses: int
    empties: int
    timeouts: int
    total_latency: int
    mean_latency: float
    service_latency: int
    stall_cycles: int
    oracle_hits: int
    avoidable_misses: int
    hit_accuracy: float
    miss_accuracy: float
    footprint: float
    storage_counters: int
    storage_bytes: int
    geometry: dict = field(default_factory=dict)
    per_source: dict = field(default_factory=dict)

    def row(self):
        return {k: getattr(self, k) for k in CSV_COLUMNS}


def build_report(result, trace, geo, scheme, policy, *, scheduler="in_order", seed=0):
    """Fold a ``RunResult`` into a ``SimReport``.

    Oracle bounds are taken over the run's own issue order, which is the
    file order under in-order scheduling.
    """
    scheme = MappingScheme.parse(scheme)
    banks, rows = _bank_row(trace, geo, scheme)
    bounds = oracle_counts(banks[result.order].tolist(), rows[result.order].tolist())
    hit_acc, miss_acc = accuracy(result, bounds)
    cost = policy.storage_cost()
    per_source = {}
    if len(trace):
        src = trace.source[result.order]
        for s in np.unique(src).tolist():
            sel = src == s
            per_source[str(s)] = {
                "requests": int(sel.sum()),
                "hits": int((result.classes[sel] == 0).sum()),
                "misses": int((result.classes[sel] == 1).sum()),
                "mean_latency": float(result.latency[sel].mean()),
            }
    return SimReport(
        trace=trace.name, policy=policy.name, mapping=scheme.value, scheduler=str(scheduler),
        seed=seed, requests=result.requests, hits=result.hits, misses=result.misses,
        empties=result.empties, timeouts=result.timeouts, total_latency=result.total_latency,
        mean_latency=result.mean_latency, service_latency=result.service_latency,
        stall_cycles=result.stall_cycles, oracle_hits=bounds.hits,
        avoidable_misses=bounds.avoidable_misses, hit_accuracy=hit_acc, miss_accuracy=miss_acc,
        footprint=footprint(trace, geo, scheme), storage_counters=cost.counters,
        storage_bytes=cost.bytes, geometry=asdict(geo), per_source=per_source,
    )


def _fmt(value):
    if isinstance(value, float):
        return repr(round(value, 9))
    return str(value)


def reports_to_csv(reports):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for rep in reports:
        writer.writerow([_fmt(rep.row()[k]) for k in CSV_COLUMNS])
    return buf.getvalue()


def reports_to_json(reports, config=None):
    doc = {
        "format": "happysim-report",
        "version": 1,
        "columns": list(CSV_COLUMNS),
        "config": config or {},
        "reports": [asdict(r) for r in reports],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
