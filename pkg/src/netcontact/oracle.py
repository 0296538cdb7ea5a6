"""Brute-force reference implementations and the benchmark harness.

Each report here is recomputed from scratch by scanning every session of
every device in the corpus, with no index of any kind. That makes this
module the correctness baseline the graph path is tested against, and
the performance baseline it is benchmarked against. It deliberately
shares nothing with the graph path beyond the session corpus, the pure
overlap/clip helpers and the report types.
"""

import csv
import resource
import time
from dataclasses import dataclass
from pathlib import Path

from .graph import TraceGraph, build_graph
from .sessions import DEFAULT_MERGE_GAP, DeviceUserMap, SessionsByDevice
from .topology import Topology
from .trace import (
    GRANULARITY_AP,
    Colocator,
    LocationReport,
    OverlapSpan,
    ProximityReport,
    TraceQuery,
    UnknownTargetError,
    Visit,
    clip,
    intersects,
    overlap,
)
from . import trace as _trace

BENCH_CSV_HEADER = ["method", "corpus_devices", "corpus_days", "query_id", "latency_us", "peak_mem_bytes"]


def _resolve(target: str, dumap: DeviceUserMap) -> tuple[str, str]:
    device = dumap.primary_device.get(target)
    if device is not None:
        return device, target
    user = dumap.device_to_user.get(target)
    if user is not None:
        return target, user
    raise UnknownTargetError(target)


def _zone_runs(rows, zone_of, merge_gap):
    # Independent re-statement of the zone-merge rule: consecutive sessions
    # of one device in the same zone, separated by at most merge_gap.
    runs = []
    for loc, t1, t2, trunc in rows:
        z = zone_of(loc)
        if runs and runs[-1][0] == z and t1 - runs[-1][2] <= merge_gap:
            if t2 > runs[-1][2]:
                runs[-1][2] = t2
            runs[-1][3] = runs[-1][3] or trunc
        else:
            runs.append([z, t1, t2, trunc])
    return runs


def linear_location_report(
    corpus: SessionsByDevice,
    q: TraceQuery,
    topo: Topology,
    dumap: DeviceUserMap,
    merge_gap: int = DEFAULT_MERGE_GAP,
) -> LocationReport:
    """Same contract as the graph path, computed by a full corpus scan."""
    device, user = _resolve(q.target, dumap)
    mine = []
    for dev, sessions in corpus.items():  # complete sequential scan, by design
        if dev != device:
            continue
        for s in sessions:
            mine.append((s.ap_id, s.t_start, s.t_end, s.truncated))
    mine.sort(key=lambda r: (r[1], r[2], r[0]))
    if q.granularity != GRANULARITY_AP:
        mine = _zone_runs(mine, topo.zone_of, merge_gap)

    visits = []
    for loc, t1, t2, trunc in mine:
        if not intersects(t1, t2, q.t_start, q.t_end):
            continue
        c1, c2 = clip(t1, t2, q.t_start, q.t_end)
        if c2 - c1 < q.tau:
            continue
        if loc in q.exclusions:
            continue
        if q.granularity == GRANULARITY_AP and topo.zone_of(loc) in q.exclusions:
            continue
        name, building = topo.location_display(loc, q.granularity)
        visits.append(Visit(loc, name, building, c1, c2, c2 - c1, trunc))
    visits.sort(key=lambda v: (v.t_start, v.location, v.t_end))
    return LocationReport(q.target, user, device, q, tuple(visits))


def linear_proximity_report(
    corpus: SessionsByDevice,
    lr: LocationReport,
    omega: int | None = None,
    *,
    topo: Topology,
    dumap: DeviceUserMap,
    dedupe_by_user: bool = True,
    merge_gap: int = DEFAULT_MERGE_GAP,
    omega_on_total: bool = False,
) -> ProximityReport:
    """Full scan over every session of every device for each visit."""
    q = lr.query
    w = q.omega if omega is None else omega
    visits_by_loc: dict[str, list[Visit]] = {}
    for v in lr.visits:
        visits_by_loc.setdefault(v.location, []).append(v)

    totals: dict[tuple[str, str], int] = {}
    spans: dict[tuple[str, str], list[OverlapSpan]] = {}

    def consider(dev: str, user: str, t1: int, t2: int, visit: Visit) -> None:
        ov = overlap(visit.t_start, visit.t_end, t1, t2)
        if ov <= 0 or ov < w:
            return
        key = (user, dev)
        totals[key] = totals.get(key, 0) + ov
        spans.setdefault(key, []).append(
            OverlapSpan(visit.location, max(visit.t_start, t1), min(visit.t_end, t2))
        )

    for dev, sessions in corpus.items():
        if dev == lr.device:
            continue
        user = dumap.device_to_user.get(dev, dev)
        if dedupe_by_user:
            if user == lr.user:
                continue
            if dumap.primary_device.get(user, dev) != dev:
                continue
        if q.granularity == GRANULARITY_AP:
            for s in sessions:
                for visit in visits_by_loc.get(s.ap_id, ()):
                    consider(dev, user, s.t_start, s.t_end, visit)
        else:
            rows = [(s.ap_id, s.t_start, s.t_end, s.truncated) for s in sessions]
            for zone, t1, t2, _ in _zone_runs(rows, topo.zone_of, merge_gap):
                for visit in visits_by_loc.get(zone, ()):
                    consider(dev, user, t1, t2, visit)

    rows = []
    for key, total in totals.items():
        if omega_on_total and total < w:
            continue
        user, dev = key
        ordered = tuple(sorted(spans[key], key=lambda s: (s.start, s.location, s.end)))
        rows.append(Colocator(user, dev, total, ordered))
    rows.sort(key=lambda c: (-c.total_overlap, c.user, c.device))
    return ProximityReport(lr.target, lr.user, lr.device, q, w, dedupe_by_user, tuple(rows))


# --- benchmark harness ---------------------------------------------------------

@dataclass(frozen=True)
class BenchSample:
    method: str
    corpus_devices: int
    corpus_days: int
    query_id: str
    latency_us: int
    peak_mem_bytes: int


def _peak_rss_bytes() -> int:
    return resource.getrusage(resource.RUSAGE_SELF).ru_maxrss * 1024


def bench(
    corpus: SessionsByDevice,
    queries: list[TraceQuery],
    topo: Topology,
    dumap: DeviceUserMap,
    device_bucket: int,
    location_bucket: int,
) -> tuple[list[BenchSample], TraceGraph]:
    """Time graph-path vs linear-scan answers for the same query set.

    Emits measurements only; pass/fail thresholds live in the test suite.
    Each query row covers the location report plus its proximity report.
    """
    n_dev = len(corpus)
    lo = min((s.t_start for lst in corpus.values() for s in lst), default=0)
    hi = max((s.t_end for lst in corpus.values() for s in lst), default=0)
    n_days = max(1, -(-(hi - lo) // 86400))
    samples: list[BenchSample] = []

    t0 = time.perf_counter_ns()
    g = build_graph(corpus, device_bucket, location_bucket)
    build_us = (time.perf_counter_ns() - t0) // 1000
    samples.append(BenchSample("graph", n_dev, n_days, "build", build_us, _peak_rss_bytes()))

    for i, q in enumerate(queries):
        t0 = time.perf_counter_ns()
        lr = _trace.location_report(g, q, topo, dumap)
        _trace.proximity_report(g, lr, topo=topo, dumap=dumap)
        graph_us = (time.perf_counter_ns() - t0) // 1000
        samples.append(BenchSample("graph", n_dev, n_days, f"q{i}", graph_us, _peak_rss_bytes()))

        t0 = time.perf_counter_ns()
        llr = linear_location_report(corpus, q, topo, dumap)
        linear_proximity_report(corpus, llr, topo=topo, dumap=dumap)
        linear_us = (time.perf_counter_ns() - t0) // 1000
        samples.append(BenchSample("linear", n_dev, n_days, f"q{i}", linear_us, _peak_rss_bytes()))
    return samples, g


def write_bench_csv(samples: list[BenchSample], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(BENCH_CSV_HEADER)
        for s in samples:
            writer.writerow(
                [s.method, s.corpus_devices, s.corpus_days, s.query_id, s.latency_us, s.peak_mem_bytes]
            )
