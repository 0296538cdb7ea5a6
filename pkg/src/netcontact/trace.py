"""Report layer over a frozen graph snapshot.

Location reports list where the target's device was, for how long;
proximity reports list who shared those locations long enough to matter;
post-departure reports list who arrived shortly after the target left;
iterative tracing recursively expands co-locators round by round.

All functions here are pure readers of a frozen graph and may run
concurrently. Sessions partially overlapping the query window are
clipped to it before the minimum-visit-duration test, so a long visit
straddling the window boundary still counts for the time inside it.
A co-location is included when the overlap is positive and at least the
minimum-overlap threshold.
"""

import json
from dataclasses import dataclass
from datetime import datetime, timezone

from .graph import TraceGraph
from .sessions import DEFAULT_MERGE_GAP, DeviceUserMap, merge_zone_runs
from .topology import Topology

GRANULARITY_AP = "ap"
GRANULARITY_ZONE = "zone"

DEFAULT_TAU = 600       # 10 min minimum visit
DEFAULT_OMEGA = 900     # 15 min minimum co-location
SCHEMA_VERSION = 1


class UnknownTargetError(LookupError):
    """Target token never seen in the corpus; distinct from an empty report."""

    def __init__(self, target: str):
        super().__init__(target)
        self.target = target


def overlap(a_start: int, a_end: int, b_start: int, b_end: int) -> int:
    """Seconds two closed intervals share."""
    return max(0, min(a_end, b_end) - max(a_start, b_start))


def intersects(a_start: int, a_end: int, b_start: int, b_end: int) -> bool:
    return a_start <= b_end and a_end >= b_start


def clip(t_start: int, t_end: int, lo: int, hi: int) -> tuple[int, int]:
    return max(t_start, lo), min(t_end, hi)


@dataclass(frozen=True)
class TraceQuery:
    target: str
    t_start: int
    t_end: int
    tau: int = DEFAULT_TAU
    omega: int = DEFAULT_OMEGA
    granularity: str = GRANULARITY_AP
    exclusions: frozenset[str] = frozenset()
    post_departure_window: int | None = None

    def __post_init__(self):
        if self.t_end <= self.t_start:
            raise ValueError("query window must have positive length")
        if self.tau < 0 or self.omega < 0:
            raise ValueError("thresholds must be non-negative")
        if self.granularity not in (GRANULARITY_AP, GRANULARITY_ZONE):
            raise ValueError(f"unknown granularity {self.granularity!r}")
        if self.post_departure_window is not None and self.post_departure_window <= 0:
            raise ValueError("post-departure window must be positive")
        object.__setattr__(self, "exclusions", frozenset(self.exclusions))


@dataclass(frozen=True)
class Visit:
    location: str
    name: str
    building: str
    t_start: int
    t_end: int
    duration: int
    truncated: bool


@dataclass(frozen=True)
class LocationReport:
    target: str
    user: str
    device: str
    query: TraceQuery
    visits: tuple[Visit, ...]


@dataclass(frozen=True)
class OverlapSpan:
    location: str
    start: int
    end: int


@dataclass(frozen=True)
class Colocator:
    user: str
    device: str
    total_overlap: int
    spans: tuple[OverlapSpan, ...]


@dataclass(frozen=True)
class ProximityReport:
    target: str
    user: str
    device: str
    query: TraceQuery
    omega: int
    dedupe_by_user: bool
    co_locators: tuple[Colocator, ...]


@dataclass(frozen=True)
class LateArrival:
    location: str
    departed: int
    user: str
    device: str
    arrival: int
    lead: int


@dataclass(frozen=True)
class PostDepartureReport:
    target: str
    user: str
    device: str
    query: TraceQuery
    window: int
    entries: tuple[LateArrival, ...]


@dataclass(frozen=True)
class TraceStrategy:
    """Next-round selection: expand everyone, the top N by overlap, or an
    externally supplied (test-and-trace) set per round."""

    kind: str = "all"  # all | top_n | infected
    top_n: int = 0
    infected_rounds: tuple[frozenset[str], ...] = ()

    def __post_init__(self):
        if self.kind not in ("all", "top_n", "infected"):
            raise ValueError(f"unknown strategy {self.kind!r}")
        if self.kind == "top_n" and self.top_n < 1:
            raise ValueError("top_n strategy needs n >= 1")

    @staticmethod
    def parse(text: str) -> "TraceStrategy":
        if text == "all":
            return TraceStrategy("all")
        if text.startswith("top:"):
            return TraceStrategy("top_n", top_n=int(text.split(":", 1)[1]))
        raise ValueError(f"unknown strategy {text!r}")

    def describe(self) -> str:
        if self.kind == "top_n":
            return f"top:{self.top_n}"
        return self.kind


@dataclass(frozen=True)
class TraceRound:
    index: int
    traced: tuple[str, ...]
    discovered: tuple[str, ...]
    cumulative: int
    errors: tuple[str, ...] = ()


@dataclass(frozen=True)
class IterativeReport:
    seeds: tuple[str, ...]
    strategy: str
    query: TraceQuery
    dedupe_by_user: bool
    rounds: tuple[TraceRound, ...]


# --- target resolution --------------------------------------------------------

def resolve_target(target: str, dumap: DeviceUserMap) -> tuple[str, str]:
    """Resolve a query token to (device, user).

    A user token resolves to that user's primary device; a device token
    resolves to itself. A token never seen raises UnknownTargetError.
    """
    device = dumap.primary_device.get(target)
    if device is not None:
        return device, target
    user = dumap.device_to_user.get(target)
    if user is not None:
        return target, user
    raise UnknownTargetError(target)


def _excluded(location: str, granularity: str, exclusions: frozenset[str], topo: Topology) -> bool:
    # An AP-level visit is also suppressed when its zone is excluded.
    if location in exclusions:
        return True
    return granularity == GRANULARITY_AP and topo.zone_of(location) in exclusions


# --- location report ------------------------------------------------------------

def location_report(
    g: TraceGraph,
    q: TraceQuery,
    topo: Topology,
    dumap: DeviceUserMap,
    merge_gap: int = DEFAULT_MERGE_GAP,
) -> LocationReport:
    """Visits of the target's device inside the window: clipped to it,
    at least tau seconds long after clipping, and not excluded.

    Zone granularity fetches one merge-gap of slack on both sides so that
    chains reaching into the window merge exactly as they would over the
    full corpus; the extra rows fail the window test and drop out.
    """
    device, user = resolve_target(q.target, dumap)
    if q.granularity == GRANULARITY_AP:
        rows = g.device_sessions(device, q.t_start, q.t_end)
    else:
        lo = max(0, q.t_start - merge_gap)
        raw = g.device_sessions(device, lo, q.t_end + merge_gap)
        rows = merge_zone_runs(raw, topo.zone_of, merge_gap)

    visits = []
    for loc, t1, t2, trunc in rows:
        if not intersects(t1, t2, q.t_start, q.t_end):
            continue
        c1, c2 = clip(t1, t2, q.t_start, q.t_end)
        if c2 - c1 < q.tau:
            continue
        if _excluded(loc, q.granularity, q.exclusions, topo):
            continue
        name, building = topo.location_display(loc, q.granularity)
        visits.append(Visit(loc, name, building, c1, c2, c2 - c1, trunc))
    visits.sort(key=lambda v: (v.t_start, v.location, v.t_end))
    return LocationReport(q.target, user, device, q, tuple(visits))


# --- proximity report ------------------------------------------------------------

class _ColocatorAgg:
    __slots__ = ("total", "spans")

    def __init__(self):
        self.total = 0
        self.spans: list[OverlapSpan] = []


def _admit_colocator(
    device: str,
    target_device: str,
    target_user: str,
    dumap: DeviceUserMap,
    dedupe_by_user: bool,
) -> str | None:
    """Return the co-locator's user token if this device may appear."""
    if device == target_device:
        return None
    user = dumap.user_of(device)
    if dedupe_by_user:
        if user == target_user:
            return None  # the target's own other devices are not co-locators
        if dumap.primary_device.get(user, device) != device:
            return None  # count each user once, via the primary device
    return user


def proximity_report(
    g: TraceGraph,
    lr: LocationReport,
    omega: int | None = None,
    *,
    topo: Topology,
    dumap: DeviceUserMap,
    dedupe_by_user: bool = True,
    merge_gap: int = DEFAULT_MERGE_GAP,
    omega_on_total: bool = False,
) -> ProximityReport:
    """Everyone whose session at a visited location overlaps a visit by at
    least omega seconds (and by more than zero), aggregated per co-locator.

    With ``omega_on_total`` the threshold is additionally applied to each
    co-locator's total across all visits.
    """
    q = lr.query
    w = q.omega if omega is None else omega
    agg: dict[tuple[str, str], _ColocatorAgg] = {}

    def consider(dev: str, s1: int, s2: int, visit: Visit) -> None:
        user = _admit_colocator(dev, lr.device, lr.user, dumap, dedupe_by_user)
        if user is None:
            return
        ov = overlap(visit.t_start, visit.t_end, s1, s2)
        if ov <= 0 or ov < w:
            return
        entry = agg.setdefault((user, dev), _ColocatorAgg())
        entry.total += ov
        entry.spans.append(
            OverlapSpan(visit.location, max(visit.t_start, s1), min(visit.t_end, s2))
        )

    for visit in lr.visits:
        if q.granularity == GRANULARITY_AP:
            for dev, t1, t2, _ in g.location_sessions(visit.location, visit.t_start, visit.t_end):
                consider(dev, t1, t2, visit)
        else:
            lo = max(0, visit.t_start - merge_gap)
            hi = visit.t_end + merge_gap
            candidates: set[str] = set()
            for ap in topo.zone_members(visit.location):
                candidates.update(dev for dev, _, _, _ in g.location_sessions(ap, lo, hi))
            candidates.discard(lr.device)
            for dev in sorted(candidates):
                raw = g.device_sessions(dev, lo, hi)
                for zone, t1, t2, _ in merge_zone_runs(raw, topo.zone_of, merge_gap):
                    if zone == visit.location:
                        consider(dev, t1, t2, visit)

    rows = []
    for (user, dev), entry in agg.items():
        if omega_on_total and entry.total < w:
            continue
        spans = tuple(sorted(entry.spans, key=lambda s: (s.start, s.location, s.end)))
        rows.append(Colocator(user, dev, entry.total, spans))
    rows.sort(key=lambda c: (-c.total_overlap, c.user, c.device))
    return ProximityReport(lr.target, lr.user, lr.device, q, w, dedupe_by_user, tuple(rows))


# --- post-departure report --------------------------------------------------------

def post_departure_report(
    g: TraceGraph,
    lr: LocationReport,
    window: int,
    *,
    topo: Topology,
    dumap: DeviceUserMap,
    merge_gap: int = DEFAULT_MERGE_GAP,
) -> PostDepartureReport:
    """Arrivals at a visited location strictly after the target departed and
    within the window. Sessions overlapping the visit itself belong to the
    proximity report, never here; the two partition the cases."""
    if window <= 0:
        raise ValueError("post-departure window must be positive")
    q = lr.query
    entries: list[LateArrival] = []

    def consider(dev: str, arrival: int, visit: Visit) -> None:
        if dev == lr.device:
            return
        user = dumap.user_of(dev)
        if user == lr.user:
            return
        lo, hi = visit.t_end, visit.t_end + window
        if lo < arrival <= hi:
            entries.append(
                LateArrival(visit.location, visit.t_end, user, dev, arrival, arrival - visit.t_end)
            )

    for visit in lr.visits:
        lo, hi = visit.t_end, visit.t_end + window
        if q.granularity == GRANULARITY_AP:
            for dev, t1, t2, _ in g.location_sessions(visit.location, lo, hi):
                consider(dev, t1, visit)
        else:
            fetch_lo = max(0, lo - merge_gap)
            candidates: set[str] = set()
            for ap in topo.zone_members(visit.location):
                candidates.update(dev for dev, _, _, _ in g.location_sessions(ap, fetch_lo, hi))
            candidates.discard(lr.device)
            for dev in sorted(candidates):
                raw = g.device_sessions(dev, fetch_lo, hi)
                for zone, t1, t2, _ in merge_zone_runs(raw, topo.zone_of, merge_gap):
                    if zone == visit.location:
                        consider(dev, t1, visit)

    entries.sort(key=lambda e: (e.arrival, e.location, e.device))
    return PostDepartureReport(lr.target, lr.user, lr.device, q, window, tuple(entries))


# --- iterative tracing --------------------------------------------------------------

def iterative_trace(
    g: TraceGraph,
    seeds: list[str],
    rounds: int,
    strategy: TraceStrategy,
    q: TraceQuery,
    *,
    topo: Topology,
    dumap: DeviceUserMap,
    dedupe_by_user: bool = True,
) -> IterativeReport:
    """Round 1 traces the seeds; each later round traces the strategy's
    selection from the previous round's newly discovered co-locators.
    Nothing is ever traced twice. Per-round cumulative counts are emitted."""
    if rounds < 1:
        raise ValueError("rounds must be >= 1")

    def identity_of(colocator: Colocator) -> str:
        return colocator.user if dedupe_by_user else colocator.device

    traced: set[str] = set()
    discovered: set[str] = set()
    current = list(dict.fromkeys(seeds))
    out_rounds: list[TraceRound] = []

    for rnd in range(1, rounds + 1):
        new_found: set[str] = set()
        overlap_rank: dict[str, int] = {}
        traced_now: list[str] = []
        errors: list[str] = []
        for tgt in current:
            if tgt in traced:
                continue
            try:
                lr = location_report(g, _with_target(q, tgt), topo, dumap)
            except UnknownTargetError:
                errors.append(tgt)
                continue
            traced.add(tgt)
            traced_now.append(tgt)
            pr = proximity_report(g, lr, topo=topo, dumap=dumap, dedupe_by_user=dedupe_by_user)
            for row in pr.co_locators:
                ident = identity_of(row)
                overlap_rank[ident] = overlap_rank.get(ident, 0) + row.total_overlap
                if ident not in traced and ident not in discovered and ident not in seeds:
                    new_found.add(ident)
        discovered |= new_found
        out_rounds.append(
            TraceRound(rnd, tuple(traced_now), tuple(sorted(new_found)), len(discovered), tuple(errors))
        )
        if strategy.kind == "all":
            current = sorted(new_found)
        elif strategy.kind == "top_n":
            ranked = sorted(new_found, key=lambda i: (-overlap_rank.get(i, 0), i))
            current = ranked[: strategy.top_n]
        else:  # infected: externally confirmed subset for the next round
            idx = rnd - 1
            per_round = strategy.infected_rounds
            chosen = per_round[idx] if idx < len(per_round) else frozenset()
            current = sorted(set(chosen) - traced)
    return IterativeReport(
        tuple(dict.fromkeys(seeds)), strategy.describe(), q, dedupe_by_user, tuple(out_rounds)
    )


def _with_target(q: TraceQuery, target: str) -> TraceQuery:
    return TraceQuery(
        target=target,
        t_start=q.t_start,
        t_end=q.t_end,
        tau=q.tau,
        omega=q.omega,
        granularity=q.granularity,
        exclusions=q.exclusions,
        post_departure_window=q.post_departure_window,
    )


# --- renderers -------------------------------------------------------------------

def _query_dict(q: TraceQuery) -> dict:
    return {
        "target": q.target,
        "t_start": q.t_start,
        "t_end": q.t_end,
        "tau": q.tau,
        "omega": q.omega,
        "granularity": q.granularity,
        "exclusions": sorted(q.exclusions),
        "post_departure_window": q.post_departure_window,
    }


def report_dict(report) -> dict:
    if isinstance(report, LocationReport):
        return {
            "schema": SCHEMA_VERSION,
            "kind": "location",
            "target": report.target,
            "user": report.user,
            "device": report.device,
            "query": _query_dict(report.query),
            "visits": [
                {
                    "location": v.location,
                    "name": v.name,
                    "building": v.building,
                    "t_start": v.t_start,
                    "t_end": v.t_end,
                    "duration": v.duration,
                    "truncated": v.truncated,
                }
                for v in report.visits
            ],
        }
    if isinstance(report, ProximityReport):
        return {
            "schema": SCHEMA_VERSION,
            "kind": "proximity",
            "target": report.target,
            "user": report.user,
            "device": report.device,
            "query": _query_dict(report.query),
            "omega": report.omega,
            "dedupe_by_user": report.dedupe_by_user,
            "co_locators": [
                {
                    "user": c.user,
                    "device": c.device,
                    "total_overlap": c.total_overlap,
                    "spans": [
                        {"location": s.location, "start": s.start, "end": s.end}
                        for s in c.spans
                    ],
                }
                for c in report.co_locators
            ],
        }
    if isinstance(report, PostDepartureReport):
        return {
            "schema": SCHEMA_VERSION,
            "kind": "post_departure",
            "target": report.target,
            "user": report.user,
            "device": report.device,
            "query": _query_dict(report.query),
            "window": report.window,
            "entries": [
                {
                    "location": e.location,
                    "departed": e.departed,
                    "user": e.user,
                    "device": e.device,
                    "arrival": e.arrival,
                    "lead": e.lead,
                }
                for e in report.entries
            ],
        }
    if isinstance(report, IterativeReport):
        return {
            "schema": SCHEMA_VERSION,
            "kind": "iterative",
            "seeds": list(report.seeds),
            "strategy": report.strategy,
            "query": _query_dict(report.query),
            "dedupe_by_user": report.dedupe_by_user,
            "rounds": [
                {
                    "round": r.index,
                    "traced": list(r.traced),
                    "discovered": list(r.discovered),
                    "cumulative": r.cumulative,
                    "errors": list(r.errors),
                }
                for r in report.rounds
            ],
        }
    raise TypeError(f"cannot render {type(report).__name__}")


def render_json(report) -> str:
    """Canonical JSON: sorted keys, compact separators, trailing newline.
    Byte-identical output for identical reports."""
    return json.dumps(report_dict(report), sort_keys=True, separators=(",", ":")) + "\n"


def _fmt_ts(ts: int) -> str:
    return datetime.fromtimestamp(ts, tz=timezone.utc).strftime("%Y-%m-%d %H:%M:%S")


def _fmt_dur(seconds: int) -> str:
    m, s = divmod(seconds, 60)
    h, m = divmod(m, 60)
    if h:
        return f"{h}h{m:02d}m"
    if m:
        return f"{m}m{s:02d}s"
    return f"{s}s"


def render_text(report) -> str:
    """Two-part human layout: the visit history, then the co-locator table."""
    lines: list[str] = []
    if isinstance(report, LocationReport):
        q = report.query
        lines.append("=== Location Report ===")
        lines.append(f"Target: {report.target}  (user {report.user}, device {report.device})")
        lines.append(f"Window: {_fmt_ts(q.t_start)} .. {_fmt_ts(q.t_end)} UTC")
        lines.append(f"Min visit: {_fmt_dur(q.tau)}   Granularity: {q.granularity}")
        if q.exclusions:
            lines.append(f"Excluded: {', '.join(sorted(q.exclusions))}")
        lines.append(f"Visits: {len(report.visits)}")
        for v in report.visits:
            flag = " [truncated]" if v.truncated else ""
            where = f"{v.location} ({v.name}, {v.building})" if v.building else f"{v.location} ({v.name})"
            lines.append(
                f"  {_fmt_ts(v.t_start)} .. {_fmt_ts(v.t_end)}  {where}  {_fmt_dur(v.duration)}{flag}"
            )
    elif isinstance(report, ProximityReport):
        lines.append("=== Proximity Report ===")
        lines.append(f"Target: {report.target}  (user {report.user}, device {report.device})")
        lines.append(f"Min overlap: {_fmt_dur(report.omega)}   Per-user: {report.dedupe_by_user}")
        lines.append(f"Co-locators: {len(report.co_locators)}")
        for c in report.co_locators:
            lines.append(f"  {c.user}  device {c.device}  total {_fmt_dur(c.total_overlap)}")
            for s in c.spans:
                lines.append(f"    {s.location}  {_fmt_ts(s.start)} .. {_fmt_ts(s.end)}")
    elif isinstance(report, PostDepartureReport):
        lines.append("=== Post-Departure Report ===")
        lines.append(f"Target: {report.target}  window {_fmt_dur(report.window)}")
        lines.append(f"Late arrivals: {len(report.entries)}")
        for e in report.entries:
            lines.append(
                f"  {e.location}  departed {_fmt_ts(e.departed)}  "
                f"{e.user} (device {e.device}) arrived {_fmt_ts(e.arrival)}  +{_fmt_dur(e.lead)}"
            )
    elif isinstance(report, IterativeReport):
        lines.append("=== Iterative Trace ===")
        lines.append(f"Seeds: {', '.join(report.seeds)}   Strategy: {report.strategy}")
        for r in report.rounds:
            lines.append(
                f"  Round {r.index}: traced {len(r.traced)}, new {len(r.discovered)}, "
                f"cumulative {r.cumulative}"
            )
            if r.errors:
                lines.append(f"    unknown targets: {', '.join(r.errors)}")
    else:
        raise TypeError(f"cannot render {type(report).__name__}")
    return "\n".join(lines) + "\n"
