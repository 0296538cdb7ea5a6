"""Batch entry points wiring the pipeline.

Every stage reads and writes the documented intermediate files, so a
staged run over files equals a single in-process run byte for byte:
raw logs -> events.tsv -> sessions.tsv + device_users.tsv -> snapshot
manifest -> reports. Thresholds are given in minutes on the command line
(investigators think in minutes) and converted exactly to seconds.

Exit codes: 0 success, 1 data error, 2 usage error. Diagnostics go to
stderr; report data goes to stdout or the named output files.
"""

import argparse
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import ingest, oracle, service, synth
from .sessions import (
    build_device_user_map,
    build_sessions,
    filter_transient,
    unassociated_devices,
    write_device_user_tsv,
    write_sessions_tsv,
)
from .synth import (
    CampusModel,
    GroundTruth,
    NoiseModel,
    PopulationModel,
    build_world,
    evaluate,
    generate,
    parse_model_config,
    read_truth_tsv,
    simulate,
)
from .trace import (
    LocationReport,
    TraceQuery,
    TraceStrategy,
    UnknownTargetError,
    iterative_trace,
    location_report,
    post_departure_report,
    proximity_report,
    render_json,
    render_text,
)

ISO_FORMAT = "%Y-%m-%dT%H:%M:%S"


def _parse_when(text: str) -> int:
    """Epoch seconds, given either an integer or an ISO timestamp (UTC)."""
    if text.lstrip("-").isdigit():
        return int(text)
    try:
        dt = datetime.strptime(text, ISO_FORMAT).replace(tzinfo=timezone.utc)
    except ValueError:
        raise ValueError(f"expected epoch seconds or {ISO_FORMAT} UTC, got {text!r}") from None
    return int(dt.timestamp())


def _minutes(value: str) -> int:
    return int(value) * 60


def _emit(text: str) -> None:
    sys.stdout.write(text)
    sys.stdout.flush()


def _note(message: str) -> None:
    print(message, file=sys.stderr)


def _anon_context(args, need_sink: bool = True) -> ingest.AnonymizationContext:
    if args.identity:
        return ingest.AnonymizationContext(identity=True)
    if not args.key:
        raise ValueError("--key is required unless --identity is given")
    sink = None
    if need_sink and args.mapping:
        fd = os.open(args.mapping, os.O_WRONLY | os.O_CREAT | os.O_APPEND, 0o600)
        sink = os.fdopen(fd, "a", encoding="utf-8")
    return ingest.AnonymizationContext(secret_key=bytes.fromhex(args.key), mapping_sink=sink)


# --- subcommand handlers ------------------------------------------------------------

def _run_ingest(args) -> int:
    ctx = _anon_context(args)
    files = [(path, args.format) for path in args.files]
    result = ingest.normalize_batch(files, ctx)
    ingest.write_events_tsv(result.events, args.out)
    for stats in result.files:
        reasons = {r.value: n for r, n in sorted(stats.skips.items(), key=lambda kv: kv[0].value)}
        _note(f"{stats.path}: {stats.events} events, {stats.skipped} skipped {reasons or ''}")
    for path, err in result.io_errors.items():
        _note(f"{path}: read failed: {err}")
    _note(f"wrote {len(result.events)} events to {args.out}")
    return 1 if result.io_errors else 0


def _run_sessions(args) -> int:
    events = ingest.read_events_tsv(args.events)
    sessions, counters = build_sessions(events)
    if args.min_minutes:
        sessions, removed = filter_transient(sessions, args.min_minutes)
        _note(f"transient filter removed {removed} sessions under {args.min_minutes}s")
    dumap = build_device_user_map(events, sessions)
    n = write_sessions_tsv(sessions, args.sessions)
    write_device_user_tsv(dumap, args.device_users)
    if args.roster:
        Path(args.roster).write_text("".join(f"{mac}\n" for mac in unassociated_devices(events)))
    _note(f"wrote {n} sessions for {len(sessions)} devices; counters {counters}")
    return 0


def _run_build(args) -> int:
    manifest = service.build_manifest(
        args.sessions, args.device_users, args.ap_map, args.out,
        device_bucket=args.device_bucket_hours * 3600,
        location_bucket=args.location_bucket_hours * 3600,
    )
    snap = service.load_snapshot(args.out)
    _note(f"snapshot {manifest['snapshot_id']}: {json.dumps(snap.stats, sort_keys=True)}")
    return 0


def _load_query(args) -> tuple[service.SnapshotHandle, TraceQuery]:
    snap = service.load_snapshot(args.snapshot)
    q = TraceQuery(
        target=args.target,
        t_start=_parse_when(getattr(args, "from")),
        t_end=_parse_when(args.to),
        tau=args.tau,
        omega=args.omega,
        granularity=args.granularity,
        exclusions=frozenset(args.exclude or []),
        post_departure_window=getattr(args, "window", None),
    )
    return snap, q


def _render(args, report) -> int:
    _emit(render_json(report) if args.format == "json" else render_text(report))
    return 0


def _run_trace(args) -> int:
    snap, q = _load_query(args)
    return _render(args, location_report(snap.graph, q, snap.topo, snap.dumap))


def _run_prox(args) -> int:
    snap, q = _load_query(args)
    lr = location_report(snap.graph, q, snap.topo, snap.dumap)
    pr = proximity_report(
        snap.graph, lr, topo=snap.topo, dumap=snap.dumap,
        dedupe_by_user=not args.per_device,
    )
    return _render(args, pr)


def _run_post(args) -> int:
    snap, q = _load_query(args)
    lr = location_report(snap.graph, q, snap.topo, snap.dumap)
    pd = post_departure_report(snap.graph, lr, args.window, topo=snap.topo, dumap=snap.dumap)
    return _render(args, pd)


def _run_iter(args) -> int:
    snap = service.load_snapshot(args.snapshot)
    seeds = [s for s in args.seeds.split(",") if s]
    if not seeds:
        raise ValueError("--seeds must name at least one target")
    strategy = TraceStrategy.parse(args.strategy)
    q = TraceQuery(
        target=seeds[0],
        t_start=_parse_when(getattr(args, "from")),
        t_end=_parse_when(args.to),
        tau=args.tau,
        omega=args.omega,
        granularity=args.granularity,
        exclusions=frozenset(args.exclude or []),
    )
    report = iterative_trace(
        snap.graph, seeds, args.rounds, strategy, q, topo=snap.topo, dumap=snap.dumap,
    )
    return _render(args, report)


def _run_gen(args) -> int:
    if args.config:
        seed, campus, pop, noise, days = parse_model_config(Path(args.config).read_text())
        if args.seed is not None:
            seed = args.seed
        if args.days is not None:
            days = args.days
    else:
        seed = args.seed if args.seed is not None else 1
        days = args.days if args.days is not None else 7
        campus = CampusModel(
            buildings=args.buildings, floors_per_building=args.floors,
            aps_per_floor=args.aps_per_floor,
        )
        pop = PopulationModel(
            n_students=args.students, n_staff=args.staff, n_passerby=args.passerby,
        )
        noise = NoiseModel.none() if args.noise == "none" else NoiseModel(
            unassociated_fraction=args.unassociated_fraction,
        )
    corpus = generate(seed, campus, pop, noise, days, args.out)
    _note(
        f"generated {len(corpus.sim.events)} events, {len(corpus.sim.truth.visits)} true visits, "
        f"{corpus.sim.plan.ap_count} APs in {args.out}"
    )
    return 0


def _run_bench(args) -> int:
    n_students = max(1, int(args.devices / 1.6 * 5 / 6))
    n_staff = max(1, int(args.devices / 1.6 / 6))
    sim = simulate(
        args.seed,
        CampusModel(buildings=10, floors_per_building=4, aps_per_floor=6),
        PopulationModel(n_students=n_students, n_staff=n_staff),
        NoiseModel(),
        args.days,
    )
    world = build_world(sim)
    _note(f"bench corpus: {len(world.sessions)} devices, "
          f"{sum(len(v) for v in world.sessions.values())} sessions")
    import random as _random
    rng = _random.Random(args.seed)
    lo = min(v.enter for v in sim.truth.visits)
    hi = max(v.exit for v in sim.truth.visits) + 1
    targets = sorted(world.sessions)
    queries = [
        TraceQuery(
            target=rng.choice(targets), t_start=lo, t_end=hi,
            tau=600, omega=900, granularity="ap",
        )
        for _ in range(args.queries)
    ]
    samples, _ = oracle.bench(world.sessions, queries, world.topo, world.dumap, 86400, 3600)
    oracle.write_bench_csv(samples, args.out)
    med = lambda xs: sorted(xs)[len(xs) // 2]
    graph_lat = [s.latency_us for s in samples if s.method == "graph" and s.query_id != "build"]
    linear_lat = [s.latency_us for s in samples if s.method == "linear"]
    _note(f"median latency: graph {med(graph_lat)}us linear {med(linear_lat)}us -> {args.out}")
    return 0


def _run_eval(args) -> int:
    snap = service.load_snapshot(args.snapshot)
    visits = read_truth_tsv(args.truth)
    user_devices: dict[str, tuple[str, ...]] = {}
    for v in visits:
        devs = user_devices.setdefault(v.user, ())
        if v.device not in devs:
            user_devices[v.user] = devs + (v.device,)
    truth = GroundTruth(visits=visits, user_devices=user_devices)
    if not args.identity:
        if not args.key:
            raise ValueError("--key is required unless --identity is given")
        truth = truth.tokenize(bytes.fromhex(args.key))
    lo, hi = snap.coverage
    reports: dict[str, LocationReport] = {}
    for user in truth.user_devices:
        q = TraceQuery(target=user, t_start=lo, t_end=hi + 1, tau=0, omega=0, granularity="zone")
        try:
            reports[user] = location_report(snap.graph, q, snap.topo, snap.dumap)
        except UnknownTargetError:
            # A user the network never saw scores as all-misses.
            device = truth.user_devices[user][0]
            reports[user] = LocationReport(user, user, device, q, ())
    result = evaluate(reports, truth)
    _emit(json.dumps(result.to_dict(), sort_keys=True, separators=(",", ":")) + "\n")
    return 0


# --- parser -----------------------------------------------------------------------

def _add_query_flags(p: argparse.ArgumentParser, with_target: bool = True) -> None:
    if with_target:
        p.add_argument("--target", required=True, help="user or device token")
    p.add_argument("--from", required=True, help="window start (epoch seconds or ISO UTC)")
    p.add_argument("--to", required=True, help="window end (epoch seconds or ISO UTC)")
    p.add_argument("--tau", type=_minutes, default=600, metavar="MIN",
                   help="minimum visit duration in minutes (default 10)")
    p.add_argument("--omega", type=_minutes, default=900, metavar="MIN",
                   help="minimum co-location overlap in minutes (default 15)")
    p.add_argument("--granularity", choices=["ap", "zone"], default="ap")
    p.add_argument("--exclude", action="append", metavar="LOCATION",
                   help="location or zone id to exclude (repeatable)")
    p.add_argument("--format", choices=["json", "text"], default="json")
    p.add_argument("--snapshot", required=True, help="snapshot manifest JSON")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="netcontact", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse raw vendor logs into the canonical event TSV")
    p.add_argument("files", nargs="+")
    p.add_argument("--format", choices=["aruba", "cmx", "auto"], default="auto")
    p.add_argument("--out", required=True)
    p.add_argument("--key", help="hex anonymization key")
    p.add_argument("--identity", action="store_true",
                   help="skip anonymization (test corpora only)")
    p.add_argument("--mapping", help="append raw->token pairs to this file")
    p.set_defaults(func=_run_ingest)

    p = sub.add_parser("sessions", help="fold events into sessions and the device/user map")
    p.add_argument("--events", required=True)
    p.add_argument("--sessions", required=True)
    p.add_argument("--device-users", required=True)
    p.add_argument("--roster", help="write probe-only device roster here")
    p.add_argument("--min-minutes", type=_minutes, default=0, metavar="MIN",
                   help="drop sessions shorter than this many minutes")
    p.set_defaults(func=_run_sessions)

    p = sub.add_parser("build", help="write a snapshot manifest for the query stages")
    p.add_argument("--sessions", required=True)
    p.add_argument("--device-users", required=True)
    p.add_argument("--ap-map", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--device-bucket-hours", type=int, default=24)
    p.add_argument("--location-bucket-hours", type=int, default=1)
    p.set_defaults(func=_run_build)

    p = sub.add_parser("trace", help="location report for a target")
    _add_query_flags(p)
    p.set_defaults(func=_run_trace)

    p = sub.add_parser("prox", help="proximity report for a target")
    _add_query_flags(p)
    p.add_argument("--per-device", action="store_true",
                   help="list every co-locating device instead of one row per user")
    p.set_defaults(func=_run_prox)

    p = sub.add_parser("post", help="post-departure report for a target")
    _add_query_flags(p)
    p.add_argument("--window", type=_minutes, required=True, metavar="MIN",
                   help="report arrivals within this many minutes after departure")
    p.set_defaults(func=_run_post)

    p = sub.add_parser("iter", help="iterative test-and-trace over multiple rounds")
    p.add_argument("--seeds", required=True, help="comma-separated seed targets")
    p.add_argument("--rounds", type=int, default=1)
    p.add_argument("--strategy", default="all", help="all or top:N")
    _add_query_flags(p, with_target=False)
    p.set_defaults(func=_run_iter)

    p = sub.add_parser("gen", help="generate a synthetic campus corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--days", type=int)
    p.add_argument("--config", help="model config file (key=value)")
    p.add_argument("--students", type=int, default=40)
    p.add_argument("--staff", type=int, default=10)
    p.add_argument("--passerby", type=int, default=0)
    p.add_argument("--buildings", type=int, default=4)
    p.add_argument("--floors", type=int, default=3)
    p.add_argument("--aps-per-floor", type=int, default=6)
    p.add_argument("--noise", choices=["default", "none"], default="default")
    p.add_argument("--unassociated-fraction", type=float, default=0.0)
    p.set_defaults(func=_run_gen)

    p = sub.add_parser("bench", help="benchmark graph vs linear query paths")
    p.add_argument("--devices", type=int, default=1000)
    p.add_argument("--days", type=int, default=7)
    p.add_argument("--queries", type=int, default=10)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_run_bench)

    p = sub.add_parser("eval", help="score a snapshot against ground truth")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--key", help="hex anonymization key used at ingest")
    p.add_argument("--identity", action="store_true")
    p.set_defaults(func=_run_eval)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UnknownTargetError as exc:
        _note(f"unknown target: {exc.target}")
        return 1
    except (OSError, ValueError, synth.InvalidModelError, synth.MismatchedRunError) as exc:
        _note(f"error: {exc}")
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
