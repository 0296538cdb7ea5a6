"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines as
they pass. Criterion 10 (the investigator console) lives in the
frontend's own suite (``cd frontend && npm test``); a wrapper here runs
it when the frontend has been built.
"""

import json
import random
import shutil
import statistics
import subprocess
import sys
import threading
import time
from pathlib import Path

import pytest

from netcontact import oracle, service
from netcontact.graph import build_graph
from netcontact.sessions import filter_transient
from netcontact.synth import (
    CampusModel,
    NoiseModel,
    PopulationModel,
    build_world,
    evaluate,
    generate,
    simulate,
)
from netcontact.trace import (
    TraceQuery,
    location_report,
    proximity_report,
    render_json,
)

KEY = bytes.fromhex("11" * 16)
REPO = Path(__file__).resolve().parent.parent


def _passline(n: int, text: str) -> None:
    print(f"ACCEPTANCE PASS [criterion {n}]: {text}")


def _reports_for_eval(world):
    g = build_graph(world.sessions)
    lo = min(v.enter for v in world.truth.visits)
    hi = max(v.exit for v in world.truth.visits) + 1
    return {
        user: location_report(
            g,
            TraceQuery(target=user, t_start=lo, t_end=hi, tau=0, omega=0, granularity="zone"),
            world.topo, world.dumap,
        )
        for user in world.truth.user_devices
    }


@pytest.fixture(scope="module")
def corpus2k():
    """Criterion 1 corpus: seed 1, about 2,000 devices and 200 APs, 7 days."""
    sim = simulate(
        1,
        CampusModel(buildings=10, floors_per_building=4, aps_per_floor=5),
        PopulationModel(n_students=1060, n_staff=200),
        NoiseModel(),
        7,
    )
    world = build_world(sim, key=KEY)
    assert 1800 <= len(world.sessions) <= 2200
    assert 180 <= len(sim.plan.ap_rows) <= 220
    return world


def _random_queries(world, n, seed, taus, omegas, grans):
    rng = random.Random(seed)
    lo = min(s.t_start for lst in world.sessions.values() for s in lst)
    hi = max(s.t_end for lst in world.sessions.values() for s in lst)
    users = sorted(world.dumap.user_to_devices)
    devices = sorted(world.sessions)
    zones = sorted({world.topo.zone_of(s.ap_id) for lst in world.sessions.values() for s in lst})
    queries = []
    for _ in range(n):
        a, b = rng.randrange(lo, hi), rng.randrange(lo, hi)
        t0, t1 = min(a, b), max(a, b)
        if t1 - t0 < 3600:
            t1 = t0 + 3600
        target = rng.choice(users) if rng.random() < 0.7 else rng.choice(devices)
        excl = frozenset(rng.sample(zones, k=2)) if rng.random() < 0.2 else frozenset()
        queries.append(
            TraceQuery(
                target=target, t_start=t0, t_end=t1,
                tau=rng.choice(taus), omega=rng.choice(omegas),
                granularity=rng.choice(grans), exclusions=excl,
            )
        )
    return queries


def test_01_oracle_equivalence(corpus2k):
    started = time.time()
    world = corpus2k
    g = build_graph(world.sessions)
    queries = _random_queries(
        world, 50, seed=101,
        taus=[0, 600, 1800], omegas=[0, 900, 1800], grans=["ap", "zone"],
    )
    for i, q in enumerate(queries):
        dedupe = i % 3 != 2
        lr_g = location_report(g, q, world.topo, world.dumap)
        lr_o = oracle.linear_location_report(world.sessions, q, world.topo, world.dumap)
        assert lr_g == lr_o, f"location mismatch on query {i}: {q}"
        pr_g = proximity_report(g, lr_g, topo=world.topo, dumap=world.dumap, dedupe_by_user=dedupe)
        pr_o = oracle.linear_proximity_report(
            world.sessions, lr_o, topo=world.topo, dumap=world.dumap, dedupe_by_user=dedupe
        )
        assert pr_g == pr_o, f"proximity mismatch on query {i}: {q}"
        assert render_json(lr_g) == render_json(lr_o)
        assert render_json(pr_g) == render_json(pr_o)
    elapsed = time.time() - started
    assert elapsed < 300, f"oracle equivalence took {elapsed:.0f}s, budget is 300s"
    _passline(1, f"graph == linear oracle on 50 random queries "
                 f"({len(world.sessions)} devices, 7 days) in {elapsed:.1f}s")


def test_02_noiseless_end_to_end_identity(tmp_path):
    # Full file pipeline: generated vendor logs -> ingest -> sessions ->
    # graph -> reports, scored against tokenized ground truth.
    corpus = generate(
        11,
        CampusModel(buildings=4, floors_per_building=3, aps_per_floor=6),
        PopulationModel(n_students=30, n_staff=8),
        NoiseModel.none(), 5, tmp_path,
    )
    from netcontact.ingest import AnonymizationContext, normalize_batch
    from netcontact.sessions import build_device_user_map, build_sessions
    from netcontact import topology as topo_mod
    ctx = AnonymizationContext(secret_key=KEY)
    res = normalize_batch([(corpus.aruba_log, "aruba")], ctx)
    assert res.total_skipped == 0 and not res.io_errors
    sessions, _ = build_sessions(res.events)
    dumap = build_device_user_map(res.events, sessions)
    topo = topo_mod.load_ap_map(corpus.ap_map)
    truth = corpus.sim.truth.tokenize(KEY)
    g = build_graph(sessions)
    lo = min(v.enter for v in truth.visits)
    hi = max(v.exit for v in truth.visits) + 1
    reports = {
        user: location_report(
            g, TraceQuery(target=user, t_start=lo, t_end=hi, tau=0, omega=0, granularity="zone"),
            topo, dumap,
        )
        for user in truth.user_devices
    }
    result = evaluate(reports, truth)
    assert result.precision == 1.0 and result.recall == 1.0
    assert all(acc == 1.0 for acc in result.per_bin.values() if acc is not None)
    _passline(2, f"noiseless run scores precision=recall=1.0 across bins {result.bin_counts}")


def test_03_session_accuracy_bins():
    sim = simulate(
        11,
        CampusModel(buildings=4, floors_per_building=3, aps_per_floor=6),
        PopulationModel(n_students=30, n_staff=8),
        NoiseModel(), 5,
    )
    world = build_world(sim)
    result = evaluate(_reports_for_eval(world), world.truth)
    assert result.per_bin["ge_3m"] == 1.0, result.per_bin
    for label in ("lt_1m", "1_2m", "2_3m"):
        assert result.bin_counts[label] > 0
        assert result.per_bin[label] < 1.0, result.per_bin
    _passline(3, f"default-noise accuracy per bin {result.per_bin} (>=3min exactly 1.0)")


def test_04_threshold_monotonicity():
    checked = 0
    for seed in (31, 32, 33, 34):
        sim = simulate(
            seed,
            CampusModel(buildings=4, floors_per_building=2, aps_per_floor=5),
            PopulationModel(n_students=40, n_staff=10),
            NoiseModel(), 3,
        )
        world = build_world(sim)
        g = build_graph(world.sessions)
        zones = sorted({world.topo.zone_of(s.ap_id) for lst in world.sessions.values() for s in lst})
        for q in _random_queries(world, 25, seed=seed * 7,
                                 taus=[0, 600], omegas=[0, 600], grans=["ap", "zone"]):
            lr = location_report(g, q, world.topo, world.dumap)
            pr = proximity_report(g, lr, topo=world.topo, dumap=world.dumap)

            tighter_tau = TraceQuery(
                target=q.target, t_start=q.t_start, t_end=q.t_end, tau=q.tau + 900,
                omega=q.omega, granularity=q.granularity, exclusions=q.exclusions,
            )
            lr_tau = location_report(g, tighter_tau, world.topo, world.dumap)
            pr_tau = proximity_report(g, lr_tau, topo=world.topo, dumap=world.dumap)
            assert len(lr_tau.visits) <= len(lr.visits)
            assert len(pr_tau.co_locators) <= len(pr.co_locators)

            pr_omega = proximity_report(g, lr, q.omega + 900, topo=world.topo, dumap=world.dumap)
            assert len(pr_omega.co_locators) <= len(pr.co_locators)

            rng = random.Random(checked)
            extra = rng.choice(zones)
            wider_excl = TraceQuery(
                target=q.target, t_start=q.t_start, t_end=q.t_end, tau=q.tau,
                omega=q.omega, granularity=q.granularity,
                exclusions=q.exclusions | {extra},
            )
            lr_x = location_report(g, wider_excl, world.topo, world.dumap)
            pr_x = proximity_report(g, lr_x, topo=world.topo, dumap=world.dumap)
            assert len(lr_x.visits) <= len(lr.visits)
            assert len(pr_x.co_locators) <= len(pr.co_locators)
            checked += 1
    assert checked == 100
    _passline(4, f"{checked} query/corpus pairs: tau, omega and exclusions only shrink reports")


def test_05_bucket_invariance(corpus2k):
    world = corpus2k
    g_hour = build_graph(world.sessions, location_bucket=3600)
    g_day = build_graph(world.sessions, location_bucket=86400)
    queries = _random_queries(
        world, 20, seed=505, taus=[0, 600], omegas=[0, 900], grans=["ap", "zone"],
    )
    for q in queries:
        lr_h = location_report(g_hour, q, world.topo, world.dumap)
        lr_d = location_report(g_day, q, world.topo, world.dumap)
        assert render_json(lr_h) == render_json(lr_d)
        pr_h = proximity_report(g_hour, lr_h, topo=world.topo, dumap=world.dumap)
        pr_d = proximity_report(g_day, lr_d, topo=world.topo, dumap=world.dumap)
        assert render_json(pr_h) == render_json(pr_d)
    _passline(5, "reports byte-identical for 1h vs 24h location buckets on 20 queries")


def test_06_performance_ordering():
    started = time.time()
    sim = simulate(
        2,
        CampusModel(buildings=12, floors_per_building=4, aps_per_floor=6),
        PopulationModel(
            n_students=5250, n_staff=1000,
            student_visits_per_day=(6, 10), staff_visits_per_day=(3, 6),
        ),
        NoiseModel(), 14,
    )
    world = build_world(sim)
    n_devices = len(world.sessions)
    assert 9000 <= n_devices <= 11000, n_devices
    rng = random.Random(2)
    lo = min(v.enter for v in sim.truth.visits)
    hi = max(v.exit for v in sim.truth.visits) + 1
    targets = sorted(world.sessions)
    queries = [
        TraceQuery(target=rng.choice(targets), t_start=lo, t_end=hi, tau=600, omega=900)
        for _ in range(10)
    ]
    samples, _g = oracle.bench(world.sessions, queries, world.topo, world.dumap, 86400, 3600)
    graph_median = statistics.median(
        s.latency_us for s in samples if s.method == "graph" and s.query_id != "build"
    )
    linear_median = statistics.median(s.latency_us for s in samples if s.method == "linear")
    elapsed = time.time() - started
    assert graph_median <= linear_median / 2, (graph_median, linear_median)
    assert elapsed < 600, f"build+bench took {elapsed:.0f}s, budget is 600s"
    _passline(6, f"{n_devices} devices x 14 days: median graph {graph_median/1000:.1f}ms "
                 f"vs linear {linear_median/1000:.1f}ms "
                 f"({linear_median/graph_median:.0f}x), wall {elapsed:.0f}s")


def test_07_idempotent_build(corpus2k):
    world = corpus2k
    once = build_graph(world.sessions)
    twice_graph = build_graph(world.sessions).__class__(86400, 3600)
    for lst in world.sessions.values():
        twice_graph.insert_all(lst)
    for lst in world.sessions.values():
        twice_graph.insert_all(lst)
    twice_graph.freeze()
    s1, s2 = once.stats(), twice_graph.stats()
    assert s1 == s2, (s1, s2)
    for q in _random_queries(world, 10, seed=707, taus=[0, 600], omegas=[0, 900], grans=["ap", "zone"]):
        lr1 = location_report(once, q, world.topo, world.dumap)
        lr2 = location_report(twice_graph, q, world.topo, world.dumap)
        assert render_json(lr1) == render_json(lr2)
        pr1 = proximity_report(once, lr1, topo=world.topo, dumap=world.dumap)
        pr2 = proximity_report(twice_graph, lr2, topo=world.topo, dumap=world.dumap)
        assert render_json(pr1) == render_json(pr2)
    _passline(7, f"double insertion: identical stats {s1['edges']} edges and identical reports")


def test_08_cli_service_parity(tmp_path):
    from netcontact.cli import main as cli_main
    out = tmp_path / "raw"
    assert cli_main(["gen", "--out", str(out), "--seed", "8", "--days", "2",
                     "--students", "12", "--staff", "3"]) == 0
    assert cli_main(["ingest", str(out / "wifi_aruba.log"), "--format", "aruba",
                     "--out", str(tmp_path / "events.tsv"), "--identity"]) == 0
    assert cli_main(["sessions", "--events", str(tmp_path / "events.tsv"),
                     "--sessions", str(tmp_path / "sessions.tsv"),
                     "--device-users", str(tmp_path / "users.tsv")]) == 0
    manifest = tmp_path / "snapshot.json"
    assert cli_main(["build", "--sessions", str(tmp_path / "sessions.tsv"),
                     "--device-users", str(tmp_path / "users.tsv"),
                     "--ap-map", str(out / "ap_map.csv"), "--out", str(manifest)]) == 0

    state = service.ServiceState(service.load_snapshot(manifest))
    srv = service.make_server("127.0.0.1", 0, state)
    thread = threading.Thread(target=srv.serve_forever, daemon=True)
    thread.start()
    try:
        users = sorted(state.snapshot.dumap.user_to_devices)
        rng = random.Random(8)
        from http.client import HTTPConnection
        checked = 0
        for i in range(10):
            target = rng.choice(users)
            tau_min, omega_min = rng.choice([0, 5, 10]), rng.choice([0, 10, 15])
            gran = rng.choice(["ap", "zone"])
            kind = "trace" if i % 2 == 0 else "prox"
            proc = subprocess.run(
                [sys.executable, "-m", "netcontact.cli", kind,
                 "--snapshot", str(manifest), "--target", target,
                 "--from", "0", "--to", "172800",
                 "--tau", str(tau_min), "--omega", str(omega_min),
                 "--granularity", gran, "--format", "json"],
                capture_output=True,
                env={"PYTHONPATH": str(REPO / "src"), "PATH": "/usr/bin:/bin"},
            )
            assert proc.returncode == 0, proc.stderr
            path = "/v1/query/location" if kind == "trace" else "/v1/query/proximity"
            body = {
                "target": target, "t_start": 0, "t_end": 172800,
                "tau": tau_min * 60, "omega": omega_min * 60, "granularity": gran,
            }
            conn = HTTPConnection("127.0.0.1", srv.server_address[1], timeout=10)
            conn.request("POST", path, body=json.dumps(body),
                         headers={"Content-Type": "application/json"})
            resp = conn.getresponse()
            data = resp.read()
            conn.close()
            assert resp.status == 200
            assert data == proc.stdout, f"service/CLI bytes differ for {target} {kind}"
            checked += 1
    finally:
        srv.shutdown()
        srv.server_close()
    assert checked == 10
    _passline(8, "service responses byte-equal CLI --format json for 10 queries")


def test_09_unassociated_filtering():
    # Passerby tuned so probe-only devices outnumber road-AP associations
    # about 5x; scheduled visits are long enough that the 15-minute filter
    # cannot touch a true visit of 15 minutes or more.
    sim = simulate(
        9,
        CampusModel(buildings=6, floors_per_building=2, aps_per_floor=6),
        PopulationModel(n_students=40, n_staff=10, n_passerby=150,
                        visit_range=(1100, 5400)),
        NoiseModel(pingpong_prob=0.0, unassociated_fraction=5 / 6),
        3,
    )
    world = build_world(sim)
    road = set(sim.truth.road_aps)
    associated_at_road = {
        dev for dev, lst in world.sessions.items() if any(s.ap_id in road for s in lst)
    }
    ratio = len(sim.truth.probe_only) / max(1, len(associated_at_road))
    assert 4.0 <= ratio <= 6.0, ratio

    passerby = set(sim.truth.probe_only) | set(sim.truth.chance_passerby)
    before = sum(len(world.sessions.get(d, [])) for d in passerby)
    filtered, _removed = filter_transient(world.sessions, 900)
    after = sum(len(filtered.get(d, [])) for d in passerby)
    assert before > 0
    removal_ratio = (before - after) / before
    assert removal_ratio >= 0.8, removal_ratio

    protected_lost = 0
    protected_total = 0
    for v in sim.truth.visits:
        if v.duration < 900:
            continue
        protected_total += 1
        kept = any(
            s.ap_id == v.ap and s.t_start <= v.exit and s.t_end >= v.enter
            for s in filtered.get(v.device, [])
        )
        if not kept:
            protected_lost += 1
    assert protected_total > 0
    assert protected_lost == 0, f"{protected_lost} of {protected_total} long visits lost"
    _passline(9, f"probe:associated ratio {ratio:.1f}x; filter removed "
                 f"{removal_ratio:.0%} of passerby sessions and 0 of {protected_total} long visits")


FRONTEND = REPO / "frontend"


@pytest.mark.skipif(
    not (FRONTEND / "node_modules").exists() or shutil.which("node") is None,
    reason="frontend not built; run `cd frontend && npm install && npm test`",
)
def test_10_console_thin_client():
    proc = subprocess.run(
        ["npm", "test", "--silent"], cwd=FRONTEND, capture_output=True, text=True, timeout=600,
    )
    assert proc.returncode == 0, proc.stdout + proc.stderr
    _passline(10, "console suite green (thin-client, drill-down, slider monotonicity)")
