from collections import defaultdict

import pytest

from netcontact.graph import build_graph
from netcontact.ingest import AnonymizationContext, normalize_batch
from netcontact.sessions import build_sessions, filter_transient, unassociated_devices
from netcontact.synth import (
    CampusModel,
    InvalidModelError,
    MismatchedRunError,
    NoiseModel,
    PopulationModel,
    build_campus,
    build_world,
    evaluate,
    generate,
    model_config_text,
    parse_model_config,
    read_truth_tsv,
    simulate,
    write_truth_tsv,
)
from netcontact.trace import TraceQuery, location_report, proximity_report

SMALL_CAMPUS = CampusModel(buildings=3, floors_per_building=2, aps_per_floor=4, zone_size=2)
SMALL_POP = PopulationModel(n_students=6, n_staff=2)


def reports_for(world, gran="zone", tau=0):
    g = build_graph(world.sessions)
    lo = min(v.enter for v in world.truth.visits)
    hi = max(v.exit for v in world.truth.visits) + 1
    out = {}
    for user in world.truth.user_devices:
        q = TraceQuery(target=user, t_start=lo, t_end=hi, tau=tau, omega=0, granularity=gran)
        out[user] = location_report(g, q, world.topo, world.dumap)
    return out


class TestDeterminism:
    def test_same_seed_same_bytes(self, tmp_path):
        a = generate(7, SMALL_CAMPUS, SMALL_POP, NoiseModel(), 2, tmp_path / "a")
        b = generate(7, SMALL_CAMPUS, SMALL_POP, NoiseModel(), 2, tmp_path / "b")
        for name in ("wifi_aruba.log", "wifi_cmx.jsonl", "ap_map.csv", "ground_truth.tsv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_different_seed_different_bytes(self, tmp_path):
        a = generate(7, SMALL_CAMPUS, SMALL_POP, NoiseModel(), 2, tmp_path / "a")
        b = generate(8, SMALL_CAMPUS, SMALL_POP, NoiseModel(), 2, tmp_path / "b")
        assert a.aruba_log.read_bytes() != b.aruba_log.read_bytes()

    def test_adding_users_preserves_existing_trajectories(self):
        small = simulate(7, SMALL_CAMPUS, PopulationModel(n_students=4, n_staff=1), NoiseModel.none(), 2)
        large = simulate(7, SMALL_CAMPUS, PopulationModel(n_students=8, n_staff=1), NoiseModel.none(), 2)

        def trajectories(sim):
            by_user = defaultdict(list)
            for v in sim.truth.visits:
                by_user[v.user].append((v.device, v.zone, v.ap, v.enter, v.exit))
            return by_user

        t_small, t_large = trajectories(small), trajectories(large)
        for user in t_small:
            assert t_small[user] == t_large[user]


class TestNoiselessClosure:
    def test_rebuilt_sessions_equal_ground_truth(self):
        sim = simulate(3, SMALL_CAMPUS, SMALL_POP, NoiseModel.none(), 2)
        world = build_world(sim)
        truth_by_dev = defaultdict(list)
        for v in sim.truth.visits:
            truth_by_dev[v.device].append((v.ap, v.enter, v.exit))
        for dev, rows in truth_by_dev.items():
            got = [(s.ap_id, s.t_start, s.t_end) for s in world.sessions.get(dev, [])]
            assert got == sorted(rows, key=lambda r: r[1])
        assert world.counters["orphan_disassociation"] == 0

    def test_full_file_pipeline_matches_in_memory(self, tmp_path):
        corpus = generate(3, SMALL_CAMPUS, SMALL_POP, NoiseModel.none(), 2, tmp_path)
        ctx = AnonymizationContext(identity=True)
        res = normalize_batch([(corpus.aruba_log, "aruba")], ctx)
        assert res.total_skipped == 0
        staged, _ = build_sessions(res.events)
        world = build_world(corpus.sim)
        assert staged == world.sessions

    def test_both_grammars_describe_the_same_events(self, tmp_path):
        corpus = generate(3, SMALL_CAMPUS, SMALL_POP, NoiseModel(), 2, tmp_path)
        ctx = AnonymizationContext(identity=True)
        from_aruba = normalize_batch([(corpus.aruba_log, "aruba")], ctx)
        from_cmx = normalize_batch([(corpus.cmx_log, "cmx")], ctx)
        assert from_aruba.events == from_cmx.events


class TestEvaluator:
    def test_noiseless_run_scores_perfectly(self):
        sim = simulate(11, CampusModel(buildings=4, floors_per_building=3, aps_per_floor=6),
                       PopulationModel(n_students=30, n_staff=8), NoiseModel.none(), 5)
        world = build_world(sim)
        res = evaluate(reports_for(world), world.truth)
        assert res.precision == 1.0 and res.recall == 1.0
        assert all(acc == 1.0 for acc in res.per_bin.values() if acc is not None)

    def test_default_noise_bin_pattern(self):
        sim = simulate(11, CampusModel(buildings=4, floors_per_building=3, aps_per_floor=6),
                       PopulationModel(n_students=30, n_staff=8), NoiseModel(), 5)
        world = build_world(sim)
        res = evaluate(reports_for(world), world.truth)
        assert res.per_bin["ge_3m"] == 1.0
        for label in ("lt_1m", "1_2m", "2_3m"):
            assert res.bin_counts[label] > 0
            assert res.per_bin[label] < 1.0

    def test_adversarial_lag_degrades_long_bin(self):
        # Lag up to five minutes: even visits longer than 3 minutes get missed,
        # which the evaluator must surface.
        noise = NoiseModel(idle_lag=(60, 300), intermittent_lag=(60, 300),
                           continuous_lag=(60, 300), skip_prob=0.3)
        sim = simulate(11, CampusModel(buildings=4, floors_per_building=3, aps_per_floor=6),
                       PopulationModel(n_students=30, n_staff=8), noise, 5)
        world = build_world(sim)
        res = evaluate(reports_for(world), world.truth)
        assert res.per_bin["ge_3m"] < 1.0

    def test_mismatched_run_detected(self):
        sim = simulate(3, SMALL_CAMPUS, SMALL_POP, NoiseModel.none(), 1)
        world = build_world(sim)
        reports = reports_for(world)
        reports.pop(next(iter(reports)))
        with pytest.raises(MismatchedRunError):
            evaluate(reports, world.truth)

    def test_tokenized_truth_aligns_with_hashed_pipeline(self):
        sim = simulate(3, SMALL_CAMPUS, SMALL_POP, NoiseModel.none(), 1)
        world = build_world(sim, key=b"sekrit")
        res = evaluate(reports_for(world), world.truth)
        assert res.precision == 1.0 and res.recall == 1.0


class TestPasserby:
    def probe_world(self, fraction, n_passerby=120):
        noise = NoiseModel(unassociated_fraction=fraction)
        pop = PopulationModel(n_students=10, n_staff=2, n_passerby=n_passerby)
        sim = simulate(9, CampusModel(buildings=3, floors_per_building=2, aps_per_floor=6), pop, noise, 3)
        return sim, build_world(sim)

    def test_probe_to_associated_ratio_near_road(self):
        # 5/6 of passerby devices only probe: five probe-only devices per
        # chance-associating device at the road APs.
        sim, world = self.probe_world(5 / 6)
        assert len(sim.truth.probe_only) == 100
        assert len(sim.truth.chance_passerby) == 20
        road = set(sim.truth.road_aps)
        associated_at_road = {
            dev for dev, lst in world.sessions.items() if any(s.ap_id in road for s in lst)
        }
        ratio = len(sim.truth.probe_only) / len(associated_at_road)
        assert 4.5 <= ratio <= 5.5

    def test_probe_only_devices_on_roster_not_in_sessions(self):
        sim, world = self.probe_world(5 / 6)
        roster = set(unassociated_devices(world.events))
        active_probes = set(sim.truth.probe_only) & {ev.device_mac for ev in world.events}
        assert active_probes and active_probes <= roster
        assert not set(sim.truth.probe_only) & set(world.sessions)

    def test_transient_filter_removes_chance_sessions_keeps_real_visits(self):
        sim, world = self.probe_world(5 / 6)
        chance = set(sim.truth.chance_passerby)
        chance_sessions = sum(len(world.sessions.get(d, [])) for d in chance)
        filtered, removed = filter_transient(world.sessions, 900)
        remaining_chance = sum(len(filtered.get(d, [])) for d in chance)
        assert chance_sessions > 0
        assert (chance_sessions - remaining_chance) / chance_sessions >= 0.8
        long_truth = sum(1 for v in sim.truth.visits if v.duration >= 900)
        assert long_truth > 0


class TestCampus:
    def test_ap_per_floor_mean_close_to_configured(self):
        plan = build_campus(5, CampusModel(buildings=6, floors_per_building=5, aps_per_floor=6))
        floors = defaultdict(int)
        for row in plan.ap_rows:
            floors[(row["building"], row["floor"])] += 1
        mean = sum(floors.values()) / len(floors)
        assert abs(mean - 6) / 6 <= 0.10

    def test_all_schedulable_roles_present(self):
        plan = build_campus(5, SMALL_CAMPUS)
        for role in ("lecture", "dining", "dorm", "office"):
            assert plan.zones_by_role.get(role), role

    def test_zero_population_rejected(self):
        with pytest.raises(InvalidModelError):
            simulate(1, SMALL_CAMPUS, PopulationModel(n_students=0, n_staff=0), NoiseModel(), 1)

    def test_zero_ap_campus_rejected(self):
        with pytest.raises(InvalidModelError):
            build_campus(1, CampusModel(buildings=0))

    def test_bad_probability_rejected(self):
        with pytest.raises(InvalidModelError):
            NoiseModel(skip_prob=1.5)


class TestSublinearGrowth:
    def test_colocator_count_grows_sublinearly(self):
        sim = simulate(5, CampusModel(buildings=6, floors_per_building=3, aps_per_floor=6),
                       PopulationModel(n_students=60, n_staff=12), NoiseModel(), 10)
        world = build_world(sim)
        g = build_graph(world.sessions)

        def coloc_count(days):
            q = TraceQuery(target="stu00003", t_start=0, t_end=days * 86400, tau=600, omega=600)
            lr = location_report(g, q, world.topo, world.dumap)
            pr = proximity_report(g, lr, topo=world.topo, dumap=world.dumap)
            return len(pr.co_locators)

        c2, c10 = coloc_count(2), coloc_count(10)
        assert c2 > 0
        assert c2 <= c10 < 5 * c2


class TestConfigAndTruthFiles:
    def test_model_config_round_trip(self):
        campus = CampusModel(buildings=5, floors_per_building=2, aps_per_floor=7, zone_size=2)
        pop = PopulationModel(n_students=12, n_staff=3, n_passerby=9, short_visit_prob=0.4)
        noise = NoiseModel(idle_lag=(10, 90), skip_prob=0.2, unassociated_fraction=0.5)
        text = model_config_text(42, campus, pop, noise, 4)
        seed, c2, p2, n2, days = parse_model_config(text)
        assert (seed, days) == (42, 4)
        assert c2 == campus and p2 == pop and n2 == noise

    def test_truth_tsv_round_trip(self, tmp_path):
        sim = simulate(3, SMALL_CAMPUS, SMALL_POP, NoiseModel.none(), 1)
        p = tmp_path / "truth.tsv"
        write_truth_tsv(sim.truth, p)
        assert read_truth_tsv(p) == sim.truth.visits
