"""Synthetic campus generator with ground truth, plus a report evaluator.

Builds a small world (buildings, floors, APs grouped into zones with
roles), gives every user a role-templated daily itinerary (students move
between lectures, dining and their dorm; staff are office-centric),
walks each user's devices through it under a configurable noise model,
and emits the resulting raw logs in both vendor grammars together with
the noise-free trajectories.

All randomness flows from one seed with a dedicated stream per user
(keyed by the user's name), so growing the population never perturbs
existing users' trajectories and identical seeds produce byte-identical
corpora.
"""

import random
from collections import defaultdict
from dataclasses import dataclass, replace
from pathlib import Path

from . import topology as topo_mod
from .ingest import EventType, NormalizedEvent, anonymize_token, to_aruba, to_cmx
from .sessions import (
    SessionsByDevice,
    build_device_user_map,
    build_sessions,
    DeviceUserMap,
)
from .topology import Topology
from .trace import LocationReport, overlap

ROLE_LECTURE = "lecture"
ROLE_DINING = "dining"
ROLE_DORM = "dorm"
ROLE_OFFICE = "office"
ROLE_ROAD = "road"
SCHEDULABLE_ROLES = (ROLE_LECTURE, ROLE_DINING, ROLE_DORM, ROLE_OFFICE)

MODE_IDLE = "idle"
MODE_INTERMITTENT = "intermittent"
MODE_CONTINUOUS = "continuous"

#: True-visit duration bin edges (seconds) used by the evaluator.
DEFAULT_BINS = (60, 120, 180)
BIN_LABELS = ("lt_1m", "1_2m", "2_3m", "ge_3m")


class InvalidModelError(ValueError):
    pass


class MismatchedRunError(ValueError):
    """Reports and ground truth come from different runs."""


@dataclass(frozen=True)
class CampusModel:
    buildings: int = 4
    floors_per_building: int = 3
    aps_per_floor: int = 6  # mean; per-floor counts sample mean +/- 2
    zone_size: int = 3      # consecutive APs grouped per zone


@dataclass(frozen=True)
class PopulationModel:
    n_students: int = 40
    n_staff: int = 10
    n_passerby: int = 0
    device_count_weights: tuple[float, float, float] = (0.5, 0.4, 0.1)
    student_visits_per_day: tuple[int, int] = (8, 14)
    staff_visits_per_day: tuple[int, int] = (4, 7)
    short_visit_prob: float = 0.25
    short_visit_range: tuple[int, int] = (20, 400)
    visit_range: tuple[int, int] = (600, 5400)
    day_start: int = 8 * 3600
    day_end: int = 22 * 3600


@dataclass(frozen=True)
class NoiseModel:
    """Differences between where a user is and what the network sees.

    ``hop lag`` is the delay between physical arrival and association,
    worst for idle phones; ``skip_prob`` is the chance a short stop never
    associates at all; ``pingpong_prob`` bounces a session to an adjacent
    same-zone AP; ``unassociated_fraction`` is the share of passerby
    devices that only probe and never join.
    """

    idle_lag: tuple[int, int] = (20, 170)
    intermittent_lag: tuple[int, int] = (5, 60)
    continuous_lag: tuple[int, int] = (0, 10)
    skip_prob: float = 0.15
    pingpong_prob: float = 0.05
    unassociated_fraction: float = 0.0

    def __post_init__(self):
        for p in (self.skip_prob, self.pingpong_prob, self.unassociated_fraction):
            if not 0.0 <= p <= 1.0:
                raise InvalidModelError(f"probability out of range: {p}")
        for lo, hi in (self.idle_lag, self.intermittent_lag, self.continuous_lag):
            if lo < 0 or hi < lo:
                raise InvalidModelError(f"bad lag range ({lo},{hi})")

    def lag_range(self, mode: str) -> tuple[int, int]:
        return {
            MODE_IDLE: self.idle_lag,
            MODE_INTERMITTENT: self.intermittent_lag,
            MODE_CONTINUOUS: self.continuous_lag,
        }[mode]

    @classmethod
    def none(cls) -> "NoiseModel":
        return cls(
            idle_lag=(0, 0), intermittent_lag=(0, 0), continuous_lag=(0, 0),
            skip_prob=0.0, pingpong_prob=0.0, unassociated_fraction=0.0,
        )


@dataclass(frozen=True)
class TrueVisit:
    user: str
    device: str
    zone: str
    ap: str
    enter: int
    exit: int

    @property
    def duration(self) -> int:
        return self.exit - self.enter


@dataclass
class GroundTruth:
    visits: list[TrueVisit]
    user_devices: dict[str, tuple[str, ...]]  # phone first
    probe_only: tuple[str, ...] = ()
    chance_passerby: tuple[str, ...] = ()
    road_aps: tuple[str, ...] = ()

    def tokenize(self, key: bytes) -> "GroundTruth":
        """Rewrite user and device ids with the same keyed hash the ingest
        pipeline applies, so truth aligns with anonymized reports."""
        tok = lambda s: anonymize_token(key, s)
        return GroundTruth(
            visits=[
                TrueVisit(tok(v.user), tok(v.device), v.zone, v.ap, v.enter, v.exit)
                for v in self.visits
            ],
            user_devices={
                tok(u): tuple(tok(d) for d in devs) for u, devs in self.user_devices.items()
            },
            probe_only=tuple(tok(d) for d in self.probe_only),
            chance_passerby=tuple(tok(d) for d in self.chance_passerby),
            road_aps=self.road_aps,
        )


@dataclass
class CampusPlan:
    ap_rows: list[dict]
    zone_aps: dict[str, tuple[str, ...]]
    roles: dict[str, str]
    zones_by_role: dict[str, list[str]]

    @property
    def road_aps(self) -> tuple[str, ...]:
        out = []
        for z in self.zones_by_role.get(ROLE_ROAD, []):
            out.extend(self.zone_aps[z])
        return tuple(out)

    @property
    def ap_count(self) -> int:
        return len(self.ap_rows)


@dataclass
class SimResult:
    events: list[NormalizedEvent]
    truth: GroundTruth
    plan: CampusPlan
    days: int


def build_campus(seed: int, campus: CampusModel) -> CampusPlan:
    if campus.buildings <= 0 or campus.floors_per_building <= 0 or campus.aps_per_floor <= 0:
        raise InvalidModelError("campus counts must be positive")
    if campus.zone_size <= 0:
        raise InvalidModelError("zone_size must be positive")
    rng = random.Random(f"{seed}/campus")
    ap_rows: list[dict] = []
    zone_aps: dict[str, tuple[str, ...]] = {}
    roles: dict[str, str] = {}
    kinds = ("academic", "residence", "office")
    for b in range(campus.buildings):
        kind = kinds[b % 3]
        building = f"BLDG-{b:02d}"
        for f in range(1, campus.floors_per_building + 1):
            spread = max(1, campus.aps_per_floor - 2)
            n_aps = rng.randint(spread, campus.aps_per_floor + 2)
            aps = []
            for i in range(n_aps):
                ap_id = f"AP-{b:02d}{f:02d}-{i:02d}"
                aps.append(ap_id)
            floor_zones = []
            for k in range(0, len(aps), campus.zone_size):
                members = aps[k : k + campus.zone_size]
                zone_id = f"Z-{b:02d}{f:02d}-{k // campus.zone_size}"
                zone_aps[zone_id] = tuple(members)
                floor_zones.append(zone_id)
                for ap_id in members:
                    ap_rows.append({
                        "ap_id": ap_id,
                        "name": f"B{b} F{f} AP{ap_id[-2:]}",
                        "building": building,
                        "floor": str(f),
                        "room": f"{f}{ap_id[-2:]}",
                        "zone_id": zone_id,
                    })
            base_role = {"academic": ROLE_LECTURE, "residence": ROLE_DORM, "office": ROLE_OFFICE}[kind]
            for z in floor_zones:
                roles[z] = base_role
            if f == 1:
                if kind == "academic":
                    roles[floor_zones[0]] = ROLE_DINING
                if len(floor_zones) > 1:
                    roles[floor_zones[-1]] = ROLE_ROAD

    zones_by_role: dict[str, list[str]] = defaultdict(list)
    for z in sorted(roles):
        zones_by_role[roles[z]].append(z)
    # Small campuses may miss a role entirely; steal from the largest pool
    # so every schedulable role has at least one zone when possible.
    for needed in SCHEDULABLE_ROLES:
        if zones_by_role[needed]:
            continue
        donors = sorted(
            (r for r in zones_by_role if len(zones_by_role[r]) > 1 and r != ROLE_ROAD),
            key=lambda r: -len(zones_by_role[r]),
        )
        if not donors:
            continue
        moved = zones_by_role[donors[0]].pop()
        roles[moved] = needed
        zones_by_role[needed].append(moved)
    return CampusPlan(ap_rows, zone_aps, roles, dict(zones_by_role))


def _weighted_choice(rng: random.Random, options: list[tuple[str, float]]) -> str:
    x = rng.random() * sum(w for _, w in options)
    acc = 0.0
    for value, w in options:
        acc += w
        if x < acc:
            return value
    return options[-1][0]


def _device_count(rng: random.Random, weights: tuple[float, float, float]) -> int:
    x = rng.random() * sum(weights)
    acc = 0.0
    for n, w in enumerate(weights, start=1):
        acc += w
        if x < acc:
            return n
    return len(weights)


#: Attendance rule per device slot: the phone goes everywhere, the laptop
#: only to long stops, a third device only to very long stops.
_ATTEND_MIN_DWELL = (0, 1800, 3600)


def simulate(
    seed: int,
    campus: CampusModel,
    pop: PopulationModel,
    noise: NoiseModel,
    days: int,
) -> SimResult:
    if days <= 0:
        raise InvalidModelError("days must be positive")
    if pop.n_students + pop.n_staff <= 0:
        raise InvalidModelError("population must be positive")
    if pop.day_end <= pop.day_start:
        raise InvalidModelError("day_end must follow day_start")
    plan = build_campus(seed, campus)
    if not plan.zone_aps:
        raise InvalidModelError("campus has no APs")

    def zones_for(role: str) -> list[str]:
        zs = plan.zones_by_role.get(role) or []
        if zs:
            return zs
        return [z for z in sorted(plan.zone_aps) if plan.roles.get(z) != ROLE_ROAD] or sorted(plan.zone_aps)

    users = [(f"stu{i:05d}", "student", i) for i in range(pop.n_students)]
    users += [(f"staff{i:04d}", "staff", i) for i in range(pop.n_staff)]

    events: list[NormalizedEvent] = []
    truth_visits: list[TrueVisit] = []
    user_devices: dict[str, tuple[str, ...]] = {}

    for name, role, num in users:
        rng = random.Random(f"{seed}/user/{name}")
        n_dev = _device_count(rng, pop.device_count_weights)
        role_byte = 0x0A if role == "student" else 0x0B
        macs = []
        for d in range(n_dev):
            # Unique by (role, user number, slot); the trailing byte is noise.
            macs.append(
                f"02:{role_byte:02x}:{(num >> 8) & 0xff:02x}:{num & 0xff:02x}"
                f":{d:02x}:{rng.randrange(256):02x}"
            )
        user_devices[name] = tuple(macs)
        modes = [
            _weighted_choice(rng, [(MODE_CONTINUOUS, 0.3), (MODE_INTERMITTENT, 0.5), (MODE_IDLE, 0.2)])
        ] + [MODE_IDLE] * (n_dev - 1)

        home = rng.choice(zones_for(ROLE_DORM if role == "student" else ROLE_OFFICE))
        visit_range = pop.student_visits_per_day if role == "student" else pop.staff_visits_per_day
        if role == "student":
            zone_menu = [(ROLE_LECTURE, 0.5), (ROLE_DINING, 0.2), ("home", 0.3)]
        else:
            zone_menu = [("home", 0.6), (ROLE_LECTURE, 0.2), (ROLE_DINING, 0.2)]

        opened_today: set[str] = set()
        for day in range(days):
            day0 = day * 86400
            opened_today.clear()
            t = day0 + pop.day_start + rng.randint(0, 1800)
            day_limit = day0 + pop.day_end
            prev_zone = None
            for _ in range(rng.randint(*visit_range)):
                zone = None
                for _attempt in range(8):
                    pick = _weighted_choice(rng, zone_menu)
                    zone = home if pick == "home" else rng.choice(zones_for(pick))
                    if zone != prev_zone:
                        break
                ap = rng.choice(plan.zone_aps[zone])
                if rng.random() < pop.short_visit_prob:
                    dwell = rng.randint(*pop.short_visit_range)
                else:
                    dwell = rng.randint(*pop.visit_range)
                if t + dwell > day_limit:
                    break
                enter, exit_ = t, t + dwell
                prev_zone = zone
                t = exit_ + rng.randint(30, 600)

                for slot, mac in enumerate(macs):
                    if dwell < _ATTEND_MIN_DWELL[slot]:
                        continue
                    truth_visits.append(TrueVisit(name, mac, zone, ap, enter, exit_))
                    lo, hi = noise.lag_range(modes[slot])
                    lag = rng.randint(lo, hi) if hi > 0 else 0
                    skip_roll = rng.random()
                    # Associating only at (or past) departure misses the visit.
                    if dwell <= lag:
                        continue
                    if dwell < 180 and skip_roll < noise.skip_prob:
                        continue
                    assoc_t = enter + lag
                    opener = EventType.ASSOCIATION if mac not in opened_today else EventType.REASSOCIATION
                    opened_today.add(mac)
                    events.append(NormalizedEvent(assoc_t, "", mac, EventType.AUTHORIZATION, name))
                    events.append(NormalizedEvent(assoc_t, ap, mac, opener, None))
                    bounce_roll = rng.random()
                    members = plan.zone_aps[zone]
                    if (
                        bounce_roll < noise.pingpong_prob
                        and exit_ - assoc_t > 120
                        and len(members) > 1
                    ):
                        tb = assoc_t + rng.randint(30, exit_ - assoc_t - 60)
                        other = rng.choice([a for a in members if a != ap])
                        dur = rng.randint(5, 45)
                        events.append(NormalizedEvent(tb, other, mac, EventType.DRIFT, None))
                        events.append(NormalizedEvent(tb + dur, ap, mac, EventType.DRIFT, None))
                    events.append(NormalizedEvent(exit_, ap, mac, EventType.DISASSOCIATION, None))

    probe_only: list[str] = []
    chance: list[str] = []
    road_aps = plan.road_aps or tuple(sorted({r["ap_id"] for r in plan.ap_rows}))
    n_probe = round(pop.n_passerby * noise.unassociated_fraction)
    for i in range(pop.n_passerby):
        rng = random.Random(f"{seed}/passerby/{i}")
        mac = f"06:{(i >> 8) & 0xff:02x}:{i & 0xff:02x}:{rng.randrange(256):02x}:{rng.randrange(256):02x}:00"
        is_probe = i < n_probe
        (probe_only if is_probe else chance).append(mac)
        for day in range(days):
            if rng.random() >= 0.8:
                continue
            day0 = day * 86400
            ap = rng.choice(road_aps)
            t = day0 + rng.randint(pop.day_start, pop.day_end - 700)
            if is_probe:
                for _ in range(rng.randint(1, 3)):
                    events.append(NormalizedEvent(t, ap, mac, EventType.PROBE, None))
                    t += rng.randint(5, 30)
            else:
                dur = rng.randint(30, 600)
                events.append(NormalizedEvent(t, ap, mac, EventType.ASSOCIATION, None))
                events.append(NormalizedEvent(t + dur, ap, mac, EventType.DISASSOCIATION, None))

    events.sort(key=lambda ev: (ev.timestamp, ev.device_mac))
    truth = GroundTruth(
        visits=truth_visits,
        user_devices=user_devices,
        probe_only=tuple(probe_only),
        chance_passerby=tuple(chance),
        road_aps=tuple(road_aps),
    )
    return SimResult(events, truth, plan, days)


# --- file generation --------------------------------------------------------------

TRUTH_TSV_HEADER = ["user", "device", "zone", "ap", "enter", "exit"]


@dataclass
class GeneratedCorpus:
    out_dir: Path
    aruba_log: Path
    cmx_log: Path
    ap_map: Path
    truth_tsv: Path
    config: Path
    sim: SimResult


def write_truth_tsv(truth: GroundTruth, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for v in truth.visits:
            fh.write(f"{v.user}\t{v.device}\t{v.zone}\t{v.ap}\t{v.enter}\t{v.exit}\n")


def read_truth_tsv(path: str | Path) -> list[TrueVisit]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 6:
                raise ValueError(f"{path}:{lineno}: expected 6 fields")
            user, device, zone, ap, enter, exit_ = parts
            out.append(TrueVisit(user, device, zone, ap, int(enter), int(exit_)))
    return out


def model_config_text(
    seed: int, campus: CampusModel, pop: PopulationModel, noise: NoiseModel, days: int
) -> str:
    lines = [f"seed={seed}", f"days={days}"]
    for prefix, model in (("campus", campus), ("pop", pop), ("noise", noise)):
        for name in model.__dataclass_fields__:
            value = getattr(model, name)
            if isinstance(value, tuple):
                value = ",".join(str(x) for x in value)
            lines.append(f"{prefix}.{name}={value}")
    return "\n".join(lines) + "\n"


def parse_model_config(text: str) -> tuple[int, CampusModel, PopulationModel, NoiseModel, int]:
    raw: dict[str, str] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"bad config line: {line!r}")
        key, value = line.split("=", 1)
        raw[key.strip()] = value.strip()

    def build(prefix, cls):
        kwargs = {}
        for name, fdef in cls.__dataclass_fields__.items():
            key = f"{prefix}.{name}"
            if key not in raw:
                continue
            default = fdef.default
            text_value = raw[key]
            if isinstance(default, tuple):
                parts = [p for p in text_value.split(",") if p]
                kwargs[name] = tuple(type(d)(p) for d, p in zip(default, parts))
            elif isinstance(default, bool):
                kwargs[name] = text_value.lower() in ("1", "true", "yes")
            elif isinstance(default, float):
                kwargs[name] = float(text_value)
            else:
                kwargs[name] = int(text_value)
        return cls(**kwargs)

    seed = int(raw.get("seed", "1"))
    days = int(raw.get("days", "7"))
    return seed, build("campus", CampusModel), build("pop", PopulationModel), build("noise", NoiseModel), days


def generate(
    seed: int,
    campus: CampusModel,
    pop: PopulationModel,
    noise: NoiseModel,
    days: int,
    out_dir: str | Path,
) -> GeneratedCorpus:
    """Simulate and write both vendor-format logs, the AP map, the ground
    truth dump and an echo of the model parameters. Same seed, same bytes."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sim = simulate(seed, campus, pop, noise, days)
    aruba = out / "wifi_aruba.log"
    cmx = out / "wifi_cmx.jsonl"
    ap_map = out / "ap_map.csv"
    truth_tsv = out / "ground_truth.tsv"
    config = out / "model.conf"
    with open(aruba, "w", encoding="utf-8") as fh:
        for ev in sim.events:
            fh.write(to_aruba(ev) + "\n")
    with open(cmx, "w", encoding="utf-8") as fh:
        for ev in sim.events:
            fh.write(to_cmx(ev) + "\n")
    topo_mod.write_ap_map(sim.plan.ap_rows, ap_map)
    write_truth_tsv(sim.truth, truth_tsv)
    config.write_text(model_config_text(seed, campus, pop, noise, days))
    return GeneratedCorpus(out, aruba, cmx, ap_map, truth_tsv, config, sim)


# --- in-memory pipeline (tests, bench, acceptance) ----------------------------------

@dataclass
class BuiltWorld:
    sessions: SessionsByDevice
    dumap: DeviceUserMap
    topo: Topology
    truth: GroundTruth
    events: list[NormalizedEvent]
    counters: dict[str, int]


def build_world(sim: SimResult, key: bytes | None = None) -> BuiltWorld:
    """Run the event stream through the session/user pipeline in memory.

    With a key, identifiers (and the returned truth) are tokenized exactly
    as the file pipeline would; without one, raw ids pass through.
    """
    if key is None:
        events = sim.events
        truth = sim.truth
    else:
        cache: dict[str, str] = {}

        def tok(s: str) -> str:
            t = cache.get(s)
            if t is None:
                t = anonymize_token(key, s)
                cache[s] = t
            return t

        events = [
            replace(ev, device_mac=tok(ev.device_mac), username=tok(ev.username) if ev.username else None)
            for ev in sim.events
        ]
        truth = sim.truth.tokenize(key)
    sessions, counters = build_sessions(events)
    dumap = build_device_user_map(events, sessions)
    topo = topo_mod.from_rows(sim.plan.ap_rows)
    return BuiltWorld(sessions, dumap, topo, truth, events, counters)


# --- evaluation ----------------------------------------------------------------------

@dataclass
class EvalResult:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    per_bin: dict[str, float | None]
    bin_counts: dict[str, int]

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "per_bin": self.per_bin,
            "bin_counts": self.bin_counts,
        }


def _bin_label(duration: int, bins: tuple[int, ...]) -> str:
    for edge, label in zip(bins, BIN_LABELS):
        if duration < edge:
            return label
    return BIN_LABELS[len(bins)]


def evaluate(
    reports: dict[str, LocationReport],
    truth: GroundTruth,
    bins: tuple[int, ...] = DEFAULT_BINS,
) -> EvalResult:
    """Score reports against true trajectories.

    A true visit counts as located when some reported visit at the same
    zone overlaps it; a reported visit matching no true visit is a false
    positive. Accuracy is also reported per true-visit-duration bin.
    """
    report_users = set(reports)
    truth_users = set(truth.user_devices)
    if report_users != truth_users:
        raise MismatchedRunError(
            f"report/truth user sets differ: {sorted(report_users ^ truth_users)[:5]}"
        )

    tp = fn = fp = 0
    bin_hits: dict[str, int] = {label: 0 for label in BIN_LABELS}
    bin_counts: dict[str, int] = {label: 0 for label in BIN_LABELS}

    truth_by_key: dict[tuple[str, str], list[TrueVisit]] = defaultdict(list)
    for v in truth.visits:
        truth_by_key[(v.user, v.device)].append(v)

    for user, report in reports.items():
        rows = truth_by_key.get((user, report.device), [])
        visits = report.visits
        for row in rows:
            label = _bin_label(row.duration, bins)
            bin_counts[label] += 1
            located = any(
                v.location == row.zone and overlap(v.t_start, v.t_end, row.enter, row.exit) > 0
                for v in visits
            )
            if located:
                tp += 1
                bin_hits[label] += 1
            else:
                fn += 1
        for v in visits:
            matched = any(
                v.location == row.zone and overlap(v.t_start, v.t_end, row.enter, row.exit) > 0
                for row in rows
            )
            if not matched:
                fp += 1

    precision = tp / (tp + fp) if tp + fp else 1.0
    recall = tp / (tp + fn) if tp + fn else 1.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    per_bin = {
        label: (bin_hits[label] / bin_counts[label] if bin_counts[label] else None)
        for label in BIN_LABELS
    }
    return EvalResult(precision, recall, f1, tp, fp, fn, per_bin, bin_counts)
