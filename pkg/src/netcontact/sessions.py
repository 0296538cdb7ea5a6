"""Session reconstruction and device/user bookkeeping.

A session is the closed interval one device spent associated to one AP,
the atomic unit of every downstream query. The builder walks the
time-sorted event stream once per device: an opening event (association,
reassociation, drift) at a new AP implicitly closes the previous session
at that instant, a disassociation closes explicitly, and anything still
open at end of stream is closed at the device's last event timestamp and
flagged truncated.
"""

from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

from .ingest import OPENING_EVENTS, EventType, NormalizedEvent
from .topology import Topology

#: Gap (seconds) under which consecutive same-zone sessions merge. AP-hop
#: ping-pong happens at tens-of-seconds scale, so one minute absorbs it.
DEFAULT_MERGE_GAP = 60

SESSION_TSV_HEADER = ["device_mac", "ap_id", "t_start", "t_end", "truncated"]


@dataclass(frozen=True, slots=True)
class Session:
    device_mac: str
    ap_id: str
    t_start: int
    t_end: int
    truncated: bool = False

    def __post_init__(self):
        if self.t_end < self.t_start:
            raise ValueError(f"session ends before it starts: {self}")

    @property
    def duration(self) -> int:
        return self.t_end - self.t_start


SessionsByDevice = dict[str, list[Session]]


def build_sessions(
    events: Iterable[NormalizedEvent],
) -> tuple[SessionsByDevice, dict[str, int]]:
    """Fold a time-sorted event stream into per-device session lists.

    Anomalous sequences (disassociation with no open session, or at a
    different AP than the open one) are dropped and counted, never fatal.
    Probe and authorization traffic never opens a session.
    """
    open_ap: dict[str, tuple[str, int]] = {}
    last_ts: dict[str, int] = {}
    out: SessionsByDevice = defaultdict(list)
    counters = {
        "redundant_open": 0,
        "orphan_disassociation": 0,
        "mismatched_disassociation": 0,
        "truncated_close": 0,
    }

    for ev in events:
        mac = ev.device_mac
        last_ts[mac] = ev.timestamp
        etype = ev.event_type
        if etype in OPENING_EVENTS:
            cur = open_ap.get(mac)
            if cur is None:
                open_ap[mac] = (ev.ap_id, ev.timestamp)
            elif cur[0] == ev.ap_id:
                counters["redundant_open"] += 1
            else:
                out[mac].append(Session(mac, cur[0], cur[1], ev.timestamp))
                open_ap[mac] = (ev.ap_id, ev.timestamp)
        elif etype is EventType.DISASSOCIATION:
            cur = open_ap.get(mac)
            if cur is None:
                counters["orphan_disassociation"] += 1
            elif cur[0] != ev.ap_id:
                counters["mismatched_disassociation"] += 1
            else:
                del open_ap[mac]
                out[mac].append(Session(mac, cur[0], cur[1], ev.timestamp))
        # AUTH / DEAUTH / PROBE are session-inert.

    for mac, (ap, t0) in open_ap.items():
        counters["truncated_close"] += 1
        out[mac].append(Session(mac, ap, t0, last_ts[mac], truncated=True))

    result = {}
    for mac, lst in out.items():
        lst.sort(key=lambda s: (s.t_start, s.t_end, s.ap_id))
        result[mac] = lst
    return result, counters


def unassociated_devices(events: Iterable[NormalizedEvent]) -> list[str]:
    """Devices seen in the stream that never produced an opening event.

    These probe-only scanners are kept on a separate roster, excluded
    from reports by default but available to investigators on request.
    """
    seen: set[str] = set()
    associated: set[str] = set()
    for ev in events:
        seen.add(ev.device_mac)
        if ev.event_type in OPENING_EVENTS:
            associated.add(ev.device_mac)
    return sorted(seen - associated)


# --- device/user mapping -----------------------------------------------------

@dataclass
class DeviceUserMap:
    """Bindings from authorization events; latest binding per device wins.

    Devices never authorized are bound to a pseudo-user equal to their own
    token, which keeps them queryable as co-locators without conflating
    them with real users.
    """

    device_to_user: dict[str, str] = field(default_factory=dict)
    user_to_devices: dict[str, tuple[str, ...]] = field(default_factory=dict)
    primary_device: dict[str, str] = field(default_factory=dict)

    def user_of(self, device: str) -> str:
        return self.device_to_user.get(device, device)


def map_devices_to_users(events: Iterable[NormalizedEvent]) -> DeviceUserMap:
    bindings: dict[str, str] = {}
    seen: set[str] = set()
    for ev in events:
        seen.add(ev.device_mac)
        if ev.event_type is EventType.AUTHORIZATION and ev.username:
            bindings[ev.device_mac] = ev.username  # stream is time-sorted: latest wins
    for mac in seen:
        bindings.setdefault(mac, mac)

    inverse: dict[str, list[str]] = defaultdict(list)
    for mac, user in bindings.items():
        inverse[user].append(mac)
    user_to_devices = {u: tuple(sorted(devs)) for u, devs in inverse.items()}
    primary = {u: devs[0] for u, devs in user_to_devices.items()}
    return DeviceUserMap(bindings, user_to_devices, primary)


def select_primary_device(dumap: DeviceUserMap, sessions: SessionsByDevice) -> DeviceUserMap:
    """Pick each user's most mobile device: most distinct APs visited,
    then most sessions, then lexicographically smallest token."""

    def rank(dev: str) -> tuple[int, int, str]:
        lst = sessions.get(dev, [])
        return (-len({s.ap_id for s in lst}), -len(lst), dev)

    primary = {
        user: min(devs, key=rank) for user, devs in dumap.user_to_devices.items()
    }
    return DeviceUserMap(dict(dumap.device_to_user), dict(dumap.user_to_devices), primary)


def build_device_user_map(
    events: Iterable[NormalizedEvent], sessions: SessionsByDevice
) -> DeviceUserMap:
    return select_primary_device(map_devices_to_users(events), sessions)


# --- zone coarsening and filtering -------------------------------------------

def merge_zone_runs(
    rows: Iterable[tuple[str, int, int, bool]],
    zone_of: Callable[[str], str],
    merge_gap: int = DEFAULT_MERGE_GAP,
) -> list[tuple[str, int, int, bool]]:
    """Collapse time-sorted (location, t1, t2, truncated) rows of one device
    into zone runs: consecutive rows whose locations share a zone and whose
    gap is at most ``merge_gap`` become one run spanning both."""
    merged: list[list] = []
    for loc, t1, t2, trunc in rows:
        z = zone_of(loc)
        if merged and merged[-1][0] == z and t1 - merged[-1][2] <= merge_gap:
            merged[-1][2] = max(merged[-1][2], t2)
            merged[-1][3] = merged[-1][3] or trunc
        else:
            merged.append([z, t1, t2, trunc])
    return [(z, t1, t2, trunc) for z, t1, t2, trunc in merged]


def coarsen_to_zones(
    sessions: SessionsByDevice,
    topo: Topology,
    merge_gap: int = DEFAULT_MERGE_GAP,
) -> SessionsByDevice:
    """Rewrite each device's sessions at zone granularity (ap_id = zone id)."""
    out: SessionsByDevice = {}
    for mac, lst in sessions.items():
        rows = [(s.ap_id, s.t_start, s.t_end, s.truncated) for s in lst]
        out[mac] = [
            Session(mac, zone, t1, t2, trunc)
            for zone, t1, t2, trunc in merge_zone_runs(rows, topo.zone_of, merge_gap)
        ]
    return out


def filter_transient(
    sessions: SessionsByDevice, min_duration: int
) -> tuple[SessionsByDevice, int]:
    """Drop sessions shorter than ``min_duration`` seconds (inclusive keep)."""
    removed = 0
    out: SessionsByDevice = {}
    for mac, lst in sessions.items():
        kept = [s for s in lst if s.duration >= min_duration]
        removed += len(lst) - len(kept)
        if kept:
            out[mac] = kept
    return out, removed


# --- TSV persistence ----------------------------------------------------------

def write_sessions_tsv(sessions: SessionsByDevice, path: str | Path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for mac in sorted(sessions):
            for s in sessions[mac]:
                fh.write(f"{s.device_mac}\t{s.ap_id}\t{s.t_start}\t{s.t_end}\t{int(s.truncated)}\n")
                n += 1
    return n


def read_sessions_tsv(path: str | Path) -> SessionsByDevice:
    out: SessionsByDevice = defaultdict(list)
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 5:
                raise ValueError(f"{path}:{lineno}: expected 5 fields, got {len(parts)}")
            mac, ap, t1, t2, trunc = parts
            out[mac].append(Session(mac, ap, int(t1), int(t2), trunc == "1"))
    for lst in out.values():
        lst.sort(key=lambda s: (s.t_start, s.t_end, s.ap_id))
    return dict(out)


def write_device_user_tsv(dumap: DeviceUserMap, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for dev in sorted(dumap.device_to_user):
            user = dumap.device_to_user[dev]
            primary = int(dumap.primary_device.get(user) == dev)
            fh.write(f"{dev}\t{user}\t{primary}\n")


def read_device_user_tsv(path: str | Path) -> DeviceUserMap:
    device_to_user: dict[str, str] = {}
    primary: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 fields, got {len(parts)}")
            dev, user, is_primary = parts
            device_to_user[dev] = user
            if is_primary == "1":
                primary[user] = dev
    inverse: dict[str, list[str]] = defaultdict(list)
    for dev, user in device_to_user.items():
        inverse[user].append(dev)
    user_to_devices = {u: tuple(sorted(d)) for u, d in inverse.items()}
    for user, devs in user_to_devices.items():
        primary.setdefault(user, devs[0])
    return DeviceUserMap(device_to_user, user_to_devices, primary)
