"""AP metadata and logical zone groupings.

Zones coarsen locations: an AP belongs to at most one declared zone, and
any AP without a declaration is its own singleton zone. Unknown AP ids
are absorbed as placeholders (empty metadata, singleton zone) so that
``zone_of`` is total.
"""

import csv
import threading
from dataclasses import dataclass
from pathlib import Path

AP_MAP_HEADER = ["ap_id", "name", "building", "floor", "room", "zone_id"]


@dataclass(frozen=True)
class ApInfo:
    ap_id: str
    name: str
    building: str
    floor: int
    room: str = ""


@dataclass
class Zone:
    zone_id: str
    label: str
    member_aps: set[str]


class DuplicateApIdError(ValueError):
    pass


class MalformedRowError(ValueError):
    pass


class Topology:
    def __init__(self):
        self.aps: dict[str, ApInfo] = {}
        self.zones: dict[str, Zone] = {}
        self._ap_zone: dict[str, str] = {}
        self.unknown_ap_count = 0
        self._lock = threading.Lock()

    def add_ap(self, info: ApInfo, zone_id: str | None = None) -> None:
        if info.ap_id in self.aps:
            raise DuplicateApIdError(info.ap_id)
        self.aps[info.ap_id] = info
        zid = zone_id or info.ap_id
        zone = self.zones.get(zid)
        if zone is None:
            zone = Zone(zid, zid, set())
            self.zones[zid] = zone
        zone.member_aps.add(info.ap_id)
        self._ap_zone[info.ap_id] = zid

    def _register_placeholder(self, ap_id: str) -> None:
        # Unknown APs are absorbed, not rejected; the counter surfaces them.
        with self._lock:
            if ap_id in self.aps:
                return
            self.aps[ap_id] = ApInfo(ap_id, ap_id, "", 0)
            self.zones.setdefault(ap_id, Zone(ap_id, ap_id, set())).member_aps.add(ap_id)
            self._ap_zone[ap_id] = ap_id
            self.unknown_ap_count += 1

    def zone_of(self, ap_id: str) -> str:
        """Total, idempotent mapping from a location id to its zone id."""
        zid = self._ap_zone.get(ap_id)
        if zid is not None:
            return zid
        if ap_id in self.zones:
            return ap_id  # already a zone id; coarsening twice is a no-op
        self._register_placeholder(ap_id)
        return ap_id

    def ap_info(self, ap_id: str) -> ApInfo:
        info = self.aps.get(ap_id)
        if info is None:
            self._register_placeholder(ap_id)
            info = self.aps[ap_id]
        return info

    def zone_members(self, zone_id: str) -> tuple[str, ...]:
        zone = self.zones.get(zone_id)
        if zone is None:
            return (zone_id,)
        return tuple(sorted(zone.member_aps))

    def zone_label(self, zone_id: str) -> str:
        zone = self.zones.get(zone_id)
        return zone.label if zone else zone_id

    def location_display(self, location_id: str, granularity: str) -> tuple[str, str]:
        """(display name, building) for a visit row at either granularity."""
        if granularity == "zone":
            buildings = sorted({self.ap_info(ap).building for ap in self.zone_members(location_id)})
            building = buildings[0] if len(buildings) == 1 else ""
            return self.zone_label(location_id), building
        info = self.ap_info(location_id)
        return info.name or location_id, info.building

    def zones_json(self) -> list[dict]:
        return [
            {"zone_id": z.zone_id, "label": z.label, "aps": sorted(z.member_aps)}
            for z in sorted(self.zones.values(), key=lambda z: z.zone_id)
        ]


def from_rows(rows: list[dict[str, str]]) -> Topology:
    topo = Topology()
    for idx, row in enumerate(rows, 1):
        missing = [c for c in AP_MAP_HEADER if c not in row]
        if missing:
            raise MalformedRowError(f"row {idx}: missing columns {missing}")
        ap_id = (row["ap_id"] or "").strip()
        if not ap_id:
            raise MalformedRowError(f"row {idx}: empty ap_id")
        try:
            floor = int(row["floor"])
        except (TypeError, ValueError):
            raise MalformedRowError(f"row {idx}: bad floor {row['floor']!r}") from None
        info = ApInfo(ap_id, row["name"] or ap_id, row["building"] or "", floor, row["room"] or "")
        topo.add_ap(info, (row["zone_id"] or "").strip() or None)
    return topo


def load_ap_map(path: str | Path) -> Topology:
    """Load the UTF-8 CSV AP map (header: ap_id,name,building,floor,room,zone_id)."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [c.strip() for c in reader.fieldnames] != AP_MAP_HEADER:
            raise MalformedRowError(f"bad header {reader.fieldnames!r}, expected {AP_MAP_HEADER}")
        return from_rows(list(reader))


def write_ap_map(rows: list[dict[str, str]], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=AP_MAP_HEADER)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
