from collections import defaultdict

import pytest

from netcontact import topology
from netcontact.graph import build_graph
from netcontact.sessions import DeviceUserMap, Session, select_primary_device


def make_topology(zones: dict[str, list[str]] | None = None, extra_aps: list[str] = ()):
    """Topology from a zone->APs mapping; extra APs become singleton zones."""
    rows = []
    zones = zones or {}
    for zone_id, aps in zones.items():
        for ap in aps:
            rows.append({
                "ap_id": ap, "name": f"{ap} name", "building": f"B-{zone_id}",
                "floor": "1", "room": "", "zone_id": zone_id,
            })
    for ap in extra_aps:
        rows.append({
            "ap_id": ap, "name": f"{ap} name", "building": "B0",
            "floor": "1", "room": "", "zone_id": "",
        })
    return topology.from_rows(rows)


def make_dumap(sessions_by_device, device_users: dict[str, str] | None = None) -> DeviceUserMap:
    device_users = dict(device_users or {})
    for dev in sessions_by_device:
        device_users.setdefault(dev, dev)
    inverse = defaultdict(list)
    for dev, user in device_users.items():
        inverse[user].append(dev)
    user_to_devices = {u: tuple(sorted(d)) for u, d in inverse.items()}
    primary = {u: d[0] for u, d in user_to_devices.items()}
    dumap = DeviceUserMap(device_users, user_to_devices, primary)
    return select_primary_device(dumap, sessions_by_device)


def sessions_dict(*sessions: Session) -> dict[str, list[Session]]:
    by_dev = defaultdict(list)
    for s in sessions:
        by_dev[s.device_mac].append(s)
    for lst in by_dev.values():
        lst.sort(key=lambda s: (s.t_start, s.t_end, s.ap_id))
    return dict(by_dev)


class World:
    def __init__(self, sessions_by_device, topo, dumap, device_bucket=86400, location_bucket=3600):
        self.sessions = sessions_by_device
        self.topo = topo
        self.dumap = dumap
        self.graph = build_graph(sessions_by_device, device_bucket, location_bucket)


def make_world(
    *sessions: Session,
    zones: dict[str, list[str]] | None = None,
    device_users: dict[str, str] | None = None,
    device_bucket: int = 86400,
    location_bucket: int = 3600,
) -> World:
    by_dev = sessions_dict(*sessions)
    aps = sorted({s.ap_id for s in sessions})
    zoned = {ap for z in (zones or {}).values() for ap in z}
    topo = make_topology(zones, extra_aps=[ap for ap in aps if ap not in zoned])
    dumap = make_dumap(by_dev, device_users)
    return World(by_dev, topo, dumap, device_bucket, location_bucket)


@pytest.fixture
def world_factory():
    return make_world
